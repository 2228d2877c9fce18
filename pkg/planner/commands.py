"""Module with the command-line handlers."""

import argparse
import itertools
import sys
from collections import namedtuple
from functools import wraps
from json import dumps

from .domain import Algorithm, GeneratorDomain, HeuristicId, SearchStatus, Shaping
from .exception import PlannerBaseException
from .generator import BOUNDS
from .usecase import summary_path


Response = namedtuple('Response', ['body', 'exit_code'])
"""namedtuple: Simple response structure

Used for passing result from a handler to the output formatter.
"""

EXIT_SOLVED = 0
EXIT_UNSOLVED = 1
EXIT_ERROR = 2

TRAIN_OPTIONS = (
    'steps', 'seed', 'shaping', 'gamma', 'tau', 'layers', 'max_arity', 'width', 'batch', 'buffer',
    'episode_cap', 'learning_rate', 'dead_end_value', 'checkpoint_interval', 'log_interval'
)


def with_exit_code(function):
    """Decorator that prints a handler's result as JSON and turns it into an exit code.

    Package errors become exit code 2 with `description` and `payload` on stderr.
    """
    @wraps(function)
    def inner(*args, **kwargs):
        try:
            response = function(*args, **kwargs)
        except PlannerBaseException as exception:
            response = Response(
                body={
                    'description': str(exception),
                    'payload': exception.payload
                },
                exit_code=EXIT_ERROR
            )
        stream = sys.stderr if response.exit_code == EXIT_ERROR else sys.stdout
        print(dumps(response.body, sort_keys=True, default=str), file=stream)
        return response.exit_code
    return inner


class PlanHandler:
    """Solves one problem and prints its report row and plan."""

    def __init__(self, plan_instance):
        self._plan_instance = plan_instance

    @with_exit_code
    def handle(self, args):
        report = self._plan_instance(
            domain_path=args.domain,
            problem_path=args.problem,
            algorithm=args.search,
            heuristic_id=args.heuristic,
            eval_limit=args.eval_limit,
            plan_path=args.plan
        )
        solved = report.row.status == SearchStatus.SOLVED.value
        return Response(
            body=report.as_dict(),
            exit_code=EXIT_SOLVED if solved else EXIT_UNSOLVED
        )


class TrainHandler:
    """Trains a model and prints where its artifacts went."""

    def __init__(self, train_model):
        self._train_model = train_model

    @with_exit_code
    def handle(self, args):
        config = {name: getattr(args, name) for name in TRAIN_OPTIONS if getattr(args, name, None) is not None}
        summary = self._train_model(
            domain_path=args.domain,
            problems_dir=args.problems,
            out_path=args.out,
            config=config
        )
        return Response(body=summary.as_dict(), exit_code=EXIT_SOLVED)


class EvaluateHandler:
    """Evaluates heuristics over a problem directory and prints coverage and tallies."""

    def __init__(self, evaluate_problems):
        self._evaluate_problems = evaluate_problems

    @with_exit_code
    def handle(self, args):
        report = self._evaluate_problems(
            domain_path=args.domain,
            problems_dir=args.problems,
            heuristics=split_list(args.heuristics),
            algorithm=args.search,
            out_path=args.out,
            models=args.model or (),
            eval_limit=args.eval_limit
        )
        return Response(
            body={
                'report': args.out,
                'summary': str(summary_path(args.out)),
                'rows': len(report.rows),
                'coverage': report.coverage,
                'tallies': report.tallies,
                'failures': report.failures
            },
            exit_code=EXIT_SOLVED
        )


class GenerateHandler:
    """Writes a generated problem corpus."""

    def __init__(self, generate_problems):
        self._generate_problems = generate_problems

    @with_exit_code
    def handle(self, args):
        sizes = size_grid(args.domain, {name: getattr(args, name, None) for name in BOUNDS[args.domain]})
        seeds = args.seed if args.seed else range(args.seeds)
        paths = self._generate_problems(domain=args.domain, sizes=sizes, seeds=seeds, out_dir=args.out)
        return Response(body={'problems': paths}, exit_code=EXIT_SOLVED)


def split_list(value):
    if not value:
        return []
    return [item.strip() for item in value.split(',') if item.strip()]


def size_grid(domain, values):
    """Expands per-parameter value lists into the list of size dicts they span."""
    names = list(BOUNDS[domain])
    choices = [values.get(name) or [None] for name in names]
    return [dict(zip(names, combination)) for combination in itertools.product(*choices)]


def build_parser():
    parser = argparse.ArgumentParser(prog='planner', description='Learned heuristics for STRIPS planning.')
    commands = parser.add_subparsers(dest='command', required=True)

    plan = commands.add_parser('plan', help='Solve one problem.')
    plan.add_argument('--domain', required=True)
    plan.add_argument('--problem', required=True)
    plan.add_argument('--search', choices=[a.value for a in Algorithm], default=Algorithm.GBFS.value)
    plan.add_argument('--heuristic', default=HeuristicId.HFF.value, help='blind, zero, hadd, hff or learned:PATH')
    plan.add_argument('--eval-limit', type=int)
    plan.add_argument('--plan', help='Write the plan here when solved.')

    train = commands.add_parser('train', help='Train a model on a problem directory.')
    train.add_argument('--domain', required=True)
    train.add_argument('--problems', required=True)
    train.add_argument('--out', required=True)
    train.add_argument('--shaping', choices=[s.value for s in Shaping])
    train.add_argument('--steps', type=int)
    train.add_argument('--seed', type=int)
    train.add_argument('--gamma', type=float)
    train.add_argument('--tau', type=float)
    train.add_argument('--layers', type=int)
    train.add_argument('--max-arity', type=int)
    train.add_argument('--width', type=int)
    train.add_argument('--batch', type=int)
    train.add_argument('--buffer', type=int)
    train.add_argument('--episode-cap', type=int)
    train.add_argument('--learning-rate', type=float)
    train.add_argument('--dead-end-value', type=float)
    train.add_argument('--checkpoint-interval', type=int)
    train.add_argument('--log-interval', type=int)

    evaluate = commands.add_parser('eval', help='Evaluate heuristics over a problem directory.')
    evaluate.add_argument('--domain', required=True)
    evaluate.add_argument('--problems', required=True)
    evaluate.add_argument('--heuristics', default='', help='Comma separated heuristic ids.')
    evaluate.add_argument('--model', action='append', help='Checkpoint evaluated as learned:PATH; repeatable.')
    evaluate.add_argument('--search', choices=[a.value for a in Algorithm], default=Algorithm.GBFS.value)
    evaluate.add_argument('--eval-limit', type=int)
    evaluate.add_argument('--out', required=True)

    generate = commands.add_parser('generate', help='Generate problems for a bundled domain.')
    generate.add_argument('--domain', required=True, choices=[d.value for d in GeneratorDomain])
    generate.add_argument('--out', required=True)
    generate.add_argument('--seeds', type=int, default=1, help='Use seeds 0..N-1.')
    generate.add_argument('--seed', type=int, action='append', help='Explicit seed; repeatable.')
    for name in sorted({name for bounds in BOUNDS.values() for name in bounds}):
        generate.add_argument('--{}'.format(name), type=int, nargs='+')

    return parser
