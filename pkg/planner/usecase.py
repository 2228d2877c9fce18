"""Module with the use cases behind the command-line interface."""

import logging
import threading
from pathlib import Path

from . import __version__
from .client import DOMAIN_FILE
from .domain import LEARNED_PREFIX, SearchStatus
from .dto import PlanReport, ReportRow, RunManifest, TrainSummary
from .exception import EmptyTaskList, PlannerBaseException
from .generator import content_hash, domain_text, generate_corpus
from .heuristic import make_heuristic
from .nlm import LearnedHeuristic
from .pddl import parse
from .schema import SearchConfigSchema, TrainConfigSchema, load
from .search import evaluate_suite, run_search
from .strips import ground
from .trainer import train


logger = logging.getLogger(__name__)


def load_task(problem_client, domain, problem_path):
    """Parses and grounds one problem against an already read domain text."""
    return ground(parse(domain, problem_client.read(problem_path)))


class HeuristicResolver:
    """Builds heuristics from ids; `learned:PATH` loads (and caches) a checkpoint.

    Attributes:
        _checkpoint_client (CheckpointFileClient): Checkpoint reader.
        _models (dict): Loaded models by path.

    """

    def __init__(self, checkpoint_client):
        self._checkpoint_client = checkpoint_client
        self._models = {}
        self._lock = threading.Lock()

    def model(self, path):
        with self._lock:
            model = self._models.get(path)
            if model is None:
                model = self._models[path] = self._checkpoint_client.load(path).model
            return model

    def __call__(self, heuristic_id, task):
        if heuristic_id.startswith(LEARNED_PREFIX):
            path = heuristic_id[len(LEARNED_PREFIX):]
            return LearnedHeuristic(self.model(path), task, label=heuristic_id)
        return make_heuristic(heuristic_id, task)


class PlanInstance:
    """Use-case for solving a single problem.

    Reads and grounds the instance, builds the requested heuristic, runs the
    search and optionally writes the plan in VAL form.

    """

    def __init__(self, problem_client, plan_client, resolver, eval_limit):
        self._problem_client = problem_client
        self._plan_client = plan_client
        self._resolver = resolver
        self._eval_limit = eval_limit

    def __call__(self, domain_path, problem_path, algorithm, heuristic_id, eval_limit=None, plan_path=None):
        cfg = load(SearchConfigSchema(), {
            'algorithm': algorithm,
            'eval_limit': self._eval_limit if eval_limit is None else eval_limit
        })
        task = load_task(self._problem_client, self._problem_client.read(domain_path), problem_path)
        heuristic = self._resolver(heuristic_id, task)
        result = run_search(task, heuristic, cfg)
        labels = [task.actions[action_id].label() for action_id in result.plan]
        if plan_path is not None and result.status == SearchStatus.SOLVED.value:
            self._plan_client.write(plan_path, labels)
        row = ReportRow(
            instance=task.name,
            objects=task.object_count,
            algorithm=cfg.algorithm,
            heuristic=heuristic_id,
            status=result.status,
            evaluations=result.evaluations,
            expansions=result.expansions,
            plan_length=result.plan_length,
            seconds=result.seconds
        )
        return PlanReport(row=row, plan=labels)


class TrainModel:
    """Use-case for training a model on a directory of problems.

    Writes the checkpoint to `out_path`, metrics to `<out_path>.metrics.jsonl`
    and the run manifest to `<out_path>.manifest.json`.

    """

    def __init__(self, problem_client, checkpoint_client, metrics_client, manifest_client,
                 checkpoint_interval, log_interval):
        self._problem_client = problem_client
        self._checkpoint_client = checkpoint_client
        self._metrics_client = metrics_client
        self._manifest_client = manifest_client
        self._checkpoint_interval = checkpoint_interval
        self._log_interval = log_interval

    def __call__(self, domain_path, problems_dir, out_path, config):
        config = dict(config)
        config.setdefault('checkpoint_interval', self._checkpoint_interval)
        config.setdefault('log_interval', self._log_interval)
        cfg = load(TrainConfigSchema(), config)

        domain = self._problem_client.read(domain_path)
        tasks, digests = [], {}
        for path in self._problem_client.list_problems(problems_dir):
            try:
                text = self._problem_client.read(path)
                tasks.append(ground(parse(domain, text)))
            except PlannerBaseException as error:
                logger.warning('Skipping %s: %s', path, error)
                continue
            digests[path.name] = content_hash(text)
        if not tasks:
            raise EmptyTaskList(message='No usable problems in {}.'.format(problems_dir), payload={'path': str(problems_dir)})

        out_path = Path(out_path)
        metrics_path = out_path.with_name(out_path.name + '.metrics.jsonl')
        manifest_path = out_path.with_name(out_path.name + '.manifest.json')
        append = self._metrics_client.open(metrics_path)

        def save(model, stats):
            self._checkpoint_client.save(out_path, model)

        model, stats = train(tasks, cfg, on_record=append, on_checkpoint=save)
        self._checkpoint_client.save(out_path, model)
        self._manifest_client.write(manifest_path, RunManifest(
            seed=cfg.seed,
            config=cfg.as_dict(),
            instances=digests,
            version=__version__,
            domain_fingerprint=model.fingerprint
        ))
        return TrainSummary(
            steps=stats.sgd_steps,
            episodes=stats.episodes,
            cumulative_goals=stats.cumulative_goals,
            checkpoint=str(out_path),
            metrics=str(metrics_path),
            manifest=str(manifest_path)
        )


def summary_path(out_path):
    out_path = Path(out_path)
    return out_path.with_name(out_path.name + '.summary.json')


class EvaluateProblems:
    """Use-case for evaluating heuristics over a directory of problems.

    Writes the CSV rows to `out_path` and the coverage summary to `<out_path>.summary.json`.
    Unreadable or unparsable problems are logged, listed as failures and skipped.

    """

    def __init__(self, problem_client, report_client, resolver, eval_limit, threads):
        self._problem_client = problem_client
        self._report_client = report_client
        self._resolver = resolver
        self._eval_limit = eval_limit
        self._threads = threads

    def __call__(self, domain_path, problems_dir, heuristics, algorithm, out_path, models=(), eval_limit=None):
        cfg = load(SearchConfigSchema(), {
            'algorithm': algorithm,
            'eval_limit': self._eval_limit if eval_limit is None else eval_limit
        })
        heuristics = list(heuristics) + [LEARNED_PREFIX + str(path) for path in models]
        domain = self._problem_client.read(domain_path)
        tasks, failures = [], []
        for path in self._problem_client.list_problems(problems_dir):
            try:
                tasks.append(load_task(self._problem_client, domain, path))
            except PlannerBaseException as error:
                logger.warning('Skipping %s: %s', path, error)
                failures.append(path.name)
        if not tasks:
            raise EmptyTaskList(message='No usable problems in {}.'.format(problems_dir), payload={'path': str(problems_dir)})
        report = evaluate_suite(tasks, heuristics, cfg, factory=self._resolver, threads=self._threads)
        report.failures = failures + report.failures
        self._report_client.write(out_path, report.rows)
        self._report_client.write_summary(summary_path(out_path), report)
        return report


class GenerateProblems:
    """Use-case for writing a generated corpus plus its domain file to a directory."""

    def __init__(self, problem_client, eval_limit):
        self._problem_client = problem_client
        self._eval_limit = eval_limit

    def __call__(self, domain, sizes, seeds, out_dir):
        out_dir = Path(out_dir)
        self._problem_client.write(out_dir / DOMAIN_FILE, domain_text(domain))
        paths = []
        for name, text in generate_corpus(domain, sizes, seeds, self._eval_limit):
            path = out_dir / '{}.pddl'.format(name)
            self._problem_client.write(path, text)
            paths.append(str(path))
        return paths
