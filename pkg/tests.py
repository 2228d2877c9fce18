import io
import json
import math
import os
import random
import tempfile
import unittest
from collections import namedtuple
from pathlib import Path
from unittest.mock import Mock, patch

import numpy as np

from planner import checkpoint
from planner.client import (
    CheckpointFileClient,
    ManifestFileClient,
    MetricsFileClient,
    PlanFileClient,
    ProblemFileClient,
    ReportFileClient
)
from planner.container import Container
from planner.dto import EpisodeRecord, ReportRow, RunManifest, SearchResult
from planner.exception import (
    CheckpointFormatError,
    DeadEndState,
    EmptyBuffer,
    EmptyTaskList,
    InvalidConfig,
    InvalidGeneratorSize,
    InvalidLiftedTask,
    InvalidSchedule,
    NonScalarLoss,
    PddlSyntaxError,
    PreconditionViolated,
    ProblemFileError,
    ShapeMismatch,
    SignatureMismatch,
    UnsupportedConstruct,
    UnsupportedRequirement
)
from planner.generator import content_hash, domain_text, generate, generate_corpus, is_usable
from planner.handler import main
from planner.heuristic import (
    INFINITY,
    Heuristic,
    Potential,
    discounted,
    h_add,
    h_blind,
    h_ff,
    make_heuristic,
    potential,
    shaped_reward
)
from planner.nlm import (
    AritySchedule,
    LearnedHeuristic,
    Mapr,
    NlmModel,
    encode,
    expand,
    fingerprint,
    learned_heuristic,
    perm,
    reduce
)
from planner.pddl import check_requirements, parse
from planner.schema import SearchConfigSchema, TrainConfigSchema, load
from planner.search import (
    SearchConfig,
    astar,
    coverage,
    evaluate_suite,
    gbfls,
    gbfs,
    lookahead_depth,
    paired_tally,
    run_search
)
from planner.strips import (
    applicable,
    ground,
    is_goal,
    random_walk,
    successor,
    validate_plan
)
from planner.tabular import (
    TableValueFunction,
    TabularMdp,
    expected_values,
    goal_distances,
    greedy_actions,
    optimal_values,
    oracle_potential
)
from planner.tensor import (
    AdamState,
    Tape,
    Tensor,
    adam_step,
    backward,
    broadcast_expand,
    matmul_lastaxis,
    max_reduce_axis,
    mse_loss,
    sigmoid,
    sum_all
)
from planner.trainer import (
    ReplayBuffer,
    TrainConfig,
    buffer_sample,
    build_model,
    make_entry,
    q_values,
    rollout_step,
    td_target,
    train
)


SLOW_TESTS = os.environ.get('PLANNER_SLOW_TESTS') == '1'

GOLDEN = Path(__file__).parent / 'fixtures' / 'golden.ckpt'

CHAIN_DOMAIN = """
(define (domain chain)
  (:requirements :strips)
  (:predicates (p0) (p1) (p2) (p3) (q))
  (:action a1 :parameters () :precondition (p0) :effect (and (p1) (not (p0))))
  (:action a2 :parameters () :precondition (p1) :effect (and (p2) (not (p1))))
  (:action a3 :parameters () :precondition (p2) :effect (and (p3) (not (p2)))))
"""

CORRIDOR_DOMAIN = """
(define (domain corridor)
  (:requirements :strips)
  (:predicates (at ?x) (next ?x ?y) (side ?x ?y))
  (:action move
    :parameters (?from ?to)
    :precondition (and (at ?from) (next ?from ?to))
    :effect (and (at ?to) (not (at ?from))))
  (:action detour
    :parameters (?from ?to)
    :precondition (and (at ?from) (side ?from ?to))
    :effect (and (at ?to) (not (at ?from)))))
"""

FORK_DOMAIN = """
(define (domain fork)
  (:requirements :strips)
  (:predicates (start) (left) (right) (done))
  (:action go-left :parameters () :precondition (start) :effect (and (left) (not (start))))
  (:action go-right :parameters () :precondition (start) :effect (and (right) (not (start))))
  (:action finish-left :parameters () :precondition (left) :effect (and (done) (not (left))))
  (:action finish-right :parameters () :precondition (right) :effect (and (done) (not (right)))))
"""

TWIN_DOMAIN = """
(define (domain twin)
  (:requirements :strips)
  (:predicates (s) (g))
  (:action reach :parameters () :precondition (s) :effect (and (g) (not (s))))
  (:action also-reach :parameters () :precondition (s) :effect (g)))
"""

STRAY_DOMAIN = """
(define (domain stray)
  (:requirements :strips)
  (:predicates (s) (g) (x))
  (:action reach :parameters () :precondition (s) :effect (and (g) (not (s))))
  (:action stray :parameters () :precondition (s) :effect (and (x) (not (s)))))
"""

SWITCH_DOMAIN = """
(define (domain switch)
  (:requirements :strips)
  (:predicates (off ?x) (on ?x))
  (:action turn-on :parameters (?x) :precondition (off ?x) :effect (and (on ?x) (not (off ?x)))))
"""

FLAG_DOMAIN = """
(define (domain flag)
  (:requirements :strips)
  (:predicates (flag))
  (:action raise :parameters () :precondition (and) :effect (flag)))
"""

TYPED_DOMAIN = """
(define (domain typed)
  (:requirements :strips :typing)
  (:types ball room - object)
  (:predicates (at ?b - ball ?r - room) (near ?r - room))
  (:action roll
    :parameters (?b - ball ?from - room ?to - room)
    :precondition (and (at ?b ?from) (near ?to))
    :effect (and (at ?b ?to) (not (at ?b ?from)))))
"""

MINIMAL_DOMAIN = """
(define (domain minimal)
  (:predicates (p))
  (:action make :parameters () :precondition (and) :effect (p)))
"""


def problem(name, domain, objects, init, goal):
    return '(define (problem {}) (:domain {}) (:objects {}) (:init {}) (:goal (and {})))'.format(
        name, domain, ' '.join(objects), ' '.join(init), ' '.join(goal))


def task_of(domain, problem_text):
    return ground(parse(domain, problem_text))


def chain_task(init=('(p0)',), goal=('(p2)',)):
    return task_of(CHAIN_DOMAIN, problem('chain', 'chain', [], init, goal))


def corridor_task(length, sides=True, both_ways=False):
    nodes = ['n{}'.format(i) for i in range(length + 1)]
    detours = ['d{}'.format(i) for i in range(length)] if sides else []
    init = ['(at n0)']
    init += ['(next {} {})'.format(a, b) for a, b in zip(nodes, nodes[1:])]
    if both_ways:
        init += ['(next {} {})'.format(b, a) for a, b in zip(nodes, nodes[1:])]
    init += ['(side {} {})'.format(a, d) for a, d in zip(nodes, detours)]
    return task_of(CORRIDOR_DOMAIN, problem(
        'corridor-{}'.format(length), 'corridor', nodes + detours, init, ['(at {})'.format(nodes[-1])]))


def blocks_task(objects, init, goal, name='blocks'):
    return task_of(domain_text('blocks'), problem(name, 'blocks', objects, init, goal))


def blocks_two():
    return blocks_task(
        ['b1', 'b2'],
        ['(ontable b1)', '(ontable b2)', '(clear b1)', '(clear b2)', '(handempty)'],
        ['(on b1 b2)']
    )


def table_blocks(count, goal):
    names = ['b{}'.format(i) for i in range(count)]
    init = ['(ontable {0}) (clear {0})'.format(name) for name in names] + ['(handempty)']
    return blocks_task(names, init, goal)


def generated_task(domain, seed, **sizes):
    return task_of(domain_text(domain), generate(domain, seed, **sizes))


def switch_task(objects=3):
    names = ['o{}'.format(i) for i in range(1, objects + 1)]
    init = ['(off o1)'] + ['(on {})'.format(name) for name in names[1:]]
    return task_of(SWITCH_DOMAIN, problem('switch-{}'.format(objects), 'switch', names, init, ['(on o1)']))


def flag_task():
    return task_of(FLAG_DOMAIN, problem('flag-1', 'flag', [], [], ['(flag)']))


def small_model(task, shaping='hff', seed=0, dtype=np.float32):
    return NlmModel.for_task(task, max_arity=2, layers=4, width=4, shaping=shaping, seed=seed, dtype=dtype)


def random_mapr(model, objects, rng, batch=()):
    tensors = tuple(
        rng.random(batch + (objects,) * arity + (channels,))
        for arity, channels in enumerate(model.input_channels())
    )
    return Mapr(tensors, objects)


def zero_potential(state):
    return 0.0


class TableHeuristic(Heuristic):
    """Heuristic read from a dict of state bits, counting computations."""

    id = 'table'

    def __init__(self, task, values, default=INFINITY):
        super().__init__(task)
        self._values = values
        self._default = default
        self.calls = 0

    def _compute(self, state):
        self.calls += 1
        return self._values.get(state.bits, self._default)


class CountingHeuristic(Heuristic):
    """scale * h + shift for a classical h, counting computations."""

    def __init__(self, task, base, scale=1.0, shift=0.0):
        super().__init__(task)
        self.id = base
        self._inner = make_heuristic(base, task)
        self._scale = scale
        self._shift = shift
        self.calls = 0

    def _compute(self, state):
        self.calls += 1
        return self._scale * self._inner(state) + self._shift


def perfect_values(task):
    mdp = TabularMdp.from_task(task, limit=5000)
    return {state.bits: float(d) for state, d in zip(mdp.states, goal_distances(mdp))}


class TestParse(unittest.TestCase):  # pragma: no cover

    def test_minimal_domain(self):
        task = parse(MINIMAL_DOMAIN, problem('m', 'minimal', [], [], ['(p)']))

        self.assertEqual(len(task.predicates), 1)
        self.assertEqual(len(task.actions), 1)

    def test_blocks_domain(self):
        task = parse(domain_text('blocks'), generate('blocks', 1, blocks=3))

        self.assertEqual(
            [p.name for p in task.predicates],
            ['on', 'ontable', 'clear', 'handempty', 'holding']
        )
        self.assertEqual(
            [a.name for a in task.actions],
            ['pick-up', 'put-down', 'stack', 'unstack']
        )

    def test_unsupported_requirement(self):
        domain = MINIMAL_DOMAIN.replace('(:predicates', '(:requirements :strips :probabilistic-effects) (:predicates')

        with self.assertRaises(UnsupportedRequirement) as context:
            parse(domain, problem('m', 'minimal', [], [], ['(p)']))

        self.assertEqual(context.exception.payload['requirement'], ':probabilistic-effects')

    def test_action_costs_are_rejected(self):
        domain = MINIMAL_DOMAIN.replace('(:predicates', '(:requirements :action-costs) (:predicates')

        with self.assertRaises(UnsupportedRequirement):
            parse(domain, problem('m', 'minimal', [], [], ['(p)']))

    def test_requirement_check(self):
        statement = namedtuple('Statement', 'keywords')
        keyword = namedtuple('Keyword', 'name')

        self.assertEqual(check_requirements(None), (':strips',))
        self.assertEqual(
            check_requirements(statement([keyword('strips'), keyword(':typing')])),
            (':strips', ':typing')
        )
        with self.assertRaises(UnsupportedRequirement) as context:
            check_requirements(statement([keyword('strips'), keyword('adl')]))
        self.assertEqual(context.exception.payload['requirement'], ':adl')

    def test_syntax_error_names_the_document(self):
        with self.assertRaises(PddlSyntaxError) as context:
            parse('(define (domain broken)\n  (:predicates (p)', problem('m', 'broken', [], [], []))

        self.assertEqual(context.exception.payload['document'], 'domain')
        self.assertTrue(context.exception.payload['reason'])

    def test_disjunctive_goal_is_rejected(self):
        goal = problem('c', 'chain', [], ['(p0)'], []).replace('(:goal (and ))', '(:goal (or (p1) (p2)))')

        with self.assertRaises(UnsupportedConstruct) as context:
            parse(CHAIN_DOMAIN, goal)

        self.assertEqual(context.exception.payload['where'], 'goal')
        self.assertEqual(context.exception.payload['construct'], 'or')

    def test_negative_precondition_is_rejected(self):
        domain = MINIMAL_DOMAIN.replace(':precondition (and)', ':precondition (not (p))')

        with self.assertRaises(UnsupportedConstruct) as context:
            parse(domain, problem('m', 'minimal', [], [], ['(p)']))

        self.assertEqual(context.exception.payload['construct'], 'not')

    def test_undeclared_predicate(self):
        with self.assertRaises(InvalidLiftedTask):
            parse(MINIMAL_DOMAIN, problem('m', 'minimal', [], ['(r)'], ['(p)']))

    def test_types_become_static_unary_predicates(self):
        task = parse(TYPED_DOMAIN, problem('t', 'typed', ['b1 - ball', 'r1 r2 - room'], ['(at b1 r1)'], ['(at b1 r2)']))

        names = [p.name for p in task.predicates]
        atoms = [(a.predicate, a.args) for a in task.init]
        self.assertEqual(sorted(names[-2:]), ['type:ball', 'type:room'])
        self.assertIn(('type:room', ('r1',)), atoms)
        self.assertIn(('type:room', ('r2',)), atoms)
        self.assertNotIn(('type:room', ('b1',)), atoms)


class TestGround(unittest.TestCase):  # pragma: no cover

    def test_proposition_count(self):
        domain = """
        (define (domain counts)
          (:predicates (u ?x) (b ?x ?y))
          (:action noop :parameters (?x) :precondition (u ?x) :effect (u ?x)))
        """
        task = task_of(domain, problem('c', 'counts', ['o1', 'o2', 'o3'], [], []))

        self.assertEqual(task.size, 3 + 9)

    def test_no_actions(self):
        domain = '(define (domain empty) (:predicates (p ?x)))'
        task = task_of(domain, problem('e', 'empty', ['o1'], ['(p o1)'], ['(p o1)']))

        self.assertEqual(task.actions, ())

    def test_blocks_two_propositions(self):
        self.assertEqual(blocks_two().size, 11)

    def test_grounding_is_deterministic(self):
        text = generate('gripper', 3, balls=3)
        first = task_of(domain_text('gripper'), text)
        second = task_of(domain_text('gripper'), text)

        self.assertEqual([a.label() for a in first.actions], [a.label() for a in second.actions])
        self.assertEqual(first.initial, second.initial)
        self.assertEqual(first.goal, second.goal)

    def test_row_major_layout(self):
        task = blocks_two()

        self.assertEqual(task.proposition_id('on', ('b1', 'b2')), 1)
        self.assertEqual(task.proposition_id('on', ('b2', 'b1')), 2)
        self.assertEqual(task.proposition_id('ontable', ('b1',)), 4)
        self.assertEqual(task.proposition_id('handempty', ()), 8)
        for proposition_id in range(task.size):
            self.assertEqual(task.proposition_id(*task.proposition(proposition_id)), proposition_id)

    def test_typed_parameters_are_filtered(self):
        task = task_of(TYPED_DOMAIN, problem('t', 'typed', ['b1 - ball', 'r1 r2 - room'], ['(at b1 r1)', '(near r2)'], ['(at b1 r2)']))

        self.assertTrue(all(action.args[0] == 'b1' for action in task.actions))


class TestTransitions(unittest.TestCase):  # pragma: no cover

    def test_applicable_in_blocks_two(self):
        task = blocks_two()

        labels = {task.actions[i].label() for i in applicable(task.initial, task)}

        self.assertEqual(labels, {'(pick-up b1)', '(pick-up b2)'})

    def test_applicable_on_chain(self):
        task = chain_task()

        self.assertEqual(applicable(task.initial, task), [0])

    def test_dead_end_has_no_applicable_action(self):
        task = chain_task(init=('(p3)',))

        self.assertEqual(applicable(task.initial, task), [])

    def test_successor(self):
        task = chain_task()

        child = successor(task.initial, task.actions[0])

        self.assertEqual(child.ids(), [1])
        self.assertEqual(task.initial.ids(), [0])

    def test_delete_before_add(self):
        domain = """
        (define (domain keep)
          (:predicates (p))
          (:action toggle :parameters () :precondition (p) :effect (and (not (p)) (p))))
        """
        task = task_of(domain, problem('k', 'keep', [], ['(p)'], ['(p)']))

        self.assertTrue(successor(task.initial, task.actions[0]).holds(0))

    def test_precondition_violated(self):
        task = chain_task()

        with self.assertRaises(PreconditionViolated):
            successor(task.initial, task.actions[1])

    def test_goal_tests(self):
        solved, empty, task = chain_task(goal=('(p0)',)), chain_task(goal=()), blocks_two()

        self.assertTrue(is_goal(solved.initial, solved))
        self.assertTrue(is_goal(empty.initial, empty))
        self.assertFalse(is_goal(task.initial, task))

    def test_random_walks_stay_sound(self):
        rng = random.Random(7)
        tasks = [generated_task('blocks', 2, blocks=3), generated_task('gripper', 2, balls=2)]
        for task in tasks:
            for _ in range(20):
                trace = random_walk(task, 40, rng)
                self.assertLessEqual(len(trace), 41)
                for state, action_id in trace:
                    self.assertEqual(state.size, task.size)
                    if action_id is not None:
                        self.assertIn(action_id, applicable(state, task))

    def test_validate_plan(self):
        task = chain_task()

        self.assertTrue(validate_plan(task, [0, 1]))
        self.assertFalse(validate_plan(task, [1]))
        self.assertFalse(validate_plan(task, [0]))


class TestHeuristics(unittest.TestCase):  # pragma: no cover

    def test_blind(self):
        task = chain_task(goal=('(p0)',))

        self.assertEqual(h_blind(task.initial), 1)

    def test_additive(self):
        task = chain_task()
        p1, p2, q = 1, 2, 4

        self.assertEqual(h_add(task.initial, [p2], task), 2)
        self.assertEqual(h_add(task.initial, [p1, p2], task), 3)
        self.assertEqual(h_add(task.initial, [0], task), 0)
        self.assertEqual(h_add(task.initial, [q], task), INFINITY)

    def test_ff(self):
        task = chain_task()

        self.assertEqual(h_ff(task.initial, [1, 2], task), (2.0, frozenset({0, 1})))
        self.assertEqual(h_ff(task.initial, [0], task), (0.0, frozenset()))
        self.assertEqual(h_ff(task.initial, [4], task), (INFINITY, frozenset()))

    def test_discounted(self):
        self.assertEqual(discounted(0, 0.9), 0)
        self.assertAlmostEqual(discounted(INFINITY, 0.9), 10.0, places=12)
        self.assertAlmostEqual(discounted(2, 0.9), 1.9, places=12)
        self.assertEqual(discounted(3, 0.0), 1.0)
        self.assertEqual(discounted(INFINITY, 0.0), 1.0)
        with self.assertRaises(InvalidConfig):
            discounted(2, 1.0)

    def test_discounted_is_bounded(self):
        for gamma in (0.0, 0.5, 0.9, 0.999999):
            for h in (0, 1, 5, 1000, INFINITY):
                value = discounted(h, gamma)
                self.assertGreaterEqual(value, 0)
                self.assertLessEqual(value, 1.0 / (1.0 - gamma) + 1e-9)

    def test_potential(self):
        solved = chain_task(goal=('(p0)',))
        unreachable = chain_task(goal=('(q)',))
        task = chain_task()

        self.assertEqual(potential(solved.initial, 'hadd', 0.9, solved), 0)
        self.assertAlmostEqual(potential(unreachable.initial, 'hadd', 0.9, unreachable), -10.0, places=12)
        self.assertAlmostEqual(potential(task.initial, 'hadd', 0.9, task), -1.9, places=12)
        self.assertEqual(potential(task.initial, 'none', 0.9, task), 0)
        self.assertAlmostEqual(Potential(task, 'hadd', 0.9)(task.initial), -1.9, places=12)

    def test_potential_reset_clears_cached_values(self):
        task = chain_task()
        shaping = Potential(task, 'hadd', 0.9)
        shaping(task.initial)
        heuristic = make_heuristic('hadd', task)
        heuristic(task.initial)

        shaping.reset()
        heuristic.reset()

        self.assertEqual(shaping._heuristic._cache, {})
        self.assertEqual(heuristic._cache, {})
        self.assertAlmostEqual(shaping(task.initial), -1.9, places=12)

    def test_shaped_reward(self):
        self.assertEqual(shaped_reward(0.9, 0.0, 0.0), -1)
        self.assertAlmostEqual(shaped_reward(0.9, -discounted(2, 0.9), -discounted(1, 0.9)), 0.0, places=12)
        self.assertLess(shaped_reward(0.9, -1.0, -1.9), -1)

    def test_unknown_heuristic(self):
        with self.assertRaises(InvalidConfig):
            make_heuristic('hmax', chain_task())

    def test_ff_and_additive_zero_only_on_goal(self):
        task = generated_task('blocks', 4, blocks=3)
        for state, _ in random_walk(task, 30, random.Random(3)):
            solved = is_goal(state, task)
            self.assertEqual(h_add(state, task.goal, task) == 0, solved)
            self.assertEqual(h_ff(state, task.goal, task)[0] == 0, solved)

    def test_random_micro_tasks_match_fixpoint_oracle(self):
        rng = np.random.default_rng(11)
        checked = 0
        for _ in range(500):
            if checked >= 50:
                break
            count = int(rng.integers(3, 13))
            actions = []
            for index in range(int(rng.integers(1, 10))):
                pre = sorted({int(p) for p in rng.integers(count, size=int(rng.integers(0, 3)))})
                add = sorted({int(p) for p in rng.integers(count, size=int(rng.integers(1, 3)))})
                actions.append((pre, add))
            domain = '(define (domain micro) (:predicates {}) {})'.format(
                ' '.join('(p{})'.format(i) for i in range(count)),
                ' '.join(
                    '(:action a{} :parameters () :precondition (and {}) :effect (and {}))'.format(
                        index, ' '.join('(p{})'.format(p) for p in pre), ' '.join('(p{})'.format(p) for p in add))
                    for index, (pre, add) in enumerate(actions)
                )
            )
            init = sorted({int(p) for p in rng.integers(count, size=int(rng.integers(0, 3)))})
            goal = sorted({int(p) for p in rng.integers(count, size=int(rng.integers(1, 4)))})
            task = task_of(domain, problem(
                'micro', 'micro', [], ['(p{})'.format(p) for p in init], ['(p{})'.format(p) for p in goal]))

            costs = {p: 0 for p in init}
            changed = True
            while changed:
                changed = False
                for pre, add in actions:
                    if all(p in costs for p in pre):
                        cost = 1 + sum(costs[p] for p in pre)
                        for p in add:
                            if cost < costs.get(p, math.inf):
                                costs[p] = cost
                                changed = True
            expected = sum(costs.get(p, math.inf) for p in goal)
            if expected == math.inf:
                self.assertEqual(h_add(task.initial, task.goal, task), INFINITY)
                continue

            self.assertEqual(h_add(task.initial, task.goal, task), expected)
            value, plan = h_ff(task.initial, task.goal, task)
            self.assertLessEqual(value, expected)
            reached = set(init)
            grown = True
            while grown:
                grown = False
                for action_id in plan:
                    action = task.actions[action_id]
                    if action.pre <= reached and not action.add <= reached:
                        reached |= action.add
                        grown = True
            self.assertTrue(set(goal) <= reached)
            checked += 1
        self.assertGreaterEqual(checked, 50)


class TestTabular(unittest.TestCase):  # pragma: no cover

    def test_shaping_preserves_values_and_greedy_actions(self):
        rng = np.random.default_rng(5)
        for index in range(12):
            gamma = 0.9 if index % 2 else 0.999999
            dead_ends = int(rng.integers(0, 4)) if gamma == 0.9 else 0
            mdp = TabularMdp.random(rng, int(rng.integers(20, 200)), branching=3, goals=2, dead_ends=dead_ends)
            phi = np.array([-discounted(float(h), gamma) for h in rng.integers(0, 20, size=mdp.size)])
            effective = np.where(mdp.goals, 0.0, phi)

            values, _ = optimal_values(mdp, gamma)
            shaped, _ = optimal_values(mdp, gamma, phi)

            self.assertLessEqual(np.max(np.abs(values - (shaped + effective))), 1e-9)
            self.assertEqual(
                greedy_actions(mdp, values, gamma),
                greedy_actions(mdp, shaped, gamma, phi)
            )

    def test_oracle_potential_nullifies_shaped_values(self):
        tasks = [
            generated_task('blocks', 1, blocks=3),
            generated_task('gripper', 1, balls=2),
            corridor_task(5, sides=True, both_ways=True)
        ]
        for task in tasks:
            mdp = TabularMdp.from_task(task)
            distances = goal_distances(mdp)
            for gamma in (0.9, 0.999999):
                shaped, _ = optimal_values(mdp, gamma, oracle_potential(mdp, gamma))
                solvable = np.isfinite(distances)
                self.assertLessEqual(np.max(np.abs(shaped[solvable])), 1e-9)

    def test_on_policy_values_shift_by_potential(self):
        rng = np.random.default_rng(2)
        mdp = TabularMdp.random(rng, 30, branching=2, goals=1, dead_ends=1)
        phi = np.array([-discounted(float(h), 0.9) for h in rng.integers(0, 8, size=mdp.size)])

        plain = expected_values(mdp, 0.9, 1.0)
        shaped = expected_values(mdp, 0.9, 1.0, phi)

        np.testing.assert_allclose(shaped + np.where(mdp.goals, 0.0, phi), plain, atol=1e-8)

    def test_state_limit(self):
        with self.assertRaises(InvalidConfig):
            TabularMdp.from_task(generated_task('blocks', 1, blocks=6), limit=50)

    def test_invalid_random_mdp(self):
        with self.assertRaises(InvalidConfig):
            TabularMdp.random(np.random.default_rng(0), 3, goals=2, dead_ends=2)


class TestTensor(unittest.TestCase):  # pragma: no cover

    def test_sigmoid(self):
        x = Tensor(np.zeros(()), requires_grad=True, dtype=np.float64)

        with Tape():
            y = sigmoid(x)
        grads = backward(y)

        self.assertEqual(y.item(), 0.5)
        self.assertEqual(float(grads[x]), 0.25)

    def test_max_reduce_routes_gradient_to_hot_position(self):
        x = Tensor(np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]), requires_grad=True)

        with Tape():
            y = max_reduce_axis(x, -1)
            loss = sum_all(y)
        grads = backward(loss)

        np.testing.assert_array_equal(y.data, [1.0, 2.0])
        np.testing.assert_array_equal(grads[x], [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])

    def test_max_reduce_ties_go_to_first(self):
        x = Tensor(np.array([1.0, 1.0]), requires_grad=True)

        with Tape():
            loss = max_reduce_axis(x, 0)
        grads = backward(loss)

        np.testing.assert_array_equal(grads[x], [1.0, 0.0])

    def test_sum_gradient_is_one(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)

        with Tape():
            loss = sum_all(x)

        np.testing.assert_array_equal(backward(loss)[x], np.ones((2, 3)))

    def test_mse_of_equal_inputs_has_zero_gradient(self):
        x = Tensor(np.arange(4.0), requires_grad=True)

        with Tape():
            loss = mse_loss(x, x)

        self.assertEqual(loss.item(), 0.0)
        np.testing.assert_array_equal(backward(loss)[x], np.zeros(4))

    def test_scalar_results_keep_zero_dimensions(self):
        x = Tensor(np.arange(3.0), requires_grad=True)

        with Tape():
            loss = mse_loss(x, np.zeros(3))
            total = sum_all(x)

        self.assertEqual(Tensor(2.0).shape, ())
        self.assertEqual(loss.data.shape, ())
        self.assertEqual(total.data.shape, ())

    def test_scalar_loss_backward_and_adam_step(self):
        param = Tensor(np.array([1.0, -1.0]), requires_grad=True, dtype=np.float64)
        state = AdamState(lr=0.1)

        with Tape():
            loss = mse_loss(param, np.zeros(2))
        grads = backward(loss)
        adam_step({'w': param}, {'w': grads[param]}, state)

        np.testing.assert_allclose(grads[param], [0.5, -0.5])
        np.testing.assert_allclose(param.data, [0.9, -0.9], rtol=1e-6)
        self.assertEqual(state.step, 1)

    def test_non_scalar_loss(self):
        x = Tensor(np.ones(3), requires_grad=True)

        with Tape():
            y = sigmoid(x)

        with self.assertRaises(NonScalarLoss):
            backward(y)

    def test_untaped_loss(self):
        with self.assertRaises(NonScalarLoss):
            backward(sum_all(Tensor(np.ones(3), requires_grad=True)))

    def test_shape_mismatch_names_both_shapes(self):
        with self.assertRaises(ShapeMismatch) as context:
            matmul_lastaxis(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 1))))

        self.assertIn('(2, 3)', str(context.exception))
        self.assertIn('(4, 1)', str(context.exception))

    def test_expand_gradient_sums_copies(self):
        x = Tensor(np.ones((2, 3)), requires_grad=True)

        with Tape():
            loss = sum_all(broadcast_expand(x, -2, 4))

        np.testing.assert_array_equal(backward(loss)[x], np.full((2, 3), 4.0))

    def test_nlm_graphs_match_finite_differences(self):
        rng = np.random.default_rng(17)
        worst = 0.0
        for index in range(20):
            max_input = int(rng.integers(1, 3))
            signature = [
                ('r{}_{}'.format(arity, k), arity)
                for arity in range(max_input + 1)
                for k in range(int(rng.integers(1, 3)))
            ]
            max_arity = max_input + int(rng.integers(0, 2))
            layers = max_arity + int(rng.integers(1, 3))
            model = NlmModel(
                signature, AritySchedule.build(max_input, max_arity, layers),
                width=3, seed=index, dtype=np.float64
            )
            mapr = random_mapr(model, 3, rng, batch=(2,))
            target = rng.normal(size=(2, 1))

            with Tape():
                loss = mse_loss(model.forward(mapr), target)
            grads = backward(loss)

            for param in model.params.values():
                analytic = grads.get(param, np.zeros_like(param.data)).reshape(-1)
                flat = param.data.reshape(-1)
                for position in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                    original = flat[position]
                    flat[position] = original + 1e-5
                    plus = mse_loss(model.forward(mapr), target).item()
                    flat[position] = original - 1e-5
                    minus = mse_loss(model.forward(mapr), target).item()
                    flat[position] = original
                    numeric = (plus - minus) / 2e-5
                    exact = analytic[position]
                    worst = max(worst, abs(numeric - exact) / max(abs(numeric), abs(exact), 1e-5))
        self.assertLess(worst, 1e-4)

    def test_adam_zero_gradient_keeps_params(self):
        param = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        state = AdamState()

        adam_step({'w': param}, {}, state)

        np.testing.assert_array_equal(param.data, [1.0, -2.0])
        np.testing.assert_array_equal(state.m['w'], [0.0, 0.0])
        self.assertEqual(state.step, 1)

    def test_adam_first_step_moves_by_learning_rate(self):
        param = Tensor(np.array([1.0]), requires_grad=True, dtype=np.float64)
        state = AdamState(lr=0.01)

        adam_step({'w': param}, {'w': np.array([3.0])}, state)

        self.assertAlmostEqual(param.data[0], 0.99, places=6)

    def test_adam_shape_mismatch(self):
        param = Tensor(np.ones(2), requires_grad=True)

        with self.assertRaises(ShapeMismatch):
            adam_step({'w': param}, {'w': np.ones(3)}, AdamState())

    def test_adam_minimizes_quadratic(self):
        param = Tensor(np.array([1.0]), requires_grad=True, dtype=np.float64)
        state = AdamState(lr=0.01)
        value = math.inf
        for _ in range(5000):
            with Tape():
                loss = mse_loss(param, np.zeros(1))
            value = loss.item()
            if value < 1e-6:
                break
            adam_step({'w': param}, {'w': backward(loss)[param]}, state)

        self.assertLess(value, 1e-6)


class TestNlm(unittest.TestCase):  # pragma: no cover

    def test_schedule_example(self):
        self.assertEqual(AritySchedule.build(2, 3, 7).arities, (2, 3, 3, 3, 2, 1, 0))

    def test_schedule_invariants(self):
        for layers in range(1, 10):
            for max_arity in range(layers + 1):
                for max_input in range(min(max_arity, layers - 1) + 1):
                    arities = AritySchedule.build(max_input, max_arity, layers).arities
                    self.assertEqual(arities[0], max_input)
                    self.assertEqual(arities[-1], 0)
                    self.assertLessEqual(max(arities), max_arity)
                    for a, b in zip(arities, arities[1:]):
                        self.assertLessEqual(abs(a - b), 1)

    def test_invalid_schedule(self):
        with self.assertRaises(InvalidSchedule):
            AritySchedule.build(2, 2, 2)
        with self.assertRaises(InvalidSchedule):
            AritySchedule.build(3, 2, 5)

    def test_encode_shapes_and_goal_channels(self):
        domain = """
        (define (domain quad)
          (:predicates (r1 ?x ?y) (r2 ?x ?y) (r3 ?x ?y) (r4 ?x ?y)))
        """
        task = task_of(domain, problem('q', 'quad', ['a', 'b', 'c'], ['(r1 a b)'], ['(r2 c a)']))

        mapr = encode(task.initial, task.goal, task)

        self.assertEqual(mapr.tensors[2].shape, (3, 3, 8))
        self.assertEqual(mapr.tensors[2][0, 1, 0], 1)
        self.assertEqual(mapr.tensors[2][1, 0, 0], 0)
        self.assertEqual(mapr.tensors[2][2, 0, 4 + 1], 1)
        self.assertEqual(mapr.tensors[2].sum(), 2)

    def test_encode_empty_goal(self):
        task = blocks_two()

        mapr = encode(task.initial, (), task)

        for tensor in mapr.tensors:
            half = tensor.shape[-1] // 2
            self.assertEqual(tensor[..., half:].sum(), 0)

    def test_expand(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))

        y = expand(x, 2)

        self.assertEqual(y.shape, (2, 2, 3))
        for i in range(2):
            for o in range(2):
                np.testing.assert_array_equal(y.data[i, o], x.data[i])
        self.assertEqual(expand(Tensor(np.ones(3)), 4).shape, (4, 3))

    def test_reduce(self):
        self.assertEqual(reduce(Tensor(np.zeros((3, 3, 2))), 2).data.sum(), 0)
        hot = np.zeros((3, 1))
        hot[1, 0] = 1
        self.assertEqual(reduce(Tensor(hot), 1).data[0], 1)
        x = Tensor(np.random.default_rng(0).random((3, 4)))
        np.testing.assert_array_equal(reduce(expand(x, 5), 2).data, x.data)
        with self.assertRaises(ShapeMismatch):
            reduce(Tensor(np.ones(3)), 0)

    def test_perm(self):
        x = Tensor(np.random.default_rng(1).random((3, 3, 4)))

        y = perm(x, 2)

        self.assertEqual(y.shape, (3, 3, 8))
        np.testing.assert_array_equal(y.data[..., :4], x.data)
        np.testing.assert_array_equal(y.data[..., 4:], np.transpose(x.data, (1, 0, 2)))
        self.assertIs(perm(x, 1), x)

    def test_layout_rows(self):
        model = NlmModel.for_task(blocks_two(), max_arity=2, layers=4, width=8)

        self.assertEqual(model.schedule.arities, (2, 2, 1, 0))
        self.assertEqual(model.layout[:3], ((1, 0, 8, 8), (1, 1, 10, 8), (1, 2, 16, 8)))
        self.assertEqual(model.layout[-1][3], 1)

    def test_weight_shapes_do_not_depend_on_object_count(self):
        small = NlmModel.for_task(generated_task('blocks', 1, blocks=3), seed=4)
        large = NlmModel.for_task(generated_task('blocks', 1, blocks=10), seed=4)

        self.assertEqual(small.shapes(), large.shapes())
        self.assertEqual(checkpoint.dumps(small), checkpoint.dumps(large))

    def test_forward_runs_for_larger_object_counts(self):
        model = NlmModel.for_task(blocks_two(), max_arity=3, layers=5)

        self.assertEqual(model.schedule.arities, (2, 3, 2, 1, 0))
        for count in (3, 10, 20):
            task = table_blocks(count, ['(on b0 b1)'])
            self.assertTrue(math.isfinite(model.predict(task.initial, task)))

    def test_object_relabeling_invariance(self):
        init = ['(ontable b1)', '(on b2 b1)', '(clear b2)', '(ontable b3)', '(clear b3)', '(handempty)']
        goal = ['(on b1 b3)', '(on b3 b2)']
        task = blocks_task(['b1', 'b2', 'b3'], init, goal)
        relabeled = blocks_task(['b3', 'b1', 'b2'], init, goal)
        model = NlmModel.for_task(task, max_arity=3, layers=5, seed=9)

        self.assertAlmostEqual(model.predict(task.initial, task), model.predict(relabeled.initial, relabeled), delta=1e-6)

    def test_zero_weights_output_final_bias(self):
        task = blocks_two()
        model = small_model(task)
        for param in model.params.values():
            param.data[...] = 0
        model.params['layer4/arity0/bias'].data[...] = 0.75

        self.assertAlmostEqual(model.predict(task.initial, task), 0.75, places=6)

    def test_constant_model_ranks_like_discounted_heuristic(self):
        task = generated_task('blocks', 3, blocks=3)
        model = small_model(task, shaping='hff')
        for param in model.params.values():
            param.data[...] = 0
        states = [state for state, _ in random_walk(task, 15, random.Random(1))]
        ff = make_heuristic('hff', task)

        learned = [learned_heuristic(model, state, task.goal, task) for state in states]
        classical = [discounted(ff(state), model.gamma) for state in states]

        self.assertEqual(list(np.argsort(learned, kind='stable')), list(np.argsort(classical, kind='stable')))

    def test_learned_heuristic_at_goal_is_negated_value(self):
        task = blocks_task(['b1', 'b2'], ['(on b1 b2)', '(ontable b2)', '(clear b1)', '(handempty)'], ['(on b1 b2)'])
        model = small_model(task, shaping='hff', seed=3)

        self.assertAlmostEqual(
            learned_heuristic(model, task.initial, task.goal, task),
            -model.predict(task.initial, task),
            places=12
        )

    def test_learned_heuristic_batches_like_sequential_calls(self):
        task = generated_task('gripper', 1, balls=2)
        model = small_model(task, shaping='hadd', seed=2)
        states = [state for state, _ in random_walk(task, 20, random.Random(4))]

        batched = LearnedHeuristic(model, task).evaluate_many(states)
        sequential = [LearnedHeuristic(model, task)(state) for state in states]

        np.testing.assert_allclose(batched, sequential, rtol=1e-5, atol=1e-5)

    def test_signature_mismatch_reports_fingerprints(self):
        model = small_model(blocks_two())

        with self.assertRaises(SignatureMismatch) as context:
            LearnedHeuristic(model, generated_task('gripper', 1, balls=1))

        self.assertEqual(context.exception.payload['model_fingerprint'], model.fingerprint)
        self.assertIn('task_fingerprint', context.exception.payload)

    def test_forward_is_deterministic(self):
        task = generated_task('ferry', 1, locations=2, cars=2)
        first = small_model(task, seed=5)
        second = small_model(task, seed=5)

        self.assertEqual(first.predict(task.initial, task), second.predict(task.initial, task))


class TestCheckpoint(unittest.TestCase):  # pragma: no cover

    def setUp(self):
        self.golden = GOLDEN.read_bytes()

    def test_golden_fixture(self):
        restored = checkpoint.loads(self.golden)
        task = flag_task()

        self.assertEqual(restored.header['fingerprint'], fingerprint([('flag', 0)]))
        self.assertEqual(
            restored.header['fingerprint'],
            '0737fd98b60fe112a719eb0da584795d0119e5b0ef08aaaf315c8676fcf4b4f2'
        )
        self.assertEqual(restored.model.schedule.arities, (0,))
        self.assertIsNone(restored.adam)
        self.assertEqual(restored.model.predict(task.state([('flag', ())]), task), 0.375)
        self.assertEqual(restored.model.predict(task.initial, task), -0.125)
        self.assertEqual(checkpoint.dumps(restored.model), self.golden)

    def test_round_trip_is_bit_exact(self):
        task = generated_task('blocks', 5, blocks=3)
        model = small_model(task, seed=8)
        mapr = random_mapr(model, 3, np.random.default_rng(0), batch=(100,))
        mapr = Mapr(tuple(t.astype(np.float32) for t in mapr.tensors), 3)

        restored = checkpoint.loads(checkpoint.dumps(model)).model

        np.testing.assert_array_equal(restored.forward(mapr).data, model.forward(mapr).data)

    def test_round_trip_with_optimizer_state(self):
        task = switch_task()
        model = NlmModel.for_task(task, max_arity=1, layers=2, width=4)
        adam = AdamState()
        grads = {name: np.ones_like(param.data) for name, param in model.params.items()}
        adam_step(model.params, grads, adam)

        restored = checkpoint.loads(checkpoint.dumps(model, adam))

        self.assertEqual(restored.adam.step, 1)
        for name in model.params:
            np.testing.assert_array_equal(restored.adam.m[name], adam.m[name].astype(np.float32))
            np.testing.assert_array_equal(restored.adam.v[name], adam.v[name].astype(np.float32))

    def test_corrupt_files(self):
        corrupt = [
            b'XXXXCKPT' + self.golden[8:],
            self.golden[:-1],
            self.golden + b'\x00',
            self.golden.replace(b'lexicographic', b'lexicographiX'),
            self.golden.replace(b'"flag",0', b'"flog",0'),
            self.golden[:12] + b'[' + self.golden[13:],
        ]
        for data in corrupt:
            with self.assertRaises(CheckpointFormatError):
                checkpoint.loads(data)

    def test_loading_onto_another_domain_fails(self):
        model = checkpoint.loads(self.golden).model

        with self.assertRaises(SignatureMismatch):
            LearnedHeuristic(model, blocks_two())


class TestTrainer(unittest.TestCase):  # pragma: no cover

    def test_defaults(self):
        cfg = TrainConfig()

        self.assertEqual(
            (cfg.steps, cfg.episode_cap, cfg.gamma, cfg.batch, cfg.tau, cfg.buffer, cfg.learning_rate),
            (50000, 40, 0.999999, 25, 1.0, 6000, 0.001)
        )

    def test_invalid_config(self):
        with self.assertRaises(InvalidConfig) as context:
            TrainConfig(gamma=1.0, batch=0).validate()

        self.assertIn('gamma', context.exception.payload)
        self.assertIn('batch', context.exception.payload)

    def test_single_action_is_always_chosen(self):
        task = chain_task()
        rng = np.random.default_rng(0)
        for _ in range(20):
            transition = rollout_step(TableValueFunction(), task, task.initial, 1.0, 0.9, rng, potential=zero_potential)
            self.assertEqual(transition.action, 0)

    def test_low_temperature_picks_argmax(self):
        task = task_of(FORK_DOMAIN, problem('fork', 'fork', [], ['(start)'], ['(done)']))
        left, right = task.state([('left', ())]), task.state([('right', ())])
        table = TableValueFunction({left.bits: -1.0, right.bits: -2.0})
        rng = np.random.default_rng(1)
        for _ in range(50):
            transition = rollout_step(table, task, task.initial, 1e-6, 0.9, rng, potential=zero_potential)
            self.assertEqual(task.actions[transition.action].name, 'go-left')
            self.assertFalse(transition.terminal)

    def test_equal_values_are_sampled_uniformly(self):
        task = task_of(FORK_DOMAIN, problem('fork', 'fork', [], ['(start)'], ['(done)']))
        rng = np.random.default_rng(2)
        table = TableValueFunction()

        lefts = sum(
            rollout_step(table, task, task.initial, 1.0, 0.9, rng, potential=zero_potential).action == 0
            for _ in range(10000)
        )

        self.assertAlmostEqual(lefts / 10000, 0.5, delta=0.05)

    def test_target_with_goal_successors(self):
        task = task_of(TWIN_DOMAIN, problem('twin', 'twin', [], ['(s)'], ['(g)']))
        entry = make_entry(task, task.initial, zero_potential, 0.9)

        self.assertTrue(entry.goals.all())
        self.assertEqual(td_target(entry, TableValueFunction(default=5.0), 1.0, 0.9), -1.0)

    def test_single_action_target_equals_q(self):
        task = task_of(FORK_DOMAIN, problem('fork', 'fork', [], ['(left)'], ['(done)']))
        entry = make_entry(task, task.initial, zero_potential, 0.9)

        self.assertEqual(td_target(entry, TableValueFunction(default=-3.0), 1.0, 0.9), -1.0)

    def test_dead_end_successors(self):
        task = task_of(STRAY_DOMAIN, problem('stray', 'stray', [], ['(s)'], ['(g)']))
        entry = make_entry(task, task.initial, zero_potential, 0.9)
        stray = [task.actions[a].name for a in entry.actions].index('stray')
        table = TableValueFunction(default=-2.0)

        self.assertTrue(entry.dead[stray])
        self.assertAlmostEqual(q_values(entry, table, 0.9)[stray], -1.0 + 0.9 * -2.0)
        self.assertAlmostEqual(q_values(entry, table, 0.9, dead_end_value=-5.0)[stray], -1.0 + 0.9 * -5.0)

    def test_dead_end_entry(self):
        task = chain_task(init=('(p3)',))

        with self.assertRaises(DeadEndState):
            make_entry(task, task.initial, zero_potential, 0.9)

    def test_tabular_targets_converge_to_on_policy_values(self):
        task = corridor_task(9, sides=False, both_ways=True)
        mdp = TabularMdp.from_task(task)
        table = TableValueFunction()
        states = [state for state, goal in zip(mdp.states, mdp.goals) if not goal]
        entries = [make_entry(task, state, zero_potential, 0.9) for state in states]
        for _ in range(5000):
            delta = 0.0
            for state, entry in zip(states, entries):
                value = td_target(entry, table, 1.0, 0.9)
                delta = max(delta, abs(value - table.values.get(state.bits, 0.0)))
                table.update(state, value)
            if delta < 1e-12:
                break

        expected = expected_values(mdp, 0.9, 1.0)
        for position, state in enumerate(mdp.states):
            if not mdp.goals[position]:
                self.assertAlmostEqual(table.values[state.bits], expected[position], delta=1e-6)

    def test_buffer_evicts_globally_oldest(self):
        Entry = namedtuple('Entry', ['objects', 'tag'])
        buffer = ReplayBuffer(2)

        buffer.push(Entry(3, 'a'))
        buffer.push(Entry(5, 'b'))
        buffer.push(Entry(3, 'c'))

        self.assertEqual(len(buffer), 2)
        self.assertEqual(buffer.bucket_sizes(), {3: 1, 5: 1})
        self.assertEqual(buffer.buckets[3][0].tag, 'c')

    def test_sampling(self):
        Entry = namedtuple('Entry', ['objects', 'tag'])
        buffer = ReplayBuffer(2000)
        rng = np.random.default_rng(3)

        with self.assertRaises(EmptyBuffer):
            buffer_sample(buffer, 4, rng)

        buffer.push(Entry(2, 'only'))
        self.assertEqual(len(buffer_sample(buffer, 25, rng)), 25)

        for index in range(1000):
            buffer.push(Entry(7, index))
        small = sum(buffer_sample(buffer, 1, rng)[0].objects == 2 for _ in range(10000))
        self.assertAlmostEqual(small / 10000, 0.5, delta=0.03)

    def test_zero_steps(self):
        task = switch_task()
        cfg = TrainConfig(steps=0, max_arity=1, layers=2, width=4)

        model, stats = train([task], cfg)

        self.assertEqual((stats.sgd_steps, stats.episodes, stats.cumulative_goals), (0, 0, 0))
        self.assertEqual(model.signature, task.signature())

    def test_two_steps_update_parameters(self):
        task = generated_task('gripper', 2, balls=2)
        cfg = TrainConfig(steps=2, episode_cap=4, batch=2, max_arity=2, layers=4, width=4)
        model = build_model(task, cfg)
        before = {name: param.data.copy() for name, param in model.params.items()}

        with patch.object(Potential, 'reset', autospec=True, side_effect=Potential.reset) as reset:
            _, stats = train([task], cfg, model=model)

        self.assertEqual(stats.sgd_steps, 2)
        self.assertEqual(len(stats.losses), 2)
        self.assertTrue(all(math.isfinite(loss) for loss in stats.losses))
        self.assertTrue(any(
            not np.array_equal(before[name], param.data) for name, param in model.params.items()
        ))
        self.assertEqual(reset.call_count, stats.episodes)

    def test_empty_and_trivial_task_lists(self):
        with self.assertRaises(EmptyTaskList):
            train([], TrainConfig(steps=1))
        with self.assertRaises(EmptyTaskList):
            train([chain_task(goal=('(p0)',))], TrainConfig(steps=1))
        with self.assertRaises(EmptyTaskList):
            train([chain_task(init=('(q)',), goal=('(p3)',))], TrainConfig(steps=1))

    def test_mixed_domains(self):
        with self.assertRaises(SignatureMismatch):
            train([blocks_two(), switch_task()], TrainConfig(steps=1, max_arity=2, layers=3))

    def test_one_step_task_always_reaches_goal(self):
        records = []
        cfg = TrainConfig(steps=20, episode_cap=5, batch=4, shaping='hadd', max_arity=1, layers=2, width=4)

        _, stats = train([switch_task()], cfg, on_record=records.append)

        self.assertEqual(stats.episodes, 20)
        self.assertEqual(stats.cumulative_goals, stats.episodes)
        self.assertEqual(stats.bucket_sizes, {3: 20})
        self.assertTrue(all(record.reached_goal and record.episode_len == 1 for record in records))

    def test_training_loop_invariants(self):
        tasks = [generated_task('blocks', seed, blocks=blocks) for seed, blocks in ((1, 2), (2, 3))]
        cfg = TrainConfig(steps=40, episode_cap=6, batch=5, buffer=30, max_arity=2, layers=3, width=4, checkpoint_interval=20)
        records = []
        on_checkpoint = Mock()

        _, stats = train(tasks, cfg, on_record=records.append, on_checkpoint=on_checkpoint)

        self.assertEqual(stats.sgd_steps, 40)
        self.assertEqual(on_checkpoint.call_count, 2)
        self.assertTrue(all(record.episode_len <= 6 for record in records))
        self.assertTrue(all(math.isfinite(loss) for loss in stats.losses))
        self.assertLessEqual(sum(stats.bucket_sizes.values()), 30)
        self.assertTrue(set(stats.bucket_sizes) <= {2, 3})
        self.assertEqual(sum(record.episode_len for record in records), 40)

    def test_training_is_deterministic(self):
        tasks = [generated_task('gripper', 1, balls=1), generated_task('gripper', 2, balls=2)]
        cfg = TrainConfig(steps=15, episode_cap=5, batch=3, max_arity=2, layers=3, width=4, seed=7)

        first, first_stats = train(tasks, cfg)
        second, second_stats = train(tasks, cfg)

        self.assertEqual(checkpoint.dumps(first), checkpoint.dumps(second))
        self.assertEqual(first_stats, second_stats)

    @unittest.skipUnless(SLOW_TESTS, 'set PLANNER_SLOW_TESTS=1')
    def test_heuristic_shaping_reaches_more_goals_than_blind(self):
        tasks = [generated_task('gripper', seed, balls=balls) for balls in range(2, 7) for seed in range(3)]
        wins = 0
        for seed in range(3):
            informed = train(tasks, TrainConfig(steps=2000, shaping='hff', seed=seed))[1]
            blind = train(tasks, TrainConfig(steps=2000, shaping='blind', seed=seed))[1]
            wins += informed.cumulative_goals > blind.cumulative_goals
        self.assertGreaterEqual(wins, 2)

    @unittest.skipUnless(SLOW_TESTS, 'set PLANNER_SLOW_TESTS=1')
    def test_learned_heuristic_beats_blind_search_on_larger_blocks(self):
        training = [generated_task('blocks', seed, blocks=blocks) for blocks in range(2, 5) for seed in range(10)]
        held_out = [generated_task('blocks', seed, blocks=5) for seed in range(100, 110)]
        cfg = SearchConfig(eval_limit=10000)
        baseline = [gbfs(task, make_heuristic('blind', task), cfg) for task in held_out]
        successes = 0
        for seed in range(3):
            model, _ = train(training, TrainConfig(steps=5000, shaping='blind', seed=seed))
            learned = [gbfs(task, LearnedHeuristic(model, task), cfg) for task in held_out]
            extra = any(
                l.status == 'solved' and b.status != 'solved' for l, b in zip(learned, baseline)
            )
            cheaper = np.median([l.evaluations for l in learned]) <= 0.8 * np.median([b.evaluations for b in baseline])
            successes += extra or cheaper
        self.assertGreaterEqual(successes, 2)


class TestSearch(unittest.TestCase):  # pragma: no cover

    def test_trivial_task(self):
        task = chain_task(goal=('(p0)',))
        for algorithm in (astar, gbfs, gbfls):
            result = algorithm(task, make_heuristic('hff', task), SearchConfig())
            self.assertEqual(result.status, 'solved')
            self.assertEqual((result.plan, result.evaluations, result.expansions), ([], 0, 0))

    def test_astar_is_optimal(self):
        tasks = [generated_task('blocks', seed, blocks=blocks) for blocks in (2, 3, 4) for seed in (1, 2)]
        tasks += [generated_task('gripper', seed, balls=balls) for balls in (1, 2, 3, 4) for seed in (1, 2)]
        tasks += [chain_task(goal=('(p3)',)), corridor_task(6, both_ways=True)]
        for task in tasks:
            mdp = TabularMdp.from_task(task, limit=5000)
            optimum = goal_distances(mdp)[mdp.initial]
            for base in ('zero', 'hadd'):
                result = astar(task, make_heuristic(base, task), SearchConfig())
                if base == 'zero':
                    self.assertEqual(result.plan_length, optimum)
                self.assertEqual(result.status, 'solved')
                self.assertTrue(validate_plan(task, result.plan))

    def test_astar_with_perfect_heuristic_follows_one_path(self):
        task = corridor_task(6, sides=True)

        result = astar(task, TableHeuristic(task, perfect_values(task)), SearchConfig())

        self.assertEqual(result.plan_length, 6)
        self.assertEqual(result.expansions, 6)

    def test_gbfs_on_chain(self):
        task = chain_task(goal=('(p3)',))
        heuristic = CountingHeuristic(task, 'hadd')

        result = gbfs(task, heuristic, SearchConfig())

        self.assertEqual(result.status, 'solved')
        self.assertEqual(result.plan_length, 3)
        self.assertEqual(result.evaluations, 3)
        self.assertEqual(heuristic.calls, 3)

    def test_exhausted(self):
        task = chain_task(goal=('(q)',))
        for algorithm in (astar, gbfs, gbfls):
            self.assertEqual(algorithm(task, make_heuristic('blind', task), SearchConfig()).status, 'exhausted')

    def test_evaluation_limit_is_exact(self):
        task = table_blocks(6, ['(on b0 b0)'])
        for algorithm in (astar, gbfs, gbfls):
            heuristic = CountingHeuristic(task, 'blind')
            result = algorithm(task, heuristic, SearchConfig(eval_limit=500))
            self.assertEqual(result.status, 'limit_reached')
            self.assertEqual(result.evaluations, 500)
            self.assertEqual(heuristic.calls, 500)

    @unittest.skipUnless(SLOW_TESTS, 'set PLANNER_SLOW_TESTS=1')
    def test_default_evaluation_limit(self):
        task = table_blocks(8, ['(on b0 b0)'])

        result = gbfs(task, make_heuristic('blind', task), SearchConfig())

        self.assertEqual(result.status, 'limit_reached')
        self.assertEqual(result.evaluations, 100000)

    def test_gbfs_is_invariant_to_monotone_transforms(self):
        task = generated_task('blocks', 6, blocks=4)

        plain = gbfs(task, CountingHeuristic(task, 'hff'), SearchConfig())
        scaled = gbfs(task, CountingHeuristic(task, 'hff', scale=2.0, shift=3.0), SearchConfig())

        self.assertEqual(plain.plan, scaled.plan)
        self.assertEqual((plain.evaluations, plain.expansions), (scaled.evaluations, scaled.expansions))

    def test_lookahead_depth(self):
        steps = ['(p{})'.format(i) for i in range(8)]
        domain = '(define (domain line) (:predicates {} (q)) {})'.format(
            ' '.join(steps),
            ' '.join(
                '(:action s{0} :parameters () :precondition (p{0}) :effect (and (p{1}) (not (p{0}))))'.format(i, i + 1)
                for i in range(7)
            )
        )
        line = task_of(domain, problem('line', 'line', [], ['(p0)'], ['(p7)']))
        unreachable = task_of(domain, problem('line', 'line', [], ['(p0)'], ['(q)']))

        self.assertEqual(lookahead_depth(line, SearchConfig()), 35)
        self.assertEqual(lookahead_depth(unreachable, SearchConfig()), 50)
        self.assertEqual(gbfls(line, make_heuristic('blind', line), SearchConfig()).lookahead_depth, 35)
        self.assertEqual(gbfls(unreachable, make_heuristic('blind', unreachable), SearchConfig()).lookahead_depth, 50)

    def test_lookahead_walks_the_corridor(self):
        task = corridor_task(6, sides=True)
        heuristic = CountingHeuristic(task, 'blind')

        ahead = gbfls(task, heuristic, SearchConfig(algorithm='gbfls'))
        breadth = gbfs(task, make_heuristic('blind', task), SearchConfig())

        self.assertEqual(ahead.status, 'solved')
        self.assertEqual(ahead.expansions, 1)
        self.assertGreater(breadth.expansions, ahead.expansions)
        self.assertEqual(ahead.plan_length, 6)
        self.assertEqual(ahead.evaluations, heuristic.calls)

    def test_plans_validate(self):
        tasks = [generated_task('ferry', seed, locations=3, cars=2) for seed in (1, 2)]
        tasks += [generated_task('gripper', 3, balls=3)]
        for task in tasks:
            for algorithm in ('astar', 'gbfs', 'gbfls'):
                for base in ('blind', 'hadd', 'hff'):
                    result = run_search(task, make_heuristic(base, task), SearchConfig(algorithm=algorithm))
                    self.assertEqual(result.status, 'solved')
                    self.assertTrue(validate_plan(task, result.plan))

    def test_unknown_algorithm(self):
        with self.assertRaises(InvalidConfig):
            run_search(chain_task(), make_heuristic('blind', chain_task()), SearchConfig(algorithm='ida'))

    def test_empty_heuristic_list(self):
        report = evaluate_suite([chain_task()], [], SearchConfig())

        self.assertEqual((report.rows, report.coverage, report.tallies), ([], {}, {}))

    def test_suite_coverage(self):
        tasks = [chain_task(goal=('(p3)',)), chain_task(goal=('(q)',)), blocks_two()]

        report = evaluate_suite(tasks, ['blind', 'hff'], SearchConfig())

        self.assertEqual(len(report.rows), 6)
        self.assertEqual(report.coverage, {'blind': 2, 'hff': 2})
        self.assertEqual(report.coverage, coverage(report.rows, ['blind', 'hff']))

    def test_suite_is_thread_independent(self):
        tasks = [generated_task('blocks', seed, blocks=3) for seed in range(4)]

        serial = evaluate_suite(tasks, ['hadd', 'hff'], SearchConfig(), threads=1)
        parallel = evaluate_suite(tasks, ['hadd', 'hff'], SearchConfig(), threads=3)

        strip = lambda rows: [(r.instance, r.heuristic, r.status, r.evaluations, r.plan_length) for r in rows]
        self.assertEqual(strip(serial.rows), strip(parallel.rows))

    def test_suite_records_heuristic_failures(self):
        factory = Mock(side_effect=InvalidConfig(message='Unknown heuristic.', payload={}))

        report = evaluate_suite([blocks_two()], ['nope'], SearchConfig(), factory=factory)

        self.assertEqual(report.rows, [])
        self.assertEqual(report.failures, ['blocks:nope'])

    def test_paired_tally_skips_ties_and_double_failures(self):
        def row(instance, heuristic, status, evaluations):
            return ReportRow(instance, 3, 'gbfs', heuristic, status, evaluations, 0, 0, 0.0)

        rows = [
            row('i1', 'a', 'solved', 10), row('i1', 'b', 'solved', 20),
            row('i2', 'a', 'solved', 5), row('i2', 'b', 'solved', 5),
            row('i3', 'a', 'limit_reached', 100), row('i3', 'b', 'limit_reached', 100),
            row('i4', 'a', 'limit_reached', 100), row('i4', 'b', 'solved', 70),
        ]

        self.assertEqual(paired_tally(rows, ['a', 'b']), {'a': {'b': 1}, 'b': {'a': 1}})


class TestGenerator(unittest.TestCase):  # pragma: no cover

    def test_blocks_instance_is_solvable(self):
        task = generated_task('blocks', 1, blocks=2)

        result = astar(task, make_heuristic('zero', task), SearchConfig())

        self.assertEqual(result.status, 'solved')
        self.assertFalse(is_goal(task.initial, task))

    def test_same_seed_same_text(self):
        self.assertEqual(generate('ferry', 4, locations=3, cars=2), generate('ferry', 4, locations=3, cars=2))

    def test_gripper_goal_places_every_ball(self):
        task = parse(domain_text('gripper'), generate('gripper', 2, balls=2))

        self.assertEqual(sorted(atom.args[0] for atom in task.goal), ['ball1', 'ball2'])
        self.assertTrue(all(atom.predicate == 'at' for atom in task.goal))

    def test_gripper_goal_moves_every_ball_to_the_other_room(self):
        for seed in range(6):
            task = parse(domain_text('gripper'), generate('gripper', seed, balls=3))
            starts = {atom.args[1] for atom in task.init if atom.predicate == 'at'}
            targets = {atom.args[1] for atom in task.goal}

            self.assertEqual(len(starts), 1)
            self.assertEqual(len(targets), 1)
            self.assertNotEqual(starts, targets)

    def test_invalid_sizes(self):
        for domain, sizes in (('blocks', {'blocks': 1}), ('blocks', {'blocks': 11}),
                              ('gripper', {}), ('ferry', {'locations': 3, 'cars': 2, 'trucks': 1}),
                              ('logistics', {'trucks': 1})):
            with self.assertRaises(InvalidGeneratorSize):
                generate(domain, 0, **sizes)

    def test_instances_are_nontrivial_and_solvable(self):
        cases = [('blocks', {'blocks': 3}), ('gripper', {'balls': 2}), ('ferry', {'locations': 2, 'cars': 2})]
        for domain, sizes in cases:
            for seed in range(5):
                text = generate(domain, seed, **sizes)
                self.assertTrue(is_usable(domain, text))

    def test_corpus_has_no_duplicates(self):
        corpus = generate_corpus('blocks', [{'blocks': 2}], range(12))

        hashes = [content_hash(text.split('\n', 1)[1]) for _, text in corpus]
        self.assertEqual(len(hashes), len(set(hashes)))
        self.assertEqual(len({name for name, _ in corpus}), len(corpus))
        self.assertLess(len(corpus), 12)


class TestSchema(unittest.TestCase):  # pragma: no cover

    def test_train_config_defaults(self):
        self.assertEqual(load(TrainConfigSchema(), {}), TrainConfig())

    def test_train_config_errors(self):
        with self.assertRaises(InvalidConfig) as context:
            load(TrainConfigSchema(), {'gamma': 1.5, 'shaping': 'hmax'})

        self.assertIn('gamma', context.exception.payload)
        self.assertIn('shaping', context.exception.payload)

    def test_search_config(self):
        self.assertEqual(load(SearchConfigSchema(), {'algorithm': 'astar'}).algorithm, 'astar')
        with self.assertRaises(InvalidConfig):
            load(SearchConfigSchema(), {'eval_limit': 0})


class TestClients(unittest.TestCase):  # pragma: no cover

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def test_problem_client(self):
        client = ProblemFileClient()
        client.write(self.root / 'b.pddl', 'b')
        client.write(self.root / 'a.pddl', 'a')
        client.write(self.root / 'notes.txt', 'x')
        client.write(self.root / 'domain.pddl', 'd')

        self.assertEqual([p.name for p in client.list_problems(self.root)], ['a.pddl', 'b.pddl'])
        self.assertEqual(client.read(self.root / 'a.pddl'), 'a')
        with self.assertRaises(ProblemFileError):
            client.read(self.root / 'missing.pddl')
        with self.assertRaises(ProblemFileError):
            client.list_problems(self.root / 'missing')

    def test_metrics_round_trip(self):
        client = MetricsFileClient()
        records = [
            EpisodeRecord(1, 1, 'blocks-2-1', 2, 1, True, 0.25, 1),
            EpisodeRecord(1, 2, 'blocks-2-1', 2, 0, False, None, 1),
        ]
        append = client.open(self.root / 'run.metrics.jsonl')
        for record in records:
            append(record)

        self.assertEqual(client.read(self.root / 'run.metrics.jsonl'), records)

    def test_report_round_trip(self):
        client = ReportFileClient()
        rows = [ReportRow('blocks-2-1', 2, 'gbfs', 'hff', 'solved', 4, 2, 2, 0.0012345)]

        client.write(self.root / 'report.csv', rows)

        self.assertEqual(client.read(self.root / 'report.csv'), rows)
        header = (self.root / 'report.csv').read_text().splitlines()[0]
        self.assertEqual(header, 'instance,objects,algorithm,heuristic,status,evaluations,expansions,plan_length,seconds')

    def test_manifest_round_trip(self):
        client = ManifestFileClient()
        manifest = RunManifest(3, TrainConfig().as_dict(), {'a.pddl': 'ff'}, '0.1.0', 'abc')

        client.write(self.root / 'run.manifest.json', manifest)

        self.assertEqual(client.read(self.root / 'run.manifest.json'), manifest)

    def test_plan_round_trip(self):
        client = PlanFileClient()

        client.write(self.root / 'plan', ['(pick-up b1)', '(stack b1 b2)'])

        self.assertEqual(client.read(self.root / 'plan'), ['(pick-up b1)', '(stack b1 b2)'])

    def test_checkpoint_client(self):
        client = CheckpointFileClient()
        model = checkpoint.loads(GOLDEN.read_bytes()).model

        data = client.save(self.root / 'model.ckpt', model)

        self.assertEqual((self.root / 'model.ckpt').read_bytes(), data)
        self.assertEqual(client.load(self.root / 'model.ckpt').header['tensors'], 2)
        with self.assertRaises(CheckpointFormatError):
            client.load(self.root / 'missing.ckpt')


class TestDto(unittest.TestCase):  # pragma: no cover

    def test_as_dict(self):
        result = SearchResult('solved', [0, 1], 3, 2, 2, 0.5)

        self.assertEqual(result.as_dict(), {
            'status': 'solved', 'plan': [0, 1], 'evaluations': 3, 'expansions': 2,
            'plan_length': 2, 'seconds': 0.5, 'lookahead_depth': None
        })


class TestHeuristicResolver(unittest.TestCase):  # pragma: no cover

    def setUp(self):
        self.container = Container(testing_mode=True)
        self.checkpoint_client = Mock()
        self.checkpoint_client.load = Mock(return_value=checkpoint.loads(GOLDEN.read_bytes()))

    def set_up_resolver(self):
        resolver = self.container.heuristic_resolver
        resolver._checkpoint_client = self.checkpoint_client
        return resolver

    def test_learned_models_are_loaded_once(self):
        resolver = self.set_up_resolver()
        task = flag_task()

        first = resolver('learned:model.ckpt', task)
        second = resolver('learned:model.ckpt', task)

        self.checkpoint_client.load.assert_called_once_with('model.ckpt')
        self.assertEqual(first.id, 'learned:model.ckpt')
        self.assertEqual(first(task.initial), second(task.initial))

    def test_classical_ids(self):
        resolver = self.set_up_resolver()

        heuristic = resolver('hadd', blocks_two())

        self.assertEqual(heuristic.id, 'hadd')
        self.checkpoint_client.load.assert_not_called()


class TestPlanInstance(unittest.TestCase):  # pragma: no cover

    def setUp(self):
        self.container = Container(testing_mode=True)
        self.problem_client = Mock()
        self.plan_client = Mock()
        self.texts = {
            'domain.pddl': domain_text('blocks'),
            'problem.pddl': problem('blocks-two', 'blocks', ['b1', 'b2'],
                                    ['(ontable b1)', '(ontable b2)', '(clear b1)', '(clear b2)', '(handempty)'],
                                    ['(on b1 b2)'])
        }
        self.problem_client.read = Mock(side_effect=lambda path: self.texts[path])

    def set_up_use_case(self):
        use_case = self.container.plan_instance
        use_case._problem_client = self.problem_client
        use_case._plan_client = self.plan_client
        return use_case

    def test_solved_plan_is_written(self):
        use_case = self.set_up_use_case()

        report = use_case('domain.pddl', 'problem.pddl', 'astar', 'hff', plan_path='plan.txt')

        self.assertEqual(report.row.status, 'solved')
        self.assertEqual(report.plan, ['(pick-up b1)', '(stack b1 b2)'])
        self.plan_client.write.assert_called_with('plan.txt', ['(pick-up b1)', '(stack b1 b2)'])

    def test_plan_file_is_optional(self):
        use_case = self.set_up_use_case()

        report = use_case('domain.pddl', 'problem.pddl', 'gbfs', 'blind')

        self.assertEqual(report.row.heuristic, 'blind')
        self.assertEqual(report.row.objects, 2)
        self.plan_client.write.assert_not_called()

    def test_unsolved_plan_is_not_written(self):
        use_case = self.set_up_use_case()

        report = use_case('domain.pddl', 'problem.pddl', 'gbfs', 'hff', eval_limit=1, plan_path='plan.txt')

        self.assertEqual(report.row.status, 'limit_reached')
        self.plan_client.write.assert_not_called()


class TestTrainModel(unittest.TestCase):  # pragma: no cover

    def setUp(self):
        self.container = Container(testing_mode=True)
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)
        self.problems = self.root / 'problems'
        self.problems.mkdir()
        (self.root / 'domain.pddl').write_text(domain_text('blocks'))
        for seed in range(3):
            (self.problems / 'blocks-{}.pddl'.format(seed)).write_text(generate('blocks', seed, blocks=2 + seed % 2))
        self.config = {'steps': 6, 'max_arity': 2, 'layers': 3, 'width': 4, 'batch': 3, 'seed': 1}

    def tearDown(self):
        self.directory.cleanup()

    def test_artifacts_are_written(self):
        (self.problems / 'broken.pddl').write_text('(define (problem broken)')
        use_case = self.container.train_model

        with self.assertLogs('planner.usecase', level='WARNING'):
            summary = use_case(self.root / 'domain.pddl', self.problems, self.root / 'model.ckpt', self.config)

        self.assertEqual(summary.steps, 6)
        restored = self.container.checkpoint_file_client.load(self.root / 'model.ckpt')
        self.assertEqual(restored.model.schedule.arities, (2, 1, 0))
        manifest = self.container.manifest_file_client.read(summary.manifest)
        self.assertEqual(sorted(manifest.instances), ['blocks-0.pddl', 'blocks-1.pddl', 'blocks-2.pddl'])
        self.assertEqual(manifest.seed, 1)
        self.assertEqual(manifest.domain_fingerprint, restored.model.fingerprint)
        records = self.container.metrics_file_client.read(summary.metrics)
        self.assertEqual(records[-1].sgd_step, 6)

    def test_no_usable_problems(self):
        empty = self.root / 'empty'
        empty.mkdir()

        with self.assertRaises(EmptyTaskList):
            self.container.train_model(self.root / 'domain.pddl', empty, self.root / 'model.ckpt', self.config)


class TestEvaluateProblems(unittest.TestCase):  # pragma: no cover

    def setUp(self):
        self.container = Container(testing_mode=True)
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)
        self.problems = self.root / 'problems'
        self.problems.mkdir()
        (self.root / 'domain.pddl').write_text(domain_text('gripper'))
        for seed in range(2):
            (self.problems / 'gripper-{}.pddl'.format(seed)).write_text(generate('gripper', seed, balls=2))
        (self.problems / 'broken.pddl').write_text('(define')

    def tearDown(self):
        self.directory.cleanup()

    def test_report_is_written(self):
        use_case = self.container.evaluate_problems

        with self.assertLogs('planner.usecase', level='WARNING'):
            report = use_case(self.root / 'domain.pddl', self.problems, ['blind', 'hff'], 'gbfs', self.root / 'out.csv')

        self.assertEqual(len(report.rows), 4)
        self.assertEqual(report.failures, ['broken.pddl'])
        self.assertEqual(report.coverage, {'blind': 2, 'hff': 2})
        self.assertEqual(self.container.report_file_client.read(self.root / 'out.csv'), report.rows)

        summary = self.container.report_file_client.read_summary(self.root / 'out.csv.summary.json')
        self.assertEqual(summary['coverage'], {'blind': 2, 'hff': 2})
        self.assertEqual(summary['tallies'], report.tallies)
        self.assertEqual(summary['failures'], ['broken.pddl'])


class TestGenerateProblems(unittest.TestCase):  # pragma: no cover

    def test_corpus_is_written(self):
        container = Container(testing_mode=True)
        with tempfile.TemporaryDirectory() as directory:
            paths = container.generate_problems('ferry', [{'locations': 2, 'cars': 1}], range(3), directory)

            self.assertTrue((Path(directory) / 'domain.pddl').exists())
            self.assertTrue(paths)
            for path in paths:
                task = task_of((Path(directory) / 'domain.pddl').read_text(), Path(path).read_text())
                self.assertFalse(is_goal(task.initial, task))

    def test_generated_directory_can_be_evaluated(self):
        container = Container(testing_mode=True)
        with tempfile.TemporaryDirectory() as directory:
            paths = container.generate_problems('gripper', [{'balls': 1}, {'balls': 2}], range(2), directory)
            report = container.evaluate_problems(
                Path(directory) / 'domain.pddl', directory, ['hff'], 'gbfs', Path(directory) / 'out.csv'
            )

            self.assertEqual(report.failures, [])
            self.assertEqual(len(report.rows), len(paths))


class TestCommands(unittest.TestCase):  # pragma: no cover

    def setUp(self):
        self.container = Container(testing_mode=True)
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)
        (self.root / 'domain.pddl').write_text(domain_text('blocks'))
        (self.root / 'problems').mkdir()
        for seed in range(2):
            (self.root / 'problems' / 'blocks-{}.pddl'.format(seed)).write_text(generate('blocks', seed, blocks=3))
        (self.root / 'problem.pddl').write_text(generate('blocks', 5, blocks=4))

    def tearDown(self):
        self.directory.cleanup()

    def run_main(self, *argv):
        with patch('sys.stdout', new_callable=io.StringIO) as stdout, \
                patch('sys.stderr', new_callable=io.StringIO) as stderr:
            code = main([str(arg) for arg in argv], container=self.container)
        return code, stdout.getvalue(), stderr.getvalue()

    def test_plan_solved(self):
        code, out, _ = self.run_main(
            'plan', '--domain', self.root / 'domain.pddl', '--problem', self.root / 'problem.pddl',
            '--search', 'gbfs', '--heuristic', 'hff', '--plan', self.root / 'plan.txt'
        )

        body = json.loads(out)
        self.assertEqual(code, 0)
        self.assertEqual(body['row']['status'], 'solved')
        self.assertEqual(PlanFileClient().read(self.root / 'plan.txt'), body['plan'])

    def test_plan_limit_reached(self):
        code, out, _ = self.run_main(
            'plan', '--domain', self.root / 'domain.pddl', '--problem', self.root / 'problem.pddl',
            '--heuristic', 'blind', '--eval-limit', 1
        )

        self.assertEqual(code, 1)
        self.assertEqual(json.loads(out)['row']['status'], 'limit_reached')

    def test_plan_with_model_of_another_domain(self):
        code, _, err = self.run_main(
            'plan', '--domain', self.root / 'domain.pddl', '--problem', self.root / 'problem.pddl',
            '--heuristic', 'learned:{}'.format(GOLDEN)
        )

        body = json.loads(err)
        self.assertEqual(code, 2)
        self.assertNotEqual(body['payload']['model_fingerprint'], body['payload']['task_fingerprint'])

    def test_missing_file(self):
        code, _, err = self.run_main(
            'plan', '--domain', self.root / 'missing.pddl', '--problem', self.root / 'problem.pddl'
        )

        self.assertEqual(code, 2)
        self.assertIn('description', json.loads(err))

    def test_usage_error(self):
        with patch('sys.stderr', new_callable=io.StringIO):
            with self.assertRaises(SystemExit) as context:
                main(['plan', '--search', 'dfs'], container=self.container)

        self.assertEqual(context.exception.code, 2)

    def test_train_runs_are_reproducible(self):
        outputs = []
        for name in ('first', 'second'):
            out = self.root / name / 'model.ckpt'
            code, _, _ = self.run_main(
                'train', '--domain', self.root / 'domain.pddl', '--problems', self.root / 'problems',
                '--shaping', 'hff', '--steps', 5, '--seed', 3, '--out', out,
                '--max-arity', 2, '--layers', 3, '--width', 4, '--batch', 2
            )
            self.assertEqual(code, 0)
            outputs.append((out.read_bytes(), Path(str(out) + '.metrics.jsonl').read_bytes()))

        self.assertEqual(outputs[0], outputs[1])

    def test_train_without_steps_writes_initial_model(self):
        out = self.root / 'initial.ckpt'

        code, out_text, _ = self.run_main(
            'train', '--domain', self.root / 'domain.pddl', '--problems', self.root / 'problems',
            '--steps', 0, '--out', out, '--max-arity', 2, '--layers', 3
        )

        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out_text)['steps'], 0)
        self.assertEqual(CheckpointFileClient().load(out).model.schedule.layers, 3)

    def test_eval(self):
        code, out, _ = self.run_main(
            'eval', '--domain', self.root / 'domain.pddl', '--problems', self.root / 'problems',
            '--heuristics', 'blind,hff', '--out', self.root / 'report.csv'
        )

        body = json.loads(out)
        rows = ReportFileClient().read(self.root / 'report.csv')
        self.assertEqual(code, 0)
        self.assertEqual(len(rows), 4)
        self.assertEqual(body['coverage']['hff'], sum(r.status == 'solved' for r in rows if r.heuristic == 'hff'))
        self.assertIn('blind', body['tallies']['hff'])
        summary = json.loads((self.root / 'report.csv.summary.json').read_text())
        self.assertEqual(body['summary'], str(self.root / 'report.csv.summary.json'))
        self.assertEqual(summary['coverage'], body['coverage'])

    def test_generate(self):
        code, out, _ = self.run_main(
            'generate', '--domain', 'gripper', '--balls', 1, 2, '--seeds', 2, '--out', self.root / 'generated'
        )

        self.assertEqual(code, 0)
        self.assertTrue(json.loads(out)['problems'])
        self.assertTrue((self.root / 'generated' / 'domain.pddl').exists())

    def test_generate_with_missing_size(self):
        code, _, err = self.run_main('generate', '--domain', 'ferry', '--locations', 3, '--out', self.root / 'x')

        self.assertEqual(code, 2)
        self.assertIn('cars', json.loads(err)['payload']['errors'])


if __name__ == '__main__':
    unittest.main()
