"""Module with delete-relaxation heuristics and reward-shaping potentials."""

from __future__ import annotations

import heapq
import math
import weakref
from dataclasses import dataclass
from typing import List, Tuple

from .domain import HeuristicId, Shaping
from .exception import InvalidConfig


INFINITY = math.inf


@dataclass(frozen=True)
class BestSupporterTable:
    """Result of the h_add exploration of a state.

    Attributes:
        costs (list): h_add cost-to-achieve per proposition (INFINITY if unreached).
        supporters (list): Best supporter action id per proposition (-1 if none).
        action_costs (list): h_add(s, pre(a)) per action (INFINITY if unreached).

    """
    costs: List[float]
    supporters: List[int]
    action_costs: List[float]


class _RelaxedTask:
    """Precondition/add indices of a ground task, built once per task."""

    def __init__(self, task):
        self.pre_of = [[] for _ in range(task.size)]
        self.pre_counts = []
        self.adds = []
        self.without_pre = []
        for action in task.actions:
            for proposition_id in action.pre:
                self.pre_of[proposition_id].append(action.id)
            self.pre_counts.append(len(action.pre))
            self.adds.append(sorted(action.add))
            if not action.pre:
                self.without_pre.append(action.id)


_relaxed_tasks = weakref.WeakKeyDictionary()


def _relaxed(task):
    relaxed = _relaxed_tasks.get(task)
    if relaxed is None:
        relaxed = _relaxed_tasks[task] = _RelaxedTask(task)
    return relaxed


def explore(state, goal, task, stop_at_goal=True):
    """Computes h_add costs and best supporters with unit action costs.

    Generalized Dijkstra over the delete relaxation: an action fires once all
    of its preconditions are settled, proposing cost(a) + sum of precondition
    costs to each added proposition. Among equal-cost achievers the lowest
    action id is the supporter.

    Args:
        state (State): State to evaluate.
        goal (iterable): Goal proposition ids.
        task (GroundTask): Owning task.
        stop_at_goal (bool): Stop once every goal proposition is settled. Costs
            and supporters needed by the goal are final at that point.

    Returns:
        BestSupporterTable: Exploration result.

    """
    relaxed = _relaxed(task)
    costs = [INFINITY] * task.size
    supporters = [-1] * task.size
    unsatisfied = list(relaxed.pre_counts)
    action_costs = [0] * len(task.actions)
    heap: List[Tuple[int, int]] = []

    for proposition_id in state.ids():
        costs[proposition_id] = 0
        heap.append((0, proposition_id))
    heapq.heapify(heap)
    remaining = {g for g in goal if costs[g] != 0}

    def fire(action_id):
        candidate = action_costs[action_id] + 1
        for proposition_id in relaxed.adds[action_id]:
            if candidate < costs[proposition_id]:
                costs[proposition_id] = candidate
                supporters[proposition_id] = action_id
                heapq.heappush(heap, (candidate, proposition_id))
            elif candidate == costs[proposition_id] and action_id < supporters[proposition_id]:
                supporters[proposition_id] = action_id

    for action_id in relaxed.without_pre:
        fire(action_id)

    while heap and not (stop_at_goal and not remaining):
        cost, proposition_id = heapq.heappop(heap)
        if cost > costs[proposition_id]:
            continue
        remaining.discard(proposition_id)
        for action_id in relaxed.pre_of[proposition_id]:
            unsatisfied[action_id] -= 1
            action_costs[action_id] += cost
            if unsatisfied[action_id] == 0:
                fire(action_id)

    for action_id, count in enumerate(unsatisfied):
        if count:
            action_costs[action_id] = INFINITY
    return BestSupporterTable(costs, supporters, action_costs)


def h_blind(state=None):
    """Blind heuristic: 1 for every state, goal states included."""
    return 1.0


def h_zero(state=None):
    return 0.0


def h_add(state, goal, task):
    """Additive heuristic; INFINITY if a goal proposition is relaxed-unreachable."""
    goal = tuple(goal)
    if all(state.holds(g) for g in goal):
        return 0.0
    table = explore(state, goal, task)
    return float(sum(table.costs[g] for g in goal))


def h_ff(state, goal, task):
    """FF heuristic.

    Returns:
        tuple: (value, relaxed plan as a frozenset of action ids). The plan is
            empty and the value INFINITY when the goal is relaxed-unreachable.

    """
    goal = tuple(goal)
    if all(state.holds(g) for g in goal):
        return 0.0, frozenset()
    table = explore(state, goal, task)
    if any(table.costs[g] == INFINITY for g in goal):
        return INFINITY, frozenset()
    plan = relaxed_plan(state, goal, task, table)
    return float(len(plan)), plan


def relaxed_plan(state, goal, task, table):
    """Backward-chains best supporters from the goal, each subgoal visited once."""
    plan = set()
    pending = [g for g in goal if not state.holds(g)]
    visited = set(pending)
    while pending:
        proposition_id = pending.pop()
        action_id = table.supporters[proposition_id]
        if action_id in plan:
            continue
        plan.add(action_id)
        for precondition in task.actions[action_id].pre:
            if precondition not in visited and table.costs[precondition] != 0:
                visited.add(precondition)
                pending.append(precondition)
    return frozenset(plan)


def check_gamma(gamma):
    if not 0.0 <= gamma < 1.0:
        raise InvalidConfig(
            message='Discount factor must lie in [0, 1).',
            payload={'gamma': gamma}
        )


def discounted(h, gamma):
    """Discounted heuristic (1 - gamma^h) / (1 - gamma), bounded by 1 / (1 - gamma).

    Raises:
        InvalidConfig: If gamma is not in [0, 1).

    """
    check_gamma(gamma)
    if h == INFINITY:
        return 1.0 / (1.0 - gamma)
    if h == 0:
        return 0.0
    if gamma == 0.0:
        return 1.0
    return -math.expm1(h * math.log1p(-(1.0 - gamma))) / (1.0 - gamma)


def shaped_reward(gamma, phi_s, phi_s2):
    """Potential-shaped step reward -1 + gamma * phi(s') - phi(s)."""
    return -1.0 + gamma * phi_s2 - phi_s


class Heuristic:
    """Heuristic bound to one task and goal, caching values by state.

    Attributes:
        id (str): Heuristic id used in reports.
        _task (GroundTask): Owning task.
        _goal (frozenset): Goal proposition ids.

    """

    id = None

    def __init__(self, task, goal=None):
        self._task = task
        self._goal = task.goal if goal is None else frozenset(goal)
        self._cache = {}

    def __call__(self, state):
        value = self._cache.get(state.bits)
        if value is None:
            value = self._cache[state.bits] = self._compute(state)
        return value

    def reset(self):
        """Drops cached values; called between episodes."""
        self._cache.clear()

    def evaluate_many(self, states):
        """Evaluates several states; values equal sequential calls."""
        return [self(state) for state in states]

    def _compute(self, state):
        raise NotImplementedError


class BlindHeuristic(Heuristic):
    id = HeuristicId.BLIND.value

    def _compute(self, state):
        return h_blind(state)


class ZeroHeuristic(Heuristic):
    id = HeuristicId.ZERO.value

    def _compute(self, state):
        return h_zero(state)


class AdditiveHeuristic(Heuristic):
    id = HeuristicId.HADD.value

    def _compute(self, state):
        return h_add(state, self._goal, self._task)


class FFHeuristic(Heuristic):
    id = HeuristicId.HFF.value

    def _compute(self, state):
        return h_ff(state, self._goal, self._task)[0]


HEURISTICS = {
    HeuristicId.BLIND.value: BlindHeuristic,
    HeuristicId.ZERO.value: ZeroHeuristic,
    HeuristicId.HADD.value: AdditiveHeuristic,
    HeuristicId.HFF.value: FFHeuristic,
}


def make_heuristic(heuristic_id, task, goal=None):
    """Returns a bound classical heuristic by id.

    Raises:
        InvalidConfig: On unknown ids.

    """
    try:
        return HEURISTICS[heuristic_id](task, goal)
    except KeyError:
        raise InvalidConfig(
            message='Unknown heuristic {}.'.format(heuristic_id),
            payload={'heuristic': heuristic_id, 'choices': sorted(HEURISTICS)}
        )


def potential(state, base, gamma, task, goal=None):
    """Shaping potential phi(s) = -discounted(h_base(s), gamma); 0 for base 'none'."""
    if base == Shaping.NONE.value:
        return 0.0
    return -discounted(make_heuristic(base, task, goal)(state), gamma)


class Potential:
    """Shaping potential bound to a task, reusing one cached base heuristic."""

    def __init__(self, task, base, gamma, goal=None):
        check_gamma(gamma)
        self.base = base
        self.gamma = gamma
        self._heuristic = None if base == Shaping.NONE.value else make_heuristic(base, task, goal)

    def __call__(self, state):
        if self._heuristic is None:
            return 0.0
        return -discounted(self._heuristic(state), self.gamma)

    def reset(self):
        if self._heuristic is not None:
            self._heuristic.reset()
