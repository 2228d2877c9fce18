"""Module with A*, GBFS and GBFS with greedy lookahead, counting heuristic evaluations exactly."""

from __future__ import annotations

import heapq
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

from .domain import Algorithm, SearchStatus
from .dto import ReportRow, SearchResult, SuiteReport
from .exception import InvalidConfig, PlannerBaseException
from .heuristic import h_ff, make_heuristic
from .strips import is_goal, successors


logger = logging.getLogger(__name__)


@dataclass
class SearchConfig:
    algorithm: str = Algorithm.GBFS.value
    eval_limit: int = 100000
    lookahead_factor: int = 5
    lookahead_fallback: int = 50

    def validate(self):
        errors = {}
        if self.algorithm not in ALGORITHMS:
            errors['algorithm'] = ['Must be one of {}.'.format(', '.join(sorted(ALGORITHMS)))]
        for name in ('eval_limit', 'lookahead_factor', 'lookahead_fallback'):
            if getattr(self, name) <= 0:
                errors[name] = ['Must be positive.']
        if errors:
            raise InvalidConfig(message='Invalid search configuration.', payload=errors)
        return self

    def as_dict(self):
        return asdict(self)


class EvaluationCounter:
    """Counts first-time heuristic evaluations against a limit.

    Attributes:
        count (int): Evaluations so far.
        limit (int): Evaluation budget.
        values (dict): Heuristic value by state bits.

    """

    def __init__(self, heuristic, limit):
        self._heuristic = heuristic
        self.limit = limit
        self.count = 0
        self.values = {}

    @property
    def spent(self):
        return self.count >= self.limit

    def evaluate(self, states):
        """Evaluates uncached states in order until the budget runs out.

        Returns:
            list: Values of the states that were evaluated, a prefix of `states`.

        """
        batch, seen = [], set()
        for state in states:
            if state.bits not in self.values and state.bits not in seen:
                seen.add(state.bits)
                batch.append(state)
        batch = batch[:max(self.limit - self.count, 0)]
        if batch:
            for state, value in zip(batch, self._heuristic.evaluate_many(batch)):
                self.values[state.bits] = value
            self.count += len(batch)
        return [self.values[state.bits] for state in states if state.bits in self.values]

    def __getitem__(self, state):
        return self.values[state.bits]


class _Search:
    """Shared bookkeeping: parent pointers, counters and result assembly."""

    def __init__(self, task, heuristic, cfg):
        self.task = task
        self.counter = EvaluationCounter(heuristic, cfg.eval_limit)
        self.parents = {task.initial.bits: (None, None)}
        self.expansions = 0
        self.started = time.perf_counter()
        self.lookahead_depth = None

    def plan_to(self, bits):
        plan = []
        while True:
            parent, action_id = self.parents[bits]
            if parent is None:
                break
            plan.append(action_id)
            bits = parent
        plan.reverse()
        return plan

    def result(self, status, plan=None):
        plan = list(plan or [])
        result = SearchResult(
            status=status.value,
            plan=plan,
            evaluations=self.counter.count,
            expansions=self.expansions,
            plan_length=len(plan),
            seconds=time.perf_counter() - self.started,
            lookahead_depth=self.lookahead_depth
        )
        logger.debug(
            '%s on %s: %d evaluations, %d expansions',
            result.status, self.task.name, result.evaluations, result.expansions
        )
        return result

    def generate(self, state):
        """Registers unseen successors in order, stopping at the first goal.

        Returns:
            tuple: (unseen non-goal successors, goal successor or None).

        """
        fresh = []
        for action_id, child in successors(state, self.task):
            if child.bits in self.parents:
                continue
            self.parents[child.bits] = (state.bits, action_id)
            if is_goal(child, self.task):
                return fresh, child
            fresh.append(child)
        return fresh, None


def astar(task, heuristic, cfg):
    """A* with closed flags, Bellman g-updates and reopening; goal test at expansion.

    Args:
        task (GroundTask): Task to solve.
        heuristic (Heuristic): Bound heuristic; evaluate_many is used for batches.
        cfg (SearchConfig): Search configuration.

    Returns:
        SearchResult: Outcome with exact evaluation count.

    """
    search = _Search(task, heuristic, cfg)
    initial = task.initial
    if is_goal(initial, task):
        return search.result(SearchStatus.SOLVED)
    search.counter.evaluate([initial])
    if search.counter.spent:
        return search.result(SearchStatus.LIMIT_REACHED)
    g_values = {initial.bits: 0}
    closed = set()
    queue = [(search.counter[initial], 0, 0, initial)]
    tie = 1
    while queue:
        _, _, g_value, state = heapq.heappop(queue)
        if g_value > g_values[state.bits]:
            continue
        if is_goal(state, task):
            return search.result(SearchStatus.SOLVED, search.plan_to(state.bits))
        if state.bits in closed:
            continue
        closed.add(state.bits)
        search.expansions += 1
        improved = []
        for action_id, child in successors(state, task):
            cost = g_value + 1
            if cost < g_values.get(child.bits, math.inf):
                g_values[child.bits] = cost
                search.parents[child.bits] = (state.bits, action_id)
                closed.discard(child.bits)
                improved.append(child)
        search.counter.evaluate(improved)
        if search.counter.spent:
            return search.result(SearchStatus.LIMIT_REACHED)
        for child in improved:
            cost = g_values[child.bits]
            heapq.heappush(queue, (cost + search.counter[child], tie, cost, child))
            tie += 1
    return search.result(SearchStatus.EXHAUSTED)


def _expand_greedy(search, state, queue, tie):
    """GBFS expansion with early goal detection; returns (goal or None, next tie)."""
    fresh, goal = search.generate(state)
    values = search.counter.evaluate(fresh)
    for child, value in zip(fresh, values):
        heapq.heappush(queue, (value, tie, child))
        tie += 1
    return goal, tie


def gbfs(task, heuristic, cfg):
    """Greedy best-first search ordered by h with FIFO ties and early goal detection."""
    search = _Search(task, heuristic, cfg)
    initial = task.initial
    if is_goal(initial, task):
        return search.result(SearchStatus.SOLVED)
    search.counter.evaluate([initial])
    if search.counter.spent:
        return search.result(SearchStatus.LIMIT_REACHED)
    queue = [(search.counter[initial], 0, initial)]
    tie = 1
    closed = set()
    while queue:
        _, _, state = heapq.heappop(queue)
        if state.bits in closed:
            continue
        closed.add(state.bits)
        search.expansions += 1
        goal, tie = _expand_greedy(search, state, queue, tie)
        if goal is not None:
            return search.result(SearchStatus.SOLVED, search.plan_to(goal.bits))
        if search.counter.spent:
            return search.result(SearchStatus.LIMIT_REACHED)
    return search.result(SearchStatus.EXHAUSTED)


def lookahead_depth(task, cfg):
    """Lookahead limit: factor * h_FF(I), or the fallback when h_FF(I) is infinite."""
    value, _ = h_ff(task.initial, task.goal, task)
    if value == math.inf:
        return cfg.lookahead_fallback
    return int(cfg.lookahead_factor * value)


def _argmin(children, counter):
    best, best_value = None, math.inf
    for action_id, child in children:
        value = counter[child]
        if best is None or value < best_value:
            best, best_value = (action_id, child), value
    return best


def gbfls(task, heuristic, cfg):
    """GBFS followed, after every expansion, by a greedy depth-first lookahead.

    Only depth-0 successors enter OPEN; lookahead nodes are goal-tested and
    count as evaluations.
    """
    search = _Search(task, heuristic, cfg)
    initial = task.initial
    if is_goal(initial, task):
        return search.result(SearchStatus.SOLVED)
    depth = search.lookahead_depth = lookahead_depth(task, cfg)
    search.counter.evaluate([initial])
    if search.counter.spent:
        return search.result(SearchStatus.LIMIT_REACHED)
    queue = [(search.counter[initial], 0, initial)]
    tie = 1
    closed = set()
    while queue:
        _, _, state = heapq.heappop(queue)
        if state.bits in closed:
            continue
        closed.add(state.bits)
        search.expansions += 1
        goal, tie = _expand_greedy(search, state, queue, tie)
        if goal is not None:
            return search.result(SearchStatus.SOLVED, search.plan_to(goal.bits))
        if search.counter.spent:
            return search.result(SearchStatus.LIMIT_REACHED)
        children = list(successors(state, task))
        search.counter.evaluate([child for _, child in children])
        if search.counter.spent:
            return search.result(SearchStatus.LIMIT_REACHED)
        path = []
        for _ in range(1, depth):
            if not children:
                break
            action_id, current = _argmin(children, search.counter)
            path.append(action_id)
            children = list(successors(current, task))
            for child_action, child in children:
                if is_goal(child, task):
                    plan = search.plan_to(state.bits) + path + [child_action]
                    return search.result(SearchStatus.SOLVED, plan)
            search.counter.evaluate([child for _, child in children])
            if search.counter.spent:
                return search.result(SearchStatus.LIMIT_REACHED)
    return search.result(SearchStatus.EXHAUSTED)


ALGORITHMS = {
    Algorithm.ASTAR.value: astar,
    Algorithm.GBFS.value: gbfs,
    Algorithm.GBFLS.value: gbfls,
}


def run_search(task, heuristic, cfg):
    cfg.validate()
    return ALGORITHMS[cfg.algorithm](task, heuristic, cfg)


def coverage(rows, heuristics):
    """Number of solved instances per heuristic id."""
    result = {heuristic_id: 0 for heuristic_id in heuristics}
    for row in rows:
        if row.status == SearchStatus.SOLVED.value:
            result[row.heuristic] = result.get(row.heuristic, 0) + 1
    return result


def paired_tally(rows, heuristics):
    """Counts, per ordered heuristic pair (a, b), instances where a needed fewer evaluations.

    A failure counts as infinitely many evaluations, so ties and instances
    failed by both are excluded.
    """
    by_instance = {}
    for row in rows:
        cost = row.evaluations if row.status == SearchStatus.SOLVED.value else math.inf
        by_instance.setdefault(row.instance, {})[row.heuristic] = cost
    tally = {a: {b: 0 for b in heuristics if b != a} for a in heuristics}
    for costs in by_instance.values():
        for a in heuristics:
            for b in heuristics:
                if a != b and a in costs and b in costs and costs[a] < costs[b]:
                    tally[a][b] += 1
    return tally


def evaluate_suite(tasks, heuristics, cfg, factory=make_heuristic, threads=1):
    """Runs every (task, heuristic) pair and summarizes coverage.

    Args:
        tasks (list): Ground tasks.
        heuristics (list): Heuristic ids.
        cfg (SearchConfig): Search configuration shared by all runs.
        factory (callable): Builds a fresh heuristic from (id, task).
        threads (int): Worker threads; rows keep task-major input order.

    Returns:
        SuiteReport: Rows, coverage and paired tallies. Pairs whose heuristic
            cannot be built are logged and listed in `failures`.

    """
    cfg.validate()
    heuristics = list(heuristics)
    jobs = [(task, heuristic_id) for task in tasks for heuristic_id in heuristics]

    def run(job):
        task, heuristic_id = job
        try:
            heuristic = factory(heuristic_id, task)
        except PlannerBaseException as error:
            logger.warning('Skipping %s with %s: %s', task.name, heuristic_id, error)
            return None, '{}:{}'.format(task.name, heuristic_id)
        result = run_search(task, heuristic, cfg)
        return ReportRow(
            instance=task.name,
            objects=task.object_count,
            algorithm=cfg.algorithm,
            heuristic=heuristic_id,
            status=result.status,
            evaluations=result.evaluations,
            expansions=result.expansions,
            plan_length=result.plan_length,
            seconds=result.seconds
        ), None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            outcomes = list(executor.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]
    rows = [row for row, _ in outcomes if row is not None]
    failures = [failure for _, failure in outcomes if failure is not None]
    logger.info('Evaluated %d runs over %d tasks', len(rows), len(tasks))
    return SuiteReport(
        rows=rows,
        coverage=coverage(rows, heuristics),
        tallies=paired_tally(rows, heuristics),
        failures=failures
    )
