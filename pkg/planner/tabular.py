"""Module with exactly solvable tabular surrogates of planning tasks.

A `TabularMdp` is a deterministic discounted MDP with reward -1 per step, goal
states absorbing with value 0 and dead ends treated as -1 self-loops. Shaped
variants replace the step reward by -1 + gamma * phi(s') - phi(s) with phi
zero on goals.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .exception import InvalidConfig
from .heuristic import check_gamma, discounted
from .strips import is_goal, successors


logger = logging.getLogger(__name__)

DEFAULT_STATE_LIMIT = 500


@dataclass
class TabularMdp:
    """Explicit deterministic state space.

    Attributes:
        transitions (list): Per state, (action id, next state index) pairs.
        goals (numpy.ndarray): Boolean goal flag per state.
        states (tuple): Planning states by index when built from a task.
        initial (int): Index of the initial state.

    """
    transitions: List[List[Tuple[int, int]]]
    goals: np.ndarray
    states: tuple = field(default=())
    initial: int = 0

    @property
    def size(self):
        return len(self.transitions)

    def index(self):
        return {state.bits: position for position, state in enumerate(self.states)}

    @classmethod
    def from_task(cls, task, limit=DEFAULT_STATE_LIMIT):
        """Enumerates the states reachable from I; goal states are not expanded.

        Raises:
            InvalidConfig: If more than `limit` states are reachable.

        """
        states = [task.initial]
        positions = {task.initial.bits: 0}
        transitions = []
        goals = []
        frontier = 0
        while frontier < len(states):
            state = states[frontier]
            frontier += 1
            goal = is_goal(state, task)
            goals.append(goal)
            edges = []
            if not goal:
                for action_id, child in successors(state, task):
                    position = positions.get(child.bits)
                    if position is None:
                        if len(states) == limit:
                            raise InvalidConfig(
                                message='Task {} has more than {} reachable states.'.format(task.name, limit),
                                payload={'task': task.name, 'limit': limit}
                            )
                        position = positions[child.bits] = len(states)
                        states.append(child)
                    edges.append((action_id, position))
            transitions.append(edges)
        logger.debug('Enumerated %d states of %s', len(states), task.name)
        return cls(transitions, np.array(goals, dtype=bool), tuple(states), 0)

    @classmethod
    def random(cls, rng, size, branching=3, goals=1, dead_ends=0):
        """Random MDP in which every non-dead-end state reaches a goal.

        Args:
            rng (numpy.random.Generator): Source of randomness.
            size (int): Number of states.
            branching (int): Upper bound on extra random edges per state.
            goals (int): Number of goal states.
            dead_ends (int): Number of states without outgoing edges.

        """
        if goals < 1 or dead_ends < 0 or goals + dead_ends > size:
            raise InvalidConfig(
                message='Cannot place {} goals and {} dead ends in {} states.'.format(goals, dead_ends, size),
                payload={'size': size, 'goals': goals, 'dead_ends': dead_ends}
            )
        order = rng.permutation(size)
        flags = np.zeros(size, dtype=bool)
        flags[order[:goals]] = True
        transitions = [[] for _ in range(size)]
        for position in range(goals, size - dead_ends):
            state = int(order[position])
            targets = [int(order[rng.integers(position)])]
            targets += [int(t) for t in rng.integers(size, size=int(rng.integers(branching + 1)))]
            transitions[state] = [(action_id, target) for action_id, target in enumerate(targets)]
        return cls(transitions, flags, (), int(order[-1]))


def step_rewards(mdp, gamma, phi=None):
    """Per-state reward arrays aligned with transitions; a dead end gets one self-loop reward.

    Args:
        mdp (TabularMdp): State space.
        gamma (float): Discount factor.
        phi (array): Potential per state, or None for the unshaped -1 reward.
            Goal potentials are taken as 0.

    """
    check_gamma(gamma)
    if phi is None:
        phi = np.zeros(mdp.size)
    phi = np.where(mdp.goals, 0.0, np.asarray(phi, dtype=float))
    rewards = []
    for position, edges in enumerate(mdp.transitions):
        if mdp.goals[position]:
            rewards.append(np.zeros(0))
        elif not edges:
            rewards.append(np.array([-1.0 + gamma * phi[position] - phi[position]]))
        else:
            targets = np.array([target for _, target in edges])
            rewards.append(-1.0 + gamma * phi[targets] - phi[position])
    return rewards


def _next(mdp, position, choice):
    edges = mdp.transitions[position]
    return edges[choice][1] if edges else position


def evaluate_policy(mdp, policy, rewards, gamma):
    """Exact discounted value of a deterministic policy.

    Each state's trajectory is followed until it meets a goal, an evaluated
    state or a cycle; a cycle is summed in closed form as a geometric series.

    Args:
        mdp (TabularMdp): State space.
        policy (list): Chosen transition index per state (ignored on goals and dead ends).
        rewards (list): Output of `step_rewards`.
        gamma (float): Discount factor.

    Returns:
        numpy.ndarray: Value per state.

    """
    values = np.zeros(mdp.size)
    done = np.array(mdp.goals, dtype=bool)
    log_gamma = math.log1p(gamma - 1.0) if gamma > 0 else -math.inf
    for start in range(mdp.size):
        if done[start]:
            continue
        path, positions, current = [], {}, start
        while not done[current]:
            if current in positions:
                cycle = path[positions[current]:]
                total, factor = 0.0, 1.0
                for member in cycle:
                    total += factor * rewards[member][policy[member]]
                    factor *= gamma
                values[current] = total / -math.expm1(len(cycle) * log_gamma)
                done[current] = True
                for member in reversed(cycle[1:]):
                    values[member] = rewards[member][policy[member]] + gamma * values[_next(mdp, member, policy[member])]
                    done[member] = True
                path = path[:positions[current]]
                break
            positions[current] = len(path)
            path.append(current)
            current = _next(mdp, current, policy[current])
        for member in reversed(path):
            values[member] = rewards[member][policy[member]] + gamma * values[_next(mdp, member, policy[member])]
            done[member] = True
    return values


def q_values(mdp, values, rewards, gamma):
    """Per-state arrays of r(s, a) + gamma * V(a(s)); empty on goals."""
    result = []
    for position, edges in enumerate(mdp.transitions):
        if mdp.goals[position]:
            result.append(np.zeros(0))
        elif not edges:
            result.append(rewards[position] + gamma * values[position])
        else:
            targets = np.array([target for _, target in edges])
            result.append(rewards[position] + gamma * values[targets])
    return result


def optimal_values(mdp, gamma, phi=None, tolerance=1e-12):
    """Solves the (shaped) MDP exactly by policy iteration.

    Returns:
        tuple: (values, policy) where policy holds the chosen transition index per state.

    """
    rewards = step_rewards(mdp, gamma, phi)
    policy = [0] * mdp.size
    for iteration in range(10 * mdp.size + 100):
        values = evaluate_policy(mdp, policy, rewards, gamma)
        changed = False
        for position, q in enumerate(q_values(mdp, values, rewards, gamma)):
            if len(q) < 2:
                continue
            best = int(np.argmax(q))
            current = q[policy[position]]
            if q[best] > current + tolerance * (1.0 + abs(current)):
                policy[position] = best
                changed = True
        if not changed:
            logger.debug('Policy iteration converged after %d iterations', iteration + 1)
            return values, policy
    return evaluate_policy(mdp, policy, rewards, gamma), policy


def greedy_actions(mdp, values, gamma, phi=None, tolerance=1e-9):
    """Action ids maximizing Q per state (empty set on goals and dead ends)."""
    rewards = step_rewards(mdp, gamma, phi)
    result = []
    for position, q in enumerate(q_values(mdp, values, rewards, gamma)):
        edges = mdp.transitions[position]
        if not edges:
            result.append(frozenset())
            continue
        best = q.max()
        result.append(frozenset(
            action_id for (action_id, _), value in zip(edges, q)
            if value >= best - tolerance * (1.0 + abs(best))
        ))
    return result


def expected_values(mdp, gamma, tau, phi=None, tolerance=1e-12, max_iterations=1000000):
    """On-policy values under pi = softmax(Q / tau), by fixed-point iteration."""
    rewards = step_rewards(mdp, gamma, phi)
    values = np.zeros(mdp.size)
    for _ in range(max_iterations):
        updated = np.zeros(mdp.size)
        for position, q in enumerate(q_values(mdp, values, rewards, gamma)):
            if len(q):
                updated[position] = softmax(q / tau) @ q
        delta = np.max(np.abs(updated - values)) if mdp.size else 0.0
        values = updated
        if delta < tolerance:
            break
    return values


def softmax(logits):
    shifted = np.exp(logits - np.max(logits))
    return shifted / shifted.sum()


def goal_distances(mdp):
    """Exact steps-to-goal per state by backward breadth-first search; inf if unreachable."""
    predecessors = [[] for _ in range(mdp.size)]
    for position, edges in enumerate(mdp.transitions):
        for _, target in edges:
            predecessors[target].append(position)
    distances = np.full(mdp.size, np.inf)
    queue = deque()
    for position in np.flatnonzero(mdp.goals):
        distances[position] = 0
        queue.append(int(position))
    while queue:
        position = queue.popleft()
        for source in predecessors[position]:
            if distances[source] == np.inf:
                distances[source] = distances[position] + 1
                queue.append(source)
    return distances


def oracle_potential(mdp, gamma):
    """phi = -discounted(h*) from exact goal distances."""
    return np.array([-discounted(float(d), gamma) for d in goal_distances(mdp)])


class TableValueFunction:
    """Lookup-table stand-in for `NlmModel` keyed by state bits."""

    def __init__(self, values=None, default=0.0):
        self.values = dict(values or {})
        self.default = default

    def evaluate_states(self, states, task=None, goal=None):
        return np.array([self.values.get(state.bits, self.default) for state in states], dtype=float)

    def evaluate(self, items):
        return self.evaluate_states([state for state, _ in items])

    def update(self, state, value):
        self.values[state.bits] = float(value)
