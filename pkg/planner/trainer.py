"""Module with approximate RTDP training of the NLM value function.

Episodes sample a task uniformly, follow a softmax policy over one-step
lookahead Q values and push every visited non-terminal state into a replay
buffer bucketed by object count. Each push is followed by one SGD step on a
minibatch from a single bucket towards expected-value targets.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .domain import Shaping
from .dto import EpisodeRecord
from .exception import DeadEndState, EmptyBuffer, EmptyTaskList, InvalidConfig, SignatureMismatch
from .heuristic import Potential, shaped_reward
from .nlm import Mapr, NlmModel
from .strips import applicable, is_goal, successors
from .tabular import softmax
from .tensor import AdamState, Tape, adam_step, backward, mse_loss


logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    steps: int = 50000
    episode_cap: int = 40
    gamma: float = 0.999999
    batch: int = 25
    tau: float = 1.0
    buffer: int = 6000
    shaping: str = Shaping.HFF.value
    seed: int = 0
    max_arity: int = 3
    layers: int = 6
    width: int = 8
    learning_rate: float = 0.001
    dead_end_value: Optional[float] = None
    checkpoint_interval: int = 1000
    log_interval: int = 100

    def validate(self):
        """Raises InvalidConfig listing every offending field."""
        errors = {}
        for name in ('episode_cap', 'batch', 'buffer', 'layers', 'width', 'checkpoint_interval', 'log_interval'):
            if getattr(self, name) <= 0:
                errors[name] = ['Must be positive.']
        if self.steps < 0:
            errors['steps'] = ['Must not be negative.']
        if self.max_arity < 0:
            errors['max_arity'] = ['Must not be negative.']
        if not 0.0 <= self.gamma < 1.0:
            errors['gamma'] = ['Must lie in [0, 1).']
        for name in ('tau', 'learning_rate'):
            if getattr(self, name) <= 0:
                errors[name] = ['Must be positive.']
        if self.shaping not in {shaping.value for shaping in Shaping}:
            errors['shaping'] = ['Unknown shaping {}.'.format(self.shaping)]
        if errors:
            raise InvalidConfig(message='Invalid training configuration.', payload=errors)
        return self

    def as_dict(self):
        return asdict(self)


@dataclass(eq=False)
class BufferEntry:
    """One visited state with everything needed to recompute its target.

    Attributes:
        task (GroundTask): Owning task.
        state (State): Visited non-terminal state.
        actions (tuple): Applicable action ids.
        successors (tuple): Successor per action.
        rewards (numpy.ndarray): Shaped reward per action.
        goals (numpy.ndarray): Whether each successor is a goal.
        dead (numpy.ndarray): Whether each successor is a non-goal dead end.
        phi (float): Potential of `state`.
        phi_successors (numpy.ndarray): Potential per successor, 0 on goals.

    """
    task: object
    state: object
    actions: Tuple[int, ...]
    successors: tuple
    rewards: np.ndarray
    goals: np.ndarray
    dead: np.ndarray
    phi: float
    phi_successors: np.ndarray

    @property
    def objects(self):
        return self.task.object_count


def make_entry(task, state, potential, gamma):
    """Builds the buffer entry of a non-terminal state.

    Raises:
        DeadEndState: If no action is applicable.

    """
    pairs = list(successors(state, task))
    if not pairs:
        raise DeadEndState(
            message='State has no applicable action.',
            payload={'task': task.name, 'state': state.ids()}
        )
    actions = tuple(action_id for action_id, _ in pairs)
    children = tuple(child for _, child in pairs)
    goals = np.array([is_goal(child, task) for child in children], dtype=bool)
    dead = np.array(
        [not goal and not applicable(child, task) for child, goal in zip(children, goals)],
        dtype=bool
    )
    phi = potential(state)
    phi_successors = np.array([0.0 if goal else potential(child) for child, goal in zip(children, goals)])
    rewards = np.array([shaped_reward(gamma, phi, value) for value in phi_successors])
    return BufferEntry(task, state, actions, children, rewards, goals, dead, phi, phi_successors)


class ReplayBuffer:
    """FIFO buckets keyed by object count with a global capacity.

    Eviction removes the globally oldest entry.
    """

    def __init__(self, capacity):
        self.capacity = capacity
        self.buckets: Dict[int, deque] = {}
        self._order = deque()

    def __len__(self):
        return len(self._order)

    def push(self, entry):
        if len(self._order) >= self.capacity:
            oldest = self._order.popleft()
            self.buckets[oldest].popleft()
            if not self.buckets[oldest]:
                del self.buckets[oldest]
        self.buckets.setdefault(entry.objects, deque()).append(entry)
        self._order.append(entry.objects)

    def bucket_sizes(self):
        return {key: len(bucket) for key, bucket in sorted(self.buckets.items())}


def buffer_sample(buffer, batch, rng):
    """Picks a non-empty bucket uniformly, then `batch` entries from it with replacement.

    Raises:
        EmptyBuffer: If the buffer holds no entry.

    """
    keys = sorted(key for key, bucket in buffer.buckets.items() if bucket)
    if not keys:
        raise EmptyBuffer(message='Cannot sample from an empty replay buffer.', payload={})
    bucket = buffer.buckets[keys[int(rng.integers(len(keys)))]]
    return [bucket[int(index)] for index in rng.integers(len(bucket), size=batch)]


def _bootstrap_mask(entry, dead_end_value):
    mask = ~entry.goals
    if dead_end_value is not None:
        mask &= ~entry.dead
    return mask


def q_values_many(entries, model, gamma, dead_end_value=None):
    """Q(s, a) = r(s, a) + gamma * V(s') per entry, with V(goal) = 0.

    Successors needing the model are evaluated in one call.
    """
    items = []
    for entry in entries:
        mask = _bootstrap_mask(entry, dead_end_value)
        items.extend((child, entry.task) for child, keep in zip(entry.successors, mask) if keep)
    values = model.evaluate(items) if items else np.zeros(0)
    result, cursor = [], 0
    for entry in entries:
        mask = _bootstrap_mask(entry, dead_end_value)
        successor_values = np.zeros(len(entry.actions))
        count = int(mask.sum())
        successor_values[mask] = values[cursor:cursor + count]
        cursor += count
        if dead_end_value is not None:
            successor_values[entry.dead & ~entry.goals] = dead_end_value
        result.append(entry.rewards + gamma * successor_values)
    return result


def q_values(entry, model, gamma, dead_end_value=None):
    return q_values_many([entry], model, gamma, dead_end_value)[0]


def td_target(entry, model, tau, gamma, dead_end_value=None):
    """Expected Q under softmax(Q / tau), a constant for differentiation."""
    return td_targets([entry], model, tau, gamma, dead_end_value)[0]


def td_targets(entries, model, tau, gamma, dead_end_value=None):
    return np.array([
        float(softmax(q / tau) @ q) for q in q_values_many(entries, model, gamma, dead_end_value)
    ])


class Transition(NamedTuple):
    action: int
    successor: object
    reward: float
    terminal: bool
    entry: BufferEntry


def rollout_step(model, task, state, tau, gamma, rng, potential=None, dead_end_value=None):
    """Samples one action from softmax(Q / tau) and applies it.

    Args:
        model: Value function with `evaluate`.
        task (GroundTask): Current task.
        state (State): Non-goal state with at least one applicable action.
        tau (float): Softmax temperature.
        gamma (float): Discount factor.
        rng (numpy.random.Generator): Source of randomness.
        potential (callable): Shaping potential; built from the model's shaping id if None.
        dead_end_value (float): Clamped value of dead-end successors, None to bootstrap.

    Returns:
        Transition: Chosen action, successor, shaped reward, whether the
            successor is a goal or dead end, and the buffer entry of `state`.

    Raises:
        DeadEndState: If `state` has no applicable action.

    """
    if potential is None:
        potential = Potential(task, model.shaping, gamma)
    entry = make_entry(task, state, potential, gamma)
    q = q_values(entry, model, gamma, dead_end_value)
    choice = int(rng.choice(len(q), p=softmax(q / tau)))
    return Transition(
        action=entry.actions[choice],
        successor=entry.successors[choice],
        reward=float(entry.rewards[choice]),
        terminal=bool(entry.goals[choice] or entry.dead[choice]),
        entry=entry
    )


def sgd_step(model, entries, targets, adam):
    """One Adam step on mean 0.5 * (V(s) - target)^2; returns the loss."""
    batch = Mapr.stack([model.encode(entry.state, entry.task) for entry in entries])
    target = np.asarray(targets, dtype=model.dtype).reshape(-1, 1)
    with Tape():
        loss = mse_loss(model.forward(batch), target)
    grads = backward(loss)
    named = {name: grads[param] for name, param in model.params.items() if param in grads}
    adam_step(model.params, named, adam)
    return loss.item()


@dataclass
class EpisodeStats:
    cumulative_goals: int = 0
    episodes: int = 0
    sgd_steps: int = 0
    episode_lengths: List[int] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    bucket_sizes: Dict[int, int] = field(default_factory=dict)


def _check_signatures(tasks):
    first = tuple(tasks[0].signature())
    for task in tasks[1:]:
        if tuple(task.signature()) != first:
            raise SignatureMismatch(
                message='Training tasks {} and {} have different predicate signatures.'.format(
                    tasks[0].name, task.name),
                payload={'tasks': [tasks[0].name, task.name]}
            )


def build_model(task, cfg):
    return NlmModel.for_task(
        task,
        max_arity=cfg.max_arity,
        layers=cfg.layers,
        width=cfg.width,
        gamma=cfg.gamma,
        tau=cfg.tau,
        shaping=cfg.shaping,
        seed=cfg.seed
    )


def train(tasks, cfg, model=None, on_record=None, on_checkpoint=None):
    """Runs approximate RTDP until `cfg.steps` SGD steps are done.

    Args:
        tasks (list): Training tasks of one domain; trivial ones are skipped.
        cfg (TrainConfig): Hyperparameters.
        model (NlmModel): Model to continue training; a fresh one if None.
        on_record (callable): Receives an EpisodeRecord after every episode.
        on_checkpoint (callable): Receives (model, stats) every
            `cfg.checkpoint_interval` SGD steps.

    Returns:
        tuple: (model, EpisodeStats).

    Raises:
        EmptyTaskList: If no task is given or all are trivial.

    """
    cfg.validate()
    tasks = list(tasks)
    if not tasks:
        raise EmptyTaskList(message='No training tasks given.', payload={})
    candidates = [
        task for task in tasks
        if not is_goal(task.initial, task) and applicable(task.initial, task)
    ]
    if not candidates:
        raise EmptyTaskList(
            message='All training tasks are trivial or start in a dead end.',
            payload={'tasks': [task.name for task in tasks]}
        )
    _check_signatures(candidates)
    if model is None:
        model = build_model(candidates[0], cfg)
    logger.info('Training on %d tasks (%d skipped)', len(candidates), len(tasks) - len(candidates))

    rng = np.random.default_rng(cfg.seed)
    adam = AdamState(lr=cfg.learning_rate)
    buffer = ReplayBuffer(cfg.buffer)
    potentials = {}
    stats = EpisodeStats()

    while stats.sgd_steps < cfg.steps:
        index = int(rng.integers(len(candidates)))
        task = candidates[index]
        potential = potentials.get(index)
        if potential is None:
            potential = potentials[index] = Potential(task, cfg.shaping, cfg.gamma)
        potential.reset()
        state, length, reached, loss = task.initial, 0, False, None
        while length < cfg.episode_cap and stats.sgd_steps < cfg.steps:
            if not applicable(state, task):
                break
            transition = rollout_step(
                model, task, state, cfg.tau, cfg.gamma, rng,
                potential=potential, dead_end_value=cfg.dead_end_value
            )
            buffer.push(transition.entry)
            batch = buffer_sample(buffer, cfg.batch, rng)
            targets = td_targets(batch, model, cfg.tau, cfg.gamma, cfg.dead_end_value)
            loss = sgd_step(model, batch, targets, adam)
            if not math.isfinite(loss):
                logger.warning('Non-finite loss %s at step %d', loss, stats.sgd_steps + 1)
            stats.sgd_steps += 1
            stats.losses.append(loss)
            length += 1
            state = transition.successor
            if stats.sgd_steps % cfg.log_interval == 0:
                logger.info(
                    'step %d loss %.6f episodes %d goals %d buffer %d',
                    stats.sgd_steps, loss, stats.episodes, stats.cumulative_goals, len(buffer)
                )
            if on_checkpoint is not None and stats.sgd_steps % cfg.checkpoint_interval == 0:
                on_checkpoint(model, stats)
            if is_goal(state, task):
                reached = True
                break
        stats.episodes += 1
        stats.cumulative_goals += int(reached)
        stats.episode_lengths.append(length)
        stats.bucket_sizes = buffer.bucket_sizes()
        if on_record is not None:
            on_record(EpisodeRecord(
                sgd_step=stats.sgd_steps,
                episode=stats.episodes,
                instance=task.name,
                objects=task.object_count,
                episode_len=length,
                reached_goal=reached,
                loss=loss,
                cumulative_goals=stats.cumulative_goals
            ))
    logger.info('Finished %d steps: %d episodes, %d goals', stats.sgd_steps, stats.episodes, stats.cumulative_goals)
    return model, stats
