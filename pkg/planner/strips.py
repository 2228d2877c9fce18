"""Module with grounded STRIPS tasks and their transition semantics."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import FrozenSet, NamedTuple, Tuple

from .exception import GroundingFailed, PreconditionViolated


logger = logging.getLogger(__name__)


class State(NamedTuple):
    """Fixed-width bitset over the ground propositions of one task.

    Bit `i` of `bits` is set iff proposition `i` holds.
    """
    bits: int
    size: int

    def holds(self, proposition_id):
        return (self.bits >> proposition_id) & 1 == 1

    def ids(self):
        """Returns true proposition ids in increasing order."""
        bits, result, index = self.bits, [], 0
        while bits:
            if bits & 1:
                result.append(index)
            bits >>= 1
            index += 1
        return result

    @classmethod
    def from_ids(cls, ids, size):
        return cls(mask_of(ids), size)


def mask_of(ids):
    mask = 0
    for proposition_id in ids:
        mask |= 1 << proposition_id
    return mask


@dataclass(frozen=True)
class GroundAction:
    id: int
    name: str
    args: Tuple[str, ...]
    pre: FrozenSet[int]
    add: FrozenSet[int]
    delete: FrozenSet[int]
    pre_mask: int
    add_mask: int
    del_mask: int

    def label(self):
        """Returns the VAL-compatible form `(name obj1 obj2)`."""
        return '({})'.format(' '.join((self.name,) + self.args))


@dataclass(frozen=True, eq=False)
class GroundTask:
    """Grounded STRIPS problem.

    Propositions are laid out predicate by predicate in declaration order, each
    predicate occupying a row-major block of |O|^ar(p) ids over object indices.

    Attributes:
        name (str): Problem name.
        domain_name (str): Domain name.
        objects (tuple): Object names; the position is the object index.
        predicates (tuple): (name, arity) pairs in declaration order.
        offsets (tuple): First proposition id of each predicate block.
        actions (tuple): Ground actions; `actions[i].id == i`.
        initial (State): Initial state.
        goal (frozenset): Goal proposition ids.

    """
    name: str
    domain_name: str
    objects: Tuple[str, ...]
    predicates: Tuple[Tuple[str, int], ...]
    offsets: Tuple[int, ...]
    actions: Tuple[GroundAction, ...]
    initial: State
    goal: FrozenSet[int]

    @property
    def size(self):
        """Number of ground propositions |P(O)|."""
        if not self.predicates:
            return 0
        _, arity = self.predicates[-1]
        return self.offsets[-1] + len(self.objects) ** arity

    @property
    def object_count(self):
        return len(self.objects)

    @cached_property
    def goal_mask(self):
        return mask_of(self.goal)

    @cached_property
    def _predicate_index(self):
        return {name: index for index, (name, _) in enumerate(self.predicates)}

    @cached_property
    def _object_index(self):
        return {name: index for index, name in enumerate(self.objects)}

    def proposition_id(self, predicate, args):
        """Returns the id of `predicate(args)`."""
        index = self._predicate_index[predicate]
        count = len(self.objects)
        local = 0
        for arg in args:
            local = local * count + self._object_index[arg]
        return self.offsets[index] + local

    def proposition(self, proposition_id):
        """Returns the (predicate, args) pair of a proposition id."""
        for index in range(len(self.predicates) - 1, -1, -1):
            if proposition_id >= self.offsets[index]:
                name, arity = self.predicates[index]
                local = proposition_id - self.offsets[index]
                args = []
                for _ in range(arity):
                    local, position = divmod(local, len(self.objects))
                    args.append(self.objects[position])
                return name, tuple(reversed(args))
        raise IndexError(proposition_id)

    def signature(self):
        """Predicate signature shared by all tasks of one domain."""
        return self.predicates

    def state(self, atoms):
        """Builds a state from (predicate, args) pairs."""
        return State.from_ids((self.proposition_id(p, args) for p, args in atoms), self.size)


def ground(task, prune_static=True):
    """Instantiates a lifted task over its objects.

    Args:
        task (LiftedTask): Parsed task.
        prune_static (bool): Drop ground actions whose static preconditions are
            false initially; proposition ids are unaffected.

    Returns:
        GroundTask: Deterministically ordered grounding.

    Raises:
        GroundingFailed: If memory is exhausted.

    """
    objects = task.objects
    count = len(objects)
    predicates = tuple((p.name, p.arity) for p in task.predicates)
    offsets, offset = [], 0
    for _, arity in predicates:
        offsets.append(offset)
        offset += count ** arity
    size = offset

    predicate_index = {name: index for index, (name, _) in enumerate(predicates)}
    object_index = {name: index for index, name in enumerate(objects)}

    def prop_id(predicate, args):
        local = 0
        for arg in args:
            local = local * count + object_index[arg]
        return offsets[predicate_index[predicate]] + local

    initial_ids = frozenset(prop_id(atom.predicate, atom.args) for atom in task.init)
    goal_ids = frozenset(prop_id(atom.predicate, atom.args) for atom in task.goal)
    fluent = {atom.predicate for action in task.actions for atom in action.add + action.delete}

    try:
        actions = []
        seen = set()
        for schema in task.actions:
            variables = [var for var, _ in schema.parameters]
            domains = [task.members_of(type_name) for _, type_name in schema.parameters]
            static_pre = [atom for atom in schema.pre if atom.predicate not in fluent]
            for values in itertools.product(*domains):
                key = (schema.name, values)
                if key in seen:
                    continue
                seen.add(key)
                binding = dict(zip(variables, values))

                def bind(atom):
                    return prop_id(atom.predicate, tuple(binding.get(arg, arg) for arg in atom.args))

                if prune_static and any(bind(atom) not in initial_ids for atom in static_pre):
                    continue
                pre = frozenset(bind(atom) for atom in schema.pre)
                add = frozenset(bind(atom) for atom in schema.add)
                delete = frozenset(bind(atom) for atom in schema.delete)
                actions.append(GroundAction(
                    id=len(actions),
                    name=schema.name,
                    args=tuple(values),
                    pre=pre,
                    add=add,
                    delete=delete,
                    pre_mask=mask_of(pre),
                    add_mask=mask_of(add),
                    del_mask=mask_of(delete)
                ))
    except MemoryError:
        raise GroundingFailed(
            message='Out of memory while grounding.',
            payload={
                'objects': count,
                'max_arity': max((arity for _, arity in predicates), default=0),
                'propositions': size,
                'parameter_tuples': sum(count ** len(s.parameters) for s in task.actions)
            }
        )

    logger.debug('Grounded %s: %d propositions, %d actions', task.problem_name, size, len(actions))
    return GroundTask(
        name=task.problem_name,
        domain_name=task.domain_name,
        objects=tuple(objects),
        predicates=predicates,
        offsets=tuple(offsets),
        actions=tuple(actions),
        initial=State(mask_of(initial_ids), size),
        goal=goal_ids
    )


def applicable(state, task):
    """Returns ids of actions whose precondition holds in `state`, in id order."""
    bits = state.bits
    return [action.id for action in task.actions if bits & action.pre_mask == action.pre_mask]


def successor(state, action):
    """Applies a ground action: (s minus del) union add.

    Args:
        state (State): Current state.
        action (GroundAction): Action to apply.

    Returns:
        State: New state; `state` is unchanged.

    Raises:
        PreconditionViolated: If pre(a) is not a subset of s.

    """
    if state.bits & action.pre_mask != action.pre_mask:
        raise PreconditionViolated(
            message='Action {} is not applicable.'.format(action.label()),
            payload={'action': action.id, 'missing': sorted(action.pre - set(state.ids()))}
        )
    return State((state.bits & ~action.del_mask) | action.add_mask, state.size)


def successors(state, task):
    """Yields (action id, successor) pairs for every applicable action."""
    bits = state.bits
    for action in task.actions:
        if bits & action.pre_mask == action.pre_mask:
            yield action.id, State((bits & ~action.del_mask) | action.add_mask, state.size)


def is_goal(state, task, goal=None):
    """Returns whether the goal ids are a subset of the state."""
    mask = task.goal_mask if goal is None else mask_of(goal)
    return state.bits & mask == mask


def validate_plan(task, plan):
    """Returns whether applying `plan` (action ids) from I reaches the goal."""
    state = task.initial
    for action_id in plan:
        action = task.actions[action_id]
        if state.bits & action.pre_mask != action.pre_mask:
            return False
        state = successor(state, action)
    return is_goal(state, task)


def random_walk(task, length, rng):
    """Performs a uniform random walk of at most `length` steps.

    Args:
        task (GroundTask): Task to walk in.
        length (int): Maximum number of steps.
        rng (random.Random): Source of randomness.

    Returns:
        list: Visited (state, action id) pairs; the final action id is None.

    """
    state = task.initial
    trace = []
    for _ in range(length):
        options = applicable(state, task)
        if not options:
            break
        action_id = rng.choice(options)
        trace.append((state, action_id))
        state = successor(state, task.actions[action_id])
    trace.append((state, None))
    return trace

