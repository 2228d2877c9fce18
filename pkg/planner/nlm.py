"""Module with the Neural Logic Machine value function over multi-arity predicate arrays."""

from __future__ import annotations

import hashlib
import itertools
import math
import weakref
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .domain import LEARNED_PREFIX, Shaping
from .exception import InvalidSchedule, ShapeMismatch, SignatureMismatch
from .heuristic import Heuristic, check_gamma, discounted, make_heuristic
from .strips import mask_of
from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    broadcast_expand,
    concat_lastaxis,
    matmul_lastaxis,
    max_reduce_axis,
    permute_axes,
    sigmoid,
)


PERMUTATION_ORDER = 'lexicographic'
EVALUATION_CHUNK = 32


def signature_text(signature):
    return ';'.join('{}/{}'.format(name, arity) for name, arity in signature)


def fingerprint(signature):
    """Returns the sha256 hex digest identifying a predicate signature."""
    return hashlib.sha256(signature_text(signature).encode('utf-8')).hexdigest()


@dataclass(frozen=True)
class AritySchedule:
    """Per-layer arities a_l = min(M, N + l - 1, L - l) for l = 1..L.

    Attributes:
        layers (int): L.
        max_input (int): N, the largest predicate arity of the domain.
        max_arity (int): M, the largest intermediate arity.
        arities (tuple): a_1..a_L.

    """
    layers: int
    max_input: int
    max_arity: int
    arities: Tuple[int, ...]

    @classmethod
    def build(cls, max_input, max_arity, layers):
        """Raises InvalidSchedule unless 0 <= N <= M <= L and L > N."""
        if not 0 <= max_input <= max_arity <= layers or layers <= max_input:
            raise InvalidSchedule(
                message='Invalid arity schedule N={}, M={}, L={}.'.format(max_input, max_arity, layers),
                payload={'N': max_input, 'M': max_arity, 'L': layers}
            )
        arities = tuple(min(max_arity, max_input + index, layers - 1 - index) for index in range(layers))
        return cls(layers, max_input, max_arity, arities)


@dataclass(frozen=True)
class Mapr:
    """Multi-arity predicate representation.

    Attributes:
        tensors (tuple): Array per arity n = 0..N of shape batch + (O,)*n + (C_n,).
        objects (int): Object count O.

    """
    tensors: Tuple[np.ndarray, ...]
    objects: int

    @property
    def max_arity(self):
        return len(self.tensors) - 1

    @property
    def channels(self):
        return tuple(tensor.shape[-1] for tensor in self.tensors)

    @classmethod
    def stack(cls, maprs):
        """Stacks unbatched representations of equal O along a new leading batch axis."""
        maprs = list(maprs)
        first = maprs[0]
        for other in maprs[1:]:
            if other.objects != first.objects or other.channels != first.channels:
                raise ShapeMismatch(
                    message='Cannot stack representations with {} and {} objects.'.format(
                        first.objects, other.objects),
                    payload={'objects': [first.objects, other.objects],
                             'channels': [list(first.channels), list(other.channels)]}
                )
        tensors = tuple(np.stack(arrays) for arrays in zip(*(m.tensors for m in maprs)))
        return cls(tensors, first.objects)


_gather_cache = weakref.WeakKeyDictionary()


def _gather_indices(task, max_arity):
    per_task = _gather_cache.get(task)
    if per_task is None:
        per_task = _gather_cache[task] = {}
    indices = per_task.get(max_arity)
    if indices is None:
        count = task.object_count
        indices = []
        for arity in range(max_arity + 1):
            offsets = np.array(
                [offset for (_, n), offset in zip(task.predicates, task.offsets) if n == arity],
                dtype=np.int64
            )
            local = np.arange(count ** arity, dtype=np.int64).reshape((count,) * arity)
            indices.append(local[..., None] + offsets)
        indices = per_task[max_arity] = tuple(indices)
    return indices


def _bit_array(mask, size):
    raw = np.frombuffer(mask.to_bytes(max((size + 7) // 8, 1), 'little'), dtype=np.uint8)
    return np.unpackbits(raw, bitorder='little')[:size]


def encode(state, goal, task, max_arity=None, dtype=DEFAULT_DTYPE):
    """Builds the MAPR of a state with goal channels appended per arity.

    Args:
        state (State): State of `task`.
        goal (iterable): Goal proposition ids.
        task (GroundTask): Owning task.
        max_arity (int): Highest arity to emit; defaults to the largest predicate arity.
        dtype: Float dtype of the arrays.

    Returns:
        Mapr: For each arity n, state channels of the arity-n predicates in
            declaration order followed by their goal channels.

    """
    largest = max((arity for _, arity in task.predicates), default=0)
    if max_arity is None:
        max_arity = largest
    if largest > max_arity:
        raise SignatureMismatch(
            message='Task has arity-{} predicates, model supports up to {}.'.format(largest, max_arity),
            payload={'task_arity': largest, 'max_arity': max_arity}
        )
    state_bits = _bit_array(state.bits, task.size)
    goal_bits = _bit_array(mask_of(goal), task.size)
    tensors = tuple(
        np.concatenate([state_bits[index], goal_bits[index]], axis=-1).astype(dtype)
        for index in _gather_indices(task, max_arity)
    )
    return Mapr(tensors, task.object_count)


def expand(z, objects):
    """Arity n -> n + 1 by copying features along a new last object axis."""
    return broadcast_expand(z, -2, objects)


def reduce(z, arity):
    """Arity n -> n - 1 by an existential max over the last object axis."""
    if arity < 1:
        raise ShapeMismatch(message='Cannot reduce a nullary tensor.', payload={'shape': list(z.shape)})
    return max_reduce_axis(z, -2)


def perm(z, arity):
    """Concatenates all n! object-axis permutations of `z`, lexicographically ordered."""
    if arity <= 1:
        return z
    batch = z.data.ndim - arity - 1
    leading = tuple(range(batch))
    blocks = [
        permute_axes(z, leading + tuple(batch + axis for axis in order) + (z.data.ndim - 1,))
        for order in itertools.permutations(range(arity))
    ]
    return concat_lastaxis(blocks)


def compose(stream, arity, top, objects, weight, bias, activate=True):
    """One NLM cell: neighbours -> perm -> shared pointwise map (-> sigmoid).

    Args:
        stream (list): Accumulated features per arity, None where absent.
        arity (int): Output arity n.
        top (int): Largest arity of the current layer.
        objects (int): Object count.
        weight (Tensor): (n! * C, Q) matrix.
        bias (Tensor): (Q,) vector.
        activate (bool): Apply sigmoid; the output layer is linear.

    Returns:
        Tensor: batch + (O,)*n + (Q,) features.

    """
    parts = []
    if arity >= 1 and stream[arity - 1] is not None:
        parts.append(expand(stream[arity - 1], objects))
    if stream[arity] is not None:
        parts.append(stream[arity])
    if arity + 1 <= top and arity + 1 < len(stream) and stream[arity + 1] is not None:
        parts.append(reduce(stream[arity + 1], arity + 1))
    features = perm(concat_lastaxis(parts), arity)
    out = matmul_lastaxis(features, weight, bias)
    return sigmoid(out) if activate else out


def parameter_name(layer, arity, kind):
    return 'layer{}/arity{}/{}'.format(layer, arity, kind)


class NlmModel:
    """Value function V(s, G) shared across all tasks of one domain.

    Attributes:
        signature (tuple): (predicate, arity) pairs the model was built for.
        schedule (AritySchedule): Layer arities.
        width (int): Q, the intermediate feature count.
        gamma (float): Discount the model was trained with.
        tau (float): Softmax temperature the model was trained with.
        shaping (str): Shaping potential id; also the learned heuristic's base.
        params (dict): Parameter tensors by name, layer-major then arity.

    """

    def __init__(self, signature, schedule, width=8, gamma=0.999999, tau=1.0,
                 shaping=Shaping.NONE.value, params=None, seed=0, dtype=DEFAULT_DTYPE):
        check_gamma(gamma)
        self.signature = tuple((str(name), int(arity)) for name, arity in signature)
        largest = max((arity for _, arity in self.signature), default=0)
        if largest > schedule.max_input:
            raise InvalidSchedule(
                message='Schedule input arity {} is below the domain arity {}.'.format(
                    schedule.max_input, largest),
                payload={'N': schedule.max_input, 'domain_arity': largest}
            )
        self.schedule = schedule
        self.width = width
        self.gamma = gamma
        self.tau = tau
        self.shaping = shaping
        self.dtype = np.dtype(dtype)
        self.layout = self._layout()
        if params is None:
            params = self._initialize(np.random.default_rng(seed))
        self.params = self._check_params(params)

    @classmethod
    def for_task(cls, task, max_arity=3, layers=6, width=8, **kwargs):
        """Builds a model for the domain of `task` with N set to its largest arity."""
        max_input = max((arity for _, arity in task.predicates), default=0)
        schedule = AritySchedule.build(max_input, max_arity, layers)
        return cls(task.signature(), schedule, width=width, **kwargs)

    @property
    def fingerprint(self):
        return fingerprint(self.signature)

    def input_channels(self):
        """Channel count per input arity: state plus goal channels."""
        return tuple(
            2 * sum(1 for _, n in self.signature if n == arity)
            for arity in range(self.schedule.max_input + 1)
        )

    def _layout(self):
        channels = dict(enumerate(self.input_channels()))
        layout = []
        for layer, top in enumerate(self.schedule.arities, 1):
            final = layer == self.schedule.layers
            out_width = 1 if final else self.width
            for arity in range(top + 1):
                count = channels.get(arity, 0)
                if arity >= 1:
                    count += channels.get(arity - 1, 0)
                if arity + 1 <= top:
                    count += channels.get(arity + 1, 0)
                layout.append((layer, arity, math.factorial(arity) * count, out_width))
            for arity in range(top + 1):
                channels[arity] = channels.get(arity, 0) + out_width
        return tuple(layout)

    def shapes(self):
        """Expected parameter shapes by name, in storage order."""
        shapes = {}
        for layer, arity, rows, cols in self.layout:
            shapes[parameter_name(layer, arity, 'weight')] = (rows, cols)
            shapes[parameter_name(layer, arity, 'bias')] = (cols,)
        return shapes

    def _initialize(self, rng):
        params = {}
        for layer, arity, rows, cols in self.layout:
            limit = math.sqrt(6.0 / (rows + cols))
            params[parameter_name(layer, arity, 'weight')] = rng.uniform(-limit, limit, size=(rows, cols))
            params[parameter_name(layer, arity, 'bias')] = np.zeros(cols)
        return params

    def _check_params(self, params):
        expected = self.shapes()
        if set(params) != set(expected):
            raise ShapeMismatch(
                message='Parameter names do not match the layout.',
                payload={'missing': sorted(set(expected) - set(params)),
                         'unexpected': sorted(set(params) - set(expected))}
            )
        result = {}
        for name, shape in expected.items():
            value = params[name]
            data = value.data if isinstance(value, Tensor) else value
            if tuple(np.shape(data)) != shape:
                raise ShapeMismatch(
                    message='Parameter {} has shape {}, expected {}.'.format(name, np.shape(data), shape),
                    payload={'name': name, 'shapes': [list(np.shape(data)), list(shape)]}
                )
            result[name] = Tensor(np.array(data, dtype=self.dtype), requires_grad=True)
        return result

    def check_task(self, task):
        """Raises SignatureMismatch with both fingerprints if `task` is from another domain."""
        signature = tuple(task.signature())
        if signature != self.signature:
            raise SignatureMismatch(
                message='Task signature does not match the model.',
                payload={
                    'model_fingerprint': self.fingerprint,
                    'task_fingerprint': fingerprint(signature),
                    'model_signature': signature_text(self.signature),
                    'task_signature': signature_text(signature),
                }
            )

    def encode(self, state, task, goal=None):
        return encode(state, task.goal if goal is None else goal, task, self.schedule.max_input, self.dtype)

    def forward(self, mapr):
        """Runs all layers on a (possibly batched) MAPR.

        Returns:
            Tensor: batch + (1,) unactivated values.

        Raises:
            SignatureMismatch: If the MAPR channels differ from the model's inputs.

        """
        if mapr.channels != self.input_channels():
            raise SignatureMismatch(
                message='Representation channels {} do not match model inputs {}.'.format(
                    mapr.channels, self.input_channels()),
                payload={'channels': list(mapr.channels), 'expected': list(self.input_channels())}
            )
        stream = [Tensor(tensor, dtype=self.dtype) for tensor in mapr.tensors]
        stream += [None] * (self.schedule.max_arity + 1 - len(stream))
        out = None
        for layer, top in enumerate(self.schedule.arities, 1):
            final = layer == self.schedule.layers
            outputs = [
                compose(
                    stream, arity, top, mapr.objects,
                    self.params[parameter_name(layer, arity, 'weight')],
                    self.params[parameter_name(layer, arity, 'bias')],
                    activate=not final
                )
                for arity in range(top + 1)
            ]
            if final:
                out = outputs[0]
                break
            for arity, features in enumerate(outputs):
                stream[arity] = features if stream[arity] is None else concat_lastaxis([stream[arity], features])
        return out

    def evaluate_states(self, states, task, goal=None):
        """Returns V(s, G) per state of one task as float64, batched in chunks."""
        self.check_task(task)
        states = list(states)
        values = np.empty(len(states))
        for start in range(0, len(states), EVALUATION_CHUNK):
            chunk = states[start:start + EVALUATION_CHUNK]
            batch = Mapr.stack([self.encode(state, task, goal) for state in chunk])
            values[start:start + len(chunk)] = self.forward(batch).data[..., 0]
        return values

    def evaluate(self, items):
        """Returns V(s, G) for (state, task) pairs, in input order."""
        items = list(items)
        values = np.empty(len(items))
        groups = {}
        for index, (state, task) in enumerate(items):
            groups.setdefault(id(task), (task, []))[1].append(index)
        for task, indices in groups.values():
            values[indices] = self.evaluate_states([items[i][0] for i in indices], task)
        return values

    def predict(self, state, task, goal=None):
        return float(self.evaluate_states([state], task, goal)[0])


def learned_heuristic(model, state, goal, task):
    """Returns -V(s, G) plus the discounted base heuristic; -V(s, G) alone without shaping."""
    value = -model.predict(state, task, goal)
    if model.shaping == Shaping.NONE.value:
        return value
    return value + discounted(make_heuristic(model.shaping, task, goal)(state), model.gamma)


class LearnedHeuristic(Heuristic):
    """Learned heuristic bound to one task; evaluate_many runs one batched forward."""

    def __init__(self, model, task, goal=None, label=None):
        super().__init__(task, goal)
        model.check_task(task)
        self.id = label or LEARNED_PREFIX + 'model'
        self._model = model
        self._base = None
        if model.shaping != Shaping.NONE.value:
            self._base = make_heuristic(model.shaping, task, goal)

    def _combine(self, state, value):
        if self._base is None:
            return -value
        return -value + discounted(self._base(state), self._model.gamma)

    def _compute(self, state):
        return self._combine(state, self._model.predict(state, self._task, self._goal))

    def evaluate_many(self, states):
        states = list(states)
        pending = list({s.bits: s for s in states if s.bits not in self._cache}.values())
        if pending:
            values = self._model.evaluate_states(pending, self._task, self._goal)
            for state, value in zip(pending, values):
                self._cache[state.bits] = self._combine(state, float(value))
        return [self._cache[state.bits] for state in states]
