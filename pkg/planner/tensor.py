"""Module with a small dense-tensor engine and reverse-mode differentiation.

Operations record themselves on the innermost active `Tape` when at least one
input is a parameter (``requires_grad``) or was produced on that tape. Without
an active tape they only compute forward values.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .exception import NonScalarLoss, ShapeMismatch


DEFAULT_DTYPE = np.float32

_local = threading.local()


class Tensor:
    """Dense row-major float array.

    Attributes:
        data (numpy.ndarray): Values; the shape never changes after creation.
        requires_grad (bool): Whether backward collects a gradient for it.
        node (_Node): Tape record of the op that produced it, if any.

    """

    __slots__ = ('data', 'requires_grad', 'node')

    def __init__(self, data, requires_grad=False, dtype=None):
        array = np.asarray(data)
        if dtype is None:
            dtype = array.dtype if np.issubdtype(array.dtype, np.floating) else DEFAULT_DTYPE
        self.data = np.array(array, dtype=dtype, order='C')
        self.requires_grad = requires_grad
        self.node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return 'Tensor(shape={}, dtype={})'.format(self.shape, self.dtype)


@dataclass(eq=False)
class _Node:
    index: int
    tape: 'Tape'
    parents: Tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Topologically ordered record of taped operations.

    Use as a context manager; tapes nest per thread and a tape must only be
    used from the thread that created it.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc_info):
        _stack().pop()
        return False

    def tracks(self, tensor):
        return tensor.requires_grad or (tensor.node is not None and tensor.node.tape is self)


def _stack():
    stack = getattr(_local, 'tapes', None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def _record(data, parents, vjp):
    out = Tensor(data, dtype=data.dtype)
    stack = _stack()
    if stack:
        tape = stack[-1]
        if any(tape.tracks(parent) for parent in parents):
            out.node = _Node(len(tape.nodes), tape, tuple(parents), vjp)
            tape.nodes.append(out.node)
    return out


def _shape_error(op, *shapes):
    return ShapeMismatch(
        message='Incompatible shapes for {}: {}.'.format(op, ' vs '.join(str(s) for s in shapes)),
        payload={'op': op, 'shapes': [list(s) for s in shapes]}
    )


def matmul_lastaxis(x, weight, bias=None):
    """Applies `x @ weight + bias` over the last axis of `x`."""
    if x.shape[-1] != weight.shape[0] or weight.data.ndim != 2:
        raise _shape_error('matmul_lastaxis', x.shape, weight.shape)
    if bias is not None and bias.shape != (weight.shape[1],):
        raise _shape_error('matmul_lastaxis', weight.shape, bias.shape)
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def vjp(grad):
        flat_grad = grad.reshape(-1, grad.shape[-1])
        flat_x = x.data.reshape(-1, x.shape[-1])
        grads = [grad @ weight.data.T, flat_x.T @ flat_grad]
        if bias is not None:
            grads.append(flat_grad.sum(axis=0))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, parents, vjp)


def concat_lastaxis(xs):
    """Concatenates tensors that agree on all but the last axis."""
    xs = list(xs)
    leading = xs[0].shape[:-1]
    for other in xs[1:]:
        if other.shape[:-1] != leading:
            raise _shape_error('concat_lastaxis', xs[0].shape, other.shape)
    if len(xs) == 1:
        return xs[0]
    sizes = [x.shape[-1] for x in xs]
    out = np.concatenate([x.data for x in xs], axis=-1)

    def vjp(grad):
        return np.split(grad, np.cumsum(sizes)[:-1], axis=-1)

    return _record(out, xs, vjp)


def permute_axes(x, perm):
    """Transposes `x` so that output axis i is input axis perm[i]."""
    perm = tuple(perm)
    if sorted(perm) != list(range(x.data.ndim)):
        raise _shape_error('permute_axes', x.shape, perm)
    if perm == tuple(range(x.data.ndim)):
        return x
    out = np.ascontiguousarray(np.transpose(x.data, perm))
    inverse = tuple(np.argsort(perm))

    def vjp(grad):
        return [np.transpose(grad, inverse)]

    return _record(out, (x,), vjp)


def max_reduce_axis(x, axis):
    """Max over one axis; the gradient flows to the first maximal element."""
    if x.data.ndim == 0 or not -x.data.ndim <= axis < x.data.ndim:
        raise _shape_error('max_reduce_axis', x.shape, (axis,))
    if x.shape[axis] == 0:
        raise _shape_error('max_reduce_axis', x.shape, (axis,))
    index = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, index, axis=axis).squeeze(axis)

    def vjp(grad):
        result = np.zeros_like(x.data)
        np.put_along_axis(result, index, np.expand_dims(grad, axis), axis=axis)
        return [result]

    return _record(out, (x,), vjp)


def broadcast_expand(x, axis, extent):
    """Inserts a new axis at position `axis` of the output holding `extent` copies."""
    out = np.repeat(np.expand_dims(x.data, axis), extent, axis=axis)

    def vjp(grad):
        return [grad.sum(axis=axis)]

    return _record(out, (x,), vjp)


def sigmoid(x):
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def vjp(grad):
        return [grad * out * (1.0 - out)]

    return _record(out.astype(x.dtype, copy=False), (x,), vjp)


def mse_loss(pred, target):
    """Mean of 0.5 * (pred - target)^2; `target` is a constant."""
    target = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.shape != target.shape:
        raise _shape_error('mse_loss', pred.shape, target.shape)
    diff = pred.data - target.astype(pred.dtype, copy=False)
    out = np.asarray(0.5 * np.mean(diff * diff), dtype=pred.dtype)

    def vjp(grad):
        return [grad * diff / max(diff.size, 1)]

    return _record(out, (pred,), vjp)


def sum_all(x):
    out = np.asarray(x.data.sum(), dtype=x.dtype)

    def vjp(grad):
        return [np.full_like(x.data, grad)]

    return _record(out, (x,), vjp)


def backward(loss):
    """Back-propagates from a scalar taped loss.

    Args:
        loss (Tensor): Scalar (shape ()) output of a taped computation.

    Returns:
        dict: Gradient array per parameter tensor reachable from `loss`.

    Raises:
        NonScalarLoss: If `loss` is not scalar or was not recorded on a tape.

    """
    if loss.data.ndim != 0:
        raise NonScalarLoss(message='Loss must be a scalar.', payload={'shape': list(loss.shape)})
    if loss.node is None:
        raise NonScalarLoss(message='Loss was not recorded on a tape.', payload={})
    tape = loss.node.tape
    pending: Dict[int, np.ndarray] = {loss.node.index: np.ones_like(loss.data)}
    leaves: Dict[int, Tuple[Tensor, np.ndarray]] = {}
    for node in reversed(tape.nodes[:loss.node.index + 1]):
        grad = pending.pop(node.index, None)
        if grad is None:
            continue
        for parent, parent_grad in zip(node.parents, node.vjp(grad)):
            if parent_grad is None:
                continue
            if parent.node is not None and parent.node.tape is tape:
                index = parent.node.index
                pending[index] = pending[index] + parent_grad if index in pending else parent_grad
            elif parent.requires_grad:
                key = id(parent)
                if key in leaves:
                    leaves[key] = (parent, leaves[key][1] + parent_grad)
                else:
                    leaves[key] = (parent, parent_grad)
    return {tensor: grad for tensor, grad in leaves.values()}


@dataclass
class AdamState:
    """Adam moments and step counter.

    Attributes:
        lr (float): Learning rate.
        beta1 (float): First-moment decay.
        beta2 (float): Second-moment decay.
        eps (float): Denominator offset.
        step (int): Number of updates applied.
        m (dict): First moments by parameter name.
        v (dict): Second moments by parameter name.

    """
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params, grads, state):
    """Applies one Adam update in place.

    Args:
        params (dict): Parameter tensors by name.
        grads (dict): Gradient arrays by name; missing names count as zero.
        state (AdamState): Optimizer state, updated in place.

    Returns:
        tuple: (params, state).

    Raises:
        ShapeMismatch: If a gradient does not match its parameter.

    """
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.shape:
            raise _shape_error('adam_step', param.shape, grad.shape)
        m = state.m.setdefault(name, np.zeros_like(param.data))
        v = state.v.setdefault(name, np.zeros_like(param.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.data -= update.astype(param.dtype, copy=False)
    return params, state
