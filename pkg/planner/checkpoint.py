"""Module with the single-file binary checkpoint codec; the layout is described in CHECKPOINT.md."""

from __future__ import annotations

import json
import struct
from typing import NamedTuple, Optional

import numpy as np

from .exception import CheckpointFormatError, InvalidSchedule, ShapeMismatch
from .nlm import PERMUTATION_ORDER, AritySchedule, NlmModel, fingerprint
from .tensor import AdamState


MAGIC = b'NLMCKPT1'
OPTIMIZER = 'adam'
_PAYLOAD_DTYPE = np.dtype('<f4')


class Checkpoint(NamedTuple):
    model: NlmModel
    adam: Optional[AdamState]
    header: dict


def _header(model, adam, count):
    header = {
        'fingerprint': model.fingerprint,
        'signature': [[name, arity] for name, arity in model.signature],
        'N': model.schedule.max_input,
        'M': model.schedule.max_arity,
        'L': model.schedule.layers,
        'Q': model.width,
        'gamma': model.gamma,
        'tau': model.tau,
        'shaping': model.shaping,
        'permutation_order': PERMUTATION_ORDER,
        'optimizer': OPTIMIZER,
        'optimizer_state': adam is not None,
        'tensors': count,
    }
    if adam is not None:
        header['adam'] = {
            'lr': adam.lr, 'beta1': adam.beta1, 'beta2': adam.beta2, 'eps': adam.eps, 'step': adam.step
        }
    return header


def _tensors(model, adam):
    tensors = [(name, param.data) for name, param in model.params.items()]
    if adam is not None:
        for name in model.params:
            tensors.append(('adam/m/' + name, adam.m.get(name, np.zeros_like(model.params[name].data))))
            tensors.append(('adam/v/' + name, adam.v.get(name, np.zeros_like(model.params[name].data))))
    return tensors


def dumps(model, adam=None):
    """Serializes a model (and optionally its Adam state) to bytes.

    Equal models produce identical bytes.
    """
    tensors = _tensors(model, adam)
    header = json.dumps(_header(model, adam, len(tensors)), sort_keys=True, separators=(',', ':')).encode('utf-8')
    chunks = [MAGIC, struct.pack('<I', len(header)), header]
    for name, data in tensors:
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<H', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<B', data.ndim))
        chunks.append(struct.pack('<{}I'.format(data.ndim), *data.shape))
        chunks.append(np.ascontiguousarray(data, dtype=_PAYLOAD_DTYPE).tobytes())
    return b''.join(chunks)


class _Reader:

    def __init__(self, data):
        self._data = memoryview(data)
        self._offset = 0

    def take(self, size, what):
        if self._offset + size > len(self._data):
            raise CheckpointFormatError(
                message='Checkpoint is truncated while reading {}.'.format(what),
                payload={'offset': self._offset, 'needed': size, 'length': len(self._data)}
            )
        chunk = self._data[self._offset:self._offset + size]
        self._offset += size
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    @property
    def remaining(self):
        return len(self._data) - self._offset


def loads(data):
    """Parses checkpoint bytes.

    Returns:
        Checkpoint: Restored model, Adam state if stored, and the raw header.

    Raises:
        CheckpointFormatError: On a bad magic, truncation, malformed header or trailing bytes.

    """
    reader = _Reader(data)
    magic = bytes(reader.take(len(MAGIC), 'magic'))
    if magic != MAGIC:
        raise CheckpointFormatError(message='Not a checkpoint file.', payload={'magic': magic.hex()})
    (length,) = reader.unpack('<I', 'header length')
    try:
        header = json.loads(bytes(reader.take(length, 'header')).decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as error:
        raise CheckpointFormatError(message='Malformed checkpoint header.', payload={'error': str(error)})

    tensors = {}
    for _ in range(int(header.get('tensors', 0))):
        (name_length,) = reader.unpack('<H', 'tensor name length')
        name = bytes(reader.take(name_length, 'tensor name')).decode('utf-8')
        (ndim,) = reader.unpack('<B', 'tensor rank')
        shape = reader.unpack('<{}I'.format(ndim), 'tensor shape')
        count = int(np.prod(shape, dtype=np.int64))
        payload = reader.take(count * _PAYLOAD_DTYPE.itemsize, 'tensor {}'.format(name))
        tensors[name] = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE).reshape(shape).astype(np.float32)
    if reader.remaining:
        raise CheckpointFormatError(
            message='Checkpoint has {} trailing bytes.'.format(reader.remaining),
            payload={'trailing': reader.remaining}
        )
    return _restore(header, tensors)


def _restore(header, tensors):
    try:
        signature = [(name, int(arity)) for name, arity in header['signature']]
        order = header['permutation_order']
        schedule = AritySchedule.build(int(header['N']), int(header['M']), int(header['L']))
        width, gamma, tau, shaping = int(header['Q']), float(header['gamma']), float(header['tau']), header['shaping']
        stored_fingerprint = header['fingerprint']
    except (KeyError, TypeError, ValueError, InvalidSchedule) as error:
        raise CheckpointFormatError(message='Incomplete checkpoint header.', payload={'error': str(error)})
    if order != PERMUTATION_ORDER:
        raise CheckpointFormatError(
            message='Unsupported permutation order {}.'.format(order),
            payload={'permutation_order': order}
        )
    if stored_fingerprint != fingerprint(signature):
        raise CheckpointFormatError(
            message='Stored fingerprint does not match the stored signature.',
            payload={'stored': stored_fingerprint, 'computed': fingerprint(signature)}
        )
    params = {name: value for name, value in tensors.items() if not name.startswith('adam/')}
    try:
        model = NlmModel(signature, schedule, width=width, gamma=gamma, tau=tau, shaping=shaping, params=params)
    except ShapeMismatch as error:
        raise CheckpointFormatError(message='Checkpoint tensors do not fit the stored layout.', payload=error.payload)
    adam = None
    if header.get('optimizer_state'):
        settings = header.get('adam', {})
        adam = AdamState(
            lr=settings.get('lr', 0.001),
            beta1=settings.get('beta1', 0.9),
            beta2=settings.get('beta2', 0.999),
            eps=settings.get('eps', 1e-8),
            step=settings.get('step', 0),
            m={name: np.array(tensors['adam/m/' + name]) for name in params if 'adam/m/' + name in tensors},
            v={name: np.array(tensors['adam/v/' + name]) for name in params if 'adam/v/' + name in tensors}
        )
    return Checkpoint(model, adam, header)
