"""Dense float64 arrays with tape-based reverse-mode differentiation.

Every value flowing through the HGCN layers is a :class:`Tensor`.  Tensors
are 2-D matrices, optionally carrying leading batch axes (``B x N x D``), in
which case all primitives broadcast over the batch the way ``numpy.matmul``
does.  Operations performed while a :class:`Tape` is active are recorded and
:func:`backward` replays them in reverse order.

Backward rules are module-level functions so they can be swapped out in
tests (the gradient checker must catch a corrupted rule).
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ShapeError


class Tensor:
    """A float64 array node.

    ``requires_grad`` marks leaves (parameters) whose gradient is wanted and
    propagates to every result computed from them.
    """

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[-2]

    @property
    def cols(self) -> int:
        return self.data.shape[-1]

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Record:
    __slots__ = ("out", "inputs", "rule")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], rule: Callable):
        self.out = out
        self.inputs = inputs
        self.rule = rule


_state = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Records primitive operations for one backward pass.

    Use as a context manager; tapes nest, the innermost one records.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()

    def __len__(self) -> int:
        return len(self.records)


def _emit(value: np.ndarray, inputs: tuple[Tensor, ...], rule: Callable) -> Tensor:
    tracked = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = value
    out.requires_grad = tracked
    out.name = ""
    tape = _active_tape()
    if tracked and tape is not None:
        tape.records.append(_Record(out, inputs, rule))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


# ---------------------------------------------------------------- backward rules


def _matmul_backward(g, a, b, out):
    return (_unbroadcast(g @ _swap(b.data), a.shape),
            _unbroadcast(_swap(a.data) @ g, b.shape))


def _add_backward(g, a, b, out):
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _sub_backward(g, a, b, out):
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def _mul_backward(g, a, b, out):
    return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)


def _relu_backward(g, x, out):
    return (g * (x.data > 0),)


def _sigmoid_backward(g, x, out):
    s = out.data
    return (g * s * (1.0 - s),)


def _softmax_backward(g, x, out):
    s = out.data
    return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)


# ---------------------------------------------------------------- primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, broadcasting batch axes."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _emit(a.data @ b.data, (a, b), lambda g, out: _matmul_backward(g, a, b, out))


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op} shape mismatch: {a.shape} vs {b.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    return _emit(a.data + b.data, (a, b), lambda g, out: _add_backward(g, a, b, out))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    return _emit(a.data - b.data, (a, b), lambda g, out: _sub_backward(g, a, b, out))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with broadcasting."""
    _check_broadcast(a, b, "mul")
    return _emit(a.data * b.data, (a, b), lambda g, out: _mul_backward(g, a, b, out))


def scale(x: Tensor, c: float) -> Tensor:
    return _emit(x.data * c, (x,), lambda g, out: (g * c,))


def relu(x: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    return _emit(np.maximum(x.data, 0.0), (x,), lambda g, out: _relu_backward(g, x, out))


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    factor = np.where(x.data > 0, 1.0, slope)
    return _emit(x.data * factor, (x,), lambda g, out: (g * factor,))


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    e = np.exp(-np.abs(z))
    s = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _emit(s, (x,), lambda g, out: _sigmoid_backward(g, x, out))


def softmax_rows(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along the last axis.

    With a boolean ``mask``, entries outside the mask get probability 0 and a
    row with no admissible entry becomes all zeros.
    """
    if x.cols < 1:
        raise ShapeError("softmax_rows needs at least one column")
    z = x.data
    if mask is None:
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=-1, keepdims=True)
    else:
        mask = np.broadcast_to(mask, z.shape)
        zm = np.where(mask, z, -np.inf)
        top = zm.max(axis=-1, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        e = np.where(mask, np.exp(np.where(mask, z - top, 0.0)), 0.0)
        total = e.sum(axis=-1, keepdims=True)
        s = np.divide(e, total, out=np.zeros_like(e), where=total > 0)
    return _emit(s, (x,), lambda g, out: _softmax_backward(g, x, out))


def transpose(x: Tensor) -> Tensor:
    return _emit(_swap(x.data).copy(), (x,), lambda g, out: (_swap(g),))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    original = x.shape
    return _emit(x.data.reshape(shape), (x,), lambda g, out: (g.reshape(original),))


def getitem(x: Tensor, index) -> Tensor:
    picked = x.data[index]

    def rule(g, out):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g.reshape(picked.shape))
        return (full,)

    return _emit(np.array(picked, ndmin=2), (x,), rule)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    arrays = [p.data for p in parts]
    try:
        value = np.concatenate(arrays, axis=axis)
    except ValueError:
        raise ShapeError(f"concat shape mismatch: {[p.shape for p in parts]}") from None
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def rule(g, out):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit(value, tuple(parts), rule)


def total(x: Tensor) -> Tensor:
    """Sum of all entries, as a 1x1 tensor."""
    return _emit(x.data.sum().reshape(1, 1), (x,),
                 lambda g, out: (np.broadcast_to(g.reshape(()), x.shape).copy(),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return _emit(x.data.mean().reshape(1, 1), (x,),
                 lambda g, out: (np.full(x.shape, g.reshape(()) / n),))


def bce_with_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over all entries, computed in logit space."""
    z = logits.data
    y = np.broadcast_to(np.asarray(labels, dtype=np.float64), z.shape)
    value = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    n = z.size

    def rule(g, out):
        e = np.exp(-np.abs(z))
        s = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return ((s - y) * (g.reshape(()) / n),)

    return _emit(value.mean().reshape(1, 1), (logits,), rule)


def softmax_cross_entropy(logits: Tensor, onehot: np.ndarray) -> Tensor:
    """Mean over rows of ``-log softmax(logits)[true class]``."""
    z = logits.data
    y = np.broadcast_to(np.asarray(onehot, dtype=np.float64), z.shape)
    shifted = z - z.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logsum
    n_rows = int(np.prod(z.shape[:-1]))
    value = -(y * logp).sum() / n_rows

    def rule(g, out):
        return ((np.exp(logp) - y) * (g.reshape(()) / n_rows),)

    return _emit(np.array([[value]]), (logits,), rule)


# ---------------------------------------------------------------- reverse pass


def backward(tape: Tape, output: Tensor,
             params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Replay ``tape`` in reverse from the scalar ``output``.

    Returns a mapping from tensor to gradient.  Every tensor in ``params``
    appears in the result; those not on any path to ``output`` get zeros.
    """
    if output.data.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    keep: dict[int, Tensor] = {id(output): output}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.rule(g, rec.out)):
            if not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.array(gi, dtype=np.float64, copy=True)
                keep[key] = inp
    result: dict[Tensor, np.ndarray] = {}
    if params is None:
        for key, g in grads.items():
            result[keep[key]] = g
        return result
    for p in params:
        g = grads.get(id(p))
        result[p] = np.zeros_like(p.data) if g is None else g.reshape(p.shape)
    return result


def parameter(data, name: str = "") -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)
