"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable operation records a node holding its inputs and a
backward rule. ``backward`` collects the nodes reachable from a scalar loss,
replays them in reverse creation order and accumulates ``grad`` on tracked
leaves.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

_seq = itertools.count(1)
_grad_enabled = True


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class UsageError(RuntimeError):
    """An API was called in a state where it cannot work."""


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_seq", "_op", "_consumed")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) or data.dtype != np.float64 else data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._seq = next(_seq)
        self._op = ""
        self._consumed = False

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", tracked" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p: float):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


class Parameter(Tensor):
    """A tracked leaf tensor owned by a model; ``name`` is its registry path."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _record(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._op = op
    return out


# -- tape ----------------------------------------------------------------
@dataclass
class Tape:
    """Nodes reachable from an output, in recorded (creation) order."""

    nodes: list[Tensor] = field(default_factory=list)

    @classmethod
    def from_output(cls, out: Tensor) -> "Tape":
        seen: set[int] = set()
        stack = [out]
        nodes = []
        while stack:
            t = stack.pop()
            if id(t) in seen or not t.requires_grad:
                continue
            seen.add(id(t))
            nodes.append(t)
            stack.extend(t._parents)
        nodes.sort(key=lambda t: t._seq)
        return cls(nodes)

    def leaves(self) -> list[Tensor]:
        return [t for t in self.nodes if t._backward is None]


def backward(loss: Tensor) -> None:
    """Reverse-mode accumulation of d(loss)/d(leaf) into ``leaf.grad``."""
    if not isinstance(loss, Tensor) or not loss.requires_grad:
        raise UsageError("backward() needs a tracked tensor; this one does not depend on any parameter")
    if loss.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise UsageError("backward() already ran on this graph; rebuild the forward pass")
    tape = Tape.from_output(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    loss._consumed = True


# -- broadcasting helpers ------------------------------------------------
def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise arithmetic ----------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _record(a.data / b.data, (a, b), bw, "div")


def power(a: Tensor, p: float) -> Tensor:
    def bw(g):
        return (g * p * a.data ** (p - 1),)

    return _record(a.data**p, (a,), bw, "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _record(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _record(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def sigmoid(a: Tensor) -> Tensor:
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    out[~pos] = e / (1.0 + e)
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    x = a.data
    x2 = x * x
    inner = _GELU_C * x * (1.0 + 0.044715 * x2)
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner),)

    return _record(out, (a,), bw, "gelu")


# -- reductions and shape ops ---------------------------------------------
def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(np.asarray(out), (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = np.argsort(axes)
    return _record(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def getitem(a: Tensor, idx) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _record(np.array(a.data[idx]), (a,), bw, "getitem")


def take(a: Tensor, index, axis: int) -> Tensor:
    """Gather along ``axis`` with an integer index array (repeats allowed)."""
    index = np.asarray(index, dtype=np.intp)
    out = np.take(a.data, index, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        gm = np.moveaxis(g, tuple(range(axis, axis + index.ndim)), tuple(range(index.ndim)))
        np.add.at(moved, index, gm)
        return (full,)

    return _record(out, (a,), bw, "take")


def take_along_last(a: Tensor, index: np.ndarray) -> Tensor:
    """``out[..., i, j] = a[..., i, index[i, j]]`` for a 2-d index table."""
    index = np.asarray(index, dtype=np.intp)
    lead = a.shape[:-2]
    full_index = np.broadcast_to(index, lead + index.shape)
    out = np.take_along_axis(a.data, full_index, axis=-1)
    rows_unique = bool((np.diff(np.sort(index, axis=-1), axis=-1) != 0).all())

    def bw(g):
        full = np.zeros_like(a.data)
        if rows_unique:
            np.put_along_axis(full, full_index, g, axis=-1)
        else:
            grid = np.indices(full_index.shape, sparse=True)
            np.add.at(full, tuple(grid[:-1]) + (full_index,), g)
        return (full,)

    return _record(out, (a,), bw, "take_along_last")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def split(a: Tensor, n: int, axis: int = 0) -> list[Tensor]:
    if a.shape[axis] % n:
        raise DimensionError(f"cannot split extent {a.shape[axis]} into {n} equal parts")
    step = a.shape[axis] // n
    out = []
    for i in range(n):
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(i * step, (i + 1) * step)
        out.append(getitem(a, tuple(idx)))
    return out


# -- linear algebra -------------------------------------------------------
def matmul(a, b) -> Tensor:
    """Matrix product with numpy batch semantics on leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(a.data @ b.data, (a, b), bw, "matmul")


def einsum(spec: str, *operands) -> Tensor:
    """Einstein summation; every input index must appear in the output or another operand."""
    operands = [as_tensor(t) for t in operands]
    lhs, out_sub = spec.replace(" ", "").split("->")
    in_subs = lhs.split(",")
    out = np.einsum(spec, *(t.data for t in operands), optimize=True)

    def bw(g):
        grads = []
        for k, t in enumerate(operands):
            if not t.requires_grad:
                grads.append(None)
                continue
            others = [s for i, s in enumerate(in_subs) if i != k]
            arrays = [o.data for i, o in enumerate(operands) if i != k]
            sub_k = ",".join([out_sub] + others) + "->" + in_subs[k]
            grads.append(np.einsum(sub_k, g, *arrays, optimize=True))
        return tuple(grads)

    return _record(np.asarray(out), operands, bw, "einsum")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _record(out, (a,), bw, "softmax")


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)
