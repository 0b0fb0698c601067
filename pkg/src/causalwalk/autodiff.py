"""Small reverse-mode automatic differentiation over dense float64 arrays.

Every model quantity is a :class:`Tensor`. Operations performed on tensors
that require gradients are recorded as nodes with parent references; calling
:func:`backward` on a scalar walks those nodes in reverse topological order
and accumulates ``d loss / d tensor`` into ``tensor.grad``.

There is no broadcasting: operands of elementwise ops must have identical
shapes, and any alignment is done explicitly by the caller.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "OPS",
    "apply",
    "backward",
    "grad_check",
    "matmul",
    "add",
    "sub",
    "mul",
    "concat",
    "softmax",
    "sigmoid",
    "tanh",
    "relu",
    "log",
    "exp",
    "mean",
    "tsum",
    "scale",
    "select",
    "transpose",
    "reshape",
    "columns",
    "no_grad",
]

_state = threading.local()


def _is_recording() -> bool:
    return getattr(_state, "recording", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate ops without recording parents (read-only forward passes).

    The switch is per thread, so parallel evaluation can share parameters.
    """
    prev = _is_recording()
    _state.recording = False
    try:
        yield
    finally:
        _state.recording = prev


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class Tensor:
    """Dense real array that optionally participates in gradient recording.

    Parameters
    ----------
    values : array_like
        Stored as a float64 numpy array.
    requires_grad : bool
        Leaf tensors with ``requires_grad=True`` accumulate gradients.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, values, requires_grad: bool = False):
        self.data = np.array(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        return self.data

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # operator sugar, kept to the op set below
    def __add__(self, other):
        return add(self, _as_tensor(other, self.shape))

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.shape))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def backward(self) -> None:
        backward(self)


def _as_tensor(x, shape) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.array(x, dtype=np.float64)
    if arr.shape != tuple(shape):
        raise ShapeError(f"constant of shape {arr.shape} does not match {tuple(shape)}")
    return Tensor(arr)


def _node(data: np.ndarray, parents: Sequence[Tensor], op: str, grad_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if _is_recording() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = grad_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------- ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), "matmul", grad_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)

    def grad_fn(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(a.data + b.data, (a, b), "add", grad_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)

    def grad_fn(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _node(a.data - b.data, (a, b), "sub", grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    _same_shape("elementwise-mul", a, b)

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    return _node(a.data * b.data, (a, b), "elementwise-mul", grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: no inputs")
    ndim = tensors[0].data.ndim
    ax = axis % ndim
    for t in tensors[1:]:
        other = [s for i, s in enumerate(t.shape) if i != ax]
        first = [s for i, s in enumerate(tensors[0].shape) if i != ax]
        if t.data.ndim != ndim or other != first:
            raise ShapeError(f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def grad_fn(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * ndim
                idx[ax] = slice(lo, hi)
                _accumulate(t, g[tuple(idx)])

    return _node(np.concatenate([t.data for t in tensors], axis=ax), tensors, "concat", grad_fn)


def softmax(a: Tensor) -> Tensor:
    """Softmax along the last axis (each row of a matrix)."""
    if a.data.ndim not in (1, 2):
        raise ShapeError(f"row-softmax: expected 1-D or 2-D input, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        _accumulate(a, p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return _node(p, (a,), "row-softmax", grad_fn)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)

    def grad_fn(g):
        _accumulate(a, g * s * (1.0 - s))

    return _node(s, (a,), "sigmoid", grad_fn)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def grad_fn(g):
        _accumulate(a, g * (1.0 - t * t))

    return _node(t, (a,), "tanh", grad_fn)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def grad_fn(g):
        _accumulate(a, g * mask)

    return _node(a.data * mask, (a,), "relu", grad_fn)


def log(a: Tensor) -> Tensor:
    def grad_fn(g):
        _accumulate(a, g / a.data)

    with np.errstate(divide="ignore"):
        out = np.log(a.data)
    return _node(out, (a,), "log", grad_fn)


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)

    def grad_fn(g):
        _accumulate(a, g * e)

    return _node(e, (a,), "exp", grad_fn)


def tsum(a: Tensor) -> Tensor:
    """Sum of all entries, returned with shape ``(1,)``."""

    def grad_fn(g):
        _accumulate(a, np.full(a.shape, g[0]))

    return _node(np.array([a.data.sum()]), (a,), "sum", grad_fn)


def mean(a: Tensor) -> Tensor:
    n = a.data.size

    def grad_fn(g):
        _accumulate(a, np.full(a.shape, g[0] / n))

    return _node(np.array([a.data.sum() / n]), (a,), "mean", grad_fn)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def grad_fn(g):
        _accumulate(a, g * c)

    return _node(a.data * c, (a,), "scalar-mul", grad_fn)


def select(a: Tensor, index: Sequence[int]) -> Tensor:
    """Gather rows of ``a`` (embedding lookup); repeated indices are allowed."""
    idx = np.asarray(index, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"embedding-select: index must be 1-D, got shape {idx.shape}")
    if a.data.ndim < 1 or (idx.size and (idx.min() < -a.shape[0] or idx.max() >= a.shape[0])):
        raise ShapeError(f"embedding-select: index out of range for shape {a.shape}")

    def grad_fn(g):
        if a.requires_grad:
            full = np.zeros(a.shape)
            np.add.at(full, idx, g)
            _accumulate(a, full)

    return _node(a.data[idx], (a,), "embedding-select", grad_fn)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D input, got shape {a.shape}")

    def grad_fn(g):
        _accumulate(a, g.T)

    return _node(a.data.T.copy(), (a,), "transpose", grad_fn)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.data.size:
        raise ShapeError(f"reshape: cannot view shape {a.shape} as {shape}")

    def grad_fn(g):
        _accumulate(a, g.reshape(a.shape))

    return _node(a.data.reshape(shape), (a,), "reshape", grad_fn)


def columns(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous column block ``a[:, start:stop]`` of a matrix."""
    if a.data.ndim != 2 or not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"columns: block [{start}:{stop}] invalid for shape {a.shape}")

    def grad_fn(g):
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        _accumulate(a, full)

    return _node(a.data[:, start:stop], (a,), "columns", grad_fn)


OPS: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "elementwise-mul": mul,
    "concat": lambda *ts, axis=-1: concat(ts, axis=axis),
    "row-softmax": softmax,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
    "log": log,
    "exp": exp,
    "mean": mean,
    "sum": tsum,
    "scalar-mul": scale,
    "embedding-select": select,
    "transpose": transpose,
    "reshape": reshape,
    "columns": columns,
}


def apply(op_kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch an op by its name, e.g. ``apply("matmul", a, b)``."""
    try:
        fn = OPS[op_kind]
    except KeyError:
        raise ValueError(f"unknown op-kind {op_kind!r}; expected one of {sorted(OPS)}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------- backward


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d t`` into ``t.grad`` for every reachable leaf.

    Intermediate nodes have their gradient slot reset first, so running
    backward twice over the same graph yields the same intermediate values;
    leaves accumulate across calls.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward: loss is not connected to any tensor requiring grad")
    order = _topological_order(loss)
    for node in order:
        if node._backward is not None:
            node.grad = None
    _accumulate(loss, np.ones(loss.shape))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------- checking


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Largest relative disagreement between backprop and central differences.

    ``f`` maps ``x`` to a scalar tensor. Relative error per coordinate is
    ``|analytic - numeric| / (|analytic| + |numeric| + 1e-8)``.
    """
    if h <= 0:
        raise ValueError("grad_check: step size must be positive")
    was = x.requires_grad
    x.requires_grad = True
    x.grad = None
    out = f(x)
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("grad_check: function value is not finite")
    backward(out)
    analytic = np.zeros(x.shape) if x.grad is None else x.grad.copy()
    x.grad = None
    x.requires_grad = was

    numeric = np.zeros(x.shape)
    flat = x.data.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x).data.reshape(-1)[0]
        flat[i] = orig - h
        fm = f(x).data.reshape(-1)[0]
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"grad_check: non-finite value at coordinate {i}")
        nflat[i] = (fp - fm) / (2.0 * h)
    err = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-8)
    return float(err.max()) if err.size else 0.0
