"""
Tensor with Reverse-Mode Differentiation
========================================
A dense N-D array backed by numpy that records the operations producing it.
Calling backward() on a scalar result replays the recorded operations in
reverse topological order and accumulates gradients into every leaf that
requires them.

Only leaves keep a `.grad`; intermediate gradients live for the duration of
one backward pass.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class ShapeMismatchError(ValueError):
    pass


class NonScalarLossError(ValueError):
    pass


# =============================================================================
# GLOBAL STATE
# =============================================================================

_default_dtype = np.float64
_grad_state = threading.local()


def set_default_dtype(dtype) -> None:
    """Select float64 (default) or float32 for newly created tensors."""
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ValueError(f"Unsupported dtype: {dtype}")
    _default_dtype = dtype.type


def get_default_dtype():
    return _default_dtype


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


class no_grad:
    """Context manager that disables op recording on the current thread."""

    def __enter__(self):
        self._prev = is_grad_enabled()
        _grad_state.enabled = False
        return self

    def __exit__(self, *exc):
        _grad_state.enabled = self._prev
        return False


# =============================================================================
# TENSOR
# =============================================================================

class Tensor:
    """Dense array plus the bookkeeping needed for backward()."""

    __array_priority__ = 100.0

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype=None,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[BackwardFn] = None,
        op: str = "leaf",
    ):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float64, np.float32):
            arr = arr.astype(_default_dtype)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents = _parents
        self._backward = _backward
        self.op = op

    # ---------------------------------------------------------------- basics

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # -------------------------------------------------------------- backward

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Accumulate dSelf/dLeaf into every reachable leaf with requires_grad.

        Repeated calls without zero_grad() add to the existing `.grad`.
        """
        if grad is None:
            if self.data.size != 1:
                raise NonScalarLossError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return
        tape = ComputationTape.record(self)
        tape.replay(self, np.asarray(grad, dtype=self.dtype))

    # ------------------------------------------------------------ arithmetic

    def __add__(self, other):
        return elementwise("add", self, other)

    def __radd__(self, other):
        return elementwise("add", other, self)

    def __sub__(self, other):
        return elementwise("sub", self, other)

    def __rsub__(self, other):
        return elementwise("sub", other, self)

    def __mul__(self, other):
        return elementwise("mul", self, other)

    def __rmul__(self, other):
        return elementwise("mul", other, self)

    def __truediv__(self, other):
        return elementwise("div", self, other)

    def __rtruediv__(self, other):
        return elementwise("div", other, self)

    def __neg__(self):
        return elementwise("neg", self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    # --------------------------------------------------------- method sugar

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis, keepdims)

    def amin(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_extreme(self, axis, keepdims, np.min)

    def amax(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_extreme(self, axis, keepdims, np.max)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def exp(self) -> "Tensor":
        return elementwise("exp", self)

    def log(self) -> "Tensor":
        return elementwise("log", self)

    def abs(self) -> "Tensor":
        return elementwise("abs", self)

    def sqrt(self) -> "Tensor":
        return elementwise("sqrt", self)

    def sigmoid(self) -> "Tensor":
        return elementwise("sigmoid", self)


# =============================================================================
# COMPUTATION TAPE
# =============================================================================

class ComputationTape:
    """Ordered record of the ops reachable from a root, parents before children."""

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def record(cls, root: Tensor) -> "ComputationTape":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def replay(self, root: Tensor, seed: np.ndarray) -> None:
        grads: Dict[int, np.ndarray] = {id(root): seed}
        leaf_updates: List[Tuple[Tensor, np.ndarray]] = []
        for node in reversed(self.nodes):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                leaf_updates.append((node, grad))
                continue
            parent_grads = node._backward(grad)
            for parent, pgrad in zip(node._parents, parent_grads):
                if pgrad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pgrad
                else:
                    grads[key] = pgrad
        # leaves are written only once the whole pass succeeded
        for leaf, grad in leaf_updates:
            grad = np.asarray(grad, dtype=leaf.dtype).reshape(leaf.shape)
            leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad


# =============================================================================
# HELPERS
# =============================================================================

def as_tensor(value: ArrayLike, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype if dtype is not None else _default_dtype))


def _make(data: np.ndarray, parents: Tuple[Tensor, ...], backward: BackwardFn, op: str) -> Tensor:
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    if not track:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward, op=op)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeMismatchError(f"Shapes {a.shape} and {b.shape} are not broadcastable") from e


# =============================================================================
# ELEMENTWISE
# =============================================================================

# python floats so float32 inputs are not promoted
_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = np.exp(-0.5 * x * x) / _SQRT_2PI
    return cdf + x * pdf


# kind -> (forward(x), backward(x, out, g))
_UNARY: Dict[str, Tuple[Callable, Callable]] = {
    "neg": (np.negative, lambda x, y, g: -g),
    "exp": (np.exp, lambda x, y, g: g * y),
    "log": (np.log, lambda x, y, g: g / x),
    "abs": (np.abs, lambda x, y, g: g * np.sign(x)),
    "sqrt": (np.sqrt, lambda x, y, g: g * 0.5 / y),
    "sin": (np.sin, lambda x, y, g: g * np.cos(x)),
    "cos": (np.cos, lambda x, y, g: -g * np.sin(x)),
    "tanh": (np.tanh, lambda x, y, g: g * (1.0 - y * y)),
    "sigmoid": (
        lambda x: 0.5 * (1.0 + np.tanh(0.5 * x)),
        lambda x, y, g: g * y * (1.0 - y),
    ),
    "relu": (lambda x: np.maximum(x, 0.0), lambda x, y, g: g * (x > 0)),
    "elu": (
        lambda x: np.where(x > 0, x, np.expm1(np.minimum(x, 0.0))),
        lambda x, y, g: g * np.where(x > 0, 1.0, y + 1.0),
    ),
    "gelu": (
        lambda x: 0.5 * x * (1.0 + erf(x / _SQRT2)),
        lambda x, y, g: g * _gelu_grad(x),
    ),
}

# kind -> (forward(a, b), grad_a(a, b, out, g), grad_b(a, b, out, g))
_BINARY: Dict[str, Tuple[Callable, Callable, Callable]] = {
    "add": (np.add, lambda a, b, y, g: g, lambda a, b, y, g: g),
    "sub": (np.subtract, lambda a, b, y, g: g, lambda a, b, y, g: -g),
    "mul": (np.multiply, lambda a, b, y, g: g * b, lambda a, b, y, g: g * a),
    "div": (np.divide, lambda a, b, y, g: g / b, lambda a, b, y, g: -g * a / (b * b)),
    "maximum": (
        np.maximum,
        lambda a, b, y, g: g * (a >= b),
        lambda a, b, y, g: g * (a < b),
    ),
    "minimum": (
        np.minimum,
        lambda a, b, y, g: g * (a <= b),
        lambda a, b, y, g: g * (a > b),
    ),
}


def elementwise(kind: str, a: ArrayLike, b: Optional[ArrayLike] = None) -> Tensor:
    """Apply a unary or binary elementwise op with standard broadcasting."""
    if kind in _UNARY:
        if b is not None:
            raise ValueError(f"'{kind}' is unary")
        x = as_tensor(a)
        fwd, bwd = _UNARY[kind]
        out = fwd(x.data)

        def _backward(g):
            return (bwd(x.data, out, g),)

        return _make(out, (x,), _backward, kind)

    if kind not in _BINARY:
        raise ValueError(f"Unknown elementwise op: {kind}")
    if b is None:
        raise ValueError(f"'{kind}' needs two operands")
    like = a if isinstance(a, Tensor) else b if isinstance(b, Tensor) else None
    ta, tb = as_tensor(a, like), as_tensor(b, like)
    _broadcast_shape(ta, tb)
    fwd, bwd_a, bwd_b = _BINARY[kind]
    out = fwd(ta.data, tb.data)

    def _backward(g):
        ga = unbroadcast(bwd_a(ta.data, tb.data, out, g), ta.shape) if ta.requires_grad else None
        gb = unbroadcast(bwd_b(ta.data, tb.data, out, g), tb.shape) if tb.requires_grad else None
        return ga, gb

    return _make(out, (ta, tb), _backward, kind)


def power(x: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    out = np.power(x.data, exponent)

    def _backward(g):
        return (g * exponent * np.power(x.data, exponent - 1.0),)

    return _make(out, (x,), _backward, "pow")


def where(condition: np.ndarray, a: ArrayLike, b: ArrayLike) -> Tensor:
    """Select from `a` where condition holds, else from `b` (condition is constant)."""
    like = a if isinstance(a, Tensor) else b if isinstance(b, Tensor) else None
    ta, tb = as_tensor(a, like), as_tensor(b, like)
    cond = np.asarray(condition, dtype=bool)
    out = np.where(cond, ta.data, tb.data)

    def _backward(g):
        ga = unbroadcast(np.where(cond, g, 0.0), ta.shape) if ta.requires_grad else None
        gb = unbroadcast(np.where(cond, 0.0, g), tb.shape) if tb.requires_grad else None
        return ga, gb

    return _make(out, (ta, tb), _backward, "where")


# =============================================================================
# REDUCTIONS
# =============================================================================

def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def _expand_grad(g: np.ndarray, shape: Tuple[int, ...], axes: Tuple[int, ...], keepdims: bool) -> np.ndarray:
    if not keepdims:
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    out = np.sum(x.data, axis=axes, keepdims=keepdims)

    def _backward(g):
        return (np.array(_expand_grad(g, x.shape, axes, keepdims)),)

    return _make(np.asarray(out), (x,), _backward, "sum")


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = np.mean(x.data, axis=axes, keepdims=keepdims)

    def _backward(g):
        return (np.array(_expand_grad(g, x.shape, axes, keepdims)) / count,)

    return _make(np.asarray(out), (x,), _backward, "mean")


def reduce_extreme(x: Tensor, axis, keepdims: bool, fn) -> Tensor:
    """min/max reduction; ties share the gradient equally."""
    axes = _normalize_axes(axis, x.ndim)
    out = fn(x.data, axis=axes, keepdims=True)
    hits = (x.data == out).astype(x.dtype)
    hits /= hits.sum(axis=axes, keepdims=True)
    result = out if keepdims else np.squeeze(out, axis=axes)

    def _backward(g):
        return (hits * _expand_grad(g, x.shape, axes, keepdims),)

    return _make(np.asarray(result), (x,), _backward, fn.__name__)


# =============================================================================
# SHAPE OPS
# =============================================================================

def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def _backward(g):
        return (g.reshape(x.shape),)

    return _make(out, (x,), _backward, "reshape")


def transpose(x: Tensor, axes: Optional[Tuple[int, ...]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    out = np.transpose(x.data, axes)

    def _backward(g):
        return (np.transpose(g, inverse),)

    return _make(out, (x,), _backward, "transpose")


def _has_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (np.ndarray, list)) for i in items)


def getitem(x: Tensor, index) -> Tensor:
    if isinstance(index, Tensor):
        index = index.data
    if isinstance(index, np.ndarray) and index.dtype == bool:
        index = np.nonzero(index)
    out = x.data[index]
    advanced = _has_advanced(index)

    def _backward(g):
        full = np.zeros_like(x.data)
        if advanced:
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)

    return _make(np.array(out, copy=True), (x,), _backward, "getitem")


def concat(tensors: Iterable[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ValueError("concat needs at least one tensor")
    ref = parts[0].shape
    axis = axis % len(ref)
    for p in parts[1:]:
        if p.ndim != len(ref) or any(p.shape[i] != ref[i] for i in range(len(ref)) if i != axis):
            raise ShapeMismatchError(f"Cannot concat {ref} with {p.shape} on axis {axis}")
    out = np.concatenate([p.data for p in parts], axis=axis)
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def _backward(g):
        grads = []
        for i, p in enumerate(parts):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[i], bounds[i + 1])
            grads.append(g[tuple(sl)] if p.requires_grad else None)
        return tuple(grads)

    return _make(out, tuple(parts), _backward, "concat")


def stack(tensors: Iterable[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    ndim = parts[0].ndim + 1
    axis = axis % ndim
    expanded = [reshape(p, p.shape[:axis] + (1,) + p.shape[axis:]) for p in parts]
    return concat(expanded, axis=axis)


def split(x: Tensor, sections: Union[int, Sequence[int]], axis: int = 0) -> List[Tensor]:
    """Split into equal `sections` pieces, or at the given section sizes."""
    axis = axis % x.ndim
    length = x.shape[axis]
    if isinstance(sections, int):
        if length % sections != 0:
            raise ShapeMismatchError(f"Axis of length {length} does not split into {sections}")
        sizes = [length // sections] * sections
    else:
        sizes = list(sections)
        if sum(sizes) != length:
            raise ShapeMismatchError(f"Section sizes {sizes} do not sum to {length}")
    pieces = []
    start = 0
    for size in sizes:
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(start, start + size)
        pieces.append(getitem(x, tuple(sl)))
        start += size
    return pieces


# =============================================================================
# MATMUL
# =============================================================================

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Batched matrix product over the last two axes (operands must be >= 2-D)."""
    like = a if isinstance(a, Tensor) else b if isinstance(b, Tensor) else None
    ta, tb = as_tensor(a, like), as_tensor(b, like)
    if ta.ndim < 2 or tb.ndim < 2:
        raise ShapeMismatchError("matmul operands must be at least 2-D")
    if ta.shape[-1] != tb.shape[-2]:
        raise ShapeMismatchError(f"matmul inner dims differ: {ta.shape} @ {tb.shape}")
    try:
        np.broadcast_shapes(ta.shape[:-2], tb.shape[:-2])
    except ValueError as e:
        raise ShapeMismatchError(f"matmul batch dims differ: {ta.shape} @ {tb.shape}") from e
    out = np.matmul(ta.data, tb.data)

    def _backward(g):
        ga = gb = None
        if ta.requires_grad:
            ga = unbroadcast(np.matmul(g, np.swapaxes(tb.data, -1, -2)), ta.shape)
        if tb.requires_grad:
            gb = unbroadcast(np.matmul(np.swapaxes(ta.data, -1, -2), g), tb.shape)
        return ga, gb

    return _make(out, (ta, tb), _backward, "matmul")


# =============================================================================
# CONVENIENCE WRAPPERS
# =============================================================================

def exp(x: Tensor) -> Tensor:
    return elementwise("exp", x)


def log(x: Tensor) -> Tensor:
    return elementwise("log", x)


def sigmoid(x: Tensor) -> Tensor:
    return elementwise("sigmoid", x)


def elu(x: Tensor) -> Tensor:
    return elementwise("elu", x)


def gelu(x: Tensor) -> Tensor:
    return elementwise("gelu", x)


def sin(x: Tensor) -> Tensor:
    return elementwise("sin", x)


def cos(x: Tensor) -> Tensor:
    return elementwise("cos", x)


def maximum(a: ArrayLike, b: ArrayLike) -> Tensor:
    return elementwise("maximum", a, b)


def minimum(a: ArrayLike, b: ArrayLike) -> Tensor:
    return elementwise("minimum", a, b)
