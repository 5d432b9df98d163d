"""reverse mode automatic differentiation over float64 numpy arrays

every operation records its parents and a closure mapping the gradient of
its output to the gradients of its parents. Tensors that do not depend on a
trainable tensor keep no graph, so inference builds no tape.
"""
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ShapeError, ValidationError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """build no graph inside the block (per thread)

    Usage:
        >>> with no_grad():
        ...     mu, log_var = model(batch, "mc_inference", rng)
    """
    previous = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: Tuple["Tensor", ...] = (), _backward: Optional[BackwardFn] = None,
                 _op: str = "") -> None:
        """n-dimensional float64 value with an optional gradient slot

        Args:
            data: array-like values, copied to float64
            requires_grad: whether backward() should fill `grad`
        """
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or (grad_enabled() and any(p.requires_grad for p in _parents))
        if self.requires_grad and _parents:
            self._parents = _parents
            self._backward = _backward
        else:
            self._parents = ()
            self._backward = None
        self._op = _op

    def __repr__(self) -> str:
        op = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}{op})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """same values, cut from the graph"""
        return Tensor(self.data)

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, finished = stack.pop()
            if finished:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        """fill the gradient slot of every trainable leaf reachable from this scalar

        gradients are added to existing slots, so calling backward twice
        without zeroing doubles them. Intermediate tensors keep no gradient.

        Raises:
            ValidationError if the tensor is not a scalar
        """
        if self.data.shape != ():
            raise ValidationError(f"backward needs a scalar, got shape {self.data.shape}")
        if not self.requires_grad:
            return
        grads: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topological_order()):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if not node._parents:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad

    # arithmetic

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis, keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """sum a broadcast gradient back to the shape of the operand"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return Tensor(a.data + b.data, _parents=(a, b), _op="add",
                  _backward=lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return Tensor(a.data - b.data, _parents=(a, b), _op="sub",
                  _backward=lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return Tensor(a.data * b.data, _parents=(a, b), _op="mul",
                  _backward=lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data
    return Tensor(out, _parents=(a, b), _op="div",
                  _backward=lambda g: (unbroadcast(g / b.data, a.shape),
                                       unbroadcast(-g * out / b.data, b.shape)))


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, _parents=(a,), _op="neg", _backward=lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """product of two matrices

    Raises:
        ShapeError with both shapes when the inner dimensions differ
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    return Tensor(a.data @ b.data, _parents=(a, b), _op="matmul",
                  _backward=lambda g: (g @ b.data.T, a.data.T @ g))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor(out, _parents=(a,), _op="exp", _backward=lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.data), _parents=(a,), _op="log", _backward=lambda g: (g / a.data,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor(np.where(mask, a.data, 0.0), _parents=(a,), _op="relu",
                  _backward=lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data > 0
    return Tensor(np.where(mask, a.data, slope * a.data), _parents=(a,), _op="leaky_relu",
                  _backward=lambda g: (np.where(mask, g, slope * g),))


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so exp never overflows
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return Tensor(out, _parents=(a,), _op="sigmoid", _backward=lambda g: (g * out * (1.0 - out),))


def tensor_sum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    def backward(g: np.ndarray):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return Tensor(a.data.sum(axis=axis, keepdims=keepdims), _parents=(a,), _op="sum", _backward=backward)


def tensor_mean(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    return tensor_sum(a, axis, keepdims) / float(count)


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = a.shape
    return Tensor(a.data.reshape(shape), _parents=(a,), _op="reshape",
                  _backward=lambda g: (g.reshape(original),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """concatenate along an existing axis

    Raises:
        ShapeError listing every shape when the other dimensions differ
    """
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in tensors]} do not conform on axis {axis}") from None
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))
    return Tensor(out, _parents=tuple(tensors), _op="concat", _backward=backward)


def take(a: Tensor, index: np.ndarray) -> Tensor:
    """gather rows of a by integer index (rows may repeat)"""
    index = np.asarray(index, dtype=np.int64)

    def backward(g: np.ndarray):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)
    return Tensor(a.data[index], _parents=(a,), _op="take", _backward=backward)


def segment_sum(a: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """sum the rows of a that share a segment id, empty segments give zeros"""
    segments = np.asarray(segments, dtype=np.int64)
    if len(segments) != a.shape[0]:
        raise ShapeError(f"segment_sum: {len(segments)} segment ids for shape {a.shape}")
    out = np.zeros((n_segments,) + a.shape[1:])
    np.add.at(out, segments, a.data)
    return Tensor(out, _parents=(a,), _op="segment_sum", _backward=lambda g: (g[segments],))


def segment_max(a: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """element-wise max over the rows of each segment, empty segments give zeros

    the gradient is shared evenly between tied maxima
    """
    segments = np.asarray(segments, dtype=np.int64)
    if len(segments) != a.shape[0]:
        raise ShapeError(f"segment_max: {len(segments)} segment ids for shape {a.shape}")
    out = np.full((n_segments,) + a.shape[1:], -np.inf)
    np.maximum.at(out, segments, a.data)
    out[np.isneginf(out)] = 0.0
    winners = (a.data == out[segments]).astype(np.float64)
    counts = np.zeros_like(out)
    np.add.at(counts, segments, winners)
    share = winners / np.maximum(counts[segments], 1.0)
    return Tensor(out, _parents=(a,), _op="segment_max", _backward=lambda g: (g[segments] * share,))


def numeric_gradient(fn: Callable[[], Tensor], target: Tensor, h: float = 1e-5) -> np.ndarray:
    """central finite difference of a scalar function with respect to target's values

    target.data is perturbed in place and restored afterwards

    Usage:
        >>> approx = numeric_gradient(lambda: loss(model), layer.weight)
    """
    grad = np.zeros_like(target.data)
    flat = target.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = fn().item()
        flat[i] = original - h
        minus = fn().item()
        flat[i] = original
        out[i] = (plus - minus) / (2 * h)
    return grad


class Parameter(Tensor):
    __slots__ = ("name", "trainable")

    def __init__(self, data, name: str = "", trainable: bool = True) -> None:
        """a named model weight

        Args:
            data: initial values
            name: stable name used by checkpoints, unique within a model
            trainable: frozen parameters receive no gradient
        """
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, trainable={self.trainable})"
