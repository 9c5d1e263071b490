"""
Dense float64 arithmetic with a small reverse-mode tape.

A `Tensor` wraps a numpy array. Operations on tensors that require gradients record a backward
closure; `Tensor.backward()` walks the recorded graph in reverse topological order and accumulates
gradients into the leaves. Leading axes broadcast like numpy, so the same code path serves a single
window (N x w) and a batch of windows (B x N x w).

Random initialization uses numpy's PCG64 bit generator (`np.random.default_rng`), which produces the
same stream on every platform for a given seed.
"""

from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar

import numpy as np

from pmgc.core.errors import NonFiniteError, ShapeError
from pmgc.core.types import InitScheme, Matrix

NORMAL_INIT_STD = 0.1

type Backward = Callable[[Matrix], Sequence[Matrix | None]]
type Operand = Tensor | Matrix | float

# relu sign masks seen during a forward pass, collected only inside `record_relu_masks()`
_relu_masks: ContextVar[list[Matrix] | None] = ContextVar("relu_masks", default=None)


class Tensor:
    """A float64 array node of the tape."""

    __slots__ = ("_backward", "_parents", "grad", "requires_grad", "value")
    __array_ufunc__ = None  # make numpy defer to the reflected operators below

    def __init__(
        self,
        value: Matrix | float,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Backward | None = None,
    ) -> None:
        self.value: Matrix = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Matrix | None = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into `.grad` of every leaf that requires gradients. `self` must be a scalar."""
        if self.value.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        order = _topological_order(self)
        grads: dict[int, Matrix] = {id(self): np.ones_like(self.value)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g), strict=True):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.shape)
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    # operators

    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return add(self, neg(other))

    def __rsub__(self, other: Operand) -> "Tensor":
        return add(other, neg(self))

    def __mul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: float) -> "Tensor":
        return mul(self, 1.0 / other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor | Matrix") -> "Tensor":
        return matmul(self, other)

    def __rmatmul__(self, other: Matrix) -> "Tensor":
        return matmul(other, self)

    def __getitem__(self, index: object) -> "Tensor":
        return take(self, index)


def as_tensor(x: Operand) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value: Matrix, parents: tuple[Tensor, ...], backward: Backward) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(value, requires_grad=True, parents=parents, backward=backward)
    return Tensor(value)


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
        stack.extend((p, False) for p in node._parents if p.requires_grad and id(p) not in seen)
    return order


def _unbroadcast(grad: Matrix, shape: tuple[int, ...]) -> Matrix:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _swap(x: Matrix) -> Matrix:
    return np.swapaxes(x, -1, -2)


# elementwise


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value + b.value, (a, b), lambda g: (g, g))


def neg(a: Operand) -> Tensor:
    a = as_tensor(a)
    return _node(-a.value, (a,), lambda g: (-g,))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def square(a: Tensor) -> Tensor:
    return _node(a.value * a.value, (a,), lambda g: (2.0 * g * a.value,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return _node(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _node(np.log(a.value), (a,), lambda g: (g / a.value,))


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.value
    return _node(out, (a,), lambda g: (-g * out * out,))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    masks = _relu_masks.get()
    if masks is not None:
        masks.append(mask)
    return _node(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def clip(a: Tensor, low: float, high: float) -> Tensor:
    inside = (a.value >= low) & (a.value <= high)
    return _node(np.clip(a.value, low, high), (a,), lambda g: (g * inside,))


# reductions and shape


def sum_(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    def backward(g: Matrix) -> tuple[Matrix]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), backward)


def mean(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    total = sum_(a, axis=axis, keepdims=keepdims)
    count = a.value.size // max(total.value.size, 1)
    return total * (1.0 / count)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    return _node(_swap(a.value), (a,), lambda g: (_swap(g),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _node(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def unsqueeze(a: Tensor, axis: int) -> Tensor:
    return reshape(a, np.expand_dims(a.value, axis).shape)


def moveaxis(a: Tensor, source: int, destination: int) -> Tensor:
    return _node(np.moveaxis(a.value, source, destination), (a,), lambda g: (np.moveaxis(g, destination, source),))


def broadcast_to(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _node(np.broadcast_to(a.value, shape), (a,), lambda g: (g,))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _node(np.concatenate([t.value for t in tensors], axis=axis), tuple(tensors), lambda g: np.split(g, sizes, axis=axis))


def take(a: Tensor, index: object) -> Tensor:
    def backward(g: Matrix) -> tuple[Matrix]:
        full = np.zeros_like(a.value)
        np.add.at(full, index, g)  # type: ignore[arg-type]
        return (full,)

    return _node(a.value[index], (a,), backward)  # type: ignore[index]


def matmul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value @ b.value, (a, b), lambda g: (g @ _swap(b.value), _swap(a.value) @ g))


# fused ops with guarded derivatives


def row_norm(a: Tensor) -> Tensor:
    """Euclidean norm over the last axis (keepdims). The derivative at a zero row is taken as zero."""
    norm = np.sqrt(np.sum(a.value * a.value, axis=-1, keepdims=True))

    def backward(g: Matrix) -> tuple[Matrix]:
        safe = np.where(norm > 0, norm, 1.0)
        return (np.where(norm > 0, g * a.value / safe, 0.0),)

    return _node(norm, (a,), backward)


def inv_sqrt_or_zero(a: Tensor) -> Tensor:
    """Elementwise a^-1/2 for positive entries, zero elsewhere."""
    positive = a.value > 0
    safe = np.where(positive, a.value, 1.0)
    out = np.where(positive, safe**-0.5, 0.0)
    return _node(out, (a,), lambda g: (np.where(positive, -0.5 * g * out / safe, 0.0),))


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    top = np.max(a.value, axis=axis, keepdims=True)
    shifted = np.exp(a.value - top)
    total = np.sum(shifted, axis=axis, keepdims=True)
    out = np.squeeze(top + np.log(total), axis=axis)
    softmax = shifted / total
    return _node(out, (a,), lambda g: (np.expand_dims(g, axis) * softmax,))


@contextmanager
def record_relu_masks() -> Iterator[list[Matrix]]:
    """Collect the activation mask of every relu evaluated inside the block, in evaluation order."""
    masks: list[Matrix] = []
    token = _relu_masks.set(masks)
    try:
        yield masks
    finally:
        _relu_masks.reset(token)


# initialization and checks


def seeded_init(seed: int, shape: tuple[int, int], scheme: InitScheme) -> Matrix:
    """
    Deterministic random matrix.

    Glorot uniform draws from [-sqrt(6 / (rows + cols)), +sqrt(6 / (rows + cols))];
    normal draws from N(0, 0.1^2).

    Raises:
        ShapeError: If a dimension is not positive.
    """
    rows, cols = shape
    if rows <= 0 or cols <= 0:
        raise ShapeError(f"invalid shape {shape}: dimensions must be positive")
    rng = np.random.default_rng(seed)
    match scheme:
        case InitScheme.GLOROT_UNIFORM:
            bound = np.sqrt(6.0 / (rows + cols))
            return rng.uniform(-bound, bound, size=shape)
        case InitScheme.NORMAL:
            return rng.normal(0.0, NORMAL_INIT_STD, size=shape)


def require_finite(name: str, value: Matrix | float) -> None:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite values in {name}")


def require_shape(name: str, value: Matrix, shape: tuple[int, ...]) -> None:
    if value.shape != shape:
        raise ShapeError(f"{name}: expected shape {shape}, got {value.shape}")


def leaves(params: dict[str, Matrix], requires_grad: bool = True) -> dict[str, Tensor]:
    """Wrap a parameter store into tape leaves."""
    return {name: Tensor(value, requires_grad=requires_grad) for name, value in params.items()}
