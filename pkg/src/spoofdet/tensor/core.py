"""Dense float64 tensors with a reverse-mode differentiation tape.

Operations are recorded only while a :class:`Tape` is active on the current
thread. Outside a tape every op runs as plain numpy arithmetic, which is what
inference and evaluation use.
"""

from __future__ import annotations

import contextlib
import itertools
import threading
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

DTYPE = np.float64

_local = threading.local()
_tape_ids = itertools.count(1)

# Backward rules listed here are deliberately corrupted (negative control).
_faulty_ops: set[str] = set()
FAULT_SCALE = 1.5

# When set, every op output and accumulated gradient is checked for NaN.
_debug = False


def set_debug(flag: bool) -> None:
    global _debug
    _debug = bool(flag)


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


class ConfigurationError(ValueError):
    """Raised when an operation is asked for an unsupported configuration."""


class InputError(ValueError):
    """Raised when data values fall outside an operation's domain."""


class UsageError(ValueError):
    """Raised when an API is called in a way its contract forbids."""


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Node:
    __slots__ = ("name", "inputs", "output", "backward")

    def __init__(self, name: str, inputs: Sequence["Tensor"], output: "Tensor", backward: BackwardFn):
        self.name = name
        self.inputs = tuple(inputs)
        self.output = output
        self.backward = backward

    def __repr__(self) -> str:
        return f"Node({self.name}, out={self.output.shape})"


class Tape:
    """Ordered record of primitive operations.

    Use as a context manager; ops executed inside the ``with`` block on the
    same thread are appended in execution order. :meth:`backward` walks the
    record in exact reverse append order.

    Example:
        >>> w = Tensor([1.0, 2.0], requires_grad=True)
        >>> with Tape() as tape:
        ...     loss = (w * w).sum()
        >>> tape.backward(loss)
        >>> w.grad
        array([2., 4.])
    """

    def __init__(self) -> None:
        self.id = next(_tape_ids)
        self.nodes: list[Node] = []
        self._owner: Optional[int] = None

    def __enter__(self) -> "Tape":
        stack = _stack()
        self._owner = threading.get_ident()
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()

    def record(self, node: Node) -> None:
        if self._owner is not None and self._owner != threading.get_ident():
            raise UsageError("a tape is confined to the thread that opened it")
        self.nodes.append(node)

    def backward(self, loss: "Tensor", grad: Optional[np.ndarray] = None) -> None:
        """Propagate gradients from ``loss`` to every reachable tensor.

        ``grad`` defaults to ones, which for a scalar loss is dL/dL.
        """
        if loss.tape_id != self.id:
            raise UsageError("loss was not produced on this tape")
        seed = np.ones(loss.shape, dtype=DTYPE) if grad is None else np.asarray(grad, dtype=DTYPE)
        if seed.shape != loss.shape:
            raise DimensionError(f"seed gradient shape {seed.shape} != loss shape {loss.shape}")
        loss._accumulate(seed)
        for node in reversed(self.nodes):
            out_grad = node.output.grad
            if out_grad is None:
                continue
            in_grads = node.backward(out_grad)
            if node.name in _faulty_ops:
                in_grads = [None if g is None else g * FAULT_SCALE for g in in_grads]
            for t, g in zip(node.inputs, in_grads):
                if g is not None and t.requires_grad:
                    t._accumulate(g)


def _stack() -> list[Tape]:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def active_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


@contextlib.contextmanager
def inject_fault(*op_names: str) -> Iterator[None]:
    """Scale the backward output of the named ops, for mutation testing."""
    added = [n for n in op_names if n not in _faulty_ops]
    _faulty_ops.update(added)
    try:
        yield
    finally:
        _faulty_ops.difference_update(added)


class Tensor:
    """N-dimensional float64 array that can take part in a :class:`Tape`.

    Attributes:
        data: the values, always a C-contiguous float64 ndarray.
        grad: accumulated gradient of the same shape, or None.
        requires_grad: whether gradients are accumulated for this tensor.
        tape_id: id of the tape that produced this tensor, None for leaves.
    """

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.array(data, dtype=DTYPE, copy=True, order="C")
        if arr.ndim > 0 and 0 in arr.shape:
            raise DimensionError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.tape_id: Optional[int] = None
        self.name = name

    # -- introspection ---------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.item())

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.shape:
            raise DimensionError(f"gradient shape {g.shape} != tensor shape {self.shape}")
        if _debug and np.isnan(g).any():
            raise FloatingPointError(f"NaN gradient flowing into {self!r}")
        # incoming arrays may be shared between inputs of one node, so never add in place
        if self.grad is None:
            self.grad = g if g.dtype == DTYPE else g.astype(DTYPE)
        else:
            self.grad = self.grad + g

    # -- operator sugar --------------------------------------------------
    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return add(as_tensor(other), neg(self))

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        if isinstance(other, Tensor):
            raise UsageError("division by a tensor is not supported; multiply by a reciprocal")
        return mul(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from .ops import matmul

        return matmul(self, other)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        return transpose(self, axes or None)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis, keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        n = self.size if axis is None else self.shape[axis]
        return tsum(self, axis, keepdims) * (1.0 / n)


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(name: str, data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Wrap ``data`` as an op output and record it on the active tape.

    Recording happens only when a tape is active and at least one input
    requires gradients.
    """
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data, dtype=DTYPE)
    if _debug and np.isnan(out.data).any():
        raise FloatingPointError(f"{name} produced NaN")
    out.grad = None
    out.name = None
    out.tape_id = None
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out.requires_grad = needs
    if needs:
        out.tape_id = tape.id
        tape.record(Node(name, inputs, out, backward))
    return out


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as e:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}") from e

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make_result("add", data, (a, b), backward)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as e:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}") from e

    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return make_result("mul", data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {a.shape} to {tuple(shape)}") from e
    return make_result("reshape", data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def tsum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    data = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_result("sum", np.asarray(data), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return [np.take(g, range(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])]

    return make_result("concat", data, tuple(tensors), backward)
