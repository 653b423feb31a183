"""Dense tensors with reverse-mode automatic differentiation.

This module provides:
- Tensor: numpy-backed array that can take part in gradient recording
- Tape: ordered record of operations, replayed in reverse by backward()
- no_grad / precision / count_macs: context managers for recording,
  default dtype and multiply-accumulate accounting
- elementwise, matmul and shape primitives (reshape, transpose, concat,
  reduce_sum, reduce_mean)

Recording state is thread-local: a tape and its tensors belong to one
worker at a time.
"""

from __future__ import annotations

import contextlib
import threading
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
import numpy.typing as npt

from diffbev.core.errors import ShapeError

Array = npt.NDArray[Any]
BackwardFn = Callable[[Array], Sequence[Array | None]]


@dataclass
class MacCounter:
    """Running total of multiply-accumulate operations."""

    total: int = 0


class _LocalState(threading.local):
    def __init__(self) -> None:
        self.tapes: list[Tape] = []
        self.default_tape: Tape | None = None
        self.grad_enabled = True
        self.dtype: np.dtype[Any] = np.dtype(np.float32)
        self.counters: list[MacCounter] = []


_state = _LocalState()


@dataclass
class TapeEntry:
    """One recorded operation."""

    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered list of recorded operations.

    Operations are appended in execution order, which is a topological
    order of the graph, so replaying the backward rules in reverse
    recording order visits every node after all of its consumers.

    Usage:
        with Tape() as tape:
            loss = model(x)
            tape.backward(loss)
    """

    def __init__(self) -> None:
        self.entries: list[TapeEntry] = []

    def __enter__(self) -> Tape:
        _state.tapes.append(self)
        return self

    def __exit__(self, *exc: object) -> None:
        _state.tapes.remove(self)

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, inputs: tuple[Tensor, ...], output: Tensor, backward: BackwardFn) -> None:
        self.entries.append(TapeEntry(inputs, output, backward))

    def backward(self, root: Tensor, grad: Array | None = None) -> None:
        """Propagate gradients from root to every recorded input.

        The tape is cleared afterwards; higher-order derivatives are not
        supported.

        Args:
            root: Output tensor to differentiate (scalar unless grad is given).
            grad: Seed gradient, defaults to ones for scalar roots.

        Raises:
            ShapeError: If root is not scalar and no seed is given.
        """
        if grad is None:
            if root.data.size != 1:
                raise ShapeError(f"backward() needs a scalar root, got shape {root.shape}")
            grad = np.ones_like(root.data)
        root.accumulate_grad(grad)
        for entry in reversed(self.entries):
            out_grad = entry.output.grad
            if out_grad is None:
                continue
            grads = entry.backward(out_grad)
            for tensor, tensor_grad in zip(entry.inputs, grads, strict=True):
                if tensor_grad is not None and tensor.requires_grad:
                    tensor.accumulate_grad(tensor_grad)
        self.entries.clear()

    def clear(self) -> None:
        """Discard recorded operations without backpropagating."""
        self.entries.clear()


def active_tape() -> Tape:
    """Return the innermost tape of this thread, creating a default one."""
    if _state.tapes:
        return _state.tapes[-1]
    if _state.default_tape is None:
        _state.default_tape = Tape()
    return _state.default_tape


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording for the current thread."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def is_grad_enabled() -> bool:
    return _state.grad_enabled


@contextlib.contextmanager
def precision(dtype: npt.DTypeLike) -> Iterator[None]:
    """Set the dtype used for newly constructed tensors.

    float32 is the training default; float64 is the shadow mode used by
    gradient checks.
    """
    previous = _state.dtype
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = previous


def default_dtype() -> np.dtype[Any]:
    return _state.dtype


@contextlib.contextmanager
def count_macs() -> Iterator[MacCounter]:
    """Count multiply-accumulates issued by conv2d and matmul in this block."""
    counter = MacCounter()
    _state.counters.append(counter)
    try:
        yield counter
    finally:
        _state.counters.remove(counter)


def add_macs(n: int) -> None:
    for counter in _state.counters:
        counter.total += n


class Tensor:
    """Dense N-dimensional float array with optional gradient recording.

    Tensors are treated as immutable once built; only ``grad`` changes,
    by accumulation during backward.

    Attributes:
        data: Row-major numpy array.
        requires_grad: Whether gradients flow into this tensor.
        grad: Same-shape gradient array, populated by backward.
    """

    __array_priority__ = 100.0

    def __init__(self, data: npt.ArrayLike, requires_grad: bool = False) -> None:
        self.data: Array = np.array(data, dtype=_state.dtype)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self._tape: Tape | None = None

    @classmethod
    def wrap(cls, data: Array, requires_grad: bool = False) -> Tensor:
        """Build a tensor around an existing array without copying or casting."""
        tensor = cls.__new__(cls)
        tensor.data = data
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor._tape = None
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> Array:
        """Return a copy of the underlying array."""
        return self.data.copy()

    def detach(self) -> Tensor:
        """Return a tensor sharing data but cut off from the graph."""
        return Tensor.wrap(self.data)

    def accumulate_grad(self, grad: Array) -> None:
        grad = np.asarray(grad)
        if grad.shape != self.data.shape:
            grad = np.broadcast_to(grad, self.data.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype)
        else:
            self.grad = self.grad + grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: Array | None = None) -> None:
        """Backpropagate from this tensor through the tape that recorded it."""
        tape = self._tape if self._tape is not None else active_tape()
        tape.backward(self, grad)

    def reshape(self, *shape: int) -> Tensor:
        return reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        return transpose(self, axes or None)

    @property
    def T(self) -> Tensor:  # noqa: N802
        return transpose(self)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return reduce_mean(self, axis, keepdims)

    def __add__(self, other: TensorLike) -> Tensor:
        return elementwise("add", self, other)

    def __radd__(self, other: TensorLike) -> Tensor:
        return elementwise("add", other, self)

    def __sub__(self, other: TensorLike) -> Tensor:
        return elementwise("sub", self, other)

    def __rsub__(self, other: TensorLike) -> Tensor:
        return elementwise("sub", other, self)

    def __mul__(self, other: TensorLike) -> Tensor:
        return elementwise("mul", self, other)

    def __rmul__(self, other: TensorLike) -> Tensor:
        return elementwise("mul", other, self)

    def __neg__(self) -> Tensor:
        return elementwise("mul", self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


TensorLike = Tensor | float | int | Array


def as_tensor(value: TensorLike) -> Tensor:
    """Return value unchanged if it is a Tensor, else a constant tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def make_result(data: Array, inputs: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    """Wrap an op output and record it when any input needs gradients."""
    out = Tensor.wrap(data)
    if _state.grad_enabled and any(t.requires_grad for t in inputs):
        tape = active_tape()
        out.requires_grad = True
        out._tape = tape
        tape.record(inputs, out, backward)
    return out


def broadcast_shape(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    """Broadcast two shapes; a dimension matches if equal or one of them is 1.

    Raises:
        ShapeError: Naming both shapes when they cannot be reconciled.
    """
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError:
        raise ShapeError(f"cannot broadcast shapes {a} and {b}") from None


def unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to the input's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class ElementwiseKind(str, Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"


def elementwise(kind: str | ElementwiseKind, a: TensorLike, b: TensorLike) -> Tensor:
    """Apply add, sub or mul with broadcasting.

    Args:
        kind: "add", "sub" or "mul".
        a: Left operand.
        b: Right operand, broadcastable against a.

    Returns:
        Tensor of the broadcast shape.

    Raises:
        ShapeError: If the shapes cannot be broadcast.
    """
    op = ElementwiseKind(kind)
    ta, tb = as_tensor(a), as_tensor(b)
    broadcast_shape(ta.shape, tb.shape)
    a_shape, b_shape = ta.shape, tb.shape

    if op is ElementwiseKind.ADD:
        data = ta.data + tb.data

        def backward(g: Array) -> tuple[Array | None, Array | None]:
            return (
                unbroadcast(g, a_shape) if ta.requires_grad else None,
                unbroadcast(g, b_shape) if tb.requires_grad else None,
            )

    elif op is ElementwiseKind.SUB:
        data = ta.data - tb.data

        def backward(g: Array) -> tuple[Array | None, Array | None]:
            return (
                unbroadcast(g, a_shape) if ta.requires_grad else None,
                unbroadcast(-g, b_shape) if tb.requires_grad else None,
            )

    else:
        data = ta.data * tb.data

        def backward(g: Array) -> tuple[Array | None, Array | None]:
            return (
                unbroadcast(g * tb.data, a_shape) if ta.requires_grad else None,
                unbroadcast(g * ta.data, b_shape) if tb.requires_grad else None,
            )

    return make_result(data, (ta, tb), backward)


def add(a: TensorLike, b: TensorLike) -> Tensor:
    return elementwise(ElementwiseKind.ADD, a, b)


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    return elementwise(ElementwiseKind.SUB, a, b)


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    return elementwise(ElementwiseKind.MUL, a, b)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors or two equally batched 3-D tensors.

    Raises:
        ShapeError: On rank or inner/batch dimension mismatch.
    """
    if a.ndim not in (2, 3) or a.ndim != b.ndim:
        raise ShapeError(f"matmul needs two 2-D or two 3-D tensors, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    if a.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ShapeError(f"matmul batch sizes differ: {a.shape} @ {b.shape}")

    data = a.data @ b.data
    batch = a.shape[0] if a.ndim == 3 else 1
    add_macs(batch * a.shape[-2] * a.shape[-1] * b.shape[-1])

    def backward(g: Array) -> tuple[Array | None, Array | None]:
        return (
            g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None,
            np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None,
        )

    return make_result(data, (a, b), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Reshape without changing the row-major element order.

    Raises:
        ShapeError: If the element counts differ.
    """
    shape = tuple(int(n) for n in shape)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} into {shape}") from None
    in_shape = x.shape

    def backward(g: Array) -> tuple[Array]:
        return (g.reshape(in_shape),)

    return make_result(data, (x,), backward)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    """Permute axes (reverses them when axes is None)."""
    perm = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(int(i) for i in np.argsort(perm))
    data = np.ascontiguousarray(x.data.transpose(perm))

    def backward(g: Array) -> tuple[Array]:
        return (g.transpose(inverse),)

    return make_result(data, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along an existing axis.

    Raises:
        ShapeError: If the non-concatenated dimensions differ.
    """
    parts = tuple(tensors)
    try:
        data = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError:
        shapes = [t.shape for t in parts]
        raise ShapeError(f"cannot concatenate shapes {shapes} along axis {axis}") from None
    splits = np.cumsum([t.shape[axis] for t in parts])[:-1]

    def backward(g: Array) -> list[Array | None]:
        pieces = np.split(g, splits, axis=axis)
        return [p if t.requires_grad else None for p, t in zip(pieces, parts, strict=True)]

    return make_result(data, parts, backward)


def _normalize_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else axis
    return tuple(sorted(a % ndim for a in axes))


def reduce_sum(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    data = np.asarray(x.data.sum(axis=axes, keepdims=keepdims))
    in_shape = x.shape

    def backward(g: Array) -> tuple[Array]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, in_shape),)

    return make_result(data, (x,), backward)


def reduce_mean(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(reduce_sum(x, axes, keepdims), 1.0 / max(count, 1))
