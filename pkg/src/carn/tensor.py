"""Minimal dense tensor type with reverse-mode automatic differentiation.

Tensors wrap numpy arrays (float32 or float64).  Operations record onto a
Tape when any input is watched; a single reversed sweep over the recorded
operations populates ``grad`` buffers.  Shapes must match exactly everywhere
except bias addition; there is no general broadcasting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class Tensor:
    """N-dimensional real array, optionally attached to a gradient tape."""

    __slots__ = ("data", "grad", "tape", "node_id")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.tape: Optional["Tape"] = None
        self.node_id: Optional[int] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Copy of the value with no tape attachment."""
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = "" if self.tape is None else f", node={self.node_id}"
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{tag})"

    # small operator conveniences; full op set lives at module level
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return slice_(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self):
        return sum_(self)

    def mean(self):
        return mean(self)


@dataclass
class Parameter:
    """Named trainable tensor; names are unique within a model."""

    name: str
    tensor: Tensor


class TapeOp:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations; inputs always precede their consumers."""

    def __init__(self):
        self._ops: list[TapeOp] = []
        self._n_nodes = 0

    def __len__(self):
        return len(self._ops)

    def watch(self, tensor: Tensor) -> Tensor:
        """Attach a leaf tensor (typically a Parameter) to this tape."""
        if tensor.tape is not None and tensor.tape is not self:
            raise ValueError("tensor is already attached to a different tape")
        tensor.tape = self
        if tensor.node_id is None:
            tensor.node_id = self._n_nodes
            self._n_nodes += 1
        tensor.grad = None
        return tensor

    def _record(self, inputs: Sequence[Tensor], output: Tensor,
                backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        output.tape = self
        output.node_id = self._n_nodes
        self._n_nodes += 1
        self._ops.append(TapeOp(tuple(inputs), output, backward_fn))

    def backward(self, root: Tensor) -> None:
        """Populate grads of every node reachable from a scalar root.

        Runs one reversed sweep over the recorded ops; deterministic for a
        fixed tape.  Tensors never watched or recorded stay grad-free.
        """
        if root.tape is not self:
            raise ValueError("backward root is not recorded on this tape")
        if root.data.size != 1:
            raise ValueError(
                f"backward requires a scalar root, got shape {root.data.shape}")
        root.grad = np.ones_like(root.data)
        for op in reversed(self._ops):
            g = op.output.grad
            if g is None:
                continue  # not reachable from the root
            grads = op.backward_fn(g)
            for inp, gi in zip(op.inputs, grads):
                if gi is None or inp.tape is not self:
                    continue
                if inp.grad is None:
                    inp.grad = gi.astype(inp.data.dtype, copy=True) \
                        if gi.dtype != inp.data.dtype else gi.copy()
                else:
                    inp.grad += gi

    def release(self) -> None:
        """Detach all recorded tensors so the graph can be garbage-collected.

        Grad buffers survive until overwritten; parameter data is untouched.
        """
        for op in self._ops:
            op.output.tape = None
            op.output.node_id = None
            for inp in op.inputs:
                inp.tape = None
                inp.node_id = None
        self._ops.clear()


def backward(root: Tensor) -> None:
    if root.tape is None:
        raise ValueError("backward root is not on any tape")
    root.tape.backward(root)


# ---------------------------------------------------------------------------
# op plumbing

def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _active_tape(*tensors: Tensor) -> Optional[Tape]:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ValueError("operation mixes tensors from different tapes")
    return tape


def _emit(inputs: Sequence[Tensor], out_data: np.ndarray, backward_fn) -> Tensor:
    out = Tensor(out_data)
    tape = _active_tape(*inputs)
    if tape is not None:
        tape._record(inputs, out, backward_fn)
    return out


def _check_same_shape(a: Tensor, b: Tensor, opname: str):
    if a.data.shape != b.data.shape:
        raise ValueError(
            f"{opname}: shape mismatch {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------------------
# elementwise and structural ops

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "add")
    return _emit([a, b], a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "sub")
    return _emit([a, b], a.data - b.data, lambda g: (g, -g))


def neg(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    return _emit([x], -x.data, lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product; shapes must match exactly."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _emit([a, b], ad * bd, lambda g: (g * bd, g * ad))


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return _emit([a, b], out, lambda g: (g / bd, -g * ad / (bd * bd)))


def scale(x: Tensor, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    return _emit([x], x.data * c, lambda g: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    x = _as_tensor(x)
    return _emit([x], x.data + float(c), lambda g: (g,))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 1-D bias along the last axis (the only broadcast in the core)."""
    x, bias = _as_tensor(x), _as_tensor(bias)
    if bias.data.ndim != 1 or x.data.shape[-1] != bias.data.shape[0]:
        raise ValueError(
            f"add_bias: bias {bias.data.shape} does not fit last axis of {x.data.shape}")
    red_axes = tuple(range(x.data.ndim - 1))

    def bwd(g):
        return g, g.sum(axis=red_axes)

    return _emit([x, bias], x.data + bias.data, bwd)


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    xd = x.data
    z = np.exp(-np.abs(xd))  # stable in both tails
    out = np.where(xd >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return _emit([x], out, lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = np.tanh(x.data)
    return _emit([x], out, lambda g: (g * (1.0 - out * out),))


def power(x: Tensor, p: float, eps: float = 1e-8) -> Tensor:
    """Compute (|x| + eps)^p for p > 0.

    The additive floor keeps the derivative finite at 0; intended for
    magnitude tensors (x >= 0), where it realizes the magnitude floor.
    """
    if p <= 0:
        raise ValueError(f"power requires p > 0, got {p}")
    x = _as_tensor(x)
    xd = x.data
    base = np.abs(xd) + eps
    out = base ** p

    def bwd(g):
        return (g * p * base ** (p - 1.0) * np.sign(xd),)

    return _emit([x], out, bwd)


def hypot(a: Tensor, b: Tensor) -> Tensor:
    """sqrt(a^2 + b^2) with a guarded backward (zero gradient at the origin)."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "hypot")
    ad, bd = a.data, b.data
    out = np.hypot(ad, bd)
    safe = np.maximum(out, np.finfo(out.dtype).tiny)

    def bwd(g):
        return g * ad / safe, g * bd / safe

    return _emit([a, b], out, bwd)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat of nothing")
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    split_at = list(np.cumsum(sizes[:-1]))

    def bwd(g):
        return tuple(np.split(g, split_at, axis=axis))

    return _emit(ts, out, bwd)


def slice_(x: Tensor, key) -> Tensor:
    """Basic (int / slice) indexing; backward scatters into a zero buffer."""
    x = _as_tensor(x)
    out = x.data[key]
    in_shape, in_dtype = x.data.shape, x.data.dtype

    def bwd(g):
        gx = np.zeros(in_shape, dtype=in_dtype)
        gx[key] = g
        return (gx,)

    return _emit([x], out.copy(), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    in_shape = x.data.shape
    out = x.data.reshape(shape)

    def bwd(g):
        return (g.reshape(in_shape),)

    return _emit([x], out, bwd)


def transpose(x: Tensor, axes) -> Tensor:
    x = _as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(x.data.transpose(axes))

    def bwd(g):
        return (g.transpose(inv),)

    return _emit([x], out, bwd)


def sum_(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    shape, dtype = x.data.shape, x.data.dtype

    def bwd(g):
        return (np.full(shape, g, dtype=dtype),)

    return _emit([x], np.asarray(x.data.sum(), dtype=dtype), bwd)


def mean(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    shape, dtype = x.data.shape, x.data.dtype
    n = x.data.size

    def bwd(g):
        return (np.full(shape, g / n, dtype=dtype),)

    return _emit([x], np.asarray(x.data.mean(), dtype=dtype), bwd)
