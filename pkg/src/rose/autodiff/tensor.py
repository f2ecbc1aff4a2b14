"""Dense tensors and the explicit gradient tape."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float32
_local = threading.local()


class ShapeError(ValueError):
    """Operand shapes are incompatible for an op."""


class NumericError(FloatingPointError):
    """An op produced NaN or Inf."""


class TapeError(RuntimeError):
    """Misuse of a tape (non-scalar loss, loss recorded elsewhere, ...)."""


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """An n-d float array with an optional gradient slot.

    Values are treated as immutable once created; only ``grad`` is written
    to, by :meth:`Tape.backward`.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dt = getattr(data, "dtype", None)
            if isinstance(data, (np.ndarray, np.generic)) and dt in (np.float32, np.float64):
                dtype = dt
            else:
                dtype = _DEFAULT_DTYPE
        arr = np.asarray(data, dtype=dtype)
        if arr.ndim > 0 and 0 in arr.shape:
            raise ShapeError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

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
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # operator sugar; implementations live in functional.py
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F
        if isinstance(other, Tensor):
            return F.div(self, other)
        return F.mul(self, 1.0 / other)

    def __neg__(self):
        from . import functional as F
        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from . import functional as F
        return F.matmul(self, other)

    def __getitem__(self, index):
        from . import functional as F
        return F.getitem(self, index)

    def reshape(self, *shape):
        from . import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        from . import functional as F
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False):
        from . import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Append-only record of the ops applied while the tape is active.

    Use as a context manager; ops executed inside the ``with`` block whose
    inputs require grad are recorded. A tape is meant to live for one step::

        with Tape() as tape:
            loss = model_loss(...)
        tape.backward(loss)
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._produced: dict[int, int] = {}
        self._done = False

    def __enter__(self) -> "Tape":
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise TapeError("tapes exited out of order")
        stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, backward: BackwardFn) -> None:
        if self._done:
            raise TapeError("tape already consumed by backward()")
        self._produced[id(output)] = len(self.nodes)
        self.nodes.append(Node(op, inputs, output, backward))

    def leaves(self) -> list[Tensor]:
        seen: dict[int, Tensor] = {}
        for node in self.nodes:
            for t in node.inputs:
                if t.requires_grad and id(t) not in self._produced:
                    seen.setdefault(id(t), t)
        return list(seen.values())

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf on the tape."""
        if loss.data.size != 1:
            raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
        if id(loss) not in self._produced:
            raise TapeError("loss was not produced on this tape")
        if self._done:
            raise TapeError("backward() already ran on this tape")
        self._done = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        stop = self._produced[id(loss)]
        for node in reversed(self.nodes[: stop + 1]):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.shape:
                    raise ShapeError(
                        f"{node.op}: backward produced grad {gi.shape} for input {inp.shape}"
                    )
                key = id(inp)
                if key in self._produced:
                    prev = grads.get(key)
                    grads[key] = gi if prev is None else prev + gi
                else:
                    gi = gi.astype(inp.dtype, copy=False)
                    inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
        for leaf in self.leaves():
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)
        # drop references so activations can be freed
        self.nodes = []
        self._produced = {}


def _tape_stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def backward(tape: Tape, loss: Tensor) -> None:
    tape.backward(loss)
