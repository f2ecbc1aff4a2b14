"""Minimal dense-tensor engine with tape-based reverse-mode autodiff."""

from . import functional
from .gradcheck import NondeterministicError, grad_check
from .tensor import (
    NumericError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    active_tape,
    backward,
    get_default_dtype,
    set_default_dtype,
)

__all__ = [
    "NondeterministicError",
    "NumericError",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "active_tape",
    "backward",
    "functional",
    "get_default_dtype",
    "grad_check",
    "set_default_dtype",
]
