"""Differentiable primitives.

Every function takes :class:`Tensor` (or plain numbers/arrays for constant
operands), computes the forward value with numpy, and records a backward rule
on the active tape when any input requires grad.

Broadcasting follows numpy's rules; gradients are summed back over the
broadcast axes.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import NumericError, ShapeError, Tensor, active_tape

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


def _emit(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{op}: non-finite value in output of shape {data.shape}")
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        tape.record(op, inputs, out, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)
    return _emit(
        "add", a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("sub", a, b)
    return _emit(
        "sub", a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)
    return _emit(
        "mul", a.data * b.data, (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        ),
    )


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    return _emit(
        "div", out, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None,
        ),
    )


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _emit("exp", out, (x,), lambda g: (g * out,))


def square(x: Tensor) -> Tensor:
    return _emit("square", x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return _emit("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def silu(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    out = x.data * s
    return _emit("silu", out, (x,), lambda g: (g * s * (1.0 + x.data * (1.0 - s)),))


def gelu(x: Tensor) -> Tensor:
    """tanh-approximated GELU."""
    z = x.data
    z2 = z * z
    th = np.tanh(_SQRT_2_OVER_PI * z * (1.0 + 0.044715 * z2))
    out = 0.5 * z * (1.0 + th)

    def back(g):
        dinner = _SQRT_2_OVER_PI * (1.0 + 3 * 0.044715 * z2)
        return (g * (0.5 * (1.0 + th) + 0.5 * z * (1.0 - th * th) * dinner),)

    return _emit("gelu", out, (x,), back)


# -------------------------------------------------------------- contractions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from None
    out = np.matmul(a.data, b.data)

    def back(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                # fold batch dims into rows: one GEMM instead of a batched one
                a2 = a.data.reshape(-1, a.shape[-1])
                gb = a2.T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _emit("matmul", out, (a, b), back)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


# ------------------------------------------------------------------- shaping


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from None
    return _emit("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(np.transpose(x.data, axes))
    return _emit("transpose", out, (x,), lambda g: (np.transpose(g, inv),))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat: no inputs")
    nd = tensors[0].ndim
    ax = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(
            t.shape[i] != tensors[0].shape[i] for i in range(nd) if i != ax
        ):
            raise ShapeError(
                f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}"
            )
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def back(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors))
        )

    return _emit("concat", out, tensors, back)


def getitem(x: Tensor, index) -> Tensor:
    out = np.array(x.data[index], copy=True)
    if out.ndim > 0 and 0 in out.shape:
        raise ShapeError(f"getitem: index {index!r} selects nothing from {x.shape}")

    basic = _is_basic_index(index)

    def back(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _emit("getitem", out, (x,), back)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(
        i is None or i is Ellipsis or isinstance(i, (slice, int, np.integer)) for i in items
    )


# ---------------------------------------------------------------- reductions


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit("sum", np.asarray(out), (x,), back)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    out = np.mean(x.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _emit("mean", np.asarray(out), (x,), back)


def mse(a: Tensor, b) -> Tensor:
    """Mean of squared differences over all elements."""
    a, b = _pair(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"mse: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    n = diff.size
    out = np.asarray(np.mean(diff * diff))

    def back(g):
        ga = (2.0 / n) * g * diff
        return ga, -ga

    return _emit("mse", out, (a, b), back)


# ------------------------------------------------------------- normalisation


def layer_norm(x: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalise over the last axis; no affine parameters."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def back(g):
        gm = g.mean(axis=-1, keepdims=True)
        gxm = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gxm),)

    return _emit("layer_norm", xhat, (x,), back)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _emit("softmax", out, (x,), back)


# ---------------------------------------------------------------- resampling


def _linear_weights(n_in: int, n_out: int, dtype) -> np.ndarray:
    """(n_out, n_in) interpolation matrix, half-pixel centres, edge clamped."""
    w = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1:
        w[:, 0] = 1.0
        return w
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    rows = np.arange(n_out)
    np.add.at(w, (rows, lo), 1.0 - frac)
    np.add.at(w, (rows, hi), frac)
    return w


def _apply_axes(data: np.ndarray, mats: list[np.ndarray]) -> np.ndarray:
    # mats[k] acts on axis -3+k
    out = data
    for k, m in enumerate(mats):
        ax = out.ndim - 3 + k
        out = np.moveaxis(np.tensordot(out, m, axes=([ax], [1])), -1, ax)
    return np.ascontiguousarray(out)


def trilinear_resize(x: Tensor, size: tuple[int, int, int]) -> Tensor:
    """Trilinear interpolation of the last three axes to ``size``.

    Sample positions use half-pixel centres with edge clamping, so a grid of
    extent 1 along an axis is broadcast as a constant.
    """
    if x.ndim < 3:
        raise ShapeError(f"trilinear_resize: need rank >= 3, got {x.shape}")
    mats = [_linear_weights(n_in, int(n_out), x.dtype) for n_in, n_out in zip(x.shape[-3:], size)]
    out = _apply_axes(x.data, mats)
    return _emit(
        "trilinear_resize", out, (x,),
        lambda g: (_apply_axes(g, [m.T for m in mats]),),
    )


def _nearest_index(n_in: int, n_out: int) -> np.ndarray:
    return np.minimum((np.arange(n_out) * n_in) // n_out, n_in - 1)


def nearest_resize(x: Tensor, size: tuple[int, int, int]) -> Tensor:
    """Nearest-neighbour resampling of the last three axes."""
    if x.ndim < 3:
        raise ShapeError(f"nearest_resize: need rank >= 3, got {x.shape}")
    idx = [_nearest_index(n_in, int(n_out)) for n_in, n_out in zip(x.shape[-3:], size)]
    sel = (Ellipsis,) + np.ix_(*idx)
    out = np.ascontiguousarray(x.data[sel])

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, sel, g)
        return (full,)

    return _emit("nearest_resize", out, (x,), back)
