"""Central-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


class NondeterministicError(RuntimeError):
    pass


def _scalar(f: Callable[[], Tensor]) -> float:
    return float(np.asarray(f().data, dtype=np.float64).reshape(-1)[0])


def grad_check(
    f: Callable[..., Tensor],
    x: Tensor | Sequence[Tensor],
    eps: float = 1e-6,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between the tape gradient and central differences.

    ``f`` is called as ``f(x)`` for a single tensor; when ``x`` is a list of
    tensors (e.g. all model parameters) ``f`` takes no arguments and closes
    over them. All tensors must be float64.

    The per-coordinate error is
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.
    ``max_coords`` checks a random subset of coordinates per tensor instead
    of all of them.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError(f"eps must be in [1e-6, 1e-3], got {eps}")
    single = isinstance(x, Tensor)
    params = [x] if single else list(x)
    for p in params:
        if p.dtype != np.float64:
            raise TypeError("grad_check requires float64 tensors")
    call = (lambda: f(params[0])) if single else f

    base = _scalar(call)
    if _scalar(call) != base:
        raise NondeterministicError("f returned different values for identical inputs")

    saved = [(p.requires_grad, p.grad) for p in params]
    for p in params:
        p.requires_grad = True
        p.grad = None
    with Tape() as tape:
        y = call()
    tape.backward(y)
    analytic = [p.grad.copy() for p in params]
    for p, (rg, g) in zip(params, saved):
        p.requires_grad, p.grad = rg, g

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        ga = ga.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            fp = _scalar(call)
            flat[i] = orig - eps
            fm = _scalar(call)
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            a = float(ga[i])
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
