"""Linear-beta DDPM noise schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NoiseSchedule:
    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise ValueError("betas must be a non-empty 1-d array")
        if not (b[0] > 0 and b[-1] < 1 and np.all(np.diff(b) >= 0)):
            raise ValueError("betas must be non-decreasing inside (0, 1)")
        self.betas = b
        self.alphas = 1.0 - b
        self.alpha_bar = np.cumprod(self.alphas)

    @classmethod
    def linear(cls, timesteps: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> "NoiseSchedule":
        return cls(np.linspace(beta_start, beta_end, timesteps))

    @property
    def T(self) -> int:
        return len(self.betas)

    def abar(self, t: int) -> float:
        """Cumulative alpha product at 1-based step ``t``; ``abar(0) == 1``."""
        if t == 0:
            return 1.0
        self._check(t)
        return float(self.alpha_bar[t - 1])

    def _check(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")


def add_noise(x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Forward process sample x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    if np.shape(eps) != np.shape(x0):
        raise ValueError(f"eps shape {np.shape(eps)} != x0 shape {np.shape(x0)}")
    schedule._check(t)
    ab = schedule.alpha_bar[t - 1]
    dtype = np.result_type(x0, eps)
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(dtype, copy=False)
