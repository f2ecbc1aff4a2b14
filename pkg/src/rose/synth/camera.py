"""Camera trajectories: a few presets plus smooth, bounded angular jitter."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PRESETS = ("static", "dolly", "orbit", "zoom_in", "zoom_out")

# invented ranges: the trajectories only need to keep the target in frame
DISTANCE_RANGE = (4.2, 5.5)
ELEVATION_RANGE = (math.radians(14), math.radians(26))
AZIMUTH_RANGE = (math.radians(-25), math.radians(25))
LOOK_AT = (0.0, 0.45, 0.0)
FOV = math.radians(45)


@dataclass
class CameraPath:
    preset: str
    positions: np.ndarray  # (F, 3)
    look_at: np.ndarray  # (F, 3)
    fov: np.ndarray  # (F,) vertical field of view, radians
    jitter_amplitude: float

    def __len__(self) -> int:
        return len(self.positions)

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "positions": self.positions.tolist(),
            "look_at": self.look_at.tolist(),
            "fov": self.fov.tolist(),
            "jitter_amplitude": self.jitter_amplitude,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPath":
        return cls(
            preset=d["preset"],
            positions=np.asarray(d["positions"], dtype=np.float64),
            look_at=np.asarray(d["look_at"], dtype=np.float64),
            fov=np.asarray(d["fov"], dtype=np.float64),
            jitter_amplitude=float(d["jitter_amplitude"]),
        )


def sample_camera_path(preset: str, frames: int, seed: int, jitter_amplitude: float = 0.01) -> CameraPath:
    """Deterministic per-frame poses for ``preset``.

    The camera sits on a sphere around a fixed look-at point. Presets vary
    the radius (zoom), the azimuth (orbit) or translate camera and look-at
    sideways (dolly). Jitter perturbs azimuth/elevation by at most
    ``jitter_amplitude`` radians and never touches the radius, so zoom
    presets stay strictly monotone in camera-target distance.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown camera preset {preset!r}; expected one of {PRESETS}")
    if frames < 1:
        raise ValueError("frames must be >= 1")
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, PRESETS.index(preset), 17])
    dist0 = rng.uniform(*DISTANCE_RANGE)
    elev0 = rng.uniform(*ELEVATION_RANGE)
    azim0 = rng.uniform(*AZIMUTH_RANGE)
    s = np.linspace(0.0, 1.0, frames) if frames > 1 else np.zeros(1)

    dist = np.full(frames, dist0)
    azim = np.full(frames, azim0)
    elev = np.full(frames, elev0)
    shift = np.zeros(frames)
    if preset == "zoom_in":
        dist = dist0 * (1.0 - 0.25 * s)
    elif preset == "zoom_out":
        dist = dist0 * (0.8 + 0.25 * s)
    elif preset == "orbit":
        azim = azim0 + rng.choice([-1.0, 1.0]) * math.radians(20) * s
    elif preset == "dolly":
        shift = rng.choice([-1.0, 1.0]) * 0.6 * (s - 0.5)

    if jitter_amplitude > 0:
        w = rng.uniform(0.3, 0.8, size=2)
        ph = rng.uniform(0, 2 * math.pi, size=2)
        k = np.arange(frames)
        azim = azim + jitter_amplitude * np.sin(w[0] * k + ph[0])
        elev = elev + jitter_amplitude * np.sin(w[1] * k + ph[1])

    look = np.tile(np.asarray(LOOK_AT, dtype=np.float64), (frames, 1))
    offsets = np.stack(
        [np.cos(elev) * np.sin(azim), np.sin(elev), np.cos(elev) * np.cos(azim)], axis=-1
    )
    pos = look + dist[:, None] * offsets
    if preset == "dolly":
        right = np.stack([np.cos(azim), np.zeros(frames), -np.sin(azim)], axis=-1)
        pos = pos + shift[:, None] * right
        look = look + shift[:, None] * right
    return CameraPath(
        preset=preset,
        positions=pos,
        look_at=look,
        fov=np.full(frames, FOV),
        jitter_amplitude=float(jitter_amplitude),
    )


def camera_rays(position, look_at, fov: float, height: int, width: int, supersample: int = 1):
    """Unit ray directions through pixel centres, shape (H*ss*W*ss, 3)."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(look_at, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, [0.0, 1.0, 0.0])
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    h, w = height * supersample, width * supersample
    tan_half = math.tan(fov / 2)
    aspect = width / height
    ys = (1.0 - (np.arange(h) + 0.5) / h * 2.0) * tan_half
    xs = ((np.arange(w) + 0.5) / w * 2.0 - 1.0) * tan_half * aspect
    d = forward + xs[None, :, None] * right + ys[:, None, None] * up
    d = d.reshape(-1, 3)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)
