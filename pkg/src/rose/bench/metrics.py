"""Paired metrics (PSNR, SSIM) and closed-form unpaired proxies.

The unpaired scores are simple pixel statistics, not learned VBench models:

* temporal_flicker: mean |v[f+1] - v[f]| over a static region (lower is better)
* background_consistency: PSNR(input, output) outside the edit region
* motion_smoothness: 1 / (1 + mean |v[f+1] - 2 v[f] + v[f-1]|), in (0, 1]
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

PSNR_CAP = 99.0
MSE_FLOOR = 1e-10


class MetricError(ValueError):
    pass


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _psnr_from_mse(mse: float) -> float:
    if mse < MSE_FLOOR:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def psnr(a, b) -> float:
    a, b = _pair(a, b)
    return _psnr_from_mse(float(np.mean((a - b) ** 2)))


def masked_psnr(a, b, region) -> float:
    """PSNR over the pixels (all channels) where ``region`` (F, H, W) is set."""
    a, b = _pair(a, b)
    region = np.asarray(region, dtype=bool)
    if region.shape != a.shape[:3]:
        raise MetricError(f"region {region.shape} does not match video {a.shape[:3]}")
    if not region.any():
        raise MetricError("empty region")
    return _psnr_from_mse(float(np.mean((a[region] - b[region]) ** 2)))


def gaussian_window(size: int) -> np.ndarray:
    sigma = size / 6.0
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def default_window(height: int, width: int) -> int:
    w = min(11, height, width)
    return w if w % 2 else w - 1


def ssim(a, b, window: int | None = None, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean over frames and channels of Gaussian-window SSIM (valid region, L = 1)."""
    a, b = _pair(a, b)
    if a.ndim == 3:
        a, b = a[..., None], b[..., None]
    if a.ndim != 4:
        raise MetricError(f"expected (F, H, W[, C]) video, got {a.shape}")
    _, h, w, _ = a.shape
    if window is None:
        window = default_window(h, w)
    if window < 1 or window % 2 == 0:
        raise MetricError(f"window must be odd and positive, got {window}")
    if window > min(h, w):
        raise MetricError(f"window {window} larger than frame {h}x{w}")
    c1 = (k1 * 1.0) ** 2
    c2 = (k2 * 1.0) ** 2
    kern = gaussian_window(window)[None, :, :, None]

    def filt(x):
        # 'valid' correlation over (H, W) only
        return _valid_filter(x, kern)

    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a**2
    sbb = filt(b * b) - mu_b**2
    sab = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    smap = num / den
    per_frame = smap.mean(axis=(1, 2, 3))
    return float(per_frame.mean())


def _valid_filter(x: np.ndarray, kern: np.ndarray) -> np.ndarray:
    full = ndimage.correlate(x, kern, mode="constant")
    r = kern.shape[1] // 2
    h, w = x.shape[1:3]
    return full[:, r: h - r, r: w - r, :]


def temporal_flicker(v, static_mask=None) -> float:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] < 2:
        raise MetricError("temporal_flicker needs at least 2 frames")
    d = np.abs(v[1:] - v[:-1])
    if d.ndim == 4:
        d = d.mean(axis=-1)
    if static_mask is None:
        return float(d.mean())
    m = np.asarray(static_mask, dtype=bool)
    if m.shape != v.shape[:3]:
        raise MetricError(f"static mask {m.shape} does not match video {v.shape[:3]}")
    # a pixel counts as static across a frame pair when it is static in both
    pair = m[1:] & m[:-1]
    if not pair.any():
        raise MetricError("static region is empty")
    return float(d[pair].mean())


def background_consistency(inp, out, edit_region) -> float:
    region = np.asarray(edit_region, dtype=bool)
    if not (~region).any():
        raise MetricError("edit region covers the whole video; no background left")
    return masked_psnr(inp, out, ~region)


def motion_smoothness(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] < 3:
        raise MetricError("motion_smoothness needs at least 3 frames")
    d2 = v[2:] - 2.0 * v[1:-1] + v[:-2]
    return float(1.0 / (1.0 + np.abs(d2).mean()))


__all__ = [
    "MetricError",
    "PSNR_CAP",
    "background_consistency",
    "default_window",
    "gaussian_window",
    "masked_psnr",
    "motion_smoothness",
    "psnr",
    "ssim",
    "temporal_flicker",
]
