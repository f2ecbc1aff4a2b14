"""Binary mask algebra: difference masks, latent-grid pooling, augmentation, IoU.

Masks are numpy ``bool`` arrays of shape (F, H, W).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

AUGMENT_KINDS = ("original", "point", "bbox", "dilate", "erode")
DIFF_THRESHOLD = 0.09


@dataclass(frozen=True)
class AugmentKind:
    tag: str
    radius: int = 0

    def __post_init__(self):
        if self.tag not in AUGMENT_KINDS:
            raise ValueError(f"unknown augmentation {self.tag!r}")
        if self.tag in ("dilate", "erode") and self.radius < 1:
            raise ValueError(f"{self.tag} needs radius >= 1, got {self.radius}")


def _as_mask(m) -> np.ndarray:
    m = np.asarray(m)
    if m.dtype != bool:
        if not np.isin(m, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        m = m.astype(bool)
    if m.ndim != 3:
        raise ValueError(f"mask must be (F, H, W), got shape {m.shape}")
    return m


def diff_mask(x0, x0_edit, delta: float = DIFF_THRESHOLD) -> np.ndarray:
    """1 where the channel-vector L2 distance between the two videos exceeds ``delta``."""
    a = np.asarray(x0, dtype=np.float64)
    b = np.asarray(x0_edit, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"diff_mask: shapes {a.shape} and {b.shape} differ")
    if delta <= 0:
        raise ValueError("delta must be > 0")
    d = a - b
    return np.sqrt(np.sum(d * d, axis=-1)) > delta


def downsample_mask(mask, spatial_stride: int | tuple[int, int], temporal_stride: int = 1) -> np.ndarray:
    """Any-pooling over (temporal, spatial, spatial) blocks; ragged edges are zero-padded."""
    m = _as_mask(mask)
    sh, sw = (spatial_stride, spatial_stride) if np.isscalar(spatial_stride) else spatial_stride
    st = temporal_stride
    f, h, w = m.shape
    pf, ph, pw = -f % st, -h % sh, -w % sw
    if pf or ph or pw:
        m = np.pad(m, ((0, pf), (0, ph), (0, pw)))
    F, H, W = m.shape
    return m.reshape(F // st, st, H // sh, sh, W // sw, sw).any(axis=(1, 3, 5))


def upsample_nearest(mask, size) -> np.ndarray:
    m = np.asarray(mask)
    idx = [np.minimum((np.arange(n_out) * n_in) // n_out, n_in - 1) for n_in, n_out in zip(m.shape[-3:], size)]
    return m[(Ellipsis,) + np.ix_(*idx)]


def _square(radius: int) -> np.ndarray:
    s = np.zeros((1, 2 * radius + 1, 2 * radius + 1), dtype=bool)
    s[0] = True
    return s


def dilate(mask, radius: int) -> np.ndarray:
    return ndimage.binary_dilation(_as_mask(mask), structure=_square(radius))


def erode(mask, radius: int) -> np.ndarray:
    # pixels beyond the frame count as set, so a mask touching the border is
    # not eaten from outside and erode(dilate(m)) still contains m
    return ndimage.binary_erosion(_as_mask(mask), structure=_square(radius), border_value=1)


def bbox(mask) -> np.ndarray:
    m = _as_mask(mask)
    out = np.zeros_like(m)
    for f in range(m.shape[0]):
        rows = np.flatnonzero(m[f].any(axis=1))
        if rows.size == 0:
            continue
        cols = np.flatnonzero(m[f].any(axis=0))
        out[f, rows[0]: rows[-1] + 1, cols[0]: cols[-1] + 1] = True
    return out


def point(mask, rng: np.random.Generator) -> np.ndarray:
    m = _as_mask(mask)
    out = np.zeros_like(m)
    for f in range(m.shape[0]):
        ys, xs = np.nonzero(m[f])
        if ys.size:
            k = rng.integers(ys.size)
            out[f, ys[k], xs[k]] = True
    return out


def augment(mask, kind: AugmentKind, seed: int = 0) -> np.ndarray:
    """Apply one mask degradation, frame by frame."""
    m = _as_mask(mask)
    if kind.tag in ("point", "bbox") and not m.any():
        raise ValueError(f"{kind.tag} augmentation needs a non-empty mask")
    if kind.tag == "original":
        return m.copy()
    if kind.tag == "point":
        return point(m, np.random.default_rng(seed))
    if kind.tag == "bbox":
        return bbox(m)
    if kind.tag == "dilate":
        return dilate(m, kind.radius)
    return erode(m, kind.radius)


def sample_augment(rng: np.random.Generator, height: int = 96) -> AugmentKind:
    """Uniform over the five kinds; morphology radius uniform in 1..5 at 96 px,
    scaled with resolution."""
    tag = AUGMENT_KINDS[rng.integers(len(AUGMENT_KINDS))]
    radius = 0
    if tag in ("dilate", "erode"):
        top = max(1, round(5 * height / 96))
        radius = int(rng.integers(1, top + 1))
    return AugmentKind(tag, radius)


def iou(a, b) -> float:
    a = _as_mask(a)
    b = _as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"iou: shapes {a.shape} and {b.shape} differ")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)
