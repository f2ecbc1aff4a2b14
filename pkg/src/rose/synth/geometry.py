"""Closed-form ray/primitive intersections and plane projections."""

from __future__ import annotations

import numpy as np

EPS = 1e-6


def project_shadow(point, light_dir, ground_y: float) -> np.ndarray:
    """Where the shadow of ``point`` lands on the plane ``y = ground_y``.

    ``light_dir`` points from the light into the scene and must have a
    negative vertical component.
    """
    p = np.asarray(point, dtype=np.float64)
    d = np.asarray(light_dir, dtype=np.float64)
    if d[1] >= 0:
        raise ValueError(f"light direction {tuple(d)} never reaches the ground")
    t = (ground_y - p[1]) / d[1]
    return p + t * d


def reflect_point(point, normal, offset: float) -> np.ndarray:
    """Mirror ``point`` across the plane ``normal . x = offset`` (unit normal)."""
    p = np.asarray(point, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    return p - 2.0 * (n @ p - offset) * n


def reflect_dirs(dirs: np.ndarray, normals: np.ndarray) -> np.ndarray:
    dn = np.sum(dirs * normals, axis=-1, keepdims=True)
    return dirs - 2.0 * dn * normals


def normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# Every intersect_* takes ray origins o (N,3) and unit directions d (N,3) and
# returns (t, normal) with t = inf where the ray misses.


def intersect_sphere(o, d, center, radius):
    oc = o - center
    b = np.sum(oc * d, axis=-1)
    c = np.sum(oc * oc, axis=-1) - radius * radius
    disc = b * b - c
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    t = np.where(t0 > EPS, t0, np.where(t1 > EPS, t1, np.inf))
    t = np.where(hit, t, np.inf)
    p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
    n = (p - center) / radius
    return t, n


def intersect_box(o, d, center, size):
    half = 0.5 * np.asarray(size)
    lo = center - half
    hi = center + half
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
    t1 = np.nan_to_num(t1, nan=-np.inf)
    t2 = np.nan_to_num(t2, nan=np.inf)
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    tnear = tmin.max(axis=-1)
    tfar = tmax.min(axis=-1)
    hit = (tnear <= tfar) & (tfar > EPS)
    t = np.where(hit, np.where(tnear > EPS, tnear, tfar), np.inf)
    axis = np.argmax(tmin, axis=-1)
    n = np.zeros_like(o)
    rows = np.arange(len(o))
    n[rows, axis] = -np.sign(d[rows, axis])
    return t, n


def intersect_billboard(o, d, center, size):
    """Vertical rectangle in the plane z = center.z, facing the ray."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (center[2] - o[:, 2]) / d[:, 2]
    t = np.where(np.isfinite(t) & (t > EPS), t, np.inf)
    p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
    inside = (np.abs(p[:, 0] - center[0]) <= 0.5 * size[0]) & (
        np.abs(p[:, 1] - center[1]) <= 0.5 * size[1]
    )
    t = np.where(inside, t, np.inf)
    n = np.zeros_like(o)
    n[:, 2] = -np.sign(d[:, 2])
    return t, n


def intersect_plane(o, d, normal, offset, bounds=None):
    """Plane ``normal . x = offset``; ``bounds`` = (center, half_width, height)
    restricts a vertical plane to a finite panel."""
    normal = np.asarray(normal, dtype=np.float64)
    denom = d @ normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (offset - o @ normal) / denom
    t = np.where(np.isfinite(t) & (t > EPS), t, np.inf)
    if bounds is not None:
        center, half_width, (y0, y1) = bounds
        p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
        tangent = np.cross(normal, [0.0, 1.0, 0.0])
        u = (p - center) @ tangent
        ok = (np.abs(u) <= half_width) & (p[:, 1] >= y0) & (p[:, 1] <= y1)
        t = np.where(ok, t, np.inf)
    n = np.broadcast_to(np.where(denom[:, None] < 0, normal, -normal), o.shape).copy()
    return t, n
