"""CPU ray caster producing aligned (original, edited, mask) video triplets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraPath, camera_rays
from .geometry import (
    intersect_billboard,
    intersect_box,
    intersect_plane,
    intersect_sphere,
    reflect_dirs,
)
from .scene import SceneError, SceneSpec

MISS, GROUND, MIRROR = -1, -2, -3

# light-source falloff E/d^2 is cut to zero below this level, so removing the
# emitter changes every lit pixel by a visible amount or not at all
RADIAL_CUTOFF = 0.25


@dataclass
class Triplet:
    original: np.ndarray  # (F, H, W, 3) float32 in [0, 1]
    edited: np.ndarray
    mask: np.ndarray  # (F, H, W) bool
    category: str
    scene_seed: int
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.original.shape == self.edited.shape and self.original.shape[:3] == self.mask.shape):
            raise ValueError(
                f"misaligned triplet: {self.original.shape}, {self.edited.shape}, {self.mask.shape}"
            )


@dataclass
class _Obj:
    index: int
    shape: str
    center: np.ndarray
    size: np.ndarray
    color: np.ndarray
    alpha: float
    emission: float


def _objects_at(scene: SceneSpec, frame: int, hide_target: bool) -> list[_Obj]:
    out = []
    for i, o in enumerate(scene.objects):
        if hide_target and i == scene.target_object_id:
            continue
        out.append(
            _Obj(i, o.shape, o.center_at(frame), np.asarray(o.size, dtype=np.float64),
                 np.asarray(o.color, dtype=np.float64), o.alpha, o.emission)
        )
    return out


def _intersect(o, d, obj: _Obj):
    if obj.shape == "sphere":
        return intersect_sphere(o, d, obj.center, 0.5 * obj.size[0])
    if obj.shape == "box":
        return intersect_box(o, d, obj.center, obj.size)
    return intersect_billboard(o, d, obj.center, obj.size)


def _nearest(o, d, objs, scene: SceneSpec, ground=True, mirror=True):
    """Nearest opaque hit. Returns (t, kind, normal); kind is an object index,
    GROUND, MIRROR or MISS."""
    n = len(d)
    t_best = np.full(n, np.inf)
    kind = np.full(n, MISS, dtype=np.int64)
    normal = np.zeros((n, 3))
    candidates = []
    if ground:
        gd = d[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            tg = (scene.ground_y - o[:, 1]) / gd
        tg = np.where((gd < 0) & np.isfinite(tg) & (tg > 1e-6), tg, np.inf)
        candidates.append((tg, GROUND, np.broadcast_to([0.0, 1.0, 0.0], (n, 3))))
    if mirror and scene.mirror_plane is not None:
        mp = scene.mirror_plane
        bounds = (np.asarray(mp.center), mp.half_width, (scene.ground_y, scene.ground_y + mp.height))
        tm, nm = intersect_plane(o, d, mp.normal, mp.offset, bounds)
        candidates.append((tm, MIRROR, nm))
    for obj in objs:
        if obj.alpha < 1.0:
            continue
        t, nn = _intersect(o, d, obj)
        candidates.append((t, obj.index, nn))
    for t, k, nn in candidates:
        closer = t < t_best
        t_best = np.where(closer, t, t_best)
        kind = np.where(closer, k, kind)
        normal = np.where(closer[:, None], nn, normal)
    return t_best, kind, normal


def _sky(scene: SceneSpec, d):
    top, horizon = (np.asarray(c) for c in scene.background)
    s = np.clip(d[:, 1:2] * 2.0, 0.0, 1.0)
    return horizon * (1.0 - s) + top * s


def _ground_albedo(scene: SceneSpec, p):
    r = np.hypot(p[:, 0], p[:, 2])
    fog = 0.75 + 0.25 * np.exp(-r / 6.0)
    return np.asarray(scene.ground_color) * fog[:, None]


def _radial(p, objs, skip_index=None):
    total = np.zeros(len(p))
    for obj in objs:
        if obj.emission <= 0 or obj.index == skip_index:
            continue
        d2 = np.sum((p - obj.center) ** 2, axis=-1)
        r = obj.emission / np.maximum(d2, 1e-6)
        total = total + np.where(r >= RADIAL_CUTOFF, np.minimum(r, 1.0), 0.0)
    return total


def _shade_object(scene, obj: _Obj, p, n, objs):
    light = scene.light
    lam = np.maximum(0.0, -(n @ np.asarray(light.direction)))
    shade = light.ambient + light.diffuse * lam
    col = obj.color * shade[:, None]
    col = col + obj.color * _radial(p, objs, skip_index=obj.index)[:, None]
    if obj.emission > 0:
        col = col + obj.emission * (0.5 + 0.5 * obj.color)
    return col


def _shade_ground(scene, p, objs, shadows: bool):
    light = scene.light
    ldir = np.asarray(light.direction)
    lam = max(0.0, -ldir[1])
    lit = np.ones(len(p))
    if shadows:
        to_light = np.broadcast_to(-ldir, p.shape)
        blocked = np.zeros(len(p), dtype=bool)
        for obj in objs:
            if obj.alpha < 1.0:
                continue
            t, _ = _intersect(p, to_light, obj)
            blocked |= np.isfinite(t)
        lit = np.where(blocked, 0.0, 1.0)
    albedo = _ground_albedo(scene, p)
    col = albedo * (light.ambient + light.diffuse * lam * lit)[:, None]
    return col + albedo * _radial(p, objs)[:, None]


def _shade_hits(scene, o, d, t, kind, normal, objs, *, shadows, reflect):
    """Colour for each ray given its nearest opaque hit."""
    n = len(d)
    col = _sky(scene, d)
    hit = kind != MISS
    p = o + np.where(hit, t, 0.0)[:, None] * d
    by_index = {obj.index: obj for obj in objs}
    for idx in np.unique(kind[kind >= 0]):
        sel = kind == idx
        col[sel] = _shade_object(scene, by_index[int(idx)], p[sel], normal[sel], objs)
    sel = kind == GROUND
    if sel.any():
        g = _shade_ground(scene, p[sel], objs, shadows)
        if reflect and scene.water_plane is not None:
            a = scene.water_plane.attenuation
            rd = reflect_dirs(d[sel], normal[sel])
            g = (1.0 - a) * g + a * _trace_reflection(scene, p[sel], rd, objs, ground=False)
        col[sel] = g
    sel = kind == MIRROR
    if sel.any():
        mp = scene.mirror_plane
        rd = reflect_dirs(d[sel], normal[sel])
        refl = _trace_reflection(scene, p[sel], rd, objs, ground=True)
        col[sel] = (1.0 - mp.attenuation) * np.asarray(mp.color) + mp.attenuation * refl
    assert col.shape == (n, 3)
    return col


def _trace_reflection(scene, o, d, objs, ground: bool):
    t, kind, normal = _nearest(o, d, objs, scene, ground=ground, mirror=False)
    return _shade_hits(scene, o, d, t, kind, normal, objs, shadows=False, reflect=False)


def render_frame(scene: SceneSpec, camera: CameraPath, frame: int, resolution, *,
                 hide_target: bool = False, supersample: int = 1):
    """Render one frame. Returns (rgb (H, W, 3) float64, target coverage (H, W))."""
    h, w = resolution
    objs = _objects_at(scene, frame, hide_target)
    o_single = camera.positions[frame]
    d = camera_rays(o_single, camera.look_at[frame], float(camera.fov[frame]), h, w, supersample)
    o = np.broadcast_to(o_single, d.shape).copy()

    t, kind, normal = _nearest(o, d, objs, scene)
    col = _shade_hits(scene, o, d, t, kind, normal, objs, shadows=scene.shadows, reflect=True)
    cov = (kind == scene.target_object_id).astype(np.float64)

    # front-to-back compositing of translucent objects in front of the opaque hit
    layers = []
    for obj in objs:
        if obj.alpha >= 1.0:
            continue
        tt, nn = _intersect(o, d, obj)
        front = tt < t
        if front.any():
            layers.append((tt, obj, nn, front))
    if layers:
        layers.sort(key=lambda item: item[1].index)
        depth = np.stack([lay[0] for lay in layers])
        order = np.argsort(depth, axis=0, kind="stable")
        trans = np.ones(len(d))
        acc = np.zeros_like(col)
        for rank in range(len(layers)):
            for li, (tt, obj, nn, front) in enumerate(layers):
                sel = front & (order[rank] == li)
                if not sel.any():
                    continue
                p = o[sel] + tt[sel, None] * d[sel]
                c = _shade_object(scene, obj, p, nn[sel], objs)
                contrib = obj.alpha * trans[sel]
                acc[sel] += contrib[:, None] * c
                if obj.index == scene.target_object_id:
                    cov[sel] = contrib
                trans[sel] *= 1.0 - obj.alpha
        col = acc + trans[:, None] * col

    col = np.clip(col, 0.0, 1.0)
    ss = supersample
    col = col.reshape(h, ss, w, ss, 3) if ss > 1 else col.reshape(h, 1, w, 1, 3)
    cov = cov.reshape(h, ss, w, ss) if ss > 1 else cov.reshape(h, 1, w, 1)
    return col.mean(axis=(1, 3)), cov.mean(axis=(1, 3))


def render_triplet(scene: SceneSpec, camera: CameraPath, frames: int, resolution,
                   supersample: int = 1) -> Triplet:
    """Render the scene with and without its target under identical camera,
    lighting and motion; the mask marks pixels where the target is the
    front-most surface (coverage >= 0.5 for translucent or supersampled
    edges)."""
    h, w = resolution
    if frames < 1:
        raise ValueError("frames must be >= 1")
    if h < 16 or w < 16:
        raise ValueError(f"resolution must be at least 16x16, got {h}x{w}")
    if len(camera) != frames:
        raise ValueError(f"camera path has {len(camera)} poses for {frames} frames")
    scene.validate()

    original = np.empty((frames, h, w, 3), dtype=np.float32)
    edited = np.empty_like(original)
    mask = np.empty((frames, h, w), dtype=bool)
    for f in range(frames):
        rgb, cov = render_frame(scene, camera, f, (h, w), supersample=supersample)
        original[f] = rgb
        mask[f] = cov >= 0.5
        edited[f], _ = render_frame(scene, camera, f, (h, w), hide_target=True, supersample=supersample)
    if not mask.any():
        raise SceneError("target object is outside every frame")
    return Triplet(
        original=original,
        edited=edited,
        mask=mask,
        category=scene.category,
        scene_seed=scene.seed,
        manifest={"scene": scene.to_dict(), "camera": camera.to_dict(), "supersample": supersample},
    )


def valid_view_filter(triplet_or_mask, min_fg_ratio: float = 0.005, min_frame_fraction: float = 0.8):
    """Keep a clip iff enough frames show enough of the target.

    Returns ``(keep, per_frame_ratios)``.
    """
    mask = triplet_or_mask.mask if isinstance(triplet_or_mask, Triplet) else np.asarray(triplet_or_mask)
    if not (0.0 <= min_fg_ratio <= 1.0 and 0.0 <= min_frame_fraction <= 1.0):
        raise ValueError("filter thresholds must lie in [0, 1]")
    if mask.size == 0 or mask.ndim != 3:
        raise ValueError(f"expected a non-empty (F, H, W) mask, got shape {mask.shape}")
    ratios = mask.reshape(mask.shape[0], -1).astype(np.float64).mean(axis=1)
    frac = float(np.mean(ratios >= min_fg_ratio))
    return frac >= min_frame_fraction, ratios.tolist()
