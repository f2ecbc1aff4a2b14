"""Scene description types and the per-category random scene sampler."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import CATEGORIES

SHAPES = ("sphere", "box", "billboard")


class SceneError(ValueError):
    """A scene violates its invariants or is inconsistent with its category."""


Vec3 = tuple[float, float, float]


@dataclass
class ObjectSpec:
    shape: str
    center: Vec3
    size: Vec3  # full extents; spheres use size[0] as diameter
    color: Vec3
    alpha: float = 1.0
    emission: float = 0.0
    motion: Vec3 = (0.0, 0.0, 0.0)  # world units per frame

    def validate(self) -> None:
        if self.shape not in SHAPES:
            raise SceneError(f"unknown shape {self.shape!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise SceneError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.emission < 0:
            raise SceneError(f"emission must be >= 0, got {self.emission}")
        if min(self.size) <= 0:
            raise SceneError(f"size must be positive, got {self.size}")
        if any(not 0.0 <= c <= 1.0 for c in self.color):
            raise SceneError(f"color out of [0, 1]: {self.color}")

    def center_at(self, frame: int) -> np.ndarray:
        return np.asarray(self.center) + frame * np.asarray(self.motion)


@dataclass
class LightSpec:
    direction: Vec3
    ambient: float = 0.35
    diffuse: float = 0.55

    def validate(self) -> None:
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise SceneError(f"light direction must be unit length, got |d|={np.linalg.norm(d)}")
        if d[1] >= 0:
            raise SceneError("light must come from above (negative vertical component)")
        if not (0 <= self.ambient <= 1 and 0 <= self.diffuse <= 1):
            raise SceneError("ambient and diffuse must lie in [0, 1]")


@dataclass
class PlaneSpec:
    """Reflective plane ``normal . x = offset``.

    ``half_width``/``height`` bound a vertical mirror panel; a water plane
    leaves them unset and covers the whole ground.
    """

    normal: Vec3
    offset: float
    attenuation: float
    color: Vec3 = (0.2, 0.22, 0.25)
    center: Vec3 = (0.0, 0.0, 0.0)
    half_width: float | None = None
    height: float | None = None

    def validate(self) -> None:
        if not 0.0 <= self.attenuation <= 1.0:
            raise SceneError(f"attenuation must be in [0, 1], got {self.attenuation}")
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-9:
            raise SceneError("plane normal must be unit length")


@dataclass
class SceneSpec:
    category: str
    objects: list[ObjectSpec]
    target_object_id: int
    light: LightSpec
    ground_y: float = 0.0
    ground_color: Vec3 = (0.45, 0.43, 0.4)
    background: tuple[Vec3, Vec3] = ((0.55, 0.65, 0.8), (0.85, 0.88, 0.92))  # (top, horizon)
    shadows: bool = False
    mirror_plane: PlaneSpec | None = None
    water_plane: PlaneSpec | None = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def target(self) -> ObjectSpec:
        return self.objects[self.target_object_id]

    def validate(self) -> None:
        if self.category not in CATEGORIES:
            raise SceneError(f"unknown category {self.category!r}")
        if not 0 <= self.target_object_id < len(self.objects):
            raise SceneError(
                f"target_object_id {self.target_object_id} out of range for {len(self.objects)} objects"
            )
        for obj in self.objects:
            obj.validate()
        self.light.validate()
        for plane in (self.mirror_plane, self.water_plane):
            if plane is not None:
                plane.validate()
        target = self.target
        cat = self.category
        if cat == "mirror" and self.mirror_plane is None:
            raise SceneError("category 'mirror' requires a mirror_plane")
        if cat == "reflection" and self.water_plane is None:
            raise SceneError("category 'reflection' requires a water_plane")
        if cat == "light_source" and target.emission <= 0:
            raise SceneError("category 'light_source' requires an emissive target")
        if cat == "translucent" and target.alpha >= 1.0:
            raise SceneError("category 'translucent' requires a target with alpha < 1")
        if cat == "shadow" and not self.shadows:
            raise SceneError("category 'shadow' requires shadows enabled")
        for i, obj in enumerate(self.objects):
            if i != self.target_object_id and (obj.alpha < 1.0 or obj.emission > 0):
                raise SceneError("only the target object may be translucent or emissive")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["objects"] = [ObjectSpec(**_tuples(o)) for o in d["objects"]]
        d["light"] = LightSpec(**_tuples(d["light"]))
        for key in ("mirror_plane", "water_plane"):
            if d.get(key) is not None:
                d[key] = PlaneSpec(**_tuples(d[key]))
        d["background"] = tuple(tuple(c) for c in d["background"])
        d["ground_color"] = tuple(d["ground_color"])
        return cls(**d)


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


# Target colours are saturated and distractors muted so that the target
# always contrasts with sky, ground and other objects.
_TARGET_PALETTE = (
    (0.9, 0.15, 0.1),
    (0.1, 0.25, 0.9),
    (0.1, 0.75, 0.2),
    (0.95, 0.8, 0.1),
    (0.8, 0.1, 0.8),
    (0.95, 0.45, 0.05),
)
_DISTRACTOR_PALETTE = (
    (0.55, 0.5, 0.45),
    (0.35, 0.45, 0.5),
    (0.6, 0.55, 0.35),
    (0.4, 0.35, 0.4),
)


def _jitter_color(rng, color, amount=0.05):
    return tuple(float(np.clip(c + rng.uniform(-amount, amount), 0.0, 1.0)) for c in color)


def _make_object(rng, shape, xz, scale, color, ground_y):
    if shape == "sphere":
        size = (scale, scale, scale)
        cy = ground_y + 0.5 * scale
    elif shape == "box":
        size = (scale * rng.uniform(0.8, 1.2), scale * rng.uniform(0.8, 1.3), scale * rng.uniform(0.8, 1.2))
        cy = ground_y + 0.5 * size[1]
    else:
        size = (scale * rng.uniform(0.9, 1.2), scale * rng.uniform(1.0, 1.4), 0.01)
        cy = ground_y + 0.5 * size[1]
    return ObjectSpec(
        shape=shape,
        center=(float(xz[0]), float(cy), float(xz[1])),
        size=tuple(float(s) for s in size),
        color=color,
    )


def sample_scene(category: str, seed: int) -> SceneSpec:
    """Random scene of the given side-effect category, deterministic in ``seed``.

    The target sits near the origin (where cameras look); zero to two muted
    distractors are scattered behind or beside it.
    """
    if category not in CATEGORIES:
        raise SceneError(f"unknown category {category!r}")
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, CATEGORIES.index(category)])
    ground_y = 0.0

    # the billboard is flat and hides its own side effects, so the
    # categories that depend on a visible side effect use solids
    shapes = SHAPES if category in ("common", "translucent") else ("sphere", "box")
    target_shape = shapes[rng.integers(len(shapes))]
    scale = rng.uniform(0.8, 1.1)
    target = _make_object(
        rng, target_shape, (rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)), scale,
        _jitter_color(rng, _TARGET_PALETTE[rng.integers(len(_TARGET_PALETTE))]), ground_y,
    )
    speed = rng.uniform(0.0, 0.025)
    heading = rng.uniform(0, 2 * math.pi)
    target.motion = (float(speed * math.cos(heading)), 0.0, float(speed * math.sin(heading)))

    objects = [target]
    for _ in range(int(rng.integers(0, 3))):
        ang = rng.uniform(math.pi * 0.6, math.pi * 1.4)  # behind the target, seen from +z
        r = rng.uniform(2.2, 3.5)
        xz = (r * math.sin(ang), r * math.cos(ang))
        objects.append(
            _make_object(
                rng, ("sphere", "box")[rng.integers(2)], xz, rng.uniform(0.6, 1.0),
                _jitter_color(rng, _DISTRACTOR_PALETTE[rng.integers(len(_DISTRACTOR_PALETTE))]),
                ground_y,
            )
        )
    order = rng.permutation(len(objects))
    objects = [objects[i] for i in order]
    target_id = int(np.argmax(order == 0))

    # light mostly from the side so cast shadows fall beside the target
    az = rng.uniform(0, 2 * math.pi) if category != "shadow" else rng.choice([-1, 1]) * rng.uniform(1.2, 1.9)
    elev = rng.uniform(math.radians(40), math.radians(60))
    direction = np.array(
        [math.cos(elev) * math.sin(az), -math.sin(elev), -math.cos(elev) * math.cos(az)]
    )
    direction /= np.linalg.norm(direction)
    light = LightSpec(
        direction=tuple(float(v) for v in direction),
        ambient=float(rng.uniform(0.32, 0.4)),
        diffuse=float(rng.uniform(0.45, 0.5)),
    )

    g = rng.uniform(0.38, 0.5)
    ground_color = _jitter_color(rng, (g, g * 0.97, g * 0.92), 0.03)
    top = _jitter_color(rng, (0.5, 0.62, 0.82), 0.05)
    horizon = _jitter_color(rng, (0.82, 0.86, 0.9), 0.04)

    scene = SceneSpec(
        category=category,
        objects=objects,
        target_object_id=target_id,
        light=light,
        ground_y=ground_y,
        ground_color=ground_color,
        background=(top, horizon),
        shadows=category == "shadow",
        seed=int(seed),
    )
    t = scene.objects[target_id]
    if category == "light_source":
        t.emission = float(rng.uniform(0.7, 1.0))
    elif category == "translucent":
        t.alpha = float(rng.uniform(0.55, 0.8))
    elif category == "reflection":
        scene.water_plane = PlaneSpec(
            normal=(0.0, 1.0, 0.0), offset=ground_y, attenuation=float(rng.uniform(0.5, 0.7)),
            color=ground_color,
        )
    elif category == "mirror":
        # panel behind and to the side, angled so the target's image is not
        # hidden behind the target itself
        yaw = rng.choice([-1, 1]) * rng.uniform(math.radians(20), math.radians(35))
        normal = np.array([math.sin(yaw), 0.0, math.cos(yaw)])
        c = np.array([-math.sin(yaw) * 1.6, ground_y, -1.6 * math.cos(yaw)])
        scene.mirror_plane = PlaneSpec(
            normal=tuple(float(v) for v in normal),
            offset=float(normal @ c),
            attenuation=float(rng.uniform(0.6, 0.8)),
            color=(0.2, 0.22, 0.25),
            center=tuple(float(v) for v in c),
            half_width=2.5,
            height=2.2,
        )
        # keep distractors in front of the mirror
        for obj in scene.objects:
            if obj is not t:
                p = np.asarray(obj.center)
                dist = normal @ p - scene.mirror_plane.offset
                if dist < 0.8:
                    obj.center = tuple(float(v) for v in p + (0.8 - dist) * normal)
    scene.validate()
    return scene
