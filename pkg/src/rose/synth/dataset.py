"""Batch generation of filtered triplets and manifest I/O."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import CATEGORIES
from ..rvt import atomic_write_bytes, read_mask, read_video, rvt_write
from ..seeding import derive_seed, stream
from .camera import PRESETS, sample_camera_path
from .render import Triplet, render_triplet, valid_view_filter
from .scene import SceneError, sample_scene

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MAX_CONSECUTIVE_REJECTS = 100


class DatasetError(RuntimeError):
    pass


@dataclass
class RenderConfig:
    frames: int = 16
    height: int = 96
    width: int = 96
    master_seed: int = 0
    supersample: int = 1
    jitter_amplitude: float = 0.01
    min_fg_ratio: float = 0.005
    min_frame_fraction: float = 0.8
    categories: list[str] = field(default_factory=lambda: list(CATEGORIES))
    video_dtype: str = "float32"  # or "uint8"

    @classmethod
    def from_dict(cls, d: dict) -> "RenderConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def render_candidate(category: str, seed: int, config: RenderConfig) -> Triplet:
    scene = sample_scene(category, seed)
    preset = PRESETS[int(stream(seed, "camera-preset").integers(len(PRESETS)))]
    camera = sample_camera_path(preset, config.frames, seed, config.jitter_amplitude)
    return render_triplet(scene, camera, config.frames, (config.height, config.width), config.supersample)


def iter_accepted(category: str, count: int, config: RenderConfig, stream_name: str = "scene"):
    """Yield ``count`` triplets that pass the valid-view filter.

    Candidate seeds start from a value derived from the master seed and are
    incremented after every candidate, accepted or not.
    """
    seed = derive_seed(config.master_seed, stream_name, CATEGORIES.index(category))
    produced = rejects = 0
    while produced < count:
        try:
            tri = render_candidate(category, seed, config)
            keep, _ = valid_view_filter(tri, config.min_fg_ratio, config.min_frame_fraction)
        except SceneError as exc:
            log.debug("seed %d rejected: %s", seed, exc)
            keep = False
        seed += 1
        if not keep:
            rejects += 1
            if rejects > MAX_CONSECUTIVE_REJECTS:
                raise DatasetError(
                    f"{rejects} consecutive candidates rejected for category {category!r}; "
                    "the render/filter configuration is probably degenerate"
                )
            continue
        rejects = 0
        produced += 1
        yield tri


def _video_payload(video: np.ndarray, dtype: str) -> np.ndarray:
    if dtype == "uint8":
        return np.round(np.clip(video, 0.0, 1.0) * 255.0).astype(np.uint8)
    return video.astype(np.float32)


def write_triplet(tri: Triplet, directory: Path, video_dtype: str = "float32") -> dict:
    directory.mkdir(parents=True, exist_ok=True)
    rvt_write(directory / "original.rvt", _video_payload(tri.original, video_dtype))
    rvt_write(directory / "edited.rvt", _video_payload(tri.edited, video_dtype))
    rvt_write(directory / "mask.rvt", tri.mask)
    atomic_write_bytes(directory / "scene.json", json.dumps(tri.manifest, sort_keys=True).encode())
    return {"original": "original.rvt", "edited": "edited.rvt", "mask": "mask.rvt", "scene": "scene.json"}


def generate_dataset(count: int, config: RenderConfig, out_dir, stream_name: str = "scene") -> dict:
    """Render ``count`` accepted triplets per category into ``out_dir``.

    Writes ``<category>/<index>/{original,edited,mask}.rvt`` plus
    ``manifest.json`` and returns the manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for category in config.categories:
        if category not in CATEGORIES:
            raise DatasetError(f"unknown category {category!r}")
        for i, tri in enumerate(iter_accepted(category, count, config, stream_name)):
            rel = Path(category) / f"{i:03d}"
            files = write_triplet(tri, out / rel, config.video_dtype)
            entries.append(
                {
                    "category": category,
                    "scene_seed": tri.scene_seed,
                    **{k: str(rel / v) for k, v in files.items()},
                }
            )
            log.info("%s %d/%d seed=%d", category, i + 1, count, tri.scene_seed)
    manifest = {"schema_version": SCHEMA_VERSION, "config": asdict(config), "entries": entries}
    write_manifest(out / "manifest.json", manifest)
    return manifest


def write_manifest(path, manifest: dict) -> None:
    atomic_write_bytes(Path(path), (json.dumps(manifest, sort_keys=True, indent=1) + "\n").encode())


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot load manifest {path}: {exc}") from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"unsupported manifest schema {manifest.get('schema_version')!r}")
    root = path.parent
    for e in manifest.get("entries", []):
        if e.get("category") not in CATEGORIES:
            raise DatasetError(f"unknown category {e.get('category')!r} in {path}")
        for key in ("original", "mask"):
            if not (root / e[key]).exists():
                raise DatasetError(f"missing file {root / e[key]}")
    manifest["root"] = str(root)
    return manifest


def load_triplet(root, entry: dict) -> Triplet:
    root = Path(root)
    original = read_video(root / entry["original"])
    edited = read_video(root / entry["edited"]) if entry.get("edited") else original.copy()
    return Triplet(
        original=original,
        edited=edited,
        mask=read_mask(root / entry["mask"]),
        category=entry["category"],
        scene_seed=int(entry.get("scene_seed", 0)),
    )


def load_dataset(path) -> list[Triplet]:
    manifest = load_manifest(path)
    return [load_triplet(manifest["root"], e) for e in manifest["entries"]]


def shape_of(triplets) -> tuple[int, int, int]:
    shapes = {t.original.shape[:3] for t in triplets}
    if len(shapes) != 1:
        raise DatasetError(f"triplets have mixed resolutions: {sorted(shapes)}")
    return shapes.pop()


__all__ = [
    "DatasetError",
    "RenderConfig",
    "generate_dataset",
    "iter_accepted",
    "load_dataset",
    "load_manifest",
    "load_triplet",
    "render_candidate",
    "write_manifest",
    "write_triplet",
]
