"""Benchmark construction, evaluation and reporting."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import CATEGORIES
from ..masks import bbox
from ..rvt import atomic_write_bytes, rvt_write
from ..seeding import stream
from ..synth.dataset import (
    SCHEMA_VERSION,
    RenderConfig,
    generate_dataset,
    iter_accepted,
    load_manifest,
    load_triplet,
    write_manifest,
)
from .metrics import (
    MetricError,
    background_consistency,
    motion_smoothness,
    psnr,
    ssim,
    temporal_flicker,
)

log = logging.getLogger(__name__)

SUBSETS = ("synthetic_paired", "realistic_paired", "realistic_unpaired")
METRICS = ("psnr", "ssim", "flicker", "bg_consistency", "motion_smoothness")
DISPLAY = {
    "common": "Common",
    "shadow": "Shadow",
    "light_source": "Light Source",
    "reflection": "Reflection",
    "mirror": "Mirror",
    "translucent": "Translucent",
}
PROXY_NOTES = (
    "psnr, ssim: against ground truth (paired subsets only); ssim uses an 11-px Gaussian window",
    "flicker: mean |v[f+1]-v[f]| outside the mask (proxy, lower is better)",
    "bg_consistency: PSNR(input, output) outside the mask (proxy, higher is better)",
    "motion_smoothness: 1/(1+mean|v[f+1]-2v[f]+v[f-1]|) (proxy, higher is better)",
    "lpips: n/a (learned perceptual metric not computed)",
)


class BenchError(ValueError):
    pass


@dataclass
class EvalPair:
    input: np.ndarray
    mask: np.ndarray
    gt: np.ndarray | None = None
    output: np.ndarray | None = None
    category: str = "common"

    def __post_init__(self):
        if self.mask.shape != self.input.shape[:3]:
            raise BenchError(f"mask {self.mask.shape} does not match input {self.input.shape}")
        for name in ("gt", "output"):
            v = getattr(self, name)
            if v is not None and v.shape != self.input.shape:
                raise BenchError(f"{name} {v.shape} does not match input {self.input.shape}")


def shift_mask(mask: np.ndarray, offset: tuple[int, int]) -> np.ndarray:
    """Translate every frame by (dy, dx); pixels pushed off the frame are dropped."""
    dy, dx = (int(o) for o in offset)
    f, h, w = mask.shape
    out = np.zeros_like(mask)
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    if abs(dy) < h and abs(dx) < w:
        out[:, yd, xd] = mask[:, ys, xs]
    return out


def build_copy_paste_pair(src, src_mask, dst, offset=(0, 0), category: str = "common") -> EvalPair:
    """Paste ``src``'s masked pixels into ``dst`` at ``offset``; ``dst`` is the ground truth."""
    src = np.asarray(src)
    dst = np.asarray(dst)
    src_mask = np.asarray(src_mask, dtype=bool)
    if src.shape != dst.shape:
        raise BenchError(f"source {src.shape} and destination {dst.shape} differ")
    if src_mask.shape != src.shape[:3]:
        raise BenchError(f"mask {src_mask.shape} does not match source {src.shape}")
    mask = shift_mask(src_mask, offset)
    if src_mask.any() and not mask.any():
        raise BenchError(f"offset {tuple(offset)} moves the whole mask out of frame")
    dy, dx = (int(o) for o in offset)
    # wrapped pixels never land under the shifted mask
    moved = np.roll(src, (dy, dx), axis=(1, 2))
    inp = np.where(mask[..., None], moved, dst)
    return EvalPair(input=inp, mask=mask, gt=dst.copy(), category=category)


def _offset_keeping_mask(rng: np.random.Generator, mask: np.ndarray) -> tuple[int, int]:
    """Uniform offset such that the shifted mask stays fully inside the frame."""
    box = bbox(mask).any(axis=0)
    rows = np.flatnonzero(box.any(axis=1))
    cols = np.flatnonzero(box.any(axis=0))
    h, w = box.shape
    dy = int(rng.integers(-rows[0], h - rows[-1]))
    dx = int(rng.integers(-cols[0], w - cols[-1]))
    return dy, dx


def build_benchmark(out_dir, config: RenderConfig, per_category: int = 10) -> dict:
    """Write the three subsets under ``out_dir`` and return their manifests."""
    out = Path(out_dir)
    manifests = {"synthetic_paired": generate_dataset(per_category, config, out / "synthetic_paired", "bench")}

    # realistic paired: objects from one rendered clip pasted into a different clip's clean video
    pool = {c: list(iter_accepted(c, 2 * per_category, config, "bench-copy")) for c in config.categories}
    entries = []
    root = out / "realistic_paired"
    for c in config.categories:
        rng = stream(config.master_seed, "copy-paste", CATEGORIES.index(c))
        for i in range(per_category):
            src, dst = pool[c][2 * i], pool[c][2 * i + 1]
            offset = _offset_keeping_mask(rng, src.mask)
            pair = build_copy_paste_pair(src.original, src.mask, dst.edited, offset, c)
            rel = Path(c) / f"{i:03d}"
            (root / rel).mkdir(parents=True, exist_ok=True)
            rvt_write(root / rel / "original.rvt", pair.input.astype(np.float32))
            rvt_write(root / rel / "edited.rvt", pair.gt.astype(np.float32))
            rvt_write(root / rel / "mask.rvt", pair.mask)
            entries.append({
                "category": c,
                "scene_seed": src.scene_seed,
                "dst_seed": dst.scene_seed,
                "offset": list(offset),
                "original": str(rel / "original.rvt"),
                "edited": str(rel / "edited.rvt"),
                "mask": str(rel / "mask.rvt"),
            })
    manifests["realistic_paired"] = _finish(root, config, entries)

    # realistic unpaired: inputs and masks only
    entries = []
    root = out / "realistic_unpaired"
    for c in config.categories:
        for i, tri in enumerate(iter_accepted(c, per_category, config, "bench-unpaired")):
            rel = Path(c) / f"{i:03d}"
            (root / rel).mkdir(parents=True, exist_ok=True)
            rvt_write(root / rel / "original.rvt", tri.original.astype(np.float32))
            rvt_write(root / rel / "mask.rvt", tri.mask)
            entries.append({"category": c, "scene_seed": tri.scene_seed,
                            "original": str(rel / "original.rvt"), "mask": str(rel / "mask.rvt")})
    manifests["realistic_unpaired"] = _finish(root, config, entries)
    return manifests


def _finish(root: Path, config: RenderConfig, entries: list[dict]) -> dict:
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"schema_version": SCHEMA_VERSION, "config": asdict(config), "entries": entries}
    write_manifest(root / "manifest.json", manifest)
    return manifest


def load_pairs(bench_dir, subset: str) -> list[EvalPair]:
    if subset not in SUBSETS:
        raise BenchError(f"unknown subset {subset!r}; expected one of {SUBSETS}")
    path = Path(bench_dir)
    if (path / subset / "manifest.json").exists():
        path = path / subset
    manifest = load_manifest(path)
    pairs = []
    for e in manifest["entries"]:
        paired = bool(e.get("edited")) and subset != "realistic_unpaired"
        tri = load_triplet(manifest["root"], e)
        pairs.append(EvalPair(tri.original, tri.mask, tri.edited if paired else None, category=tri.category))
    return pairs


Method = Callable[[np.ndarray, np.ndarray], np.ndarray]


def identity_method(video, mask):
    return np.asarray(video)


def score_pair(pair: EvalPair) -> dict[str, float]:
    if pair.output is None:
        raise BenchError("pair has no output")
    out = np.clip(pair.output, 0.0, 1.0)
    static = ~pair.mask
    row = {
        "psnr": float("nan"),
        "ssim": float("nan"),
        "flicker": temporal_flicker(out, static) if (static[1:] & static[:-1]).any() else 0.0,
        "bg_consistency": background_consistency(pair.input, out, pair.mask),
        "motion_smoothness": motion_smoothness(out),
    }
    if pair.gt is not None:
        row["psnr"] = psnr(out, pair.gt)
        row["ssim"] = ssim(out, pair.gt)
    return row


@dataclass
class MetricReport:
    subset: str
    rows: dict[str, dict[str, float]]
    counts: dict[str, int]
    metrics: tuple[str, ...] = METRICS
    notes: tuple[str, ...] = PROXY_NOTES
    per_sample: list[dict] = field(default_factory=list)

    @property
    def mean(self) -> dict[str, float]:
        out = {}
        for m in self.metrics:
            vals = [r[m] for r in self.rows.values() if np.isfinite(r[m])]
            out[m] = float(np.mean(vals)) if vals else float("nan")
        return out

    def table_rows(self) -> list[tuple[str, dict[str, float], int]]:
        ordered = [c for c in CATEGORIES if c in self.rows] + [c for c in self.rows if c not in CATEGORIES]
        rows = [(DISPLAY.get(c, c), self.rows[c], self.counts[c]) for c in ordered]
        rows.append(("Mean", self.mean, sum(self.counts.values())))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["category", *self.metrics, "lpips", "n"])
        for name, vals, n in self.table_rows():
            w.writerow([name, *(_fmt(vals[m]) for m in self.metrics), "n/a", n])
        return buf.getvalue()

    def to_text(self) -> str:
        header = ["Category", *self.metrics, "lpips", "n"]
        body = [[name, *(_fmt(vals[m]) for m in self.metrics), "n/a", str(n)] for name, vals, n in self.table_rows()]
        widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
        lines = [f"# subset: {self.subset}", *(f"# {n}" for n in self.notes)]
        fmt = lambda r: "  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(r))
        lines.append(fmt(header))
        lines.append("  ".join("-" * w for w in widths))
        lines += [fmt(r) for r in body]
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.subset}.csv"
        txt_path = out / f"{self.subset}.txt"
        atomic_write_bytes(csv_path, self.to_csv().encode())
        atomic_write_bytes(txt_path, self.to_text().encode())
        return csv_path, txt_path


def _fmt(x: float) -> str:
    return "n/a" if not np.isfinite(x) else f"{x:.4f}"


def aggregate(subset: str, pairs: list[EvalPair]) -> MetricReport:
    by_cat: dict[str, list[dict]] = {}
    per_sample = []
    for p in pairs:
        row = score_pair(p)
        by_cat.setdefault(p.category, []).append(row)
        per_sample.append({"category": p.category, **row})
    rows, counts = {}, {}
    for c, rs in by_cat.items():
        rows[c] = {m: float(np.mean([r[m] for r in rs])) for m in METRICS}
        counts[c] = len(rs)
    for c, r in rows.items():
        for m in ("flicker", "bg_consistency", "motion_smoothness"):
            if not np.isfinite(r[m]):
                raise MetricError(f"non-finite {m} for category {c}")
    return MetricReport(subset, rows, counts, per_sample=per_sample)


def run_benchmark(method: Method, bench_dir, subset: str = "synthetic_paired") -> MetricReport:
    """Run ``method(video, mask) -> output`` over a subset and aggregate per category."""
    pairs = load_pairs(bench_dir, subset)
    for i, p in enumerate(pairs):
        p.output = np.asarray(method(p.input, p.mask), dtype=np.float32)
        if p.output.shape != p.input.shape:
            raise BenchError(f"method returned {p.output.shape} for input {p.input.shape}")
        log.info("%s %d/%d", subset, i + 1, len(pairs))
    return aggregate(subset, pairs)


def model_method(model, steps: int = 50, seed: int = 0, threshold: float = 0.5) -> Method:
    """Wrap a trained model as a benchmark method (sample + composite)."""
    from ..train import ResolutionError, infer

    cfg = model.config
    counter = [0]

    def run(video, mask):
        if video.shape[:3] != (cfg.frames, cfg.height, cfg.width):
            raise ResolutionError(
                f"benchmark video {video.shape[:3]} does not match checkpoint {(cfg.frames, cfg.height, cfg.width)}"
            )
        out, _, _ = infer(model, video, mask, steps, seed + counter[0], threshold)
        counter[0] += 1
        return out

    return run


def report_json(report: MetricReport) -> str:
    return json.dumps({"subset": report.subset, "rows": report.rows, "mean": report.mean,
                       "counts": report.counts}, sort_keys=True, indent=1)
