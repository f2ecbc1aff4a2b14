"""``rose`` command line: generate | filter | augment | train | infer | eval | bench.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import CATEGORIES, __version__
from .autodiff import NumericError
from .masks import AUGMENT_KINDS, AugmentKind, augment, sample_augment
from .rvt import RvtError, atomic_write_bytes, read_mask, read_video, rvt_write
from .seeding import stream

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
log = logging.getLogger("rose")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ config


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file of option defaults; flags override its keys")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _int_list(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def _str_list(s: str) -> list[str]:
    return [x for x in s.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="rose", description="Reference-conditioned video object removal toolkit.")
    root.add_argument("--version", action="version", version=f"rose {__version__}")
    sub = root.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("generate", help="render filtered (original, edited, mask) triplets")
    _common(p)
    p.add_argument("--count", type=int, help="accepted triplets per category")
    p.add_argument("--frames", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--categories", type=_str_list, help=f"comma list from {','.join(CATEGORIES)}")
    p.add_argument("--supersample", type=int)
    p.add_argument("--video-dtype", choices=("float32", "uint8"))

    p = sub.add_parser("filter", help="re-apply the valid-view filter to a dataset")
    _common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--min-fg-ratio", type=float)
    p.add_argument("--min-frame-fraction", type=float)

    p = sub.add_parser("augment", help="write degraded masks for a dataset")
    _common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--kind", choices=(*AUGMENT_KINDS, "random"))
    p.add_argument("--radius", type=int)

    p = sub.add_parser("train", help="train a model on a dataset")
    _common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--conditioning", choices=("reference", "baseline"))
    p.add_argument("--no-augment", dest="augment", action="store_const", const=False)
    p.add_argument("--categories", type=_str_list, help="restrict training to these categories")
    p.add_argument("--limit", type=int, help="use at most this many triplets")
    p.add_argument("--patch", type=_int_list, help="p_t,p_h,p_w")
    p.add_argument("--dim", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--taps", type=_int_list)

    p = sub.add_parser("infer", help="remove the masked object from a video")
    _common(p)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--video", type=Path)
    p.add_argument("--mask", type=Path)
    p.add_argument("--steps", type=int, help="DDIM steps")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("eval", help="score an output video")
    _common(p)
    p.add_argument("--output", type=Path, help="model output video (.rvt)")
    p.add_argument("--input", type=Path, help="input video (.rvt)")
    p.add_argument("--mask", type=Path)
    p.add_argument("--gt", type=Path, help="ground-truth video (.rvt), optional")

    p = sub.add_parser("bench", help="build and/or run the benchmark")
    _common(p)
    p.add_argument("--bench-dir", type=Path, help="benchmark root; built there when missing")
    p.add_argument("--subset", choices=("synthetic_paired", "realistic_paired", "realistic_unpaired"))
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--method", choices=("model", "identity", "oracle"))
    p.add_argument("--count", type=int, help="triplets per category when building")
    p.add_argument("--frames", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--steps", type=int, help="DDIM steps")
    return root


DEFAULTS = {
    "generate": {"count": 10, "frames": 16, "height": 96, "width": 96, "categories": list(CATEGORIES),
                 "supersample": 1, "video_dtype": "float32"},
    "filter": {"data": None, "min_fg_ratio": 0.005, "min_frame_fraction": 0.8},
    "augment": {"data": None, "kind": "random", "radius": 2},
    "train": {"data": None, "steps": 2000, "lr": 1e-3, "batch_size": 1, "lam": 0.5, "conditioning": "reference",
              "augment": True, "categories": None, "limit": None, "patch": [4, 6, 6], "dim": 64, "depth": 2,
              "heads": 2, "taps": None},
    "infer": {"checkpoint": None, "video": None, "mask": None, "steps": 50, "threshold": 0.5},
    "eval": {"output": None, "input": None, "mask": None, "gt": None},
    "bench": {"bench_dir": None, "subset": "synthetic_paired", "checkpoint": None, "method": "model", "count": 10,
              "frames": 16, "height": 96, "width": 96, "steps": 50},
}
NOT_CONFIG = {"command", "config", "out", "verbose", "seed"}


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[args.command])
    cfg["seed"] = 0
    if args.config is not None:
        try:
            loaded = json.loads(args.config.read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config must be a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in NOT_CONFIG and key != "seed":
            continue
        if value is not None:
            cfg[key] = str(value) if isinstance(value, Path) else value
    return cfg


def config_hash(command: str, cfg: dict) -> str:
    blob = json.dumps({"command": command, **cfg}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def record_run(out: Path, command: str, cfg: dict) -> None:
    """Append a reproducibility line (config hash + seed) to ``out/manifest.json``."""
    path = out / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {"schema_version": 1}
    manifest.setdefault("runs", []).append(
        {"command": command, "config_sha256": config_hash(command, cfg), "seed": int(cfg["seed"]),
         "rose_version": __version__}
    )
    atomic_write_bytes(path, (json.dumps(manifest, sort_keys=True, indent=1) + "\n").encode())


def _need(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


# ---------------------------------------------------------------- commands


def _render_config(cfg: dict):
    from .synth.dataset import RenderConfig

    cats = cfg.get("categories") or list(CATEGORIES)
    bad = [c for c in cats if c not in CATEGORIES]
    if bad:
        raise UsageError(f"unknown categories: {', '.join(bad)}")
    return RenderConfig(frames=cfg["frames"], height=cfg["height"], width=cfg["width"], master_seed=cfg["seed"],
                        supersample=cfg.get("supersample", 1), categories=list(cats),
                        video_dtype=cfg.get("video_dtype", "float32"))


def cmd_generate(cfg: dict, out: Path) -> None:
    from .synth.dataset import generate_dataset

    if cfg["count"] < 1:
        raise UsageError("--count must be >= 1")
    generate_dataset(cfg["count"], _render_config(cfg), out)


def _copy_entry(src_root: Path, entry: dict, dst_root: Path) -> dict:
    new = dict(entry)
    for key in ("original", "edited", "mask", "scene"):
        if entry.get(key):
            dst = dst_root / entry[key]
            dst.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(src_root / entry[key], dst)
    return new


def cmd_filter(cfg: dict, out: Path) -> None:
    from .synth.dataset import load_manifest, write_manifest
    from .synth.render import valid_view_filter

    _need(cfg, "data")
    manifest = load_manifest(cfg["data"])
    root = Path(manifest["root"])
    kept = []
    rejected = 0
    for e in manifest["entries"]:
        keep, _ = valid_view_filter(read_mask(root / e["mask"]), cfg["min_fg_ratio"], cfg["min_frame_fraction"])
        if keep:
            kept.append(_copy_entry(root, e, out))
        else:
            rejected += 1
    write_manifest(out / "manifest.json", {"schema_version": manifest["schema_version"], "entries": kept,
                                           "config": manifest.get("config", {}), "rejected": rejected})
    log.info("kept %d, rejected %d", len(kept), rejected)


def cmd_augment(cfg: dict, out: Path) -> None:
    from .synth.dataset import load_manifest, write_manifest

    _need(cfg, "data")
    manifest = load_manifest(cfg["data"])
    root = Path(manifest["root"])
    entries = []
    for i, e in enumerate(manifest["entries"]):
        rng = stream(cfg["seed"], "augment", i)
        mask = read_mask(root / e["mask"])
        if cfg["kind"] == "random":
            kind = sample_augment(rng, mask.shape[1])
        else:
            try:
                kind = AugmentKind(cfg["kind"], cfg["radius"] if cfg["kind"] in ("dilate", "erode") else 0)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
        new = _copy_entry(root, {k: v for k, v in e.items() if k != "mask"}, out)
        rel = Path(e["mask"]).with_name("mask_aug.rvt")
        (out / rel).parent.mkdir(parents=True, exist_ok=True)
        aug = augment(mask, kind, int(rng.integers(2**31))) if mask.any() else mask
        rvt_write(out / rel, aug)
        new.update({"mask": str(rel), "augment": {"tag": kind.tag, "radius": kind.radius}})
        entries.append(new)
    write_manifest(out / "manifest.json", {"schema_version": manifest["schema_version"], "entries": entries,
                                           "config": manifest.get("config", {})})


def cmd_train(cfg: dict, out: Path) -> None:
    from .model import ModelConfig
    from .synth.dataset import load_manifest, load_triplet, shape_of
    from .train import TrainConfig, train

    _need(cfg, "data")
    manifest = load_manifest(cfg["data"])
    entries = manifest["entries"]
    if cfg.get("categories"):
        entries = [e for e in entries if e["category"] in cfg["categories"]]
    if cfg.get("limit"):
        entries = entries[: cfg["limit"]]
    if not entries:
        raise DataError("no training triplets selected")
    data = [load_triplet(manifest["root"], e) for e in entries]
    f, h, w = shape_of(data)
    try:
        mcfg = ModelConfig(frames=f, height=h, width=w, patch=tuple(cfg["patch"]), dim=cfg["dim"],
                           depth=cfg["depth"], heads=cfg["heads"], taps=cfg.get("taps"), lam=cfg["lam"],
                           conditioning=cfg["conditioning"])
        tcfg = TrainConfig(steps=cfg["steps"], lr=cfg["lr"], batch_size=cfg["batch_size"], master_seed=cfg["seed"],
                           augment=cfg["augment"], conditioning=cfg["conditioning"], lam=cfg["lam"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    train(data, tcfg, mcfg, out)


def cmd_infer(cfg: dict, out: Path) -> None:
    from .model.checkpoint import load_checkpoint
    from .train import infer

    _need(cfg, "checkpoint", "video", "mask")
    model = load_checkpoint(cfg["checkpoint"])
    video = read_video(cfg["video"])
    mask = read_mask(cfg["mask"])
    output, erased, d_hat = infer(model, video, mask, cfg["steps"], cfg["seed"], cfg["threshold"])
    rvt_write(out / "output.rvt", output)
    rvt_write(out / "erased.rvt", erased)
    rvt_write(out / "d_hat.rvt", d_hat[..., None])


def cmd_eval(cfg: dict, out: Path) -> None:
    from .bench.metrics import background_consistency, motion_smoothness, psnr, ssim, temporal_flicker

    _need(cfg, "output", "input", "mask")
    output = read_video(cfg["output"])
    inp = read_video(cfg["input"])
    mask = read_mask(cfg["mask"])
    if output.shape != inp.shape or mask.shape != inp.shape[:3]:
        raise DataError(f"misaligned inputs: output {output.shape}, input {inp.shape}, mask {mask.shape}")
    static = ~mask
    scores = {
        "flicker": temporal_flicker(output, static) if (static[1:] & static[:-1]).any() else 0.0,
        "bg_consistency": background_consistency(inp, output, mask),
        "motion_smoothness": motion_smoothness(output),
        "lpips": "n/a",
    }
    if cfg.get("gt"):
        gt = read_video(cfg["gt"])
        scores["psnr"] = psnr(output, gt)
        scores["ssim"] = ssim(output, gt)
    atomic_write_bytes(out / "metrics.json", (json.dumps(scores, sort_keys=True, indent=1) + "\n").encode())
    print(json.dumps(scores, sort_keys=True))


def cmd_bench(cfg: dict, out: Path) -> None:
    from .bench.benchmark import build_benchmark, identity_method, model_method, run_benchmark
    from .model.checkpoint import load_checkpoint

    bench_dir = Path(cfg["bench_dir"]) if cfg.get("bench_dir") else out / "bench_data"
    if not (bench_dir / cfg["subset"] / "manifest.json").exists():
        log.info("building benchmark in %s", bench_dir)
        build_benchmark(bench_dir, _render_config(cfg), cfg["count"])
    if cfg["method"] == "model":
        _need(cfg, "checkpoint")
        method = model_method(load_checkpoint(cfg["checkpoint"]), cfg["steps"], cfg["seed"])
    elif cfg["method"] == "identity":
        method = identity_method
    else:
        if cfg["subset"] == "realistic_unpaired":
            raise UsageError("the oracle method needs ground truth; use a paired subset")
        gts = _oracle_table(bench_dir, cfg["subset"])

        def method(video, mask):
            return gts[_key(video, mask)]

    report = run_benchmark(method, bench_dir, cfg["subset"])
    report.write(out)
    print(report.to_text(), end="")


def _key(video, mask) -> str:
    h = hashlib.sha256(np.ascontiguousarray(video).tobytes())
    h.update(np.ascontiguousarray(mask).tobytes())
    return h.hexdigest()


def _oracle_table(bench_dir: Path, subset: str) -> dict:
    from .bench.benchmark import load_pairs

    return {_key(p.input, p.mask): p.gt for p in load_pairs(bench_dir, subset)}


COMMANDS = {
    "generate": cmd_generate,
    "filter": cmd_filter,
    "augment": cmd_augment,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .bench.benchmark import BenchError
    from .bench.metrics import MetricError
    from .model.checkpoint import CheckpointError
    from .synth.dataset import DatasetError
    from .synth.scene import SceneError
    from .train import ResolutionError, TrainingError

    data_errors = (DataError, RvtError, DatasetError, CheckpointError, ResolutionError, TrainingError,
                   BenchError, MetricError, SceneError, NumericError, FileNotFoundError)
    try:
        cfg = resolve_config(args)
        if args.out is None:
            raise UsageError("--out is required")
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
        record_run(out, args.command, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rose {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except data_errors as exc:
        print(f"rose {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
