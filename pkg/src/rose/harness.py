"""Overfit harness: train the small model on two shadow triplets and score it.

Used to check that loss, sampling and the mask predictor all learn on a
problem small enough for a laptop CPU.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bench.metrics import masked_psnr
from .masks import diff_mask, iou
from .model import ModelConfig
from .rvt import atomic_write_bytes
from .synth.dataset import RenderConfig, iter_accepted
from .train import TrainConfig, sample, train

log = logging.getLogger(__name__)

# window (in steps) averaged at each end of the loss trace
LOSS_WINDOW = 100


@dataclass
class HarnessConfig:
    seed: int = 0
    data_seed: int = 0
    category: str = "shadow"
    triplets: int = 2
    steps: int = 2000
    sample_steps: int = 50
    conditioning: str = "reference"
    augment: bool = True
    model: dict = field(default_factory=dict)


def harness_data(cfg: HarnessConfig, mcfg: ModelConfig):
    rcfg = RenderConfig(frames=mcfg.frames, height=mcfg.height, width=mcfg.width,
                        master_seed=cfg.data_seed, categories=[cfg.category])
    return list(iter_accepted(cfg.category, cfg.triplets, rcfg))


def run_harness(cfg: HarnessConfig, out_dir=None) -> dict:
    mcfg = ModelConfig(**{**cfg.model, "conditioning": cfg.conditioning})
    data = harness_data(cfg, mcfg)
    tcfg = TrainConfig(steps=cfg.steps, master_seed=cfg.seed, augment=cfg.augment,
                       conditioning=cfg.conditioning, lam=mcfg.lam)
    t0 = time.perf_counter()
    result = train(data, tcfg, mcfg, out_dir)
    train_seconds = time.perf_counter() - t0

    trace = result.trace
    w = min(LOSS_WINDOW, len(trace))
    initial = float(trace[:w, 1].mean())
    final = float(trace[-w:, 1].mean())

    samples = []
    for k, tri in enumerate(data):
        erased, d_hat = sample(result.model, tri.original, tri.mask, cfg.sample_steps, seed=cfg.seed * 1000 + k)
        d0 = diff_mask(tri.original, tri.edited)
        region = tri.mask | d0
        samples.append({
            "scene_seed": tri.scene_seed,
            "psnr_input": masked_psnr(tri.original, tri.edited, region),
            "psnr_sample": masked_psnr(erased, tri.edited, region),
            "iou": iou(d_hat > 0.5, d0),
        })
    report = {
        "config": asdict(cfg),
        "model_config": mcfg.to_dict(),
        "initial_diffusion_loss": initial,
        "final_diffusion_loss": final,
        "loss_ratio": final / initial,
        "psnr_input": float(np.mean([s["psnr_input"] for s in samples])),
        "psnr_sample": float(np.mean([s["psnr_sample"] for s in samples])),
        "iou": float(np.mean([s["iou"] for s in samples])),
        "samples": samples,
        "train_seconds": train_seconds,
    }
    if out_dir is not None:
        atomic_write_bytes(Path(out_dir) / "harness.json", json.dumps(report, indent=1, sort_keys=True).encode())
    return report
