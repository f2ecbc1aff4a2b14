"""Evaluation: metrics, benchmark subsets and per-category reports."""

from .benchmark import (
    SUBSETS,
    BenchError,
    EvalPair,
    MetricReport,
    aggregate,
    build_benchmark,
    build_copy_paste_pair,
    identity_method,
    load_pairs,
    model_method,
    run_benchmark,
)
from .metrics import (
    MetricError,
    background_consistency,
    masked_psnr,
    motion_smoothness,
    psnr,
    ssim,
    temporal_flicker,
)

__all__ = [
    "SUBSETS",
    "BenchError",
    "EvalPair",
    "MetricError",
    "MetricReport",
    "aggregate",
    "background_consistency",
    "build_benchmark",
    "build_copy_paste_pair",
    "identity_method",
    "load_pairs",
    "masked_psnr",
    "model_method",
    "motion_smoothness",
    "psnr",
    "run_benchmark",
    "ssim",
    "temporal_flicker",
]
