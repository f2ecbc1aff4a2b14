"""Training loop, DDIM sampling and background compositing."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .autodiff import NumericError, Tape, Tensor
from .masks import augment, diff_mask, downsample_mask, sample_augment, upsample_nearest
from .model import ModelConfig, NoiseSchedule, RoseModel, add_noise, build_condition_input, rose_loss
from .model.checkpoint import save_checkpoint
from .rvt import atomic_write_bytes
from .seeding import derive_seed, stream

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class ResolutionError(ValueError):
    pass


@dataclass
class TrainConfig:
    steps: int = 2000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 1
    master_seed: int = 0
    augment: bool = True
    conditioning: str = "reference"
    lam: float = 0.5
    log_every: int = 100

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.conditioning not in ("reference", "baseline"):
            raise ValueError(f"unknown conditioning {self.conditioning!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class TrainState:
    step: int
    params: dict[str, Tensor]
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    avg_diffusion: float = 0.0
    avg_mask: float = 0.0
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)

    @classmethod
    def fresh(cls, model: RoseModel) -> "TrainState":
        zeros = {k: np.zeros_like(p.data) for k, p in model.params.items()}
        return cls(0, model.params, zeros, {k: z.copy() for k, z in zeros.items()})


def adam_update(state: TrainState, cfg: TrainConfig) -> None:
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in state.params.items():
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - (cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)).astype(p.data.dtype)
        p.grad = None


@dataclass
class Example:
    """One training triplet in model space: videos mapped to [-1, 1]."""

    x0: np.ndarray  # edited video (denoising target)
    video: np.ndarray  # original video (conditioning)
    mask: np.ndarray
    d0: np.ndarray
    d_gt: np.ndarray  # latent-grid difference mask, nearest-upsampled to (F, H, W)


def prepare_example(triplet, config: ModelConfig, dtype=np.float32) -> Example:
    size = (config.frames, config.height, config.width)
    if triplet.original.shape[:3] != size:
        raise ResolutionError(f"triplet resolution {triplet.original.shape[:3]} != model {size}")
    pt, ph, pw = config.patch
    d0 = diff_mask(triplet.original, triplet.edited)
    d_t = downsample_mask(d0, (ph, pw), pt)
    return Example(
        x0=(2.0 * triplet.edited - 1.0).astype(dtype),
        video=(2.0 * triplet.original - 1.0).astype(dtype),
        mask=np.asarray(triplet.mask, dtype=bool),
        d0=d0,
        d_gt=upsample_nearest(d_t, size).astype(dtype),
    )


def _draw(rng: np.random.Generator, ex: Example, cfg: TrainConfig, mcfg: ModelConfig, schedule: NoiseSchedule):
    if cfg.augment:
        kind = sample_augment(rng, mcfg.height)
        aug_seed = int(rng.integers(2**31))
        mask = augment(ex.mask, kind, aug_seed) if ex.mask.any() else ex.mask
    else:
        mask = ex.mask
    t = int(rng.integers(1, schedule.T + 1))
    eps = rng.standard_normal(ex.x0.shape).astype(ex.x0.dtype)
    x_t = add_noise(ex.x0, t, eps, schedule)
    cond = build_condition_input(x_t, ex.video, mask, cfg.conditioning)
    return cond, t, eps


def train_step(model: RoseModel, state: TrainState, examples: list[Example], cfg: TrainConfig,
               schedule: NoiseSchedule) -> tuple[float, float, float]:
    """One optimisation step; RNG is a pure function of (master seed, step)."""
    rng = stream(cfg.master_seed, "train", state.step)
    conds, ts, epss, gts = [], [], [], []
    for _ in range(cfg.batch_size):
        ex = examples[int(rng.integers(len(examples)))]
        cond, t, eps = _draw(rng, ex, cfg, model.config, schedule)
        conds.append(cond)
        ts.append(t)
        epss.append(eps)
        gts.append(ex.d_gt)
    try:
        with Tape() as tape:
            eps_hat, d_hat = model.forward(np.stack(conds), np.array(ts))
            total, noise, mask_term = rose_loss(np.stack(epss), eps_hat, d_hat, np.stack(gts), cfg.lam)
        tape.backward(total)
    except NumericError as exc:
        raise TrainingError(f"non-finite value at step {state.step}: {exc}") from exc
    vals = (noise.item(), mask_term.item(), total.item())
    if not np.all(np.isfinite(vals)):
        raise TrainingError(f"non-finite loss at step {state.step}: {vals}")
    adam_update(state, cfg)
    for p in model.params.values():
        if not np.all(np.isfinite(p.data)):
            raise TrainingError(f"non-finite parameter {p.name} after step {state.step}")
    return vals


@dataclass
class TrainResult:
    model: RoseModel
    state: TrainState
    checkpoint: Path | None
    loss_trace: Path | None

    @property
    def trace(self) -> np.ndarray:
        return np.array(self.state.trace, dtype=np.float64).reshape(-1, 4)


def trace_csv(trace) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "diffusion_loss", "mask_loss", "total"])
    for step, dl, ml, tl in trace:
        w.writerow([int(step), repr(float(dl)), repr(float(ml)), repr(float(tl))])
    return buf.getvalue().encode()


def train(dataset, config: TrainConfig, model_config: ModelConfig, out_dir=None,
          model: RoseModel | None = None) -> TrainResult:
    """Train on a list of triplets; writes ``model.ckpt`` and ``loss.csv`` when ``out_dir`` is given."""
    if not dataset:
        raise ValueError("training set is empty")
    if model is None:
        model = RoseModel(model_config, seed=derive_seed(config.master_seed, "init"))
    elif model.config != model_config:
        raise ValueError("model config does not match the model passed in")
    if model_config.conditioning != config.conditioning:
        raise ValueError(
            f"conditioning mismatch: model {model_config.conditioning!r}, training {config.conditioning!r}"
        )
    examples = [prepare_example(t, model_config, model.dtype) for t in dataset]
    schedule = NoiseSchedule.linear(model_config.timesteps, model_config.beta_start, model_config.beta_end)
    state = TrainState.fresh(model)
    ema = 0.98
    for i in range(config.steps):
        dl, ml, tl = train_step(model, state, examples, config, schedule)
        state.trace.append((i, dl, ml, tl))
        if i == 0:
            state.avg_diffusion, state.avg_mask = dl, ml
        else:
            state.avg_diffusion = ema * state.avg_diffusion + (1 - ema) * dl
            state.avg_mask = ema * state.avg_mask + (1 - ema) * ml
        if config.log_every and (i + 1) % config.log_every == 0:
            log.info("step %d diffusion %.4f mask %.4f", i + 1, state.avg_diffusion, state.avg_mask)

    ckpt = loss_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / "model.ckpt"
        loss_path = out / "loss.csv"
        save_checkpoint(model, ckpt, extra={"train": asdict(config)})
        atomic_write_bytes(loss_path, trace_csv(state.trace))
    return TrainResult(model, state, ckpt, loss_path)


def ddim_timesteps(T: int, steps: int) -> np.ndarray:
    """Descending, distinct timesteps from T towards 1."""
    if not 1 <= steps <= T:
        raise ValueError(f"sampling steps {steps} outside [1, {T}]")
    ts = np.round(np.linspace(T, 1, steps)).astype(int)
    return np.unique(ts)[::-1]


def sample(model: RoseModel, video: np.ndarray, mask: np.ndarray, steps: int = 50, seed: int = 0,
           conditioning: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic DDIM (eta = 0) from pure noise.

    ``video`` is in [0, 1]; returns ``(erased in [0, 1], d_hat)`` where
    ``d_hat`` is the predictor output at the last step.
    """
    cfg = model.config
    size = (cfg.frames, cfg.height, cfg.width)
    video = np.asarray(video)
    mask = np.asarray(mask, dtype=bool)
    if video.shape != (*size, cfg.channels) or mask.shape != size:
        raise ResolutionError(f"input {video.shape} / mask {mask.shape} does not match model {size}")
    mode = conditioning or cfg.conditioning
    schedule = NoiseSchedule.linear(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    ts = ddim_timesteps(schedule.T, steps)
    dtype = model.dtype
    v = (2.0 * video - 1.0).astype(dtype)
    x = stream(seed, "sample").standard_normal(v.shape).astype(dtype)
    x0 = x
    d_hat = None
    for i, t in enumerate(ts):
        cond = build_condition_input(x, v, mask, mode)
        eps_hat, d = model.forward(cond[None], int(t))
        eps_hat = eps_hat.data[0].astype(np.float64)
        d_hat = d.data[0]
        ab = schedule.abar(int(t))
        ab_prev = schedule.abar(int(ts[i + 1])) if i + 1 < len(ts) else 1.0
        x0 = np.clip((x - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab), -1.0, 1.0)
        eps_dir = (x - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)
        x = (np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * eps_dir).astype(dtype)
    erased = np.clip((np.asarray(x0, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0).astype(np.float32)
    return erased, np.asarray(d_hat, dtype=np.float32)


FEATHER_PX = 2


def composite_weight(mask: np.ndarray, d_hat: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Blend weight for the erased video: 1 on the union region, falling
    linearly to 0 at ``FEATHER_PX`` pixels (chessboard distance, per frame)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    region = np.asarray(mask, dtype=bool) | (np.asarray(d_hat) > threshold)
    w = np.zeros(region.shape, dtype=np.float64)
    for f in range(region.shape[0]):
        if region[f].all():
            w[f] = 1.0
        elif region[f].any():
            dist = ndimage.distance_transform_cdt(~region[f], metric="chessboard")
            w[f] = np.clip(1.0 - dist / FEATHER_PX, 0.0, 1.0)
    return w


def composite(erased, original, mask, d_hat, threshold: float = 0.5) -> np.ndarray:
    erased = np.clip(np.asarray(erased, dtype=np.float32), 0.0, 1.0)
    original = np.asarray(original, dtype=np.float32)
    if erased.shape != original.shape or erased.shape[:3] != np.shape(mask) or np.shape(d_hat) != np.shape(mask):
        raise ValueError("composite inputs are misaligned")
    w = composite_weight(mask, d_hat, threshold)[..., None]
    blend = (w * erased + (1.0 - w) * original).astype(np.float32)
    out = np.where(w >= 1.0, erased, blend)
    return np.where(w <= 0.0, original, out)


def infer(model: RoseModel, video, mask, steps: int = 50, seed: int = 0, threshold: float = 0.5):
    """Sample then composite; returns ``(output, erased, d_hat)``."""
    erased, d_hat = sample(model, video, mask, steps, seed)
    return composite(erased, video, mask, d_hat, threshold), erased, d_hat


__all__ = [
    "Example",
    "ResolutionError",
    "TrainConfig",
    "TrainResult",
    "TrainState",
    "TrainingError",
    "adam_update",
    "composite",
    "composite_weight",
    "ddim_timesteps",
    "infer",
    "prepare_example",
    "sample",
    "train",
    "train_step",
    "trace_csv",
]
