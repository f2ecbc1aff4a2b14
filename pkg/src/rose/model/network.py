"""Patchified video diffusion transformer with a difference-mask head."""

from __future__ import annotations

import math

import numpy as np

from ..autodiff import Tensor
from ..autodiff import functional as F
from .config import ModelConfig


def build_condition_input(x_t, video, mask, mode: str = "reference") -> np.ndarray:
    """Channel-stack ``[x_t; video; mask]`` along the last axis.

    ``mode="baseline"`` zeroes the video inside the mask first
    (``[x_t; video * (1 - mask); mask]``), the mask-and-inpaint input.
    """
    x_t = np.asarray(x_t)
    video = np.asarray(video)
    m = np.asarray(mask)
    if x_t.shape != video.shape:
        raise ValueError(f"noisy sample {x_t.shape} and video {video.shape} are misaligned")
    if m.shape != video.shape[:-1]:
        raise ValueError(f"mask {m.shape} does not match video {video.shape[:-1]}")
    dtype = x_t.dtype if x_t.dtype in (np.float32, np.float64) else np.float32
    mf = m.astype(dtype)[..., None]
    if mode == "baseline":
        video = video * (1.0 - mf)
    elif mode != "reference":
        raise ValueError(f"unknown conditioning mode {mode!r}")
    return np.concatenate([x_t.astype(dtype), video.astype(dtype), mf], axis=-1)


def patchify(x, patch):
    """(..., F, H, W, C) -> (..., L, pt*ph*pw*C), tokens in (F_p, H_p, W_p) raster order."""
    pt, ph, pw = patch
    *lead, f, h, w, c = x.shape
    if f % pt or h % ph or w % pw:
        raise ValueError(f"extents {(f, h, w)} not divisible by patch {tuple(patch)}")
    fp, hp, wp = f // pt, h // ph, w // pw
    n = len(lead)
    perm = tuple(range(n)) + tuple(n + i for i in (0, 2, 4, 1, 3, 5, 6))
    shape1 = (*lead, fp, pt, hp, ph, wp, pw, c)
    shape2 = (*lead, fp * hp * wp, pt * ph * pw * c)
    if isinstance(x, Tensor):
        return F.reshape(F.transpose(F.reshape(x, shape1), perm), shape2)
    return np.ascontiguousarray(np.transpose(x.reshape(shape1), perm)).reshape(shape2)


def unpatchify(tokens, patch, size, channels: int):
    """Inverse of :func:`patchify` for a video of extents ``size = (F, H, W)``."""
    pt, ph, pw = patch
    f, h, w = size
    fp, hp, wp = f // pt, h // ph, w // pw
    *lead, L, P = tokens.shape
    if L != fp * hp * wp or P != pt * ph * pw * channels:
        raise ValueError(f"token shape {tokens.shape} inconsistent with size {size} and patch {patch}")
    n = len(lead)
    shape1 = (*lead, fp, hp, wp, pt, ph, pw, channels)
    perm = tuple(range(n)) + tuple(n + i for i in (0, 3, 1, 4, 2, 5, 6))
    shape2 = (*lead, f, h, w, channels)
    if isinstance(tokens, Tensor):
        return F.reshape(F.transpose(F.reshape(tokens, shape1), perm), shape2)
    return np.ascontiguousarray(np.transpose(tokens.reshape(shape1), perm)).reshape(shape2)


def timestep_embedding(t, dim: int, dtype=np.float32) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.cos(args), np.sin(args)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=-1)
    return emb.astype(dtype)


def _xavier(rng, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


class RoseModel:
    """Parameters plus the forward pass.

    ``params`` is an insertion-ordered dict; that order is the checkpoint
    layout.
    """

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32, zero_init: bool = True):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        cfg = config
        D = cfg.dim
        pt, ph, pw = cfg.patch
        p_in = pt * ph * pw * cfg.cond_channels
        p_out = pt * ph * pw * cfg.channels
        cin, c = cfg.cond_channels, cfg.channels

        def lin(name, fan_in, fan_out, zero=False):
            if zero and zero_init:
                w = np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                w = _xavier(rng, fan_in, fan_out)
                b = np.zeros(fan_out) if zero_init else rng.normal(0, 0.02, size=fan_out)
            self._add(f"{name}.w", w)
            self._add(f"{name}.b", b)

        lin("patch_embed", p_in, D)
        self._add("pos_embed", rng.normal(0.0, 0.02, size=(cfg.tokens, D)))
        lin("time.fc1", D, D)
        lin("time.fc2", D, D)
        for i in range(cfg.depth):
            lin(f"blocks.{i}.ada", D, 6 * D, zero=True)
            self._add(f"blocks.{i}.qkv.w", _xavier(rng, D, 3 * D))
            lin(f"blocks.{i}.proj", D, D)
            lin(f"blocks.{i}.fc1", D, cfg.mlp_ratio * D)
            lin(f"blocks.{i}.fc2", cfg.mlp_ratio * D, D)
        lin("final.ada", D, 2 * D, zero=True)
        lin("final.head", D, p_out, zero=True)
        lin("skip", D, cin * c + c, zero=True)
        lin("predictor.fc1", cfg.d_total, cfg.hidden)
        lin("predictor.fc2", cfg.hidden, 1, zero=True)

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, name=name)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def _attention(self, x: Tensor, i: int) -> Tensor:
        P = self.params
        B, L, D = x.shape
        nh = self.config.heads
        dh = D // nh
        qkv = F.matmul(x, P[f"blocks.{i}.qkv.w"])
        qkv = F.transpose(F.reshape(qkv, (B, L, 3, nh, dh)), (2, 0, 3, 1, 4))
        q = qkv[0] * (1.0 / math.sqrt(dh))
        k = qkv[1]
        v = qkv[2]
        att = F.softmax(F.matmul(q, F.transpose(k, (0, 1, 3, 2))))
        o = F.matmul(att, v)
        o = F.reshape(F.transpose(o, (0, 2, 1, 3)), (B, L, D))
        return F.linear(o, P[f"blocks.{i}.proj.w"], P[f"blocks.{i}.proj.b"])

    def forward(self, cond, t, taps_out: list | None = None):
        """Predict noise and the difference mask.

        ``cond``: (B, F, H, W, 2c+1) stacked input; ``t``: int or (B,) ints
        in [1, T]. Returns ``(eps_hat (B, F, H, W, c), d_hat (B, F, H, W))``.
        """
        cfg = self.config
        P = self.params
        for tap in cfg.taps:
            if not 0 <= tap < cfg.depth:
                raise ValueError(f"tap layer {tap} out of range [0, {cfg.depth})")
        x = cond if isinstance(cond, Tensor) else Tensor(np.asarray(cond, dtype=self.dtype))
        if x.ndim == 4:
            x = F.reshape(x, (1,) + x.shape)
        B = x.shape[0]
        expect = (cfg.frames, cfg.height, cfg.width, cfg.cond_channels)
        if x.shape[1:] != expect:
            raise ValueError(f"condition input {x.shape[1:]} does not match model {expect}")
        tt = np.broadcast_to(np.atleast_1d(np.asarray(t)), (B,))
        if np.any(tt < 1) or np.any(tt > cfg.timesteps):
            raise ValueError(f"timestep {t} outside [1, {cfg.timesteps}]")
        D = cfg.dim

        h = F.linear(patchify(x, cfg.patch), P["patch_embed.w"], P["patch_embed.b"])
        h = F.add(h, P["pos_embed"])
        temb = Tensor(timestep_embedding(tt, D, self.dtype))
        c = F.linear(F.silu(F.linear(temb, P["time.fc1.w"], P["time.fc1.b"])), P["time.fc2.w"], P["time.fc2.b"])
        sc = F.silu(c)

        feats = []
        for i in range(cfg.depth):
            mod = F.reshape(F.linear(sc, P[f"blocks.{i}.ada.w"], P[f"blocks.{i}.ada.b"]), (B, 1, 6 * D))
            shift1, scale1, gate1, shift2, scale2, gate2 = (mod[..., k * D:(k + 1) * D] for k in range(6))
            n = F.add(F.mul(F.layer_norm(h), F.add(scale1, 1.0)), shift1)
            h = F.add(h, F.mul(gate1, self._attention(n, i)))
            n = F.add(F.mul(F.layer_norm(h), F.add(scale2, 1.0)), shift2)
            m = F.linear(F.gelu(F.linear(n, P[f"blocks.{i}.fc1.w"], P[f"blocks.{i}.fc1.b"])),
                         P[f"blocks.{i}.fc2.w"], P[f"blocks.{i}.fc2.b"])
            h = F.add(h, F.mul(gate2, m))
            if i in cfg.taps:
                feats.append(h)

        mod = F.reshape(F.linear(sc, P["final.ada.w"], P["final.ada.b"]), (B, 1, 2 * D))
        n = F.add(F.mul(F.layer_norm(h), F.add(mod[..., D:], 1.0)), mod[..., :D])
        out = F.linear(n, P["final.head.w"], P["final.head.b"])
        size = (cfg.frames, cfg.height, cfg.width)
        eps_hat = unpatchify(out, cfg.patch, size, cfg.channels)

        # per-pixel channel mixing with timestep-dependent weights; carries
        # the full-rank part of the noise that a D-wide token cannot hold.
        # It never sees video inside the mask, so masked content reaches
        # the output only through the transformer in either conditioning mode.
        cin, ch = cfg.cond_channels, cfg.channels
        g = F.linear(sc, P["skip.w"], P["skip.b"])
        A = F.reshape(g[:, : cin * ch], (B, cin, ch))
        bias = F.reshape(g[:, cin * ch:], (B, 1, ch))
        xs = x.data.copy()
        xs[..., ch:2 * ch] *= 1.0 - xs[..., 2 * ch:]
        flat = Tensor(xs.reshape(B, cfg.frames * cfg.height * cfg.width, cin))
        skip = F.reshape(F.add(F.matmul(flat, A), bias), (B, *size, ch))
        eps_hat = F.add(eps_hat, skip)

        # difference-mask predictor: concatenated block features -> 2-layer MLP
        fused = F.concat(feats, axis=-1) if len(feats) > 1 else feats[0]
        z = F.linear(F.gelu(F.linear(fused, P["predictor.fc1.w"], P["predictor.fc1.b"])),
                     P["predictor.fc2.w"], P["predictor.fc2.b"])
        grid = F.reshape(F.sigmoid(z), (B, *cfg.grid))
        if taps_out is not None:
            taps_out.append(grid)
        d_hat = F.trilinear_resize(grid, size)
        return eps_hat, d_hat


def rose_loss(eps, eps_hat: Tensor, d_hat: Tensor, d_gt, lam: float):
    """Noise MSE plus ``lam`` times mask MSE. Returns (total, noise_term, mask_term).

    ``d_gt`` is resampled (nearest) to ``d_hat``'s grid when shapes differ.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    eps_t = eps if isinstance(eps, Tensor) else Tensor(np.asarray(eps, dtype=eps_hat.dtype))
    gt = d_gt.data if isinstance(d_gt, Tensor) else np.asarray(d_gt)
    gt = gt.astype(d_hat.dtype)
    if gt.shape != d_hat.shape:
        gt = F.nearest_resize(Tensor(gt), d_hat.shape[-3:]).data
        if gt.shape != d_hat.shape:
            gt = np.broadcast_to(gt, d_hat.shape)
    noise = F.mse(eps_hat, eps_t)
    mask_term = F.mse(d_hat, Tensor(np.ascontiguousarray(gt)))
    total = F.add(noise, F.mul(mask_term, float(lam)))
    return total, noise, mask_term
