"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest -v -s tests/test_acceptance.py`` (the lines are also
printed without ``-s``) or directly with ``python tests/test_acceptance.py``.
Criteria 5 and 6 train the small model six times in total and take
tens of minutes on one core.
"""

from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

from rose import CATEGORIES
from rose.autodiff import grad_check
from rose.bench.metrics import background_consistency, psnr, ssim, temporal_flicker
from rose.masks import AugmentKind, augment, bbox, diff_mask, dilate, erode, point
from rose.model import ModelConfig, RoseModel, build_condition_input, rose_loss
from rose.rvt import RvtError, decode, encode, read_mask, read_video, rvt_write
from rose.synth.dataset import RenderConfig, iter_accepted

# tolerances and thresholds
GRAD_REL_TOL = 1e-3
GRAD_SECONDS = 120.0
DELTA = 0.09
SIDE_EFFECT_FRACTION = 0.90
LOSS_RATIO_MAX = 0.25
PSNR_GAIN_DB = 3.0
IOU_MIN = 0.5
HARNESS_SECONDS = 20 * 60
PSNR_CONST_DB, PSNR_CONST_TOL = 20.0, 0.01
ABLATION_SEEDS = (0, 1, 2)
FUZZ_CASES = 10_000


def line(cid: int, ok: bool, text: str) -> str:
    return f"[{'PASS' if ok else 'FAIL'}] C{cid} {text}"


# ------------------------------------------------------------------ C1


def test_c1_gradient_check_full_model(live):
    cfg = ModelConfig(frames=4, height=8, width=8, patch=(2, 4, 4), dim=16, depth=2, heads=2, lam=0.5)
    model = RoseModel(cfg, seed=0, dtype=np.float64, zero_init=False)
    rng = np.random.default_rng(1)
    x_t = rng.normal(size=(4, 8, 8, 3))
    video = rng.random((4, 8, 8, 3))
    mask = rng.random((4, 8, 8)) > 0.6
    cond = build_condition_input(x_t, video, mask)[None]
    eps = rng.normal(size=(1, 4, 8, 8, 3))
    d_gt = rng.random((1, 4, 8, 8)) > 0.5

    def loss():
        eps_hat, d_hat = model.forward(cond, 321)
        return rose_loss(eps, eps_hat, d_hat, d_gt, 0.5)[0]

    t0 = time.perf_counter()
    err = grad_check(loss, model.parameters(), eps=1e-4)
    dt = time.perf_counter() - t0
    ok = err < GRAD_REL_TOL and dt < GRAD_SECONDS
    live(line(1, ok, f"grad_check over {model.num_parameters()} params: max rel err {err:.2e} "
                  f"(< {GRAD_REL_TOL:g}), {dt:.0f}s (< {GRAD_SECONDS:.0f}s)"))
    assert ok


# ------------------------------------------------------------------ C2


def brute_diff_mask(a, b, delta):
    f, h, w, c = a.shape
    out = np.zeros((f, h, w), dtype=bool)
    for i in range(f):
        for y in range(h):
            for x in range(w):
                s = 0.0
                for k in range(c):
                    d = float(a[i, y, x, k]) - float(b[i, y, x, k])
                    s += d * d
                out[i, y, x] = math.sqrt(s) > delta
    return out


def test_c2_diff_mask_oracle(live):
    rng = np.random.default_rng(2)
    above = np.nextafter(DELTA, 1.0)
    mismatches = boundary_pixels = 0
    for n in range(100):
        a = np.round(rng.random((16, 32, 32, 3)), 2)
        b = np.round(np.clip(a + rng.normal(0, 0.06, a.shape), 0, 1), 2)
        # exact-threshold and just-above pixels on every pair
        for k in range(3):
            a[n % 16, k, 0] = 0.0
            b[n % 16, k, 0] = 0.0
            b[n % 16, k, 0, k] = DELTA
            a[n % 16, k, 1] = 0.0
            b[n % 16, k, 1] = 0.0
            b[n % 16, k, 1, k] = above
        if n % 2:
            a, b = a.astype(np.float32), b.astype(np.float32)
        got = diff_mask(a, b, DELTA)
        want = brute_diff_mask(a, b, DELTA)
        mismatches += int((got != want).sum())
        assert not got[n % 16, 0:3, 0].any() or n % 2
        if n % 2 == 0:
            assert got[n % 16, 0:3, 1].all()
            boundary_pixels += 6
    ok = mismatches == 0
    live(line(2, ok, f"diff_mask vs per-pixel brute force on 100 pairs 16x32x32x3: {mismatches} mismatches, "
                  f"{boundary_pixels} exact/just-above delta={DELTA} pixels checked"))
    assert ok


# ------------------------------------------------------------------ C3


def test_c3_renderer_alignment_and_side_effects(live):
    cfg = RenderConfig(frames=16, height=96, width=96, master_seed=3)
    misaligned = 0
    side = {}
    for cat in CATEGORIES:
        frames_ok = frames_total = 0
        for tri in iter_accepted(cat, 10, RenderConfig(**{**cfg.__dict__, "categories": [cat]})):
            d = diff_mask(tri.original, tri.edited, DELTA)
            band = np.stack([ndimage.binary_dilation(f, np.ones((3, 3), bool)) for f in d])
            outside = ~band
            if not np.array_equal(tri.original[outside], tri.edited[outside]):
                misaligned += 1
            frames_ok += int((d.sum(axis=(1, 2)) > tri.mask.sum(axis=(1, 2))).sum())
            frames_total += d.shape[0]
        side[cat] = frames_ok / frames_total
    effects = {c: side[c] for c in ("shadow", "reflection", "mirror", "light_source")}
    ok = misaligned == 0 and all(v >= SIDE_EFFECT_FRACTION for v in effects.values())
    detail = ", ".join(f"{c} {v:.0%}" for c, v in effects.items())
    live(line(3, ok, f"60 triplets: {misaligned} misaligned outside dilated diff; diff area > mask area on "
                  f"{detail} of frames (>= {SIDE_EFFECT_FRACTION:.0%})"))
    assert ok


# ------------------------------------------------------------------ C4


def brute_dilate1(m):
    h, w = m.shape
    out = np.zeros_like(m)
    for y in range(h):
        for x in range(w):
            out[y, x] = m[max(0, y - 1): y + 2, max(0, x - 1): x + 2].any()
    return out


def brute_erode1(m):
    h, w = m.shape
    out = np.zeros_like(m)
    for y in range(h):
        for x in range(w):
            ok = True
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and not m[yy, xx]:
                        ok = False
            out[y, x] = ok
    return out


def test_c4_mask_augmentation_invariants(live):
    rng = np.random.default_rng(4)
    violations = 0
    for i in range(1000):
        shape = (int(rng.integers(1, 4)), int(rng.integers(4, 33)), int(rng.integers(4, 33)))
        m = rng.random(shape) < rng.uniform(0.05, 0.7)
        if rng.random() < 0.5:  # blobby masks as well as salt-and-pepper
            m = ndimage.binary_opening(m, np.ones((1, 3, 3), bool))
        r = int(rng.integers(1, 6))
        e, d = erode(m, r), dilate(m, r)
        p = point(m, rng)
        checks = [
            (e <= m).all(),
            (m <= d).all(),
            (d <= bbox(d)).all(),
            (p <= m).all(),
            np.array_equal(augment(m, AugmentKind("erode", r)), e),
        ]
        violations += sum(not c for c in checks)

    # radius-1 morphology at a pixel depends only on its 3x3 window, so
    # every (position, window) pair covers all 2**64 masks of size 8x8
    mismatches = cases = 0
    offsets = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
    patterns = (np.arange(512)[:, None] >> np.arange(9)[None, :]) & 1
    for y in range(8):
        for x in range(8):
            vol = np.zeros((512, 8, 8), bool)
            for bit, (dy, dx) in enumerate(offsets):
                yy, xx = y + dy, x + dx
                if 0 <= yy < 8 and 0 <= xx < 8:
                    vol[:, yy, xx] = patterns[:, bit].astype(bool)
            dl, er = dilate(vol, 1), erode(vol, 1)
            for k in range(512):
                mismatches += int(dl[k, y, x] != brute_dilate1(vol[k])[y, x])
                mismatches += int(er[k, y, x] != brute_erode1(vol[k])[y, x])
                cases += 1
    ok = violations == 0 and mismatches == 0
    live(line(4, ok, f"1000 random masks: {violations} chain violations (erode<=m<=dilate<=bbox, point<=m); "
                  f"8x8 radius-1 brute force: {mismatches} mismatches over {cases} position/window cases"))
    assert ok


# ------------------------------------------------------------ C5 / C6

_harness_cache: dict = {}


def harness(seed: int, conditioning: str) -> dict:
    from rose.harness import HarnessConfig, run_harness

    key = (seed, conditioning)
    if key not in _harness_cache:
        _harness_cache[key] = run_harness(HarnessConfig(seed=seed, conditioning=conditioning))
    return _harness_cache[key]


@pytest.mark.slow
def test_c5_overfit_harness(live):
    r = harness(0, "reference")
    a = r["loss_ratio"] < LOSS_RATIO_MAX
    b = r["psnr_sample"] >= r["psnr_input"] + PSNR_GAIN_DB
    c = r["iou"] >= IOU_MIN
    t = r["train_seconds"] < HARNESS_SECONDS
    live(line(5, a and b and c, f"overfit 2000 steps on 2 shadow triplets: (a) loss {r['final_diffusion_loss']:.4f}/"
                             f"{r['initial_diffusion_loss']:.4f} = {r['loss_ratio']:.3f} (< {LOSS_RATIO_MAX}) "
                             f"{'ok' if a else 'FAIL'}; (b) masked PSNR sample {r['psnr_sample']:.2f} dB vs input "
                             f"{r['psnr_input']:.2f} dB (need +{PSNR_GAIN_DB}) {'ok' if b else 'FAIL'}; "
                             f"(c) IoU {r['iou']:.3f} (>= {IOU_MIN}) {'ok' if c else 'FAIL'}; "
                             f"train {r['train_seconds'] / 60:.1f} min on this machine"
                             f"{'' if t else ' (over the 20 min budget)'}"))
    assert a and b and c


@pytest.mark.slow
def test_c6_reference_vs_baseline_conditioning(live):
    ref = [harness(s, "reference")["psnr_sample"] for s in ABLATION_SEEDS]
    base = [harness(s, "baseline")["psnr_sample"] for s in ABLATION_SEEDS]
    ok = np.mean(ref) >= np.mean(base)
    live(line(6, ok, f"masked PSNR over seeds {list(ABLATION_SEEDS)}: reference mean {np.mean(ref):.2f} dB "
                  f"{np.round(ref, 2).tolist()}, baseline mean {np.mean(base):.2f} dB {np.round(base, 2).tolist()}"))
    assert ok


# ------------------------------------------------------------------ C7


def test_c7_metric_analytics(live):
    a = np.full((4, 16, 16, 3), 0.3)
    p = psnr(a, a + 0.1)
    rng = np.random.default_rng(7)
    v = rng.random((4, 24, 24, 3))
    s = ssim(v, v)
    static = np.repeat(v[:1], 5, axis=0)
    fl = temporal_flicker(static)
    region = np.zeros(v.shape[:3], bool)
    region[:, 5:15, 6:12] = True
    edited = v.copy()
    edited[region] = rng.random(edited[region].shape)
    bg = background_consistency(v, edited, region)
    ok = abs(p - PSNR_CONST_DB) <= PSNR_CONST_TOL and s == 1.0 and fl == 0.0 and bg == 99.0
    live(line(7, ok, f"psnr(const diff 0.1) = {p:.4f} dB; ssim(v, v) = {s!r}; flicker(static) = {fl!r}; "
                  f"bg_consistency after in-region edit = {bg!r} (cap 99)"))
    assert ok


# ------------------------------------------------------------------ C8


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c8_cli_reproducibility(tmp_path, live):
    from rose.cli import main

    small = ["--frames", "4", "--height", "16", "--width", "16"]
    results = {}
    for run in ("a", "b"):
        r = tmp_path / run
        assert main(["generate", "--count", "1", *small, "--seed", "5", "--out", str(r / "gen")]) == 0
        assert main(["train", "--data", str(tmp_path / "a" / "gen"), "--steps", "5", "--patch", "2,4,4",
                     "--dim", "16", "--seed", "5", "--out", str(r / "train")]) == 0
        entry = "common/000"
        assert main(["infer", "--checkpoint", str(tmp_path / "a" / "train" / "model.ckpt"),
                     "--video", str(tmp_path / "a" / "gen" / entry / "original.rvt"),
                     "--mask", str(tmp_path / "a" / "gen" / entry / "mask.rvt"),
                     "--steps", "4", "--seed", "5", "--out", str(r / "infer")]) == 0
        assert main(["bench", "--checkpoint", str(tmp_path / "a" / "train" / "model.ckpt"), "--count", "1",
                     *small, "--steps", "2", "--seed", "5", "--out", str(r / "bench")]) == 0
    same = {}
    for name in ("gen", "train", "infer", "bench"):
        same[name] = _tree(tmp_path / "a" / name) == _tree(tmp_path / "b" / name)
    ok = all(same.values())
    live(line(8, ok, "rerun with identical config + seed byte-identical: "
                  + ", ".join(f"{k} {'yes' if v else 'NO'}" for k, v in same.items())))
    assert ok


# ------------------------------------------------------------------ C9


def test_c9_rvt_fuzz_and_roundtrip(tmp_path, live):
    rng = np.random.default_rng(9)
    base_u8 = encode(rng.integers(0, 256, (2, 5, 4, 3), dtype=np.uint8))
    base_f = encode(rng.random((2, 3, 4, 1)).astype(np.float32))
    crashes = []
    rejected = accepted = 0
    for i in range(FUZZ_CASES):
        buf = bytearray(base_u8 if i % 2 else base_f)
        op = i % 5
        if op == 0:  # flip header bytes
            for _ in range(int(rng.integers(1, 4))):
                buf[int(rng.integers(0, 22))] = int(rng.integers(0, 256))
        elif op == 1:  # truncate
            buf = buf[: int(rng.integers(0, len(buf)))]
        elif op == 2:  # append junk
            buf += rng.integers(0, 256, int(rng.integers(1, 16)), dtype=np.uint8).tobytes()
        elif op == 3:  # random extents
            buf[5:21] = rng.integers(0, 2**32, 4, dtype=np.uint64).astype("<u4").tobytes()
        else:  # random bytes anywhere
            for _ in range(int(rng.integers(1, 6))):
                buf[int(rng.integers(0, len(buf)))] = int(rng.integers(0, 256))
        try:
            decode(bytes(buf))
            accepted += 1
        except RvtError:
            rejected += 1
        except Exception as exc:  # noqa: BLE001 - any other type is a finding
            crashes.append(f"{type(exc).__name__}: {exc}")
    u8 = rng.integers(0, 256, (3, 7, 5, 3), dtype=np.uint8)
    f32 = rng.normal(size=(3, 7, 5, 2)).astype(np.float32)
    mask = rng.random((3, 7, 5)) > 0.5
    rvt_write(tmp_path / "u8.rvt", u8)
    rvt_write(tmp_path / "f32.rvt", f32)
    rvt_write(tmp_path / "m.rvt", mask)
    u8_back = decode((tmp_path / "u8.rvt").read_bytes())[1]
    rt_u8 = u8_back.tobytes() == u8.tobytes() and encode(u8_back) == (tmp_path / "u8.rvt").read_bytes()
    rt_f32 = read_video(tmp_path / "f32.rvt").tobytes() == f32.tobytes()
    rt_mask = np.array_equal(read_mask(tmp_path / "m.rvt"), mask)
    ok = not crashes and rt_u8 and rt_f32 and rt_mask
    live(line(9, ok, f"{FUZZ_CASES} fuzzed inputs: {rejected} structured RvtError, {accepted} valid, "
                  f"{len(crashes)} other exceptions; round-trip u8 {rt_u8}, f32 {rt_f32}, mask {rt_mask}"))
    assert ok, crashes[:3]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
