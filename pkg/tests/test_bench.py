import numpy as np
import pytest

from rose import CATEGORIES
from rose.bench import (
    BenchError,
    MetricError,
    background_consistency,
    build_benchmark,
    build_copy_paste_pair,
    identity_method,
    load_pairs,
    motion_smoothness,
    psnr,
    run_benchmark,
    ssim,
    temporal_flicker,
)
from rose.bench.metrics import default_window
from rose.synth.dataset import RenderConfig


def rand_video(seed, shape=(3, 16, 16, 3)):
    return np.random.default_rng(seed).random(shape)


def test_psnr_examples():
    v = rand_video(0)
    assert psnr(v, v) == 99.0
    assert psnr(np.zeros((2, 4, 4, 3)), np.ones((2, 4, 4, 3))) == 0.0
    assert psnr(np.full((2, 4, 4, 3), 0.2), np.full((2, 4, 4, 3), 0.3)) == pytest.approx(20.0, abs=1e-9)
    with pytest.raises(MetricError):
        psnr(np.zeros((1, 2, 2, 3)), np.zeros((1, 2, 3, 3)))


def test_psnr_symmetric_and_monotone_in_noise():
    a, b = rand_video(1), rand_video(2)
    assert psnr(a, b) == psnr(b, a)
    base = np.full((4, 16, 16, 3), 0.5)
    means = []
    for amp in (0.01, 0.05, 0.1, 0.2, 0.5):
        vals = [psnr(base, base + np.random.default_rng(s).uniform(-amp, amp, base.shape)) for s in range(10)]
        means.append(np.mean(vals))
    assert np.all(np.diff(means) < 0)


def test_ssim_identity_and_symmetry():
    v = rand_video(3)
    assert ssim(v, v) == 1.0
    w = rand_video(4)
    assert ssim(v, w) == pytest.approx(ssim(w, v), abs=1e-12)


def test_ssim_checkerboard_inverse_negative():
    y, x = np.mgrid[:16, :16]
    board = ((x + y) % 2).astype(float)
    v = np.repeat(board[None, :, :, None], 3, axis=-1)
    assert ssim(v, 1 - v) < 0


def test_ssim_constant_closed_form():
    a, b = 0.3, 0.7
    c1 = 0.01**2
    expected = (2 * a * b + c1) / (a * a + b * b + c1)
    got = ssim(np.full((1, 16, 16, 1), a), np.full((1, 16, 16, 1), b))
    assert got == pytest.approx(expected, rel=1e-9)


def test_ssim_window_rules():
    assert default_window(96, 96) == 11 and default_window(8, 10) == 7
    v = rand_video(0, (1, 8, 8, 3))
    with pytest.raises(MetricError):
        ssim(v, v, window=11)
    with pytest.raises(MetricError):
        ssim(v, v, window=4)


def test_flicker_examples():
    static = np.repeat(rand_video(0, (1, 8, 8, 3)), 5, axis=0)
    assert temporal_flicker(static) == 0.0
    alt = np.zeros((6, 4, 4, 3))
    alt[1::2] = 1.0
    assert temporal_flicker(alt) == 1.0
    fade = np.linspace(0, 1, 11)[:, None, None, None] * np.ones((11, 4, 4, 3))
    assert temporal_flicker(fade) == pytest.approx(0.1)
    with pytest.raises(MetricError):
        temporal_flicker(static[:1])


def test_background_consistency_examples():
    v = rand_video(5)
    region = np.zeros(v.shape[:3], bool)
    region[:, 4:8, 4:8] = True
    assert background_consistency(v, v, region) == 99.0
    edited = v.copy()
    edited[region] = np.random.default_rng(0).random(edited[region].shape)
    assert background_consistency(v, edited, region) == 99.0
    shifted = np.where(region[..., None], v, v + 0.1)
    assert background_consistency(v, shifted, region) == pytest.approx(20.0, abs=1e-9)
    with pytest.raises(MetricError):
        background_consistency(v, v, np.ones(v.shape[:3], bool))


def test_motion_smoothness_examples():
    static = np.repeat(rand_video(0, (1, 8, 8, 3)), 4, axis=0)
    assert motion_smoothness(static) == 1.0
    x = np.linspace(0, 1, 64)
    frames = np.stack([np.tile((x + 0.01 * f)[None, :, None], (16, 1, 3)) for f in range(8)])
    assert motion_smoothness(frames) > 0.999
    noise = np.random.default_rng(0).random((8, 16, 16, 3))
    assert motion_smoothness(noise) < 0.8
    with pytest.raises(MetricError):
        motion_smoothness(static[:2])


def test_copy_paste_examples():
    dst = rand_video(1)
    m = np.zeros(dst.shape[:3], bool)
    m[:, 2:5, 3:6] = True
    same = build_copy_paste_pair(dst, m, dst, (0, 0))
    assert np.array_equal(same.input, dst)
    empty = build_copy_paste_pair(rand_video(2), np.zeros_like(m), dst, (1, 1))
    assert empty.input.tobytes() == dst.tobytes()
    src = rand_video(3)
    pair = build_copy_paste_pair(src, m, dst, (4, -2))
    assert np.array_equal(pair.mask[:, 6:9, 1:4], np.ones((3, 3, 3), bool))
    assert np.array_equal(pair.input[:, 6:9, 1:4], src[:, 2:5, 3:6])
    assert np.array_equal(pair.input[~pair.mask], dst[~pair.mask])
    assert psnr(pair.gt, dst) == 99.0
    with pytest.raises(BenchError):
        build_copy_paste_pair(src, m, dst, (100, 0))


@pytest.fixture(scope="module")
def tiny_bench(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    build_benchmark(root, RenderConfig(frames=3, height=16, width=16, master_seed=4), per_category=2)
    return root


def test_benchmark_layout(tiny_bench):
    for subset in ("synthetic_paired", "realistic_paired", "realistic_unpaired"):
        pairs = load_pairs(tiny_bench, subset)
        assert len(pairs) == 12
        assert all((p.gt is None) == (subset == "realistic_unpaired") for p in pairs)


def test_oracle_and_identity_reports(tiny_bench):
    pairs = load_pairs(tiny_bench, "synthetic_paired")
    table = {p.input.tobytes(): p.gt for p in pairs}
    oracle = run_benchmark(lambda v, m: table[v.tobytes()], tiny_bench, "synthetic_paired")
    for row in oracle.rows.values():
        assert row["psnr"] == 99.0 and row["ssim"] == 1.0
    ident = run_benchmark(identity_method, tiny_bench, "synthetic_paired")
    expected = {c: np.mean([psnr(p.input, p.gt) for p in pairs if p.category == c]) for c in CATEGORIES}
    for c, row in ident.rows.items():
        assert row["psnr"] == pytest.approx(expected[c], abs=1e-12)
    for m, v in ident.mean.items():
        assert v == pytest.approx(np.mean([r[m] for r in ident.rows.values()]))


def test_report_text_and_csv(tiny_bench, tmp_path):
    rep = run_benchmark(identity_method, tiny_bench, "realistic_unpaired")
    csv_path, txt_path = rep.write(tmp_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0].split(",")[0] == "category" and "lpips" in lines[0]
    names = [ln.split(",")[0] for ln in lines[1:]]
    assert names == ["Common", "Shadow", "Light Source", "Reflection", "Mirror", "Translucent", "Mean"]
    assert all(ln.split(",")[1] == "n/a" for ln in lines[1:])
    text = txt_path.read_text()
    assert "proxy" in text and text.splitlines()[-1].startswith("Mean")


def test_benchmark_deterministic(tiny_bench):
    a = run_benchmark(identity_method, tiny_bench, "realistic_paired").to_csv()
    b = run_benchmark(identity_method, tiny_bench, "realistic_paired").to_csv()
    assert a == b
