import numpy as np
import pytest
from scipy import ndimage

from rose.model import ModelConfig, RoseModel
from rose.synth.dataset import RenderConfig, iter_accepted
from rose.train import (
    ResolutionError,
    TrainConfig,
    TrainingError,
    composite,
    ddim_timesteps,
    sample,
    train,
)

MCFG = dict(frames=4, height=16, width=16, patch=(2, 4, 4), dim=16, depth=2, heads=2)


@pytest.fixture(scope="module")
def tiny_data():
    cfg = RenderConfig(frames=4, height=16, width=16, master_seed=3, categories=["shadow"])
    return list(iter_accepted("shadow", 2, cfg))


def test_train_deterministic(tiny_data, tmp_path):
    a = train(tiny_data, TrainConfig(steps=5, master_seed=1), ModelConfig(**MCFG), tmp_path / "a")
    b = train(tiny_data, TrainConfig(steps=5, master_seed=1), ModelConfig(**MCFG), tmp_path / "b")
    assert np.array_equal(a.trace, b.trace)
    assert a.checkpoint.read_bytes() == b.checkpoint.read_bytes()
    assert a.loss_trace.read_bytes() == b.loss_trace.read_bytes()
    header = a.loss_trace.read_text().splitlines()[0]
    assert header == "step,diffusion_loss,mask_loss,total"


def test_seed_changes_run(tiny_data):
    a = train(tiny_data, TrainConfig(steps=3, master_seed=1), ModelConfig(**MCFG))
    b = train(tiny_data, TrainConfig(steps=3, master_seed=2), ModelConfig(**MCFG))
    assert not np.array_equal(a.trace, b.trace)


def test_lambda_zero_total_equals_diffusion(tiny_data):
    r = train(tiny_data, TrainConfig(steps=4, lam=0.0), ModelConfig(**{**MCFG, "lam": 0.0}))
    assert np.array_equal(r.trace[:, 3], r.trace[:, 1])


def test_trace_finite_and_state(tiny_data):
    r = train(tiny_data, TrainConfig(steps=6), ModelConfig(**MCFG))
    assert np.all(np.isfinite(r.trace))
    assert r.state.step == 6
    for k, p in r.model.params.items():
        assert r.state.m[k].shape == p.shape and np.all(np.isfinite(p.data))


def test_nonfinite_aborts_with_step(tiny_data):
    model = RoseModel(ModelConfig(**MCFG), seed=0)
    model.params["patch_embed.w"].data[0, 0] = np.nan
    with pytest.raises(TrainingError, match="step 0"):
        train(tiny_data, TrainConfig(steps=2), ModelConfig(**MCFG), model=model)


def test_resolution_mismatch(tiny_data):
    with pytest.raises(ResolutionError):
        train(tiny_data, TrainConfig(steps=1), ModelConfig(**{**MCFG, "height": 8, "width": 8}))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(steps=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)


def test_ddim_timesteps():
    assert ddim_timesteps(1000, 1).tolist() == [1000]
    ts = ddim_timesteps(1000, 50)
    assert ts[0] == 1000 and ts[-1] == 1 and np.all(np.diff(ts) < 0)
    with pytest.raises(ValueError):
        ddim_timesteps(1000, 0)


def test_sample_deterministic_and_shape(tiny_data):
    model = RoseModel(ModelConfig(**MCFG), seed=0, zero_init=False)
    tri = tiny_data[0]
    a, da = sample(model, tri.original, tri.mask, steps=4, seed=9)
    b, db = sample(model, tri.original, tri.mask, steps=4, seed=9)
    assert a.shape == tri.original.shape and da.shape == tri.mask.shape
    assert a.tobytes() == b.tobytes() and da.tobytes() == db.tobytes()
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_sample_resolution_mismatch(tiny_data):
    model = RoseModel(ModelConfig(**{**MCFG, "height": 8, "width": 8}), seed=0)
    with pytest.raises(ResolutionError):
        sample(model, tiny_data[0].original, tiny_data[0].mask, steps=2)


def test_composite_examples():
    rng = np.random.default_rng(0)
    orig = rng.random((2, 12, 12, 3)).astype(np.float32)
    erased = rng.random((2, 12, 12, 3)).astype(np.float32)
    empty = np.zeros((2, 12, 12), bool)
    out = composite(erased, orig, empty, np.zeros((2, 12, 12)))
    assert out.tobytes() == orig.tobytes()
    out = composite(erased, orig, ~empty, np.zeros((2, 12, 12)))
    assert out.tobytes() == erased.tobytes()


def test_composite_feather_band():
    rng = np.random.default_rng(1)
    orig = rng.random((1, 20, 20, 3)).astype(np.float32)
    erased = rng.random((1, 20, 20, 3)).astype(np.float32)
    mask = np.zeros((1, 20, 20), bool)
    mask[0, 8:11, 8:11] = True
    d_hat = np.zeros((1, 20, 20))
    d_hat[0, 3, 3] = 0.9
    out = composite(erased, orig, mask, d_hat, 0.5)
    region = mask[0] | (d_hat[0] > 0.5)
    dist = ndimage.distance_transform_cdt(~region, metric="chessboard")
    far = dist >= 2
    assert np.array_equal(out[0][far], orig[0][far])
    assert np.array_equal(out[0][region], erased[0][region])
    ring = dist == 1
    np.testing.assert_allclose(out[0][ring], 0.5 * erased[0][ring] + 0.5 * orig[0][ring], rtol=1e-6)


def test_composite_threshold_range():
    z = np.zeros((1, 4, 4, 3))
    with pytest.raises(ValueError):
        composite(z, z, np.zeros((1, 4, 4), bool), np.zeros((1, 4, 4)), 1.0)
