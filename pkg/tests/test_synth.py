import json
import math

import numpy as np
import pytest
from scipy import ndimage

from rose import CATEGORIES
from rose.masks import diff_mask
from rose.synth import (
    PRESETS,
    RenderConfig,
    SceneError,
    SceneSpec,
    generate_dataset,
    load_dataset,
    project_shadow,
    reflect_point,
    render_triplet,
    sample_camera_path,
    sample_scene,
    valid_view_filter,
)
from rose.synth.scene import LightSpec, ObjectSpec

RES = (32, 32)


def sphere_scene(category="common", emission=0.0, light=(0.0, -1.0, 0.0), shadows=False):
    target = ObjectSpec("sphere", (0.0, 0.5, 0.0), (1.0, 1.0, 1.0), (0.9, 0.2, 0.2), emission=emission)
    return SceneSpec(category, [target], 0, LightSpec(tuple(np.asarray(light) / np.linalg.norm(light))),
                     shadows=shadows)


def static_camera(frames=2):
    return sample_camera_path("static", frames, seed=0, jitter_amplitude=0.0)


def test_project_shadow_examples():
    np.testing.assert_allclose(project_shadow((0, 1, 0), (0, -1, 0), 0.0), (0, 0, 0))
    d = np.array([1.0, -1.0, 0.0]) / math.sqrt(2)
    np.testing.assert_allclose(project_shadow((0, 1, 0), d, 0.0), (1, 0, 0), atol=1e-12)
    np.testing.assert_allclose(project_shadow((0.3, 0.0, 2.0), d, 0.0), (0.3, 0.0, 2.0))


def test_project_shadow_rejects_upward_light():
    with pytest.raises(ValueError):
        project_shadow((0, 1, 0), (0, 1, 0), 0.0)


def test_reflect_point_examples():
    np.testing.assert_allclose(reflect_point((2, 3, 5), (1, 0, 0), 0.0), (-2, 3, 5))
    np.testing.assert_allclose(reflect_point((1, 1, 3), (0, 1, 0), 1.0), (1, 1, 3))
    r = reflect_point((1, 2, 3), (0, 1, 0), 1.0)
    np.testing.assert_allclose(r, (1, 0, 3))
    # equal distance on both sides of y = 1
    assert abs((2 - 1) - (1 - r[1])) < 1e-12


def test_static_camera_without_jitter_is_constant():
    cam = sample_camera_path("static", 6, seed=3, jitter_amplitude=0.0)
    assert np.all(cam.positions == cam.positions[0])


@pytest.mark.parametrize("preset", PRESETS)
def test_camera_deterministic(preset):
    a = sample_camera_path(preset, 8, seed=11)
    b = sample_camera_path(preset, 8, seed=11)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.fov, b.fov)
    assert len(a) == 8


@pytest.mark.parametrize("seed", range(5))
def test_zoom_in_distance_decreases(seed):
    cam = sample_camera_path("zoom_in", 16, seed=seed, jitter_amplitude=0.02)
    dist = np.linalg.norm(cam.positions - cam.look_at, axis=1)
    assert np.all(np.diff(dist) < 0)


def test_unknown_preset():
    with pytest.raises(ValueError):
        sample_camera_path("crane", 4, 0)


def test_common_sphere_diff_inside_silhouette():
    tri = render_triplet(sphere_scene(), static_camera(), 2, RES)
    d = diff_mask(tri.original, tri.edited)
    assert tri.mask.any()
    assert np.array_equal(d & ~tri.mask, np.zeros_like(d))


def test_shadow_footprint_exceeds_mask():
    scene = sphere_scene("shadow", light=(1.0, -1.0, 0.0), shadows=True)
    tri = render_triplet(scene, static_camera(), 2, RES)
    d = diff_mask(tri.original, tri.edited)
    assert np.all(d.sum(axis=(1, 2)) > tri.mask.sum(axis=(1, 2)))


def test_light_source_brightens_frames():
    scene = sphere_scene("light_source", emission=0.8)
    tri = render_triplet(scene, static_camera(), 2, RES)
    assert np.all(tri.original.mean(axis=(1, 2, 3)) > tri.edited.mean(axis=(1, 2, 3)))


def test_target_outside_view_is_error():
    scene = sphere_scene()
    scene.objects[0].center = (0.0, 0.5, 500.0)
    with pytest.raises(SceneError):
        render_triplet(scene, static_camera(), 2, RES)


def test_bad_resolution_and_camera_length():
    with pytest.raises(ValueError):
        render_triplet(sphere_scene(), static_camera(), 2, (8, 8))
    with pytest.raises(ValueError):
        render_triplet(sphere_scene(), static_camera(3), 2, RES)


def test_category_inconsistent_scene_rejected():
    with pytest.raises(SceneError):
        render_triplet(sphere_scene("light_source"), static_camera(), 2, RES)


@pytest.mark.parametrize("category", CATEGORIES)
def test_sampled_scene_roundtrips_json(category):
    scene = sample_scene(category, 5)
    scene.validate()
    back = SceneSpec.from_dict(json.loads(scene.to_json()))
    assert back.to_json() == scene.to_json()


@pytest.mark.parametrize("category", CATEGORIES)
def test_alignment_outside_diff(category):
    from rose.synth.dataset import iter_accepted

    cfg = RenderConfig(frames=4, height=32, width=32, master_seed=1, categories=[category])
    tri = next(iter_accepted(category, 1, cfg))
    d = diff_mask(tri.original, tri.edited)
    band = np.stack([ndimage.binary_dilation(f, np.ones((3, 3), bool)) for f in d])
    assert np.array_equal(tri.original[~band], tri.edited[~band])
    # the mask is part of what changes
    assert (tri.mask & ~band).sum() == 0


def test_valid_view_filter_examples():
    assert valid_view_filter(np.ones((4, 8, 8), bool))[0]
    keep, ratios = valid_view_filter(np.zeros((4, 8, 8), bool))
    assert not keep and ratios == [0.0] * 4
    m = np.zeros((10, 10, 10), bool)
    m[:3, :2, :1] = True  # 2 of 100 pixels in 3 frames
    keep, ratios = valid_view_filter(m, 0.005, 0.8)
    assert not keep and ratios[:3] == [0.02] * 3


def test_valid_view_filter_empty_volume():
    with pytest.raises(ValueError):
        valid_view_filter(np.zeros((0, 4, 4), bool))


def test_generate_dataset_count_and_determinism(tmp_path):
    cfg = RenderConfig(frames=2, height=16, width=16, master_seed=7)
    m1 = generate_dataset(2, cfg, tmp_path / "a")
    generate_dataset(2, cfg, tmp_path / "b")
    assert len(m1["entries"]) == 12
    assert len(list((tmp_path / "a").rglob("*.rvt"))) == 36
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()
    for tri in load_dataset(tmp_path / "a"):
        assert valid_view_filter(tri, cfg.min_fg_ratio, cfg.min_frame_fraction)[0]
