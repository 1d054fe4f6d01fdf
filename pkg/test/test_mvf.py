import numpy as np
import pytest

from pose.core import FeatureMap, Heatmap
from pose.core.errors import DimensionMismatch, EmptySources, NonFinite, OutOfBounds, ValidationError
from pose.harness.scene import render_blobs
from pose.mvf import (
    FusionConfig,
    _select_sources,
    fuse_and_refine,
    match_heatmap,
    pseudo_heatmap,
    refine_observation,
    sample_feature,
    soft_argmax,
)


def _blob(center_image, amplitude, size=48, sigma=3.0):
    return Heatmap(render_blobs(np.array(center_image), np.array([amplitude]), size, size, sigma)[0])


def test_soft_argmax_spike():
    grid = np.zeros((24, 32))
    grid[3, 7] = 1000.0
    p = soft_argmax(Heatmap(grid))
    assert (p.u, p.v) == pytest.approx((7.0, 3.0))
    assert p.confidence == pytest.approx(1.0)


def test_soft_argmax_uniform():
    p = soft_argmax(Heatmap(np.zeros((24, 32))))
    assert (p.u, p.v) == pytest.approx((15.5, 11.5))
    assert p.confidence == pytest.approx(1.0 / (24 * 32))


def test_soft_argmax_log_gaussian_centroid():
    u, v = np.meshgrid(np.arange(32.0), np.arange(24.0))
    grid = -((u - 12.3) ** 2 + (v - 8.7) ** 2) / (2 * 2.0 ** 2)
    p = soft_argmax(Heatmap(grid))
    assert p.u == pytest.approx(12.3, abs=1e-3)
    assert p.v == pytest.approx(8.7, abs=1e-3)


def test_soft_argmax_temperature_sharpens():
    heatmap = _blob((20.5, 20.5), 2.0)
    soft = soft_argmax(heatmap, temperature=1.0)
    sharp = soft_argmax(heatmap, temperature=0.1)
    assert sharp.confidence > soft.confidence
    assert abs(sharp.u - 20.0) < abs(soft.u - 20.0) + 1e-12


def test_soft_argmax_rejects_non_finite():
    grid = np.zeros((4, 4))
    grid[1, 1] = np.nan
    with pytest.raises(NonFinite):
        soft_argmax(Heatmap(grid))


def test_sample_feature_on_lattice_and_midpoint(rng):
    feature = FeatureMap(rng.normal(size=(6, 5, 4)))
    np.testing.assert_allclose(sample_feature(feature, (2.0, 3.0)), feature.grid[3, 2], atol=1e-12)
    expected = 0.5 * (feature.grid[3, 2] + feature.grid[3, 3])
    np.testing.assert_allclose(sample_feature(feature, (2.5, 3.0)), expected, atol=1e-12)


def test_sample_feature_reproduces_linear_fields():
    u, v = np.meshgrid(np.arange(5.0), np.arange(6.0))
    grid = np.stack([2.0 * u - v + 1.0, 0.5 * v], axis=-1)
    value = sample_feature(FeatureMap(grid), (1.3, 4.6))
    np.testing.assert_allclose(value, [2.0 * 1.3 - 4.6 + 1.0, 0.5 * 4.6], atol=1e-9)


def test_sample_feature_out_of_bounds(rng):
    feature = FeatureMap(rng.normal(size=(6, 5, 2)))
    sample_feature(feature, (4.0, 5.0))
    with pytest.raises(OutOfBounds):
        sample_feature(feature, (4.1, 0.0))
    with pytest.raises(OutOfBounds):
        sample_feature(feature, (0.0, -0.5))


def test_match_dot_and_fcl(rng):
    feature = FeatureMap(rng.normal(size=(6, 5, 4)))
    f = rng.normal(size=4)
    dot = match_heatmap(feature, f, FusionConfig())
    np.testing.assert_allclose(dot.grid, feature.grid @ f / 4)

    # 只保留参考特征一侧且取 f/N 时两种策略一致
    same = FusionConfig(strategy="fcl", fcl_weights=np.concatenate([f / 4, np.zeros(4)]))
    np.testing.assert_allclose(match_heatmap(feature, f, same).grid, dot.grid, atol=1e-12)

    bias_only = FusionConfig(strategy="fcl", fcl_weights=np.concatenate([np.zeros(4), np.ones(4)]))
    np.testing.assert_allclose(match_heatmap(feature, f, bias_only).grid, np.full((6, 5), f.sum()))


def test_match_dimension_checks(rng):
    feature = FeatureMap(rng.normal(size=(6, 5, 4)))
    with pytest.raises(DimensionMismatch):
        match_heatmap(feature, np.ones(3), FusionConfig())
    with pytest.raises(DimensionMismatch):
        match_heatmap(feature, np.ones(4), FusionConfig(strategy="fcl", fcl_weights=np.ones(6)))


def test_pseudo_heatmap_mask(rng):
    match = Heatmap(rng.normal(size=(6, 5)))
    np.testing.assert_array_equal(pseudo_heatmap(match, Heatmap(np.ones((6, 5)))).grid, match.grid)
    np.testing.assert_array_equal(pseudo_heatmap(match, Heatmap(np.zeros((6, 5)))).grid, np.zeros((6, 5)))
    with pytest.raises(DimensionMismatch):
        pseudo_heatmap(match, Heatmap(np.ones((5, 5))))


def test_fuse_without_pseudos_keeps_initial():
    initial = _blob((10.5, 12.5), 30.0)
    fused, refined = fuse_and_refine(initial, [], FusionConfig())
    assert fused is initial
    expected = soft_argmax(initial)
    assert (refined.u, refined.v) == (expected.u, expected.v)


def test_fuse_moves_toward_consistent_sources():
    truth = np.array([20.0, 20.0])
    initial = _blob((10.5, 10.5), 10.0)
    pseudos = [_blob((20.5, 20.5), 30.0), _blob((20.5, 20.5), 30.0)]
    _, refined = fuse_and_refine(initial, pseudos, FusionConfig())
    before = soft_argmax(initial)
    assert np.linalg.norm(np.array([refined.u, refined.v]) - truth) < 0.5
    assert np.linalg.norm(np.array([before.u, before.v]) - truth) > 5.0


def test_fuse_most_confident_source():
    initial = _blob((10.5, 10.5), 10.0)
    pseudos = [_blob((30.5, 5.5), 30.0), _blob((20.5, 20.5), 30.0)]
    config = FusionConfig(fusion="most-conf")
    fused, _ = fuse_and_refine(initial, pseudos, config, source_confidences=[0.2, 0.9])
    np.testing.assert_allclose(fused.grid, 0.5 * initial.grid + 0.5 * pseudos[1].grid)

    weighted = FusionConfig(fusion="most-conf", aggregation=[0.5, 0.25, 0.25])
    fused, _ = fuse_and_refine(initial, pseudos, weighted, source_confidences=[0.9, 0.2])
    np.testing.assert_allclose(fused.grid, (2.0 * initial.grid + pseudos[0].grid) / 3.0)


def test_most_conf_without_confident_source_keeps_initial():
    initial = _blob((10.5, 10.5), 10.0)
    pseudos = [_blob((30.5, 5.5), 30.0), _blob((20.5, 20.5), 30.0)]
    config = FusionConfig(fusion="most-conf")
    with pytest.raises(EmptySources):
        _select_sources(pseudos, [0.0, 0.0], config)
    with pytest.raises(EmptySources):
        _select_sources([], None, FusionConfig())
    fused, refined = fuse_and_refine(initial, pseudos, config, source_confidences=[0.0, 0.0])
    assert fused is initial
    expected = soft_argmax(initial)
    assert (refined.u, refined.v) == (expected.u, expected.v)


def test_fuse_weight_count_mismatch():
    initial = _blob((10.5, 10.5), 10.0)
    pseudos = [_blob((20.5, 20.5), 30.0), _blob((20.5, 20.5), 30.0)]
    with pytest.raises(DimensionMismatch):
        fuse_and_refine(initial, pseudos, FusionConfig(aggregation=[0.5, 0.5]))
    with pytest.raises(DimensionMismatch):
        fuse_and_refine(initial, [Heatmap(np.zeros((10, 10)))], FusionConfig())


def test_fusion_config_validation():
    with pytest.raises(ValidationError):
        FusionConfig(strategy="cosine")
    with pytest.raises(ValidationError):
        FusionConfig(strategy="fcl")
    with pytest.raises(ValidationError):
        FusionConfig(fusion="best")
    with pytest.raises(ValidationError):
        FusionConfig(gamma=0.0)
    with pytest.raises(ValidationError):
        FusionConfig(aggregation=[0.5, 0.6])


def test_fusion_config_overrides():
    config = FusionConfig.from_config({"strategy": "dot", "gamma": 5}, gamma=None, fusion="most-conf")
    assert config.gamma == 5.0
    assert config.fusion == "most-conf"


def test_refine_observation_noise_free(small_scene):
    obs = small_scene.true_observation(0)
    heatmaps = small_scene.heatmaps(obs)
    initial, refined = refine_observation(small_scene.cameras, heatmaps, small_scene.feature_maps(0),
                                          FusionConfig(), frame=0)
    assert refined.points.shape == obs.points.shape
    assert refined.frame == 0
    assert np.linalg.norm(initial.points - obs.points, axis=-1).max() < 0.5
    assert np.linalg.norm(refined.points - obs.points, axis=-1).mean() < 1.0
    assert np.all((refined.confidence > 0.0) & (refined.confidence <= 1.0))


def test_refine_observation_view_count_mismatch(small_scene):
    obs = small_scene.true_observation(0)
    heatmaps = small_scene.heatmaps(obs)
    with pytest.raises(DimensionMismatch):
        refine_observation(small_scene.cameras, heatmaps[:3], small_scene.feature_maps(0), FusionConfig())
