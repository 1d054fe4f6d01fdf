import json
import struct

import numpy as np
import pytest

from conftest import PRIOR_DIMS, PRIOR_LAMBDAS
from pose.anatomy import AnatomyPrior
from pose.core.errors import CountMismatch, DimensionMismatch, MalformedInput, ValidationError
from pose.harness import (
    CorruptionSpec,
    PipelineConfig,
    build_scene,
    corrupt_observations,
    gen_poses,
    gen_rig,
    run_pipeline,
    run_sweep,
    triangulate_frame,
)
from pose.harness.io import (
    TENSOR_HEADER,
    align_frames,
    list_frames,
    load_cameras,
    load_maps,
    load_observations,
    load_plausibility,
    load_pose_records,
    load_poses,
    load_prior,
    read_tensor,
    rle_decode,
    rle_encode,
    save_cameras,
    save_maps,
    save_observations,
    save_plausibility,
    save_poses,
    save_prior,
    save_report,
    save_sweep,
    poses_to_dict,
    write_tensor,
)
from pose.harness.scene import TEMPLATE_OFFSETS
from pose.plausibility import eval_metrics, fit_plausibility_model
from pose.triangulation import algebraic_triangulate
from share.util import load_json, to_json_text


# ---- 场景 ----

def test_rig_geometry(rig):
    assert [cam.id for cam in rig] == [0, 1, 2, 3]
    for cam in rig:
        assert np.hypot(cam.center[0], cam.center[1]) == pytest.approx(4000.0, rel=1e-9)
        assert 800.0 - 1e-6 <= cam.center[2] <= 2200.0 + 1e-6
        assert cam.image_size == (256, 256)
    # 相机看向原点
    for cam in rig:
        uv = cam.projection @ np.array([0.0, 0.0, 0.0, 1.0])
        np.testing.assert_allclose(uv[:2] / uv[2], [128.0, 128.0], atol=1e-6)


def test_rig_is_deterministic():
    a = gen_rig(3, 3000.0, (1000.0, 1500.0), (128, 96), seed=9)
    b = gen_rig(3, 3000.0, (1000.0, 1500.0), (128, 96), seed=9)
    for ca, cb in zip(a, b):
        np.testing.assert_array_equal(ca.projection, cb.projection)
    with pytest.raises(ValidationError):
        gen_rig(0, 3000.0, (1000.0, 1500.0), (128, 96), seed=9)


def test_sampler_keeps_template_bone_lengths(sampler, topology):
    expected = [np.linalg.norm(TEMPLATE_OFFSETS[topology.joints[c]]) for c, _ in topology.bones]
    for pose in gen_poses(sampler, 10, seed=4):
        np.testing.assert_allclose(topology.bone_lengths(pose.points), expected, rtol=1e-9)


def test_pose_streams(sampler):
    a = gen_poses(sampler, 3, seed=5)
    b = gen_poses(sampler, 3, seed=5)
    c = gen_poses(sampler, 3, seed=5, index=1)
    assert to_json_text(poses_to_dict(a)) == to_json_text(poses_to_dict(b))
    assert not np.allclose(a[0].joints, c[0].joints)


def test_poses_from_prior_without_noise(prior, topology):
    poses = gen_poses(prior, 5, seed=2, noise_scale=0.0)
    mean_pose = (prior.entries[0].kcs.G @ prior.entries[0].pca.mean).reshape(-1, 3)
    for pose in poses:
        np.testing.assert_allclose(topology.bone_lengths(pose.points), topology.bone_lengths(mean_pose), rtol=1e-9)
        assert pose.root[2] == pytest.approx(mean_pose[0, 2], abs=1e-9)
    with pytest.raises(ValidationError):
        gen_poses(AnatomyPrior(topology, {1: prior.entries[1]}), 2, seed=2)


def test_scene_maps(small_scene):
    obs = small_scene.true_observation(1)
    np.testing.assert_array_equal(obs.confidence, np.ones((4, 17)))
    heatmaps = small_scene.heatmaps(obs)
    assert len(heatmaps) == 4 and len(heatmaps[0]) == 17
    u, v = obs.points[2, 5]
    peak = heatmaps[2][5].grid[int(v), int(u)]
    assert 20.0 < peak <= 30.0
    maps = small_scene.feature_maps(1)
    assert maps[0].grid.shape == (256, 256, 16)
    # 同一帧的特征图可重复生成
    np.testing.assert_array_equal(small_scene.feature_maps(1)[3].grid, maps[3].grid)


# ---- 数据污染 ----

def test_clean_corruption_is_identity(small_scene):
    observations = corrupt_observations(small_scene, CorruptionSpec.clean(seed=1))
    for t, obs in enumerate(observations):
        np.testing.assert_array_equal(obs.points, small_scene.true_2d[t])
        np.testing.assert_array_equal(obs.confidence, np.ones((4, 17)))
        assert obs.frame == t


def test_gaussian_noise_statistics(small_scene):
    spec = CorruptionSpec(sigma=2.0, outlier_rate=0.0, occlusion_rate=0.0, seed=7)
    observations = corrupt_observations(small_scene, spec)
    residual = np.stack([o.points for o in observations]) - small_scene.true_2d
    assert residual.std() == pytest.approx(2.0, rel=0.1)
    assert abs(residual.mean()) < 0.2


def test_occlusion_saturates(small_scene):
    spec = CorruptionSpec(sigma=0.0, outlier_rate=0.0, occlusion_rate=1.0, occluded_confidence=0.1, seed=7)
    for obs in corrupt_observations(small_scene, spec):
        np.testing.assert_array_equal(obs.confidence, np.full((4, 17), 0.1))


def test_corruption_streams_independent(small_scene):
    noisy = corrupt_observations(small_scene, CorruptionSpec(sigma=3.0, seed=11))
    quiet = corrupt_observations(small_scene, CorruptionSpec(sigma=0.0, seed=11))
    again = corrupt_observations(small_scene, CorruptionSpec(sigma=3.0, seed=11))
    for a, b, c in zip(noisy, quiet, again):
        np.testing.assert_array_equal(a.confidence, b.confidence)
        np.testing.assert_array_equal(a.points, c.points)


def test_corruption_validation():
    with pytest.raises(ValidationError):
        CorruptionSpec(outlier_rate=1.5)
    with pytest.raises(ValidationError):
        CorruptionSpec(sigma=-1.0)
    spec = CorruptionSpec.from_config({"sigma": 1, "outlier_px": 30}, sigma=None, seed=4)
    assert (spec.sigma, spec.outlier_px, spec.seed) == (1.0, 30.0, 4)


# ---- 流程 ----

def test_ht_with_zero_lambdas_routes_to_at(prior, noisy_observations, small_scene):
    silent = prior.with_lambdas({h: 0.0 for h in prior.hops})
    obs = noisy_observations[4]
    pose, report = triangulate_frame(small_scene.cameras, obs, "ht", silent)
    assert report is None
    np.testing.assert_array_equal(pose.joints, algebraic_triangulate(small_scene.cameras, obs).joints)


@pytest.mark.parametrize("mode", ["lt", "at"])
def test_pipeline_noise_free(small_scene, topology, mode):
    report = run_pipeline(small_scene, small_scene.true_observations(), PipelineConfig(mode=mode), topology)
    assert report.metrics.mpjpe < 1e-6
    assert report.metrics.jdr == 1.0
    assert report.label == mode
    assert len(report.poses) == small_scene.num_frames


def test_pipeline_ht_summary_and_dump(small_scene, noisy_observations, topology, prior, tmp_path):
    config = PipelineConfig(mode="ht", threads=2, dump_dir=tmp_path)
    report = run_pipeline(small_scene, noisy_observations, config, topology, prior)
    summary = report.summary()
    assert summary["mode"] == "ht"
    assert summary["frames"] == small_scene.num_frames
    assert summary["solver"]["fallbacks"] == 0
    assert [f.frame for f in report.frames] == list(range(small_scene.num_frames))
    records = load_pose_records(tmp_path / "ht_poses.json")
    assert [r.frame for r in records] == list(range(small_scene.num_frames))
    assert all(r.report is not None and r.report.status == "cholesky" for r in records)
    assert set(records[0].report.reconstruction_residual) == set(prior.hops)
    np.testing.assert_array_equal(records[5].pose.joints, report.frames[5].pose.joints)


def test_pipeline_validation(small_scene, topology):
    with pytest.raises(ValidationError):
        PipelineConfig(mode="dlt")
    with pytest.raises(ValidationError):
        run_pipeline(small_scene, small_scene.true_observations()[:3], PipelineConfig(mode="at"), topology)


# ---- 消融扫描 ----

def _sweep(kind, values, scene, observations, topology, training_poses, mode="ht"):
    return run_sweep(kind, values, scene, observations, topology, training_poses[:2000],
                     PRIOR_DIMS, PRIOR_LAMBDAS, PipelineConfig(mode=mode))


def test_sweep_lambda_zero_matches_at(small_scene, noisy_observations, topology, training_poses):
    results = _sweep("lambda", ["0", "0=8000,1=0,2=0"], small_scene, noisy_observations, topology, training_poses)
    assert [r.setting for r in results] == ["0", "0=8000,1=0,2=0"]
    at = run_pipeline(small_scene, noisy_observations, PipelineConfig(mode="at"), topology)
    assert results[0].report.metrics.mpjpe == pytest.approx(at.metrics.mpjpe, rel=1e-12)
    assert all(f.report is None for f in results[0].report.frames)
    assert all(f.report is not None for f in results[1].report.frames)
    assert "MPJPE" in results[1].metrics()


def test_sweep_hops_and_dims(small_scene, noisy_observations, topology, training_poses):
    results = _sweep("hops", ["0", "0+1"], small_scene, noisy_observations, topology, training_poses)
    assert set(results[0].report.frames[0].report.reconstruction_residual) == {0}
    assert set(results[1].report.frames[0].report.reconstruction_residual) == {0, 1}

    results = _sweep("dim", ["10", "0=25,1=5"], small_scene, noisy_observations, topology, training_poses)
    assert [r.kind for r in results] == ["dim", "dim"]
    assert all(np.isfinite(r.report.metrics.mpjpe) for r in results)


def test_sweep_views(small_scene, noisy_observations, topology, training_poses):
    results = _sweep("views", ["2", "4"], small_scene, noisy_observations, topology, training_poses, mode="at")
    assert results[0].report.frames[0].observation.num_views == 2
    assert results[1].report.frames[0].observation.num_views == 4
    for bad in ("1", "5", "two"):
        with pytest.raises(ValidationError):
            _sweep("views", [bad], small_scene, noisy_observations, topology, training_poses, mode="at")


def test_sweep_validation(small_scene, noisy_observations, topology, training_poses):
    for kind, value in [("depth", "1"), ("hops", "0+7"), ("lambda", "0=abc"), ("matching", "dot")]:
        with pytest.raises(ValidationError):
            _sweep(kind, [value], small_scene, noisy_observations, topology, training_poses)
    with pytest.raises(ValidationError):
        _sweep("lambda", [], small_scene, noisy_observations, topology, training_poses)


@pytest.mark.slow
def test_sweep_matching(small_scene, noisy_observations, topology, training_poses):
    results = _sweep("matching", ["dot/all", "dot/most-conf"], small_scene, noisy_observations, topology,
                     training_poses, mode="at")
    for r in results:
        assert r.report.label == "mvf-at"
        assert r.report.initial_metrics is not None


# ---- 文件读写 ----

def test_tensor_layout(tmp_path):
    array = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
    path = write_tensor(tmp_path / "t.bin", array, "feature", view=1)
    raw = path.read_bytes()
    assert len(raw) == 16 + 4 * array.size
    assert TENSOR_HEADER.unpack_from(raw) == (b"HTM", b"f", 3, 2, 4)
    np.testing.assert_array_equal(np.frombuffer(raw[16:20], dtype="<f4"), [0.0])

    loaded, meta = read_tensor(path)
    np.testing.assert_array_equal(loaded, array.astype(np.float32))
    assert meta == {"kind": "feature", "view": 1, "joint": -1, "width": 3, "height": 2, "channels": 4}


def test_tensor_corruption_detected(tmp_path):
    path = write_tensor(tmp_path / "t.bin", np.zeros((2, 2)), "heatmap")
    raw = path.read_bytes()
    (tmp_path / "bad_magic.bin").write_bytes(b"XYZ" + raw[3:])
    with pytest.raises(ValidationError):
        read_tensor(tmp_path / "bad_magic.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-4])
    with pytest.raises(DimensionMismatch):
        read_tensor(tmp_path / "short.bin")
    (tmp_path / "tiny.bin").write_bytes(struct.pack("<3s", b"HTM"))
    with pytest.raises(ValidationError):
        read_tensor(tmp_path / "tiny.bin")


def test_maps_directory(small_scene, tmp_path):
    obs = small_scene.true_observation(0)
    heatmaps, features = small_scene.heatmaps(obs), small_scene.feature_maps(0)
    save_maps(tmp_path, 0, heatmaps, features)
    assert list_frames(tmp_path) == [0]
    loaded_heat, loaded_feat = load_maps(tmp_path, 0, small_scene.view_ids, 17)
    np.testing.assert_allclose(loaded_heat[1][4].grid, heatmaps[1][4].grid, rtol=1e-6, atol=1e-6)
    assert loaded_heat[1][4].view == small_scene.view_ids[1]
    np.testing.assert_allclose(loaded_feat[2].grid, features[2].grid, rtol=1e-6, atol=1e-5)


def test_rle_runs():
    assert rle_encode(np.array([[False, False, True], [True, True, False]])) == [2, 3, 1]
    assert rle_encode(np.array([[True, False]])) == [0, 1, 1]
    np.testing.assert_array_equal(rle_decode([0, 1, 1], (1, 2)), [[True, False]])
    with pytest.raises(DimensionMismatch):
        rle_decode([2, 3], (2, 3))


def test_json_files_are_exact(small_scene, noisy_observations, tmp_path):
    save_cameras(small_scene.cameras, tmp_path / "cameras.json")
    for a, b in zip(load_cameras(tmp_path / "cameras.json"), small_scene.cameras):
        np.testing.assert_array_equal(a.projection, b.projection)

    save_observations(noisy_observations, tmp_path / "obs.json")
    loaded = load_observations(tmp_path / "obs.json")
    np.testing.assert_array_equal(loaded[3].points, noisy_observations[3].points)
    assert loaded[3].frame == 3

    save_poses(small_scene.poses, tmp_path / "poses.json")
    first = (tmp_path / "poses.json").read_text()
    save_poses(load_poses(tmp_path / "poses.json"), tmp_path / "poses.json")
    assert (tmp_path / "poses.json").read_text() == first


def test_observation_file_layout(noisy_observations, tmp_path):
    save_observations(noisy_observations[:2], tmp_path / "obs.json")
    data = load_json(tmp_path / "obs.json")
    assert [item["frame"] for item in data] == [0, 1]
    view = data[1]["views"][2]
    assert view["camera"] == noisy_observations[1].view_ids[2]
    assert len(view["points"]) == 17
    u, v, conf = view["points"][4]
    assert (u, v) == tuple(noisy_observations[1].points[2, 4])
    assert conf == noisy_observations[1].confidence[2, 4]


def test_single_frame_observation_object(tmp_path):
    frame = {"frame": 7, "views": [
        {"camera": 0, "points": [[10.0 + k, 20.0, 1.0] for k in range(17)]},
        {"camera": 3, "points": [[30.0, 40.0 + k, 0.5] for k in range(17)]},
    ]}
    (tmp_path / "obs.json").write_text(json.dumps(frame))
    [obs] = load_observations(tmp_path / "obs.json")
    assert obs.frame == 7
    assert obs.view_ids == [0, 3]
    assert obs.points.shape == (2, 17, 2)
    assert obs.points[0, 5, 0] == 15.0
    assert obs.points[1, 2, 1] == 42.0
    np.testing.assert_array_equal(obs.confidence[1], np.full(17, 0.5))


def test_pose_file_layout(small_scene, noisy_observations, prior, tmp_path):
    poses, reports = zip(*(triangulate_frame(small_scene.cameras, o, "ht", prior) for o in noisy_observations[:3]))
    save_poses(poses, tmp_path / "poses.json", reports, [10, 11, 12])
    data = load_json(tmp_path / "poses.json")
    assert [item["frame"] for item in data] == [10, 11, 12]
    assert len(data[0]["joints"]) == 17 and len(data[0]["joints"][0]) == 3
    assert data[1]["report"]["status"] == "cholesky"
    assert set(data[1]["report"]) == {"reprojection_residual", "reconstruction_residual",
                                      "condition_estimate", "status"}

    records = load_pose_records(tmp_path / "poses.json")
    assert records[2].frame == 12
    assert records[2].report.reprojection_residual == reports[2].reprojection_residual
    assert records[2].report.reconstruction_residual == reports[2].reconstruction_residual

    save_poses(poses, tmp_path / "at.json")
    assert all(item["report"] is None for item in load_json(tmp_path / "at.json"))
    with pytest.raises(CountMismatch):
        save_poses(poses, tmp_path / "bad.json", reports[:2])


def test_single_frame_pose_object(tmp_path):
    frame = {"frame": 3, "joints": [[float(k), 2.0 * k, -1.0] for k in range(17)], "report": None}
    (tmp_path / "pose.json").write_text(json.dumps(frame))
    [record] = load_pose_records(tmp_path / "pose.json")
    assert record.frame == 3 and record.report is None
    np.testing.assert_array_equal(record.pose.points[4], [4.0, 8.0, -1.0])


@pytest.mark.parametrize("content", [
    "{\"views\": []}",
    "{\"frame\": 0, \"views\": [{\"camera\": 0, \"points\": [[1, 2]]}]}",
    "{\"frame\": 0, \"views\": [{\"camera\": 0, \"points\": [[1, 2, 1]]}, {\"camera\": 1, \"points\": [[1, 2, 1], [3, 4, 1]]}]}",
    "{\"frame\": \"x\", \"views\": [{\"camera\": 0, \"points\": [[1, 2, 1]]}]}",
    "[1, 2, 3]",
])
def test_malformed_observations(content, tmp_path):
    (tmp_path / "obs.json").write_text(content)
    with pytest.raises(MalformedInput):
        load_observations(tmp_path / "obs.json")


@pytest.mark.parametrize("content", [
    "{\"frame\": 0}",
    "{\"frame\": 0, \"joints\": [[1, 2]]}",
    "[{\"frame\": 0, \"joints\": [[1, 2, 3]], \"report\": {\"status\": \"cholesky\"}}]",
    "\"poses\"",
])
def test_malformed_poses(content, tmp_path):
    (tmp_path / "poses.json").write_text(content)
    with pytest.raises(MalformedInput):
        load_poses(tmp_path / "poses.json")
    assert issubclass(MalformedInput, ValidationError)


def test_align_frames(noisy_observations):
    shuffled = list(reversed(noisy_observations))
    aligned, ordered = align_frames(shuffled, noisy_observations)
    assert [o.frame for o in aligned] == [o.frame for o in ordered] == list(range(len(noisy_observations)))
    with pytest.raises(CountMismatch):
        align_frames(noisy_observations, noisy_observations[1:])


def test_prior_files(prior, topology, tmp_path):
    save_prior(prior, tmp_path / "prior.json")
    loaded = load_prior(tmp_path / "prior.json", topology, lambdas={1: 123.0})
    assert loaded.hops == [0, 1, 2]
    assert loaded.entries[1].lam == 123.0
    assert loaded.entries[0].lam == prior.entries[0].lam
    np.testing.assert_array_equal(loaded.entries[2].pca.M, prior.entries[2].pca.M)
    with pytest.raises(ValidationError):
        load_prior([tmp_path / "prior.json", tmp_path / "prior.json"], topology)


def test_plausibility_file(training_poses, topology, tmp_path):
    model = fit_plausibility_model(training_poses[:300], topology, fit_angles=False)
    save_plausibility(model, topology, tmp_path / "plausibility.json")
    loaded = load_plausibility(tmp_path / "plausibility.json")
    assert loaded.threshold == model.threshold
    assert loaded.angle_model is None
    np.testing.assert_array_equal(loaded.reference_lengths, model.reference_lengths)
    for name, grid in model.occupancy.items():
        np.testing.assert_array_equal(loaded.occupancy[name].grid, grid.grid)


def test_report_files(small_scene, topology, tmp_path):
    report = eval_metrics(small_scene.poses, small_scene.poses, small_scene.true_observations(),
                          small_scene.cameras, topology)
    csv_path, json_path = save_report(report, tmp_path / "metrics.csv")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "frame,metric,value"
    assert len(lines) == 1 + 5 * small_scene.num_frames
    assert load_json(json_path)["MPJPE"] == 0.0


def test_sweep_file(tmp_path):
    rows = [("25", {"MPJPE": 12.5, "JDR": 0.9}), ("10", {"MPJPE": 14.0, "JDR": 0.85})]
    csv_path, json_path = save_sweep("dim", rows, tmp_path / "sweep.csv")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "setting,metric,value"
    assert lines[1] == "25,MPJPE,12.5"
    assert len(lines) == 5
    summary = load_json(json_path)
    assert summary["kind"] == "dim"
    assert summary["points"][1] == {"setting": "10", "metrics": {"MPJPE": 14.0, "JDR": 0.85}}
