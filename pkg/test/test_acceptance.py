"""端到端验收：闭式解正确性、HT 优于 AT、MVF 改善检测、合理性与确定性"""
import time

import numpy as np
import pytest
from scipy import optimize

from pose.anatomy import kcs_map
from pose.harness import (
    CorruptionSpec,
    PipelineConfig,
    build_scene,
    corrupt_observations,
    gen_poses,
    run_pipeline,
)
from pose.harness.io import observations_to_dict, poses_to_dict
from pose.plausibility import fit_plausibility_model, ppp_metric
from pose.triangulation import assemble_holistic_system, holistic_triangulate, pelvis_root
from share.util import to_json_text

pytestmark = pytest.mark.slow

PPP_THRESHOLDS = (0.05, 0.1, 0.2, 0.3, 0.5)


def _noisy_scene(rig, sampler, frames, seed):
    scene = build_scene(rig, gen_poses(sampler, frames, seed=seed), seed=seed)
    spec = CorruptionSpec(sigma=2.0, outlier_rate=0.1, occlusion_rate=0.15, seed=seed)
    return scene, corrupt_observations(scene, spec)


@pytest.fixture(scope="module")
def benchmark(rig, sampler):
    return _noisy_scene(rig, sampler, 500, seed=42)


def _objective(system, terms, Y):
    """‖AY+B‖² + Σ λ_s‖H_s Y − t_s‖² 及其解析梯度"""
    r = system.A @ Y + system.B
    value, gradient = r @ r, 2.0 * system.A.T @ r
    for lam, H, target in terms:
        e = H @ Y - target
        value += lam * e @ e
        gradient = gradient + 2.0 * lam * H.T @ e
    return value, gradient


def _descent_oracle(system, prior, root):
    """从骨盆处的零姿态出发做 BFGS 下降；变量按正规方程对角线做 Jacobi 预条件"""
    start = np.tile(root, system.num_joints)
    terms = [(e.lam, e.H, e.H @ start + e.offset) for e in prior.entries.values()]
    diag = (system.A ** 2).sum(axis=0) + sum(lam * (H ** 2).sum(axis=0) for lam, H, _ in terms)
    scale = 1.0 / np.sqrt(diag)
    norm = max(1.0, _objective(system, terms, start)[0])

    def scaled(d):
        value, gradient = _objective(system, terms, start + scale * d)
        return value / norm, scale * gradient / norm

    result = optimize.minimize(scaled, np.zeros_like(start), jac=True, method="BFGS",
                               options={"gtol": 1e-10, "maxiter": 20000})
    return start + scale * result.x


def test_closed_form_matches_descent_oracle(rig, sampler, prior):
    scene, observations = _noisy_scene(rig, sampler, 100, seed=21)
    elapsed = 0.0
    for obs in observations:
        system = assemble_holistic_system(scene.cameras, obs)
        root = pelvis_root(scene.cameras, obs)
        start = time.perf_counter()
        pose, report = holistic_triangulate(system, prior, root)
        elapsed += time.perf_counter() - start
        oracle = _descent_oracle(system, prior, root)
        assert report.status == "cholesky"
        assert np.linalg.norm(pose.joints - oracle) <= 1e-5 * np.linalg.norm(oracle)
        root_relative = oracle - np.tile(root, 17)
        assert np.linalg.norm(pose.joints - oracle) <= 1e-5 * np.linalg.norm(root_relative)

        # 正规方程残差即目标函数梯度
        lhs = system.A.T @ system.A + prior.normal_matrix
        rhs = -system.A.T @ system.B + prior.normal_matrix @ np.tile(root, 17) + prior.offset
        assert np.linalg.norm(lhs @ pose.joints - rhs) <= 1e-8 * np.linalg.norm(rhs)
    assert elapsed < 30.0


def test_kcs_algebra_on_many_poses(topology, training_poses):
    Y = np.stack([p.joints for p in training_poses[:1000]])
    C1 = kcs_map(topology, 1).C
    bones = np.array(topology.bones)
    points = Y.reshape(len(Y), -1, 3)
    direct = (points[:, bones[:, 0]] - points[:, bones[:, 1]]).reshape(len(Y), -1)
    np.testing.assert_allclose(Y @ C1.T, direct, rtol=0, atol=1e-9)
    shifted = Y + np.tile([250.0, -75.0, 40.0], topology.num_joints)
    np.testing.assert_allclose(shifted @ C1.T, Y @ C1.T, rtol=0, atol=1e-9)


def test_holistic_beats_algebraic(benchmark, topology, prior, training_poses):
    scene, observations = benchmark
    plausibility = fit_plausibility_model(training_poses, topology, fit_angles=False)
    start = time.perf_counter()
    reports = {
        mode: run_pipeline(scene, observations, PipelineConfig(mode=mode, ppp_thresholds=PPP_THRESHOLDS),
                           topology, prior, plausibility)
        for mode in ("at", "ht")
    }
    assert time.perf_counter() - start < 120.0
    assert reports["ht"].metrics.mpjpe < reports["at"].metrics.mpjpe
    assert reports["ht"].ppp.fractions[0.2] >= reports["at"].ppp.fractions[0.2]


def test_mvf_improves_detection(small_scene, noisy_observations, topology):
    start = time.perf_counter()
    report = run_pipeline(small_scene, noisy_observations, PipelineConfig(mode="at", use_mvf=True), topology)
    assert time.perf_counter() - start < 120.0
    assert report.label == "mvf-at"
    assert report.metrics.jdr > report.initial_metrics.jdr
    assert report.metrics.l_pj < report.initial_metrics.l_pj


def test_ground_truth_is_plausible_and_ppp_monotone(small_scene, benchmark, topology, training_poses):
    truth = small_scene.poses
    model = fit_plausibility_model(truth, topology, fit_angles=False)
    assert ppp_metric(truth, model, topology, PPP_THRESHOLDS) == {r: 1.0 for r in PPP_THRESHOLDS}

    scene, observations = benchmark
    estimated = run_pipeline(scene, observations, PipelineConfig(mode="at"), topology).poses
    general = fit_plausibility_model(training_poses[:3000], topology, fit_angles=False)
    values = ppp_metric(estimated, general, topology, PPP_THRESHOLDS)
    fractions = [values[r] for r in PPP_THRESHOLDS]
    assert all(a <= b for a, b in zip(fractions, fractions[1:]))


def test_randomized_stages_are_deterministic(rig, sampler, prior):
    texts = []
    for _ in range(2):
        scene, observations = _noisy_scene(rig, sampler, 10, seed=8)
        poses = [holistic_triangulate(assemble_holistic_system(scene.cameras, o), prior,
                                      pelvis_root(scene.cameras, o))[0] for o in observations]
        texts.append(to_json_text(observations_to_dict(observations)) + to_json_text(poses_to_dict(poses)))
    assert texts[0] == texts[1]


def test_holistic_throughput(rig, sampler, prior):
    scene, observations = _noisy_scene(rig, sampler, 50, seed=13)
    frames = [observations[i % len(observations)] for i in range(1000)]
    # 先验的正规矩阵在首次访问时缓存
    prior.normal_matrix, prior.offset
    start = time.perf_counter()
    for obs in frames:
        system = assemble_holistic_system(scene.cameras, obs)
        holistic_triangulate(system, prior, pelvis_root(scene.cameras, obs))
    assert time.perf_counter() - start < 1.0
