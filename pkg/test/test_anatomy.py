import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from pose.anatomy import (
    HopPrior,
    PcaPrior,
    SkeletonTopology,
    build_kcs,
    fit_pca,
    kcs_map,
    latent_traverse,
    orientation_normalize,
    reconstruct_pose,
)
from pose.core import Pose3D
from pose.core.errors import (
    DegenerateHips,
    DimensionMismatch,
    IndexOutOfRange,
    InsufficientSamples,
    InvalidDimension,
    UnsupportedHop,
    ValidationError,
)


def test_topology_basics(topology):
    assert topology.num_joints == 17
    assert topology.num_bones == 16
    assert topology.root_index == 0
    assert topology.hop_pairs(1) == topology.bones
    assert topology.hop_pairs(0) == [(k, k) for k in range(17)]
    assert topology.children(8) == [9, 11, 14]


def test_hop2_pairs_are_two_edges_apart(topology):
    pairs = topology.hop_pairs(2)
    assert pairs
    assert all(topology.tree_distance(l, r) == 2 for l, r in pairs)
    # 左右髋经由骨盆相距两跳
    assert (4, 1) in pairs


def test_topology_rejects_bad_trees():
    with pytest.raises(ValidationError):
        SkeletonTopology(joints=["a", "b", "c"], parents=[-1, -1, 0])
    with pytest.raises(ValidationError):
        SkeletonTopology(joints=["a", "b"], parents=[-1])


def test_unsupported_hop(topology):
    with pytest.raises(UnsupportedHop):
        build_kcs(topology, 3)
    with pytest.raises(UnsupportedHop):
        topology.hop_pairs(-1)


def test_hop1_features_are_bone_vectors(topology, training_poses):
    kcs = kcs_map(topology, 1)
    pose = training_poses[0]
    np.testing.assert_allclose(kcs.features(pose.joints).reshape(-1, 3), topology.bone_vectors(pose.points), rtol=0, atol=1e-9)


@pytest.mark.parametrize("hop", [0, 1, 2])
def test_kcs_pseudo_inverse_identities(topology, hop):
    kcs = kcs_map(topology, hop)
    np.testing.assert_allclose(kcs.C @ kcs.G @ kcs.C, kcs.C, atol=1e-9)
    np.testing.assert_allclose(kcs.G @ kcs.C @ kcs.G, kcs.G, atol=1e-9)


@pytest.mark.parametrize("hop", [1, 2])
def test_kcs_translation_invariant(topology, hop, rng):
    C = build_kcs(topology, hop)
    shift = np.tile(rng.normal(0.0, 500.0, 3), topology.num_joints)
    np.testing.assert_array_equal(C @ shift, np.zeros(C.shape[0]))


def test_orientation_normalize_aligns_hips(topology, training_poses, rng):
    pose = training_poses[7]
    R = Rotation.from_rotvec([0.0, 0.0, rng.uniform(-np.pi, np.pi)]).as_matrix()
    turned = Pose3D.from_points(pose.points @ R.T + np.array([300.0, -200.0, 50.0]))
    normalized, used = orientation_normalize(turned, topology)
    left, right = topology.hip_indices
    hip = normalized.points[right] - normalized.points[left]
    assert hip[0] > 0.0
    assert abs(hip[1]) < 1e-9
    np.testing.assert_allclose(normalized.root, np.zeros(3), atol=1e-12)
    # 绕竖直轴旋转不改变高度
    np.testing.assert_allclose(normalized.points[:, 2], turned.points[:, 2] - turned.root[2], atol=1e-9)
    np.testing.assert_allclose(used @ used.T, np.eye(3), atol=1e-12)


def test_orientation_normalize_degenerate_hips(topology, training_poses):
    points = training_poses[0].points.copy()
    left, right = topology.hip_indices
    points[right] = points[left] + np.array([0.0, 0.0, 50.0])
    with pytest.raises(DegenerateHips):
        orientation_normalize(Pose3D.from_points(points), topology)


@pytest.mark.parametrize("hop,D", [(0, 25), (1, 20), (2, 15)])
def test_pca_rows_orthonormal(prior, hop, D):
    pca = prior.entries[hop].pca
    assert pca.dim == D
    np.testing.assert_allclose(pca.M @ pca.M.T, np.eye(D), atol=1e-9)
    assert np.all(np.diff(pca.eigenvalues) <= 0.0)
    assert 0.0 < pca.explained_variance <= 1.0


def test_pca_reconstructs_in_span_features(prior, rng):
    entry = prior.entries[1]
    V = entry.pca.decode(rng.normal(size=entry.pca.dim) * np.sqrt(entry.pca.eigenvalues))
    np.testing.assert_allclose(entry.pca.reconstruct(V), V, atol=1e-8)
    np.testing.assert_allclose(entry.pca.residual_projector() @ (V - entry.pca.mean), 0.0, atol=1e-8)


def test_fit_pca_validates_dimension(topology, training_poses):
    with pytest.raises(InvalidDimension):
        fit_pca(training_poses[:100], topology, 1, 0)
    with pytest.raises(InvalidDimension):
        fit_pca(training_poses[:100], topology, 1, 49)
    with pytest.raises(InvalidDimension):
        fit_pca(training_poses[:100], topology, 0, 52)
    assert fit_pca(training_poses[:100], topology, 0, 51).dim == 51
    assert not issubclass(InvalidDimension, InsufficientSamples)
    with pytest.raises(InsufficientSamples):
        fit_pca(training_poses[:10], topology, 0, 20)


def test_pca_dict_dimension_check(prior):
    data = prior.entries[0].pca.to_dict(8000.0)
    assert data["lambda"] == 8000.0
    data["D"] = data["D"] + 1
    with pytest.raises(DimensionMismatch):
        PcaPrior.from_dict(data)


def test_hop_prior_validation(prior):
    entry = prior.entries[1]
    with pytest.raises(ValidationError):
        HopPrior(entry.kcs, entry.pca, -1.0)
    with pytest.raises(DimensionMismatch):
        HopPrior(prior.entries[0].kcs, entry.pca, 1.0)


def test_reconstruct_pose_shapes(prior, training_poses):
    entry = prior.entries[2]
    V_rec, Y_rec = reconstruct_pose(entry, training_poses[3].root_relative())
    assert V_rec.shape == (entry.kcs.feature_dim,)
    assert Y_rec.shape == (51,)
    with pytest.raises(DimensionMismatch):
        reconstruct_pose(entry, np.zeros(50))


def test_latent_traverse(prior):
    entry = prior.entries[0]
    poses = latent_traverse(entry, 0, steps=2, step_size=1.0)
    assert len(poses) == 5
    np.testing.assert_allclose(poses[2].joints, entry.kcs.G @ entry.pca.mean, atol=1e-9)
    # 相邻两步沿第一主成分移动 sqrt(λ_0)
    step = np.linalg.norm(poses[3].joints - poses[2].joints)
    assert step == pytest.approx(np.sqrt(entry.pca.eigenvalues[0]), rel=1e-9)
    with pytest.raises(IndexOutOfRange):
        latent_traverse(entry, entry.pca.dim, steps=1, step_size=1.0)


def test_prior_normal_matrix_symmetric_psd(prior):
    normal = prior.normal_matrix
    np.testing.assert_allclose(normal, normal.T, atol=1e-6)
    assert np.linalg.eigvalsh(normal).min() > -1e-6 * np.abs(normal).max()


def test_with_lambdas_overrides_selected_hops(prior):
    changed = prior.with_lambdas({1: 0.0})
    assert changed.entries[1].lam == 0.0
    assert changed.entries[0].lam == prior.entries[0].lam
    assert prior.entries[1].lam == 4000.0


def test_rotated_prior_is_equivariant(prior, training_poses):
    R = Rotation.from_rotvec([0.0, 0.0, 0.7]).as_matrix()
    pose = training_poses[11]
    root = np.array([120.0, -40.0, 900.0])
    Y = (pose.points - pose.root + root).reshape(-1)
    Y_world = ((pose.points - pose.root) @ R.T + R @ root).reshape(-1)
    canonical = prior.residuals(Y, root)
    world = prior.rotated(R).residuals(Y_world, R @ root)
    for hop in prior.hops:
        assert world[hop] == pytest.approx(canonical[hop], rel=1e-9, abs=1e-9)
