"""逐关节线性/代数三角化与整体三角化 (Holistic Triangulation)

整体三角化的目标函数为 ‖AY+B‖² + Σ_s λ_s‖H_s Y − t_s‖²，
闭式解由正规方程给出:
    (AᵀA + Σ λ_s H_sᵀH_s) Y = Σ λ_s H_sᵀ t_s − AᵀB
其中 t_s = G_s N_s (C_s Y_root + V_mean,s)。
"""
from typing import List, Mapping, Sequence, Tuple, Union
import logging

import numpy as np
from scipy import linalg

from .core.errors import (
    AllZeroConfidence,
    DimensionMismatch,
    InsufficientViews,
    RankDeficient,
    SingularSystem,
    ValidationError,
)
from .core.types import HolisticSystem, ImagePoint, MultiViewObservation, Pose3D, SolverReport
from .geometry import CameraParams

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12
RANK_TOL = 1e-10

Cameras = Union[Sequence[CameraParams], Mapping[int, CameraParams]]


def camera_lookup(cameras: Cameras, view_ids: Sequence[int]) -> List[CameraParams]:
    """按 view id 取相机，顺序与 view_ids 一致"""
    table = cameras if isinstance(cameras, Mapping) else {c.id: c for c in cameras}
    missing = [vid for vid in view_ids if vid not in table]
    if missing:
        raise ValidationError(f"观测引用了不存在的相机: {missing}")
    return [table[vid] for vid in view_ids]


def stack_rows(projections: np.ndarray, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """所有关节的三角化行

    projections: (C,3,4)，points: (C,K,2)
    返回 A_blocks (K, 2C, 3)，b_blocks (K, 2C)，行顺序为 view0-u, view0-v, view1-u, ...
    """
    P = np.asarray(projections, dtype=float)
    uv = np.asarray(points, dtype=float)
    rows = uv[..., None] * P[:, None, None, 2, :] - P[:, None, :2, :]  # (C,K,2,4)
    rows = rows.transpose(1, 0, 2, 3).reshape(uv.shape[1], -1, 4)
    return rows[:, :, :3], rows[:, :, 3]


def _solve_blocks(A_blocks: np.ndarray, b_blocks: np.ndarray) -> np.ndarray:
    """逐块最小化 ‖A_k y + b_k‖，返回 (K,3)"""
    s = np.linalg.svd(A_blocks, compute_uv=False)
    bad = np.where(s[:, -1] <= RANK_TOL * s[:, 0])[0]
    if bad.size:
        raise RankDeficient(f"关节 {bad.tolist()} 的三角化矩阵秩不足 3")
    AtA = np.einsum("kri,krj->kij", A_blocks, A_blocks)
    Atb = np.einsum("kri,kr->ki", A_blocks, b_blocks)
    return -np.linalg.solve(AtA, Atb[..., None])[..., 0]


def linear_triangulate(cameras: Cameras, obs_k: Sequence[Tuple[int, ImagePoint]]) -> np.ndarray:
    """无权 LT：最小化 ‖A_k y + b_k‖"""
    if len(obs_k) < 2:
        raise InsufficientViews(f"至少需要 2 个视角, 实际 {len(obs_k)}")
    cams = camera_lookup(cameras, [vid for vid, _ in obs_k])
    projections = np.stack([c.projection for c in cams])
    points = np.array([[[p.u, p.v]] for _, p in obs_k])
    A_blocks, b_blocks = stack_rows(projections, points)
    return _solve_blocks(A_blocks, b_blocks)[0]


def _weighted_blocks(cameras: Cameras, obs: MultiViewObservation) -> Tuple[np.ndarray, np.ndarray]:
    if obs.num_views < 2:
        raise InsufficientViews(f"至少需要 2 个视角, 实际 {obs.num_views}")
    positive = (obs.confidence > 0).sum(axis=0)
    bad = np.where(positive < 2)[0]
    if bad.size:
        raise AllZeroConfidence(f"关节 {bad.tolist()} 的正置信度视角少于 2 个")
    cams = camera_lookup(cameras, obs.view_ids)
    projections = np.stack([c.projection for c in cams])
    A_blocks, b_blocks = stack_rows(projections, obs.points)
    # 每个 ω 同时作用在 u 行和 v 行
    w = np.repeat(obs.confidence.T, 2, axis=1)  # (K, 2C)
    return A_blocks * w[..., None], b_blocks * w


def algebraic_triangulate(cameras: Cameras, obs: MultiViewObservation) -> Pose3D:
    """AT：逐关节最小化 ‖(w_k∘A_k) y + (w_k∘b_k)‖"""
    A_blocks, b_blocks = _weighted_blocks(cameras, obs)
    return Pose3D.from_points(_solve_blocks(A_blocks, b_blocks))


def assemble_holistic_system(cameras: Cameras, obs: MultiViewObservation) -> HolisticSystem:
    """按关节拼成块对角 A 与堆叠 B"""
    A_blocks, b_blocks = _weighted_blocks(cameras, obs)
    A = linalg.block_diag(*A_blocks)
    return HolisticSystem(A=A, B=b_blocks.reshape(-1), num_views=obs.num_views,
                          num_joints=obs.num_joints)


def holistic_triangulate(system: HolisticSystem, prior, root: np.ndarray,
                         condition_limit: float = CONDITION_LIMIT) -> Tuple[Pose3D, SolverReport]:
    """HT 闭式解

    Args:
        system: assemble_holistic_system 的结果
        prior: AnatomyPrior，None 时退化为 AT
        root: 骨盆位置（由 LT 得到）
    """
    dim = 3 * system.num_joints
    if system.A.shape != (2 * system.num_views * system.num_joints, dim) or system.B.shape != (system.A.shape[0],):
        raise DimensionMismatch(f"系统维度错误: A {system.A.shape}, B {system.B.shape}")
    root = np.asarray(root, dtype=float).reshape(3)
    root_stacked = np.tile(root, system.num_joints)

    lhs = system.A.T @ system.A
    rhs = -system.A.T @ system.B
    if prior is not None:
        if prior.dim != dim:
            raise DimensionMismatch(f"先验维度 {prior.dim} 与系统维度 {dim} 不一致")
        lhs = lhs + prior.normal_matrix
        rhs = rhs + prior.normal_matrix @ root_stacked + prior.offset

    status = "cholesky"
    try:
        factor = linalg.cho_factor(lhs, lower=True, check_finite=False)
        diag = np.abs(np.diag(factor[0]))
        condition = float((diag.max() / diag.min()) ** 2) if diag.min() > 0 else np.inf
        if condition > condition_limit:
            raise np.linalg.LinAlgError("条件数过大")
        Y = linalg.cho_solve(factor, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.warning(f"Cholesky 分解失败, 回退到最小二乘: {str(e)}")
        condition = float(np.linalg.cond(lhs))
        if not np.isfinite(condition) or condition > condition_limit:
            raise SingularSystem(f"正规方程数值奇异, 条件数估计 {condition:.3e}")
        Y, *_ = linalg.lstsq(lhs, rhs)
        status = "lstsq"

    report = SolverReport(
        reprojection_residual=float(np.linalg.norm(system.A @ Y + system.B)),
        reconstruction_residual={} if prior is None else prior.residuals(Y, root),
        condition_estimate=condition,
        status=status,
    )
    return Pose3D.from_points(Y.reshape(-1, 3)), report


def pelvis_root(cameras: Cameras, obs: MultiViewObservation, root_index: int = 0) -> np.ndarray:
    """用 LT 估计骨盆，只使用置信度为正的视角"""
    views = [(vid, p) for vid, p in obs.joint(root_index) if p.confidence > 0]
    return linear_triangulate(cameras, views)
