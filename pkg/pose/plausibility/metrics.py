"""评估指标：MPJPE、JDR、重投影误差 L_pj、骨长误差 L_bl 以及总损失"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from ..anatomy.topology import SkeletonTopology
from ..core.errors import CountMismatch, EmptyInput
from ..core.types import MultiViewObservation, Pose3D
from ..geometry import project_points
from ..triangulation import Cameras, camera_lookup
from .model import JointAngleModel, joint_angle_penalty

logger = logging.getLogger(__name__)

DEFAULT_BETAS = (0.1, 0.01, 0.01)


def _check_counts(estimated: Sequence, ground_truth: Sequence, what: str) -> None:
    if len(estimated) != len(ground_truth):
        raise CountMismatch(f"{what}: 估计 {len(estimated)} 个, 真值 {len(ground_truth)} 个")
    if not estimated:
        raise EmptyInput(f"{what}: 输入为空")


def joint_errors(estimated: Pose3D, ground_truth: Pose3D) -> np.ndarray:
    """根对齐后的逐关节欧氏误差 (K,)"""
    if estimated.joints.size != ground_truth.joints.size:
        raise CountMismatch(f"关节数不一致: {estimated.joints.size // 3} vs {ground_truth.joints.size // 3}")
    diff = (estimated.root_relative() - ground_truth.root_relative()).reshape(-1, 3)
    return np.linalg.norm(diff, axis=1)


def mpjpe(estimated: Sequence[Pose3D], ground_truth: Sequence[Pose3D]) -> float:
    """根对齐 MPJPE (mm)，对关节与帧求平均"""
    _check_counts(estimated, ground_truth, "MPJPE")
    return float(np.mean([joint_errors(e, g) for e, g in zip(estimated, ground_truth)]))


def project_pose(cameras: Cameras, view_ids: Sequence[int], pose: Pose3D) -> np.ndarray:
    """(C, K, 2) 投影"""
    return np.stack([project_points(cam, pose.points) for cam in camera_lookup(cameras, view_ids)])


def detection_rate(points: np.ndarray, truth: np.ndarray, head_indices: Tuple[int, int]) -> float:
    """阈值为真值 2D 头部长度的一半，points/truth 形状 (..., K, 2)"""
    points = np.asarray(points, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if points.shape != truth.shape:
        raise CountMismatch(f"2D 点形状不一致: {points.shape} vs {truth.shape}")
    head = np.linalg.norm(truth[..., head_indices[0], :] - truth[..., head_indices[1], :], axis=-1)
    error = np.linalg.norm(points - truth, axis=-1)
    return float(np.mean(error <= 0.5 * head[..., None]))


def reprojection_loss(cameras: Cameras, observation: MultiViewObservation, pose: Pose3D) -> float:
    """L_pj = (1/C)(1/K) Σ_c Σ_k ‖x'_{c,k} − P_c y_k‖"""
    projected = project_pose(cameras, observation.view_ids, pose)
    return float(np.mean(np.linalg.norm(observation.points - projected, axis=-1)))


def bone_length_loss(estimated: Pose3D, ground_truth: Pose3D, topology: SkeletonTopology) -> float:
    """L_bl = (1/J) Σ_j |BL_j − BL̂_j|"""
    return float(np.mean(np.abs(topology.bone_lengths(estimated.points) - topology.bone_lengths(ground_truth.points))))


def mean_squared_error(estimated: Pose3D, ground_truth: Pose3D) -> float:
    """逐关节平方误差的平均 (mm²)，不做根对齐"""
    diff = (estimated.joints - ground_truth.joints).reshape(-1, 3)
    return float(np.mean(np.sum(diff ** 2, axis=1)))


@dataclass
class FrameMetrics:
    frame: int
    mpjpe: float
    jdr: float
    l_pj: float
    l_bl: float
    mse: float
    l_ja: Optional[float] = None


@dataclass
class MetricReport:
    mpjpe: float
    jdr: float
    l_pj: float
    l_bl: float
    mse: float
    l_ja: Optional[float] = None
    total_loss: Optional[float] = None
    ppp: Dict[float, float] = field(default_factory=dict)
    frames: List[FrameMetrics] = field(default_factory=list)

    def summary(self) -> dict:
        out = {
            "MPJPE": self.mpjpe,
            "JDR": self.jdr,
            "L_pj": self.l_pj,
            "L_bl": self.l_bl,
            "MSE": self.mse,
        }
        if self.l_ja is not None:
            out["L_ja"] = self.l_ja
        if self.total_loss is not None:
            out["total_loss"] = self.total_loss
        for R, value in self.ppp.items():
            out[f"PPP@{R:g}"] = value
        return out


def eval_metrics(estimated: Sequence[Pose3D], ground_truth: Sequence[Pose3D],
                 observations: Sequence[MultiViewObservation], cameras: Cameras,
                 topology: SkeletonTopology, angle_model: Optional[JointAngleModel] = None,
                 betas: Tuple[float, float, float] = DEFAULT_BETAS) -> MetricReport:
    """汇总逐帧指标

    JDR 比较 observations 与真值投影；L_pj 比较 observations 与估计姿态的投影。
    给出 angle_model 时额外计算 L_ja 与总损失 MSE + β_pj L_pj + β_bl L_bl + β_ja L_ja。
    """
    _check_counts(estimated, ground_truth, "3D 姿态")
    _check_counts(observations, estimated, "2D 观测")
    head = topology.head_indices
    frames = []
    for est, gt, obs in zip(estimated, ground_truth, observations):
        truth_2d = project_pose(cameras, obs.view_ids, gt)
        frames.append(FrameMetrics(
            frame=obs.frame,
            mpjpe=float(np.mean(joint_errors(est, gt))),
            jdr=detection_rate(obs.points, truth_2d, head),
            l_pj=reprojection_loss(cameras, obs, est),
            l_bl=bone_length_loss(est, gt, topology),
            mse=mean_squared_error(est, gt),
            l_ja=None if angle_model is None else joint_angle_penalty(est, angle_model, topology),
        ))

    report = MetricReport(
        mpjpe=float(np.mean([f.mpjpe for f in frames])),
        jdr=float(np.mean([f.jdr for f in frames])),
        l_pj=float(np.mean([f.l_pj for f in frames])),
        l_bl=float(np.mean([f.l_bl for f in frames])),
        mse=float(np.mean([f.mse for f in frames])),
        frames=frames,
    )
    if angle_model is not None:
        beta_pj, beta_bl, beta_ja = betas
        report.l_ja = float(np.mean([f.l_ja for f in frames]))
        report.total_loss = report.mse + beta_pj * report.l_pj + beta_bl * report.l_bl + beta_ja * report.l_ja
    logger.debug(f"评估 {len(frames)} 帧: MPJPE {report.mpjpe:.3f} mm, JDR {report.jdr:.4f}")
    return report
