"""关节角模型、占据矩阵与姿态合理性 (PPP)

合理姿态需同时满足：
    骨长检查 |BL_j / BL̂_j − 1| < R  (所有骨骼)
    关节角检查 OC(θ_k, φ_k) = 1      (所有选定关节)
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy import ndimage
from scipy.special import expit

from share.util import stream_seed

from ..anatomy.topology import SkeletonTopology
from ..core.errors import EmptyInput, MissingJointModel, ValidationError
from ..core.types import Pose3D
from .angles import angle_features, local_spherical_angles, selected_angles
from .gmm import GaussianMixture, fit_gmm, gmm_density

logger = logging.getLogger(__name__)

BORDER_QUANTILE = 0.0027
PENALTY_SLOPE = 10.0
DEFAULT_THRESHOLD = 0.2


# ---- 关节角惩罚 ----

@dataclass(eq=False)
class JointAngleModel:
    """每个选定关节一个 GMM 与惩罚边界 a_k"""
    mixtures: Dict[str, GaussianMixture]
    borders: Dict[str, float]

    def __post_init__(self):
        for name, a in self.borders.items():
            if not a > 0:
                raise ValidationError(f"关节 {name} 的惩罚边界必须为正: {a}")

    def covers(self, topology: SkeletonTopology) -> None:
        missing = [n for n in topology.selected_angle_joints if n not in self.mixtures or n not in self.borders]
        if missing:
            raise MissingJointModel(f"关节角模型缺少关节: {missing}")

    def to_dict(self) -> dict:
        return {name: {"gmm": self.mixtures[name].to_dict(), "border": self.borders[name]}
                for name in self.mixtures}

    @classmethod
    def from_dict(cls, data: dict) -> "JointAngleModel":
        return cls(mixtures={n: GaussianMixture.from_dict(d["gmm"]) for n, d in data.items()},
                   borders={n: float(d["border"]) for n, d in data.items()})


def border_penalty(density, border):
    """sigmoid((p − a/2)·(−10/a))：p = a/2 时为 0.5，p = a 时为 sigmoid(−5)"""
    density = np.asarray(density, dtype=float)
    border = np.asarray(border, dtype=float)
    return expit((density - border / 2.0) * (-PENALTY_SLOPE / border))


def fit_joint_angle_model(poses: Sequence[Pose3D], topology: SkeletonTopology, n_components: int = 4,
                          seed: int = 0, border_quantile: float = BORDER_QUANTILE) -> JointAngleModel:
    """a_k 取训练样本密度的 border_quantile 分位数"""
    angles = selected_angles(poses, topology)
    mixtures, borders = {}, {}
    for i, (name, theta_phi) in enumerate(angles.items()):
        features = angle_features(theta_phi[:, 0], theta_phi[:, 1])
        gmm = fit_gmm(features, n_components, seed=stream_seed(seed, "gmm", i))
        density = gmm_density(gmm, features)
        mixtures[name] = gmm
        borders[name] = max(float(np.quantile(density, border_quantile)), np.finfo(float).tiny)
        logger.debug(f"关节 {name}: 边界 a={borders[name]:.4e}")
    return JointAngleModel(mixtures, borders)


def joint_angle_densities(pose: Pose3D, model: JointAngleModel, topology: SkeletonTopology) -> Dict[str, float]:
    model.covers(topology)
    out = {}
    for name, joint in zip(topology.selected_angle_joints, topology.selected_indices):
        theta, phi = local_spherical_angles(pose, topology, joint)
        out[name] = gmm_density(model.mixtures[name], angle_features(theta, phi))
    return out


def joint_angle_penalty(pose: Pose3D, model: JointAngleModel, topology: SkeletonTopology) -> float:
    """L_ja = (1/K_se) Σ_k sigmoid((p(x_k) − a_k/2)·(−10/a_k))，取值 [0,1]"""
    densities = joint_angle_densities(pose, model, topology)
    penalties = [float(border_penalty(p, model.borders[name])) for name, p in densities.items()]
    return float(np.mean(penalties))


# ---- 占据矩阵 ----

def _bin_counts(bin_deg: float) -> Tuple[int, int]:
    if bin_deg <= 0:
        raise ValidationError(f"分箱宽度必须为正: {bin_deg}")
    n_theta, n_phi = 180.0 / bin_deg, 360.0 / bin_deg
    if not (np.isclose(n_theta, round(n_theta)) and np.isclose(n_phi, round(n_phi))):
        raise ValidationError(f"分箱宽度 {bin_deg}° 不能整除 θ/φ 范围")
    return int(round(n_theta)), int(round(n_phi))


@dataclass(eq=False)
class OccupancyGrid:
    """(θ, φ) 二值占据矩阵，行为 θ ∈ [0°,180°]，列为 φ ∈ (−180°,180°]"""
    grid: np.ndarray
    bin_deg: float = 5.0
    dilate: int = 1

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=bool)
        if self.grid.shape != _bin_counts(self.bin_deg):
            raise ValidationError(f"占据矩阵形状 {self.grid.shape} 与分箱宽度 {self.bin_deg}° 不符")

    def bin_index(self, theta, phi) -> Tuple[np.ndarray, np.ndarray]:
        n_theta, n_phi = self.grid.shape
        i = np.floor(np.degrees(np.asarray(theta, dtype=float)) / self.bin_deg).astype(int)
        j = np.floor((np.degrees(np.asarray(phi, dtype=float)) + 180.0) / self.bin_deg).astype(int)
        return np.clip(i, 0, n_theta - 1), np.clip(j, 0, n_phi - 1)

    def contains(self, theta, phi):
        i, j = self.bin_index(theta, phi)
        return self.grid[i, j]


def build_occupancy(angles: np.ndarray, bin_deg: float = 5.0, dilate: int = 1) -> OccupancyGrid:
    """≥1 个样本即占据，再用 (2r+1)² 方形结构元膨胀；φ 方向按周期处理"""
    angles = np.asarray(angles, dtype=float).reshape(-1, 2)
    if dilate < 0:
        raise ValidationError(f"膨胀半径必须非负: {dilate}")
    occupancy = OccupancyGrid(np.zeros(_bin_counts(bin_deg), dtype=bool), bin_deg, dilate)
    i, j = occupancy.bin_index(angles[:, 0], angles[:, 1])
    occupancy.grid[i, j] = True
    if dilate > 0:
        padded = np.pad(occupancy.grid, ((0, 0), (dilate, dilate)), mode="wrap")
        structure = np.ones((2 * dilate + 1, 2 * dilate + 1), dtype=bool)
        occupancy.grid = ndimage.binary_dilation(padded, structure=structure)[:, dilate:-dilate]
    return occupancy


# ---- 合理性模型 ----

@dataclass(eq=False)
class PlausibilityModel:
    reference_lengths: np.ndarray
    occupancy: Dict[str, OccupancyGrid]
    threshold: float = DEFAULT_THRESHOLD
    angle_model: Optional[JointAngleModel] = None

    def __post_init__(self):
        self.reference_lengths = np.asarray(self.reference_lengths, dtype=float)
        if np.any(self.reference_lengths <= 0):
            raise ValidationError("参考骨长必须全部为正")
        if self.threshold <= 0:
            raise ValidationError(f"骨长比例阈值 R 必须为正: {self.threshold}")

    @property
    def bin_deg(self) -> float:
        return next(iter(self.occupancy.values())).bin_deg if self.occupancy else 5.0

    @property
    def dilate(self) -> int:
        return next(iter(self.occupancy.values())).dilate if self.occupancy else 0


def fit_plausibility_model(poses: Sequence[Pose3D], topology: SkeletonTopology, bin_deg: float = 5.0,
                           dilate: int = 1, threshold: float = DEFAULT_THRESHOLD,
                           reference_lengths: Optional[np.ndarray] = None, n_components: int = 4,
                           seed: int = 0, fit_angles: bool = True,
                           border_quantile: float = BORDER_QUANTILE) -> PlausibilityModel:
    """参考骨长缺省取训练集中位数"""
    if not poses:
        raise EmptyInput("训练姿态为空")
    if reference_lengths is None:
        reference_lengths = np.median([topology.bone_lengths(p.points) for p in poses], axis=0)
    angles = selected_angles(poses, topology)
    occupancy = {name: build_occupancy(a, bin_deg, dilate) for name, a in angles.items()}
    angle_model = None
    if fit_angles:
        angle_model = fit_joint_angle_model(poses, topology, n_components, seed, border_quantile)
    logger.info(f"合理性模型: {len(poses)} 个样本, {len(occupancy)} 个关节, 分箱 {bin_deg}°, 膨胀 {dilate}")
    return PlausibilityModel(reference_lengths, occupancy, threshold, angle_model)


@dataclass
class PlausibilityResult:
    plausible: bool
    bone_failures: List[int] = field(default_factory=list)
    angle_failures: List[str] = field(default_factory=list)
    bone_ratios: Optional[np.ndarray] = None


@dataclass
class _PoseChecks:
    ratio_error: np.ndarray
    angle_failures: List[str]

    def result(self, threshold: float) -> PlausibilityResult:
        bone_failures = np.where(~(self.ratio_error < threshold))[0].tolist()
        return PlausibilityResult(
            plausible=not bone_failures and not self.angle_failures,
            bone_failures=bone_failures,
            angle_failures=list(self.angle_failures),
            bone_ratios=self.ratio_error + 1.0,
        )


def _pose_checks(pose: Pose3D, model: PlausibilityModel, topology: SkeletonTopology) -> _PoseChecks:
    lengths = topology.bone_lengths(pose.points)
    if lengths.shape != model.reference_lengths.shape:
        raise ValidationError(f"骨骼数 {lengths.size} 与参考骨长数 {model.reference_lengths.size} 不一致")
    missing = [n for n in topology.selected_angle_joints if n not in model.occupancy]
    if missing:
        raise MissingJointModel(f"合理性模型缺少关节占据矩阵: {missing}")
    angle_failures = []
    for name, joint in zip(topology.selected_angle_joints, topology.selected_indices):
        theta, phi = local_spherical_angles(pose, topology, joint)
        if not model.occupancy[name].contains(theta, phi):
            angle_failures.append(name)
    return _PoseChecks(np.abs(lengths / model.reference_lengths - 1.0), angle_failures)


def pose_plausibility(pose: Pose3D, model: PlausibilityModel, topology: SkeletonTopology,
                      threshold: Optional[float] = None) -> PlausibilityResult:
    """P_p = Π P_bl · Π P_ja，返回结果及失败项"""
    R = model.threshold if threshold is None else threshold
    return _pose_checks(pose, model, topology).result(R)


@dataclass
class PppReport:
    """PPP@R 及每个 R 下的失败计数"""
    fractions: Dict[float, float]
    bone_failures: Dict[float, int]
    angle_failures: int
    total: int

    def to_dict(self) -> dict:
        return {
            "ppp": {str(r): v for r, v in self.fractions.items()},
            "bone_failures": {str(r): v for r, v in self.bone_failures.items()},
            "angle_failures": self.angle_failures,
            "total": self.total,
        }


def ppp_report(poses: Sequence[Pose3D], model: PlausibilityModel, topology: SkeletonTopology,
               R_values: Sequence[float]) -> PppReport:
    if not poses:
        raise EmptyInput("待评估姿态为空")
    checks = [_pose_checks(p, model, topology) for p in poses]
    fractions, bone_failures = {}, {}
    for R in R_values:
        results = [c.result(float(R)) for c in checks]
        fractions[float(R)] = sum(r.plausible for r in results) / len(results)
        bone_failures[float(R)] = sum(bool(r.bone_failures) for r in results)
    return PppReport(fractions, bone_failures, sum(bool(c.angle_failures) for c in checks), len(poses))


def ppp_metric(poses: Sequence[Pose3D], model: PlausibilityModel, topology: SkeletonTopology,
               R_values: Sequence[float]) -> Dict[float, float]:
    """PPP@R = (1/T) Σ_t P_p(Y_t)"""
    return ppp_report(poses, model, topology, R_values).fractions
