"""PCA 解剖先验

先验在 hop-s 特征空间 V_s = C_s Y_re 中拟合，重建项为
‖G_s (V_s − V_s')‖，V_s' = MᵀM(V_s − V_mean) + V_mean。
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence, Tuple
import logging

import numpy as np
from scipy import linalg
from scipy.spatial.transform import Rotation

from ..core.errors import (
    DegenerateHips,
    DimensionMismatch,
    IndexOutOfRange,
    InsufficientSamples,
    InvalidDimension,
    ValidationError,
)
from ..core.types import Pose3D
from .kcs import KcsMap, kcs_map
from .topology import SkeletonTopology

logger = logging.getLogger(__name__)

AXES = {"x": 0, "y": 1, "z": 2}
HIP_EPS = 1e-6


def orientation_normalize(pose: Pose3D, topology: SkeletonTopology,
                          vertical: str = "z") -> Tuple[Pose3D, np.ndarray]:
    """绕竖直轴旋转根相对姿态，使左髋→右髋的水平分量对齐 +x

    Returns:
        (归一化后的根相对姿态, 所用旋转矩阵 R)，原姿态 = Rᵀ·out + root
    """
    axis = np.zeros(3)
    axis[AXES[vertical]] = 1.0
    points = pose.points - pose.root
    left, right = topology.hip_indices
    hip = points[right] - points[left]
    horizontal = hip - hip.dot(axis) * axis
    if np.linalg.norm(horizontal) < HIP_EPS:
        raise DegenerateHips(f"髋部水平分量过小: {np.linalg.norm(horizontal):.3e} mm")
    R = yaw_alignment(horizontal, axis)
    return Pose3D.from_points(points @ R.T, pose.root_index), R


def yaw_alignment(horizontal: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """把水平向量绕 axis 转到 +x 的旋转矩阵"""
    x = np.array([1.0, 0.0, 0.0])
    angle = np.arctan2(np.cross(x, horizontal).dot(axis), x.dot(horizontal))
    return Rotation.from_rotvec(-angle * axis).as_matrix()


@dataclass(eq=False)
class PcaPrior:
    """hop-s 特征空间中的 PCA 先验，M 的行两两正交"""
    hop: int
    M: np.ndarray
    mean: np.ndarray
    eigenvalues: np.ndarray
    explained_variance: float = 1.0

    @property
    def dim(self) -> int:
        """保留维度 D"""
        return self.M.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.M.shape[1]

    def encode(self, V: np.ndarray) -> np.ndarray:
        return self.M @ (np.asarray(V, dtype=float) - self.mean)

    def decode(self, z: np.ndarray) -> np.ndarray:
        return self.M.T @ np.asarray(z, dtype=float) + self.mean

    def reconstruct(self, V: np.ndarray) -> np.ndarray:
        """V' = MᵀM(V − V_mean) + V_mean"""
        return self.decode(self.encode(V))

    def residual_projector(self) -> np.ndarray:
        """N = I − MᵀM"""
        return np.eye(self.feature_dim) - self.M.T @ self.M

    def to_dict(self, lam: float = 0.0) -> dict:
        return {
            "hop": self.hop,
            "D": self.dim,
            "mean": self.mean.tolist(),
            "M": self.M.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "explained_variance": self.explained_variance,
            "lambda": lam,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PcaPrior":
        M = np.asarray(data["M"], dtype=float)
        if M.shape[0] != int(data["D"]):
            raise DimensionMismatch(f"先验文件 D={data['D']} 与 M 的行数 {M.shape[0]} 不一致")
        return cls(hop=int(data["hop"]), M=M, mean=np.asarray(data["mean"], dtype=float),
                   eigenvalues=np.asarray(data["eigenvalues"], dtype=float),
                   explained_variance=float(data.get("explained_variance", 1.0)))


def hop_features(poses: Sequence[Pose3D], topology: SkeletonTopology, kcs: KcsMap,
                 normalize: bool = True, vertical: str = "z") -> np.ndarray:
    """每个样本的 V_s = C_s Y_re，返回 (n, 3J_s)"""
    rows = []
    for pose in poses:
        if normalize:
            pose, _ = orientation_normalize(pose, topology, vertical)
        rows.append(pose.root_relative())
    return np.asarray(rows) @ kcs.C.T


def fit_pca(poses: Sequence[Pose3D], topology: SkeletonTopology, hop: int, D: int,
            normalize: bool = True, vertical: str = "z") -> PcaPrior:
    """在根相对、朝向归一化后的 hop-s 特征上拟合 PCA"""
    kcs = kcs_map(topology, hop)
    if not 1 <= D <= kcs.feature_dim:
        raise InvalidDimension(f"D 必须在 1..{kcs.feature_dim} 之间, 实际 {D}")
    if len(poses) < D:
        raise InsufficientSamples(f"样本数 {len(poses)} 少于 D={D}")
    X = hop_features(poses, topology, kcs, normalize, vertical)
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / len(X)
    eigenvalues, eigenvectors = linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]
    total = eigenvalues.sum()
    explained = float(eigenvalues[:D].sum() / total) if total > 0 else 1.0
    logger.info(f"hop {hop} PCA: D={D}, 解释方差 {explained:.4%}")
    return PcaPrior(hop=hop, M=eigenvectors[:, :D].T.copy(), mean=mean,
                    eigenvalues=eigenvalues[:D].copy(), explained_variance=explained)


@dataclass(eq=False)
class HopPrior:
    """单个 hop 的 {KcsMap, PcaPrior, λ_s}"""
    kcs: KcsMap
    pca: PcaPrior
    lam: float

    def __post_init__(self):
        if self.kcs.feature_dim != self.pca.feature_dim:
            raise DimensionMismatch(
                f"hop {self.hop}: KCS 特征维度 {self.kcs.feature_dim} 与 PCA 维度 {self.pca.feature_dim} 不一致")
        if self.lam < 0:
            raise ValidationError(f"λ 必须非负: {self.lam}")

    @property
    def hop(self) -> int:
        return self.kcs.hop

    @property
    def H(self) -> np.ndarray:
        """H_s = G_s N_s C_s"""
        if not hasattr(self, "_H"):
            self._H = self.kcs.G @ self.pca.residual_projector() @ self.kcs.C
        return self._H

    @property
    def offset(self) -> np.ndarray:
        """G_s N_s V_mean,s"""
        if not hasattr(self, "_offset"):
            self._offset = self.kcs.G @ (self.pca.residual_projector() @ self.pca.mean)
        return self._offset


def reconstruct_pose(entry: HopPrior, Y_re: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (V', G_s V')"""
    Y_re = np.asarray(Y_re, dtype=float).reshape(-1)
    if Y_re.size != entry.kcs.C.shape[1]:
        raise DimensionMismatch(f"姿态维度 {Y_re.size} 与 KCS 输入维度 {entry.kcs.C.shape[1]} 不一致")
    V_rec = entry.pca.reconstruct(entry.kcs.features(Y_re))
    return V_rec, entry.kcs.G @ V_rec


def reconstruction_operator(entry: HopPrior) -> np.ndarray:
    return entry.H


def latent_traverse(entry: HopPrior, component_index: int, steps: int, step_size: float) -> List[Pose3D]:
    """沿单个主成分从 -steps 到 +steps 步解码姿态"""
    if not 0 <= component_index < entry.pca.dim:
        raise IndexOutOfRange(f"主成分下标 {component_index} 超出 [0, {entry.pca.dim})")
    sigma = np.sqrt(entry.pca.eigenvalues[component_index])
    poses = []
    for i in range(-steps, steps + 1):
        z = np.zeros(entry.pca.dim)
        z[component_index] = i * step_size * sigma
        poses.append(Pose3D(entry.kcs.G @ entry.pca.decode(z)))
    return poses


@dataclass(eq=False)
class AnatomyPrior:
    """多 hop 解剖先验"""
    topology: SkeletonTopology
    entries: Dict[int, HopPrior] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return 3 * self.topology.num_joints

    @property
    def hops(self) -> List[int]:
        return sorted(self.entries)

    @property
    def normal_matrix(self) -> np.ndarray:
        """Σ_s λ_s H_sᵀH_s"""
        if not hasattr(self, "_normal"):
            total = np.zeros((self.dim, self.dim))
            for entry in self.entries.values():
                if entry.lam > 0:
                    total += entry.lam * entry.H.T @ entry.H
            self._normal = total
        return self._normal

    @property
    def offset(self) -> np.ndarray:
        """Σ_s λ_s H_sᵀ G_s N_s V_mean,s"""
        if not hasattr(self, "_offset"):
            total = np.zeros(self.dim)
            for entry in self.entries.values():
                if entry.lam > 0:
                    total += entry.lam * entry.H.T @ entry.offset
            self._offset = total
        return self._offset

    def residuals(self, Y: np.ndarray, root: np.ndarray) -> Dict[int, float]:
        """每个 hop 的 ‖H_s Y − t_s‖"""
        root_stacked = np.tile(np.asarray(root, dtype=float), self.topology.num_joints)
        out = {}
        for hop, entry in sorted(self.entries.items()):
            target = entry.H @ root_stacked + entry.offset
            out[hop] = float(np.linalg.norm(entry.H @ Y - target))
        return out

    def with_lambdas(self, lambdas: Dict[int, float]) -> "AnatomyPrior":
        entries = {hop: HopPrior(e.kcs, e.pca, float(lambdas.get(hop, e.lam)))
                   for hop, e in self.entries.items()}
        return AnatomyPrior(self.topology, entries)

    def rotated(self, R: np.ndarray) -> "AnatomyPrior":
        """把朝向归一化坐标系下的先验转到世界坐标系（y_world = R y_canonical）"""
        R = np.asarray(R, dtype=float)
        entries = {}
        for hop, e in self.entries.items():
            block = np.kron(np.eye(e.pca.feature_dim // 3), R)
            pca = replace(e.pca, M=e.pca.M @ block.T, mean=block @ e.pca.mean)
            entries[hop] = HopPrior(e.kcs, pca, e.lam)
        return AnatomyPrior(self.topology, entries)


def build_prior(poses: Sequence[Pose3D], topology: SkeletonTopology, dims: Dict[int, int],
                lambdas: Dict[int, float], normalize: bool = True, vertical: str = "z") -> AnatomyPrior:
    """按 hop 拟合并组装 AnatomyPrior"""
    entries = {}
    for hop, D in sorted(dims.items()):
        pca = fit_pca(poses, topology, hop, D, normalize, vertical)
        entries[hop] = HopPrior(kcs_map(topology, hop), pca, float(lambdas.get(hop, 0.0)))
    return AnatomyPrior(topology, entries)
