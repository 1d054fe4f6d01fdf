from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import DimensionMismatch, NonFinite, ValidationError

NUM_JOINTS = 17


@dataclass(frozen=True)
class ImagePoint:
    """图像上的 2D 关键点（像素）"""
    u: float
    v: float
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"置信度必须在 [0,1] 内: {self.confidence}")

    @property
    def uv(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=float)


@dataclass(frozen=True, eq=False)
class Pose3D:
    """3D 姿态，joints 为 3K 向量 [x1,y1,z1,...]，单位 mm"""
    joints: np.ndarray
    root_index: int = 0

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=float).reshape(-1)
        if joints.size != 3 * NUM_JOINTS:
            raise DimensionMismatch(f"姿态长度必须为 {3 * NUM_JOINTS}, 实际 {joints.size}")
        if not np.all(np.isfinite(joints)):
            raise NonFinite("姿态包含非有限坐标")
        object.__setattr__(self, "joints", joints)

    @classmethod
    def from_points(cls, points: np.ndarray, root_index: int = 0) -> "Pose3D":
        return cls(np.asarray(points, dtype=float).reshape(-1), root_index)

    @property
    def points(self) -> np.ndarray:
        """(K, 3) 视图"""
        return self.joints.reshape(-1, 3)

    @property
    def root(self) -> np.ndarray:
        return self.points[self.root_index]

    def root_relative(self) -> np.ndarray:
        """Y_re = Y - Y_root，返回 3K 向量"""
        return (self.points - self.root).reshape(-1)


@dataclass
class MultiViewObservation:
    """单帧多视角 2D 观测

    points: (C, K, 2) 像素坐标；confidence: (C, K) 取值 [0,1]；
    view_ids: 每一行对应的相机 id。置信度为 0 的条目视为未观测。
    """
    view_ids: List[int]
    points: np.ndarray
    confidence: np.ndarray
    frame: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.confidence = np.asarray(self.confidence, dtype=float)
        n_views = len(self.view_ids)
        if self.points.ndim != 3 or self.points.shape[0] != n_views or self.points.shape[2] != 2:
            raise DimensionMismatch(f"观测点形状错误: {self.points.shape}")
        if self.confidence.shape != self.points.shape[:2]:
            raise DimensionMismatch(f"置信度形状错误: {self.confidence.shape}")
        if np.any(self.confidence < 0) or np.any(self.confidence > 1):
            raise ValidationError("置信度必须在 [0,1] 内")
        if not np.all(np.isfinite(self.points)):
            raise NonFinite("观测点包含非有限坐标")

    @property
    def num_views(self) -> int:
        return len(self.view_ids)

    @property
    def num_joints(self) -> int:
        return self.points.shape[1]

    def joint(self, k: int) -> List[Tuple[int, ImagePoint]]:
        """关节 k 的 (view id, ImagePoint) 列表"""
        return [
            (vid, ImagePoint(float(self.points[i, k, 0]), float(self.points[i, k, 1]),
                             float(self.confidence[i, k])))
            for i, vid in enumerate(self.view_ids)
        ]

    def with_points(self, points: np.ndarray, confidence: Optional[np.ndarray] = None) -> "MultiViewObservation":
        return MultiViewObservation(
            view_ids=list(self.view_ids),
            points=points,
            confidence=self.confidence.copy() if confidence is None else confidence,
            frame=self.frame,
        )


@dataclass(frozen=True, eq=False)
class HolisticSystem:
    """块对角线性系统 A (2CK x 3K)，B (2CK)，已乘以置信度"""
    A: np.ndarray
    B: np.ndarray
    num_views: int
    num_joints: int


@dataclass
class SolverReport:
    """求解报告"""
    reprojection_residual: float
    reconstruction_residual: Dict[int, float] = field(default_factory=dict)
    condition_estimate: float = 1.0
    status: str = "cholesky"

    def to_dict(self) -> dict:
        return {
            "reprojection_residual": self.reprojection_residual,
            "reconstruction_residual": {str(k): v for k, v in self.reconstruction_residual.items()},
            "condition_estimate": self.condition_estimate,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SolverReport":
        return cls(
            reprojection_residual=float(data["reprojection_residual"]),
            reconstruction_residual={int(k): float(v) for k, v in data.get("reconstruction_residual", {}).items()},
            condition_estimate=float(data.get("condition_estimate", 1.0)),
            status=str(data.get("status", "cholesky")),
        )


@dataclass
class Heatmap:
    """热图，grid 形状 (H, W)，grid[v, u]"""
    grid: np.ndarray
    joint: int = -1
    view: int = -1

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 2 or self.grid.size == 0:
            raise DimensionMismatch(f"热图必须是非空二维数组: {self.grid.shape}")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.grid.shape

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    @property
    def height(self) -> int:
        return self.grid.shape[0]


@dataclass
class FeatureMap:
    """特征图，grid 形状 (H, W, N)"""
    grid: np.ndarray
    view: int = -1

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 3 or self.grid.shape[2] < 1:
            raise DimensionMismatch(f"特征图必须是 (H, W, N): {self.grid.shape}")
        if not np.all(np.isfinite(self.grid)):
            raise NonFinite("特征图包含非有限值")

    @property
    def channels(self) -> int:
        return self.grid.shape[2]
