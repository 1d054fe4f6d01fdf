"""针孔相机模型、三角化行构造与极线场"""
from dataclasses import dataclass, field
from typing import Optional, Tuple
import logging

import numpy as np
from scipy import linalg

from .core.errors import (
    DegenerateBaseline,
    DegenerateRay,
    DepthDegenerate,
    DimensionMismatch,
    RankDeficient,
    ValidationError,
)
from .core.types import Heatmap, ImagePoint

logger = logging.getLogger(__name__)

DEPTH_EPS = 1e-9
RANK_RATIO = 1e-6
BASELINE_EPS = 1e-6
RAY_EPS = 1e-12


def camera_center(projection: np.ndarray) -> np.ndarray:
    """由 P 的一维右零空间求相机中心 c，满足 P·[c;1] = 0"""
    P = np.asarray(projection, dtype=float)
    if P.shape != (3, 4):
        raise DimensionMismatch(f"投影矩阵必须是 3x4: {P.shape}")
    _, s, vt = linalg.svd(P)
    if s[0] <= 0 or s[2] <= RANK_RATIO * s[0]:
        raise RankDeficient(f"投影矩阵秩不足 3, 奇异值 {s}")
    null = vt[-1]
    if abs(null[3]) <= RAY_EPS * np.linalg.norm(null):
        # 仿射相机，中心在无穷远
        raise RankDeficient("投影矩阵的相机中心位于无穷远")
    return null[:3] / null[3]


@dataclass(frozen=True, eq=False)
class CameraParams:
    """相机参数，center 由 projection 推导，不单独存储"""
    id: int
    projection: np.ndarray
    image_size: Tuple[int, int] = (256, 256)
    center: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        P = np.asarray(self.projection, dtype=float)
        object.__setattr__(self, "projection", P)
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))
        center = camera_center(P)
        residual = np.linalg.norm(P @ np.append(center, 1.0))
        if residual > 1e-9 * max(1.0, np.linalg.norm(P)) * max(1.0, np.linalg.norm(center)):
            raise RankDeficient(f"相机中心不在零空间上, 残差 {residual:.3e}")
        object.__setattr__(self, "center", center)

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "P": self.projection.tolist(),
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CameraParams":
        return cls(id=int(data["id"]), projection=np.asarray(data["P"], dtype=float),
                   image_size=(int(data["width"]), int(data["height"])))


def project(camera: CameraParams, point: np.ndarray) -> ImagePoint:
    """x̃ = P ỹ，透视除法后返回像素坐标"""
    uv = project_points(camera, np.asarray(point, dtype=float).reshape(1, 3))[0]
    return ImagePoint(float(uv[0]), float(uv[1]), 1.0)


def project_points(camera: CameraParams, points: np.ndarray) -> np.ndarray:
    """批量投影 (N,3) -> (N,2)"""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    homo = np.hstack([points, np.ones((len(points), 1))]) @ camera.projection.T
    w = homo[:, 2]
    if np.any(np.abs(w) <= DEPTH_EPS):
        raise DepthDegenerate(f"相机 {camera.id}: 点位于主平面上 (|w| <= {DEPTH_EPS})")
    return homo[:, :2] / w[:, None]


def triangulation_rows(camera: CameraParams, obs: ImagePoint) -> Tuple[np.ndarray, np.ndarray]:
    """构造 [u·P³ − P¹ ; v·P³ − P²]，拆成前三列 A_rows 与最后一列 b_rows"""
    A, b = triangulation_rows_batch(camera.projection, np.array([[obs.u, obs.v]]))
    return A[0], b[0]


def triangulation_rows_batch(projection: np.ndarray, uv: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """同一相机下多个观测的行：返回 (N,2,3) 与 (N,2)"""
    P = np.asarray(projection, dtype=float)
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    rows = uv[:, :, None] * P[2][None, None, :] - P[:2][None, :, :]
    return rows[:, :, :3], rows[:, :, 3]


def ray_directions(camera: CameraParams, uv: np.ndarray) -> np.ndarray:
    """像素 (N,2) 的反投影射线方向（单位向量，符号不定）"""
    M = camera.projection[:, :3]
    if np.linalg.cond(M) > 1e12:
        raise DegenerateRay(f"相机 {camera.id} 的 3x3 子矩阵不可逆")
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    homo = np.hstack([uv, np.ones((len(uv), 1))])
    dirs = np.linalg.solve(M, homo.T).T
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(norms <= RAY_EPS):
        raise DegenerateRay("反投影射线长度为 0")
    return dirs / norms[:, None]


def _epipolar_normal(cam_ref: CameraParams, cam_src: CameraParams, p_src: ImagePoint) -> np.ndarray:
    """单位化的 (c'p' × cc')，即极平面法向"""
    baseline = cam_src.center - cam_ref.center
    length = np.linalg.norm(baseline)
    if length <= BASELINE_EPS:
        raise DegenerateBaseline(f"相机 {cam_ref.id} 与 {cam_src.id} 的中心重合")
    src_dir = ray_directions(cam_src, np.array([[p_src.u, p_src.v]]))[0]
    normal = np.cross(src_dir, baseline / length)
    n = np.linalg.norm(normal)
    if n <= RAY_EPS:
        raise DegenerateRay("源视角射线与基线平行（关键点位于极点）")
    return normal / n


def _field_values(normal: np.ndarray, ref_dirs: np.ndarray, gamma: float) -> np.ndarray:
    triple = np.abs(ref_dirs @ normal)
    return np.clip(1.0 - triple, 0.0, 1.0) ** gamma


def epipolar_field(cam_ref: CameraParams, cam_src: CameraParams, p_src: ImagePoint,
                   pixel: Tuple[float, float], gamma: float) -> float:
    """C(p,p') = (1 − |(c'p' × cc') · cp|)^γ，三个方向均单位化"""
    if gamma <= 0:
        raise ValidationError(f"gamma 必须为正: {gamma}")
    normal = _epipolar_normal(cam_ref, cam_src, p_src)
    ref_dir = ray_directions(cam_ref, np.array([pixel], dtype=float))
    return float(_field_values(normal, ref_dir, gamma)[0])


def pixel_rays(camera: CameraParams, width: int, height: int) -> np.ndarray:
    """所有像素中心 (u+0.5, v+0.5) 的单位射线，(H*W, 3)，行优先"""
    if width < 1 or height < 1:
        raise ValidationError(f"网格尺寸必须 >= 1: {width}x{height}")
    vv, uu = np.mgrid[0:height, 0:width]
    pixels = np.stack([uu.ravel() + 0.5, vv.ravel() + 0.5], axis=1)
    return ray_directions(camera, pixels)


def epipolar_mask(cam_ref: CameraParams, cam_src: CameraParams, p_src: ImagePoint,
                  width: int, height: int, gamma: float,
                  rays: Optional[np.ndarray] = None) -> Heatmap:
    """在每个像素中心 (u+0.5, v+0.5) 上计算极线场

    rays 为 pixel_rays(cam_ref, width, height) 的缓存结果。
    """
    if gamma <= 0:
        raise ValidationError(f"gamma 必须为正: {gamma}")
    ref_dirs = pixel_rays(cam_ref, width, height) if rays is None else rays
    if ref_dirs.shape != (width * height, 3):
        raise DimensionMismatch(f"射线缓存形状 {ref_dirs.shape} 与网格 {width}x{height} 不符")
    normal = _epipolar_normal(cam_ref, cam_src, p_src)
    grid = _field_values(normal, ref_dirs, gamma).reshape(height, width)
    return Heatmap(grid, view=cam_ref.id)
