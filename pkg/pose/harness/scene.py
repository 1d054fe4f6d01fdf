"""合成场景：相机阵列、姿态采样、2D 真值与热图/特征图渲染"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
from scipy.spatial.transform import Rotation

from share.util import stream_rng

from ..anatomy.pca import AnatomyPrior
from ..anatomy.topology import SkeletonTopology
from ..core.errors import NumericalError, ValidationError
from ..core.types import FeatureMap, Heatmap, MultiViewObservation, Pose3D
from ..geometry import CameraParams, project_points
from ..triangulation import stack_rows

logger = logging.getLogger(__name__)

WORLD_UP = np.array([0.0, 0.0, 1.0])
DUALITY_TOL = 1e-9
# 训练姿态使用 poses 流的第 1 个子流，与测试姿态互不相关
TRAIN_STREAM = 1


# ---- 相机阵列 ----

@dataclass
class RigConfig:
    n_cameras: int = 4
    radius_mm: float = 4000.0
    height_range_mm: Tuple[float, float] = (800.0, 2200.0)
    image_size: Tuple[int, int] = (256, 256)
    focal_scale: float = 0.9

    @classmethod
    def from_config(cls, section: Dict, **overrides) -> "RigConfig":
        values = {
            "n_cameras": int(section.get("n_cameras", 4)),
            "radius_mm": float(section.get("radius_mm", 4000.0)),
            "height_range_mm": tuple(float(h) for h in section.get("height_range_mm", (800.0, 2200.0))),
            "image_size": tuple(int(s) for s in section.get("image_size", (256, 256))),
            "focal_scale": float(section.get("focal_scale", 0.9)),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def look_at(center: np.ndarray, target: np.ndarray) -> np.ndarray:
    """世界到相机的旋转，行依次为相机 x(右)、y(下)、z(前)"""
    forward = np.asarray(target, dtype=float) - np.asarray(center, dtype=float)
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, WORLD_UP)
    if np.linalg.norm(right) < 1e-9:
        raise ValidationError("相机光轴与竖直方向平行")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


def make_camera(cam_id: int, focal: float, rotation: np.ndarray, center: np.ndarray,
                image_size: Tuple[int, int]) -> CameraParams:
    """P = K [R | −R c]"""
    width, height = image_size
    K = np.array([[focal, 0.0, width / 2.0], [0.0, focal, height / 2.0], [0.0, 0.0, 1.0]])
    extrinsic = np.hstack([rotation, -rotation @ np.asarray(center, dtype=float).reshape(3, 1)])
    return CameraParams(id=cam_id, projection=K @ extrinsic, image_size=image_size)


def gen_rig(n_cameras: int, radius_mm: float, height_range_mm: Tuple[float, float],
            image_size: Tuple[int, int], seed: int, focal_scale: float = 0.9) -> List[CameraParams]:
    """圆周上朝向原点的相机，高度在 height_range 内错开"""
    if n_cameras < 1:
        raise ValidationError(f"相机数必须 >= 1: {n_cameras}")
    rng = stream_rng(seed, "rig")
    offset = rng.uniform(0.0, 2.0 * np.pi)
    azimuths = offset + 2.0 * np.pi * np.arange(n_cameras) / n_cameras + rng.uniform(-0.15, 0.15, n_cameras)
    low, high = height_range_mm
    fractions = np.arange(n_cameras) / (n_cameras - 1) if n_cameras > 1 else np.array([0.5])
    heights = rng.permutation(low + (high - low) * fractions)
    focals = focal_scale * image_size[0] * rng.uniform(0.95, 1.05, n_cameras)

    cameras = []
    for i in range(n_cameras):
        center = np.array([radius_mm * np.cos(azimuths[i]), radius_mm * np.sin(azimuths[i]), heights[i]])
        cameras.append(make_camera(i, focals[i], look_at(center, np.zeros(3)), center, image_size))
    logger.debug(f"生成 {n_cameras} 个相机, 半径 {radius_mm} mm")
    return cameras


# ---- 姿态采样 ----

# 静止站姿下各关节相对父关节的偏移 (mm)：面向 +y，右侧为 +x，z 向上
TEMPLATE_OFFSETS = {
    "r_hip": (130.0, 0.0, 0.0),
    "r_knee": (0.0, 0.0, -450.0),
    "r_ankle": (0.0, 0.0, -440.0),
    "l_hip": (-130.0, 0.0, 0.0),
    "l_knee": (0.0, 0.0, -450.0),
    "l_ankle": (0.0, 0.0, -440.0),
    "spine": (0.0, 0.0, 230.0),
    "thorax": (0.0, 0.0, 250.0),
    "neck": (0.0, 0.0, 110.0),
    "head": (0.0, 30.0, 111.0),
    "l_shoulder": (-150.0, 0.0, 0.0),
    "l_elbow": (0.0, 0.0, -280.0),
    "l_wrist": (0.0, 0.0, -250.0),
    "r_shoulder": (150.0, 0.0, 0.0),
    "r_elbow": (0.0, 0.0, -280.0),
    "r_wrist": (0.0, 0.0, -250.0),
}

# 每个运动因子在各关节上的旋转向量 (rad / 单位因子)，旋转作用于离开该关节的骨骼
MOTION_FACTORS: List[Dict[str, Tuple[float, float, float]]] = [
    # 步态
    {"r_hip": (0.45, 0.0, 0.0), "l_hip": (-0.45, 0.0, 0.0),
     "l_shoulder": (0.35, 0.0, 0.0), "r_shoulder": (-0.35, 0.0, 0.0)},
    # 下蹲
    {"r_hip": (0.5, 0.0, 0.0), "l_hip": (0.5, 0.0, 0.0), "spine": (-0.25, 0.0, 0.0)},
    # 左臂侧举
    {"l_shoulder": (0.0, 0.7, 0.0)},
    # 右臂侧举
    {"r_shoulder": (0.0, -0.7, 0.0)},
    # 双臂前举
    {"l_shoulder": (0.6, 0.0, 0.0), "r_shoulder": (0.6, 0.0, 0.0)},
    # 分腿
    {"r_hip": (0.0, -0.25, 0.0), "l_hip": (0.0, 0.25, 0.0)},
    # 躯干侧弯
    {"spine": (0.0, 0.2, 0.0), "thorax": (0.0, 0.1, 0.0)},
    # 躯干扭转
    {"spine": (0.0, 0.0, 0.3), "neck": (0.0, 0.0, 0.2)},
    # 低头
    {"neck": (-0.3, 0.0, 0.0)},
    # 屈肘
    {},
    # 左右肘不对称
    {},
]

# 屈曲关节：(绕 x 轴的方向, 基准角, {因子下标: 系数})，角度截断到 FLEXION_RANGE
FLEXION_JOINTS = {
    "r_knee": (-1.0, 0.3, {0: 0.3, 1: 0.6}),
    "l_knee": (-1.0, 0.3, {0: -0.3, 1: 0.6}),
    "r_elbow": (1.0, 0.5, {9: 0.5, 10: 0.4}),
    "l_elbow": (1.0, 0.5, {9: 0.5, 10: -0.4}),
}
FLEXION_RANGE = (0.05, 2.3)
LATENT_CLIP = 2.5


def _yaw(angle: float) -> np.ndarray:
    return Rotation.from_rotvec([0.0, 0.0, angle]).as_matrix()


@dataclass
class PoseSampler:
    """模板骨架上的正向运动学采样器

    少量潜在运动因子驱动关节旋转，骨长固定为模板值。
    """
    topology: SkeletonTopology
    factor_scale: float = 1.0
    joint_noise: float = 0.05
    root_spread_mm: float = 300.0
    random_yaw: bool = True
    offsets: Dict[str, Tuple[float, float, float]] = field(default_factory=lambda: dict(TEMPLATE_OFFSETS))

    def __post_init__(self):
        missing = [self.topology.joints[k] for k, _ in self.topology.bones
                   if self.topology.joints[k] not in self.offsets]
        if missing:
            raise ValidationError(f"模板缺少关节偏移: {missing}")
        self._order = self._topological_order()

    def _topological_order(self) -> List[int]:
        order, frontier = [], [self.topology.root_index]
        while frontier:
            joint = frontier.pop(0)
            order.append(joint)
            frontier.extend(self.topology.children(joint))
        return order

    @property
    def n_factors(self) -> int:
        return len(MOTION_FACTORS)

    def local_rotations(self, latent: np.ndarray, noise: np.ndarray) -> np.ndarray:
        """(K,3,3) 各关节的局部旋转"""
        K = self.topology.num_joints
        rotvecs = np.array(noise, dtype=float).reshape(K, 3)
        for f, factor in enumerate(MOTION_FACTORS):
            for name, vec in factor.items():
                rotvecs[self.topology.index(name)] += latent[f] * np.asarray(vec)
        for name, (sign, base, loadings) in FLEXION_JOINTS.items():
            angle = base + sum(latent[f] * c for f, c in loadings.items())
            rotvecs[self.topology.index(name), 0] += sign * np.clip(angle, *FLEXION_RANGE)
        rotvecs[self.topology.root_index] = 0.0
        return Rotation.from_rotvec(rotvecs).as_matrix()

    def forward_kinematics(self, local: np.ndarray, yaw: float = 0.0,
                           root: Optional[np.ndarray] = None) -> Pose3D:
        K = self.topology.num_joints
        points = np.zeros((K, 3))
        frames = np.zeros((K, 3, 3))
        root_index = self.topology.root_index
        points[root_index] = np.zeros(3) if root is None else root
        frames[root_index] = _yaw(yaw) @ local[root_index]
        for joint in self._order[1:]:
            parent = self.topology.parents[joint]
            frames[joint] = frames[parent] @ local[joint]
            points[joint] = points[parent] + frames[parent] @ np.asarray(self.offsets[self.topology.joints[joint]])
        return Pose3D.from_points(points, root_index)

    def sample(self, rng: np.random.Generator) -> Pose3D:
        latent = np.clip(rng.standard_normal(self.n_factors), -LATENT_CLIP, LATENT_CLIP) * self.factor_scale
        noise = rng.normal(0.0, self.joint_noise, (self.topology.num_joints, 3))
        yaw = rng.uniform(-np.pi, np.pi) if self.random_yaw else 0.0
        root = np.append(rng.normal(0.0, self.root_spread_mm, 2), 0.0)
        return self.forward_kinematics(self.local_rotations(latent, noise), yaw, root)


def gen_poses(source: Union[PoseSampler, AnatomyPrior], n_frames: int, seed: int,
              noise_scale: float = 1.0, root_spread_mm: float = 300.0, index: int = 0) -> List[Pose3D]:
    """从运动学采样器或 hop-0 PCA 先验生成姿态

    先验路径：z ~ N(0, diag(eigenvalues))·noise_scale，经 hop-0 解码后随机偏航并平移根节点。
    index 区分同一 seed 下互不相关的姿态流（例如训练集与测试集）。
    """
    rng = stream_rng(seed, "poses", index)
    if isinstance(source, PoseSampler):
        return [source.sample(rng) for _ in range(n_frames)]
    entry = source.entries.get(0)
    if entry is None:
        raise ValidationError("从先验采样需要 hop 0 的 PCA")
    sigma = np.sqrt(entry.pca.eigenvalues) * noise_scale
    poses = []
    for _ in range(n_frames):
        z = rng.standard_normal(entry.pca.dim) * sigma
        relative = (entry.kcs.G @ entry.pca.decode(z)).reshape(-1, 3)
        yaw = rng.uniform(-np.pi, np.pi)
        root = np.append(rng.normal(0.0, root_spread_mm, 2), 0.0)
        points = relative @ _yaw(yaw).T + root
        poses.append(Pose3D.from_points(points, source.topology.root_index))
    return poses


# ---- 场景与渲染 ----

@dataclass
class RenderConfig:
    heatmap_peak: float = 30.0
    heatmap_sigma: float = 3.0
    feature_channels: int = 16
    feature_sigma: float = 2.5
    feature_noise: float = 0.05

    @classmethod
    def from_config(cls, section: Dict, **overrides) -> "RenderConfig":
        values = {k: type(getattr(cls, k))(section[k]) for k in
                  ("heatmap_peak", "heatmap_sigma", "feature_channels", "feature_sigma", "feature_noise")
                  if k in section}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _gaussian_rows(centers: np.ndarray, size: int, sigma: float) -> np.ndarray:
    """(n, size) 一维高斯，centers 为网格下标坐标"""
    grid = np.arange(size, dtype=float)
    return np.exp(-0.5 * ((grid[None, :] - centers[:, None]) / sigma) ** 2)


def render_blobs(points: np.ndarray, amplitudes: np.ndarray, width: int, height: int,
                 sigma: float) -> np.ndarray:
    """(n, H, W) 高斯斑，points 为图像坐标"""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    gx = _gaussian_rows(points[:, 0] - 0.5, width, sigma)
    gy = _gaussian_rows(points[:, 1] - 0.5, height, sigma)
    return np.asarray(amplitudes, dtype=float)[:, None, None] * gy[:, :, None] * gx[:, None, :]


@dataclass(eq=False)
class SyntheticScene:
    """合成场景，true_2d 形状 (T, C, K, 2)"""
    cameras: List[CameraParams]
    poses: List[Pose3D]
    true_2d: np.ndarray
    seed: int = 0
    render: RenderConfig = field(default_factory=RenderConfig)
    descriptors: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.descriptors is None:
            rng = stream_rng(self.seed, "features", 0)
            raw = rng.standard_normal((self.num_joints, self.render.feature_channels))
            self.descriptors = raw / np.linalg.norm(raw, axis=1, keepdims=True)

    @property
    def num_frames(self) -> int:
        return len(self.poses)

    @property
    def num_joints(self) -> int:
        return self.true_2d.shape[2]

    @property
    def view_ids(self) -> List[int]:
        return [cam.id for cam in self.cameras]

    def true_observation(self, frame: int) -> MultiViewObservation:
        C, K = self.true_2d.shape[1:3]
        return MultiViewObservation(self.view_ids, self.true_2d[frame].copy(), np.ones((C, K)), frame)

    def true_observations(self) -> List[MultiViewObservation]:
        return [self.true_observation(t) for t in range(self.num_frames)]

    def heatmaps(self, obs: MultiViewObservation) -> List[List[Heatmap]]:
        """以观测点为中心、峰值 heatmap_peak·ω 的热图，heatmaps[c][k]"""
        out = []
        for c, cam in enumerate(self.cameras):
            blobs = render_blobs(obs.points[c], self.render.heatmap_peak * obs.confidence[c],
                                 cam.width, cam.height, self.render.heatmap_sigma)
            out.append([Heatmap(blobs[k], joint=k, view=cam.id) for k in range(obs.num_joints)])
        return out

    def feature_maps(self, frame: int) -> List[FeatureMap]:
        """在真值 2D 位置上铺开各关节的描述子，再加通道噪声

        描述子缩放为 sqrt(peak·N)，使点积匹配在正确位置的峰值约为 heatmap_peak。
        """
        rng = stream_rng(self.seed, "features", frame + 1)
        N = self.render.feature_channels
        scale = np.sqrt(self.render.heatmap_peak * N)
        noise_std = self.render.feature_noise * np.sqrt(self.render.heatmap_peak)
        maps = []
        for c, cam in enumerate(self.cameras):
            blobs = render_blobs(self.true_2d[frame, c], np.ones(self.num_joints),
                                 cam.width, cam.height, self.render.feature_sigma)
            grid = np.einsum("khw,kn->hwn", blobs, scale * self.descriptors)
            grid += rng.normal(0.0, noise_std, grid.shape)
            maps.append(FeatureMap(grid, view=cam.id))
        return maps


def check_duality(cameras: Sequence[CameraParams], poses: Sequence[Pose3D], true_2d: np.ndarray) -> None:
    """投影与三角化行的对偶性：‖A y + b‖ ≤ 1e-9·(1+‖y‖)"""
    projections = np.stack([cam.projection for cam in cameras])
    for t, pose in enumerate(poses):
        A_blocks, b_blocks = stack_rows(projections, true_2d[t])
        residual = np.linalg.norm(np.einsum("kri,ki->kr", A_blocks, pose.points) + b_blocks, axis=1)
        bound = DUALITY_TOL * (1.0 + np.linalg.norm(pose.points, axis=1))
        # 行的尺度与 P 同阶，按 ‖P‖ 归一
        scale = max(1.0, max(np.linalg.norm(P) for P in projections))
        if np.any(residual > bound * scale):
            raise NumericalError(f"帧 {t}: 投影/三角化行对偶性残差 {residual.max():.3e} 超限")


def build_scene(cameras: Sequence[CameraParams], poses: Sequence[Pose3D], seed: int = 0,
                render: Optional[RenderConfig] = None) -> SyntheticScene:
    """投影真值 2D 并校验对偶性"""
    true_2d = np.stack([np.stack([project_points(cam, pose.points) for cam in cameras]) for pose in poses])
    check_duality(cameras, poses, true_2d)
    outside = sum(
        int(np.sum((true_2d[:, c, :, 0] < 0) | (true_2d[:, c, :, 0] >= cam.width)
                   | (true_2d[:, c, :, 1] < 0) | (true_2d[:, c, :, 1] >= cam.height)))
        for c, cam in enumerate(cameras)
    )
    if outside:
        logger.warning(f"{outside} 个真值 2D 点落在图像之外")
    return SyntheticScene(list(cameras), list(poses), true_2d, seed, render or RenderConfig())
