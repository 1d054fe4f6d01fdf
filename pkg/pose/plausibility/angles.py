"""关节局部球坐标角

关节 k 处的局部坐标系：
    z: 指向父关节 (parent - joint)，直的肢体 θ = π
    x: 祖父骨骼 (parent - grandparent) 在 z 的正交补上的分量；
       不存在或退化时依次尝试兄弟骨骼、世界坐标轴
    y: z × x
出射骨骼 (child - joint) 的极角 θ ∈ [0, π]，方位角 φ ∈ (-π, π]。
"""
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..anatomy.topology import SkeletonTopology
from ..core.errors import NoParentBone, ZeroLengthBone
from ..core.types import Pose3D

BONE_EPS = 1e-6
# 候选 x 轴与 z 的夹角正弦小于该值视为退化
AXIS_SIN_EPS = 1e-3
WORLD_AXES = np.eye(3)


def _unit(vec: np.ndarray, what: str) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm < BONE_EPS:
        raise ZeroLengthBone(f"{what} 长度 {norm:.3e} mm 小于 {BONE_EPS}")
    return vec / norm


def _child_of(topology: SkeletonTopology, joint: int) -> int:
    parent = topology.parents[joint]
    children = topology.children(joint)
    if parent < 0 or not children:
        raise NoParentBone(f"关节 {topology.joints[joint]} 缺少父骨骼或子骨骼")
    return children[0]


def _x_candidates(points: np.ndarray, topology: SkeletonTopology, joint: int) -> List[np.ndarray]:
    parent = topology.parents[joint]
    grandparent = topology.parents[parent]
    candidates = []
    if grandparent >= 0:
        candidates.append(points[parent] - points[grandparent])
    candidates.extend(points[s] - points[parent] for s in topology.children(parent) if s != joint)
    candidates.extend(WORLD_AXES)
    return candidates


def local_frame(points: np.ndarray, topology: SkeletonTopology, joint: int) -> np.ndarray:
    """返回行为 (x, y, z) 的 3x3 正交矩阵"""
    points = np.asarray(points, dtype=float).reshape(topology.num_joints, 3)
    _child_of(topology, joint)
    z = _unit(points[topology.parents[joint]] - points[joint], f"关节 {topology.joints[joint]} 的入射骨骼")
    for candidate in _x_candidates(points, topology, joint):
        norm = np.linalg.norm(candidate)
        if norm < BONE_EPS:
            continue
        ortho = candidate / norm - (candidate / norm).dot(z) * z
        if np.linalg.norm(ortho) > AXIS_SIN_EPS:
            x = ortho / np.linalg.norm(ortho)
            return np.stack([x, np.cross(z, x), z])
    # 三个世界坐标轴不可能同时与 z 平行
    raise ZeroLengthBone("无法构造局部坐标系")


def local_spherical_angles(pose: Pose3D, topology: SkeletonTopology, joint: int) -> Tuple[float, float]:
    """出射骨骼在关节局部坐标系中的 (θ, φ)"""
    points = pose.points
    child = _child_of(topology, joint)
    frame = local_frame(points, topology, joint)
    d = frame @ _unit(points[child] - points[joint], f"关节 {topology.joints[joint]} 的出射骨骼")
    theta = float(np.arccos(np.clip(d[2], -1.0, 1.0)))
    phi = float(np.arctan2(d[1], d[0]))
    if phi <= -np.pi:
        phi = np.pi
    return theta, phi


def angle_features(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """x_k = [sinθ, sinφ, cosφ]，消除 φ 在 ±π 处的不连续"""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack([np.sin(theta), np.sin(phi), np.cos(phi)], axis=-1)


def selected_angles(poses: Sequence[Pose3D], topology: SkeletonTopology) -> Dict[str, np.ndarray]:
    """所有选定关节的角度，返回 {关节名: (n, 2) [θ, φ]}"""
    out = {}
    for name, joint in zip(topology.selected_angle_joints, topology.selected_indices):
        out[name] = np.array([local_spherical_angles(p, topology, joint) for p in poses]).reshape(-1, 2)
    return out
