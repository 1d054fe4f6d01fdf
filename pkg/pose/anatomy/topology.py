"""骨架拓扑：父子关系、骨骼列表与各 hop 的关节对"""
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union
import json
import logging

import numpy as np

from ..core.errors import UnsupportedHop, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_TOPOLOGY = Path(__file__).resolve().parents[2] / "configs" / "topology_h36m.json"
SUPPORTED_HOPS = (0, 1, 2)


@dataclass
class SkeletonTopology:
    """骨架拓扑

    parents[k] 为关节 k 的父节点，根节点为 -1。
    """
    joints: List[str]
    parents: List[int]
    selected_angle_joints: List[str] = field(default_factory=list)
    head_pair: Tuple[str, str] = ("neck", "head")
    hip_pair: Tuple[str, str] = ("l_hip", "r_hip")

    def __post_init__(self):
        if len(self.joints) != len(self.parents):
            raise ValidationError(f"关节数 {len(self.joints)} 与父节点数 {len(self.parents)} 不一致")
        roots = [k for k, p in enumerate(self.parents) if p < 0]
        if len(roots) != 1:
            raise ValidationError(f"骨架必须恰好有一个根节点, 实际 {roots}")
        self._distance = self._tree_distances()
        if np.any(self._distance < 0):
            raise ValidationError("父子关系不是一棵连通的树")

    # ---- 基本属性 ----

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    @property
    def root_index(self) -> int:
        return self.parents.index(-1)

    @property
    def bones(self) -> List[Tuple[int, int]]:
        """J = K-1 根骨骼，(child, parent)，按 child 下标排序"""
        return [(k, p) for k, p in enumerate(self.parents) if p >= 0]

    @property
    def num_bones(self) -> int:
        return len(self.bones)

    def index(self, name: str) -> int:
        try:
            return self.joints.index(name)
        except ValueError:
            raise ValidationError(f"拓扑中不存在关节: {name}")

    def children(self, joint: int) -> List[int]:
        return [k for k, p in enumerate(self.parents) if p == joint]

    @property
    def selected_indices(self) -> List[int]:
        return [self.index(name) for name in self.selected_angle_joints]

    @property
    def head_indices(self) -> Tuple[int, int]:
        return self.index(self.head_pair[0]), self.index(self.head_pair[1])

    @property
    def hip_indices(self) -> Tuple[int, int]:
        """(left, right)"""
        return self.index(self.hip_pair[0]), self.index(self.hip_pair[1])

    # ---- hop 关节对 ----

    def _tree_distances(self) -> np.ndarray:
        K = self.num_joints
        adjacency: Dict[int, List[int]] = {k: [] for k in range(K)}
        for child, parent in enumerate(self.parents):
            if parent >= 0:
                if not 0 <= parent < K:
                    raise ValidationError(f"关节 {child} 的父节点越界: {parent}")
                adjacency[child].append(parent)
                adjacency[parent].append(child)
        distance = -np.ones((K, K), dtype=int)
        for start in range(K):
            distance[start, start] = 0
            queue = deque([start])
            while queue:
                node = queue.popleft()
                for nxt in adjacency[node]:
                    if distance[start, nxt] < 0:
                        distance[start, nxt] = distance[start, node] + 1
                        queue.append(nxt)
        return distance

    def tree_distance(self, a: int, b: int) -> int:
        return int(self._distance[a, b])

    def hop_pairs(self, hop: int) -> List[Tuple[int, int]]:
        """hop s 的 (l, r) 关节对，V_s 的每一段为 y_l - y_r"""
        if hop not in SUPPORTED_HOPS:
            raise UnsupportedHop(f"只支持 hop=0,1,2, 实际 {hop}")
        if hop == 0:
            return [(k, k) for k in range(self.num_joints)]
        if hop == 1:
            return self.bones
        K = self.num_joints
        return [(l, r) for l in range(K) for r in range(l) if self._distance[l, r] == 2]

    # ---- 几何量 ----

    def bone_vectors(self, points: np.ndarray) -> np.ndarray:
        """(J,3) 骨骼向量 child - parent"""
        points = np.asarray(points, dtype=float).reshape(self.num_joints, 3)
        bones = np.array(self.bones)
        return points[bones[:, 0]] - points[bones[:, 1]]

    def bone_lengths(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.bone_vectors(points), axis=1)

    # ---- 读写 ----

    def to_dict(self) -> dict:
        return {
            "joints": list(self.joints),
            "parents": list(self.parents),
            "selected_angle_joints": list(self.selected_angle_joints),
            "head_pair": list(self.head_pair),
            "hip_pair": list(self.hip_pair),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SkeletonTopology":
        return cls(
            joints=list(data["joints"]),
            parents=[int(p) for p in data["parents"]],
            selected_angle_joints=list(data.get("selected_angle_joints", [])),
            head_pair=tuple(data.get("head_pair", ("neck", "head"))),
            hip_pair=tuple(data.get("hip_pair", ("l_hip", "r_hip"))),
        )


def load_topology(path: Optional[Union[str, Path]] = None) -> SkeletonTopology:
    """读取拓扑文件，默认使用 Human3.6M 17 关节"""
    path = Path(path) if path else DEFAULT_TOPOLOGY
    with open(path, "r", encoding="utf-8") as f:
        topology = SkeletonTopology.from_dict(json.load(f))
    logger.debug(f"加载拓扑 {path}: {topology.num_joints} 个关节")
    return topology
