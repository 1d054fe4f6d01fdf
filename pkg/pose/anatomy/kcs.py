"""KCS 映射：C_s 把关键点变成关节差向量，G_s 映射回关键点空间"""
from dataclasses import dataclass

import numpy as np

from ..core.errors import UnsupportedHop
from .topology import SUPPORTED_HOPS, SkeletonTopology


@dataclass(eq=False)
class KcsMap:
    hop: int
    C: np.ndarray
    G: np.ndarray

    @property
    def feature_dim(self) -> int:
        return self.C.shape[0]

    def features(self, Y: np.ndarray) -> np.ndarray:
        """V_s = C_s Y"""
        return self.C @ np.asarray(Y, dtype=float).reshape(-1)


def build_kcs(topology: SkeletonTopology, hop: int) -> np.ndarray:
    """C_s：每个 3 行带在 l 处为 +1、r 处为 -1；C_0 为单位阵"""
    if hop not in SUPPORTED_HOPS:
        raise UnsupportedHop(f"只支持 hop=0,1,2, 实际 {hop}")
    K = topology.num_joints
    if hop == 0:
        return np.eye(3 * K)
    pairs = topology.hop_pairs(hop)
    selector = np.zeros((len(pairs), K))
    for j, (l, r) in enumerate(pairs):
        selector[j, l] = 1.0
        selector[j, r] = -1.0
    return np.kron(selector, np.eye(3))


def backmap(C: np.ndarray) -> np.ndarray:
    """G_s = C_s 的 Moore-Penrose 伪逆"""
    return np.linalg.pinv(C)


def kcs_map(topology: SkeletonTopology, hop: int) -> KcsMap:
    C = build_kcs(topology, hop)
    return KcsMap(hop=hop, C=C, G=backmap(C))
