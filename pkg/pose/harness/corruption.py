"""2D 检测误差模拟：高斯噪声、离群点与遮挡"""
from dataclasses import dataclass
from typing import Dict, List
import logging

import numpy as np

from share.util import stream_rng

from ..core.errors import ValidationError
from ..core.types import MultiViewObservation
from .scene import SyntheticScene

logger = logging.getLogger(__name__)


@dataclass
class CorruptionSpec:
    sigma: float = 2.0
    outlier_rate: float = 0.1
    outlier_px: float = 25.0
    occlusion_rate: float = 0.15
    occlusion_px: float = 12.0
    occluded_confidence: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError(f"噪声标准差必须非负: {self.sigma}")
        for name in ("outlier_rate", "occlusion_rate", "occluded_confidence"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} 必须在 [0,1] 内: {value}")
        if self.outlier_px < 0 or self.occlusion_px < 0:
            raise ValidationError("位移幅度必须非负")

    @classmethod
    def from_config(cls, section: Dict, **overrides) -> "CorruptionSpec":
        values = {k: float(section[k]) for k in
                  ("sigma", "outlier_rate", "outlier_px", "occlusion_rate", "occlusion_px", "occluded_confidence")
                  if k in section}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def clean(cls, seed: int = 0) -> "CorruptionSpec":
        """无噪声、无离群点、无遮挡"""
        return cls(sigma=0.0, outlier_rate=0.0, occlusion_rate=0.0, seed=seed)


def _displacements(rng: np.random.Generator, shape, magnitude: float) -> np.ndarray:
    angle = rng.uniform(0.0, 2.0 * np.pi, shape)
    length = magnitude * rng.uniform(0.5, 1.5, shape)
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1) * length[..., None]


def corrupt_observations(scene: SyntheticScene, spec: CorruptionSpec) -> List[MultiViewObservation]:
    """对真值 2D 施加噪声

    所有随机量无论比例是否为 0 都会抽取，保证同一种子下各项互不影响。
    """
    rng = stream_rng(spec.seed, "corruption")
    T, C, K, _ = scene.true_2d.shape
    noise = rng.normal(0.0, spec.sigma, (T, C, K, 2))
    outlier = rng.random((T, C, K)) < spec.outlier_rate
    outlier_shift = _displacements(rng, (T, C, K), spec.outlier_px)
    occluded = rng.random((T, C, K)) < spec.occlusion_rate
    occlusion_shift = _displacements(rng, (T, C, K), spec.occlusion_px)

    points = scene.true_2d + noise
    points = np.where(outlier[..., None], points + outlier_shift, points)
    points = np.where(occluded[..., None], points + occlusion_shift, points)
    confidence = np.where(occluded, spec.occluded_confidence, 1.0)
    logger.debug(f"离群点 {outlier.mean():.3f}, 遮挡 {occluded.mean():.3f}")
    return [MultiViewObservation(scene.view_ids, points[t], confidence[t], t) for t in range(T)]
