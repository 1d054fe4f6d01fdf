"""推理阶段的多视角融合 (MVF)

网格约定：heatmap/feature 的下标 (u, v) 覆盖图像区域 [u,u+1)×[v,v+1)，
像素中心在 (u+0.5, v+0.5)。soft_argmax 与 sample_feature 使用下标坐标，
图像坐标 = 下标坐标 + 0.5。
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy import ndimage, special

from .core.errors import DimensionMismatch, EmptySources, NonFinite, OutOfBounds, ValidationError
from .core.types import FeatureMap, Heatmap, ImagePoint, MultiViewObservation
from .geometry import CameraParams, epipolar_mask, pixel_rays

logger = logging.getLogger(__name__)

PIXEL_CENTER = 0.5
STRATEGIES = ("dot", "fcl")
FUSIONS = ("all", "most-conf")


@dataclass
class FusionConfig:
    """MVF 配置

    aggregation 为 None 时使用均匀权重 1/(#sources+1)，
    否则第一个权重作用于初始热图，其余依次作用于各源视角。
    """
    strategy: str = "dot"
    fcl_weights: Optional[np.ndarray] = None
    gamma: float = 10.0
    aggregation: Optional[Sequence[float]] = None
    temperature: float = 1.0
    fusion: str = "all"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"未知匹配策略: {self.strategy}")
        if self.fusion not in FUSIONS:
            raise ValidationError(f"未知融合方式: {self.fusion}")
        if self.strategy == "fcl" and self.fcl_weights is None:
            raise ValidationError("fcl 策略需要权重向量 w")
        if self.fcl_weights is not None:
            self.fcl_weights = np.asarray(self.fcl_weights, dtype=float).reshape(-1)
        if self.aggregation is not None:
            weights = np.asarray(self.aggregation, dtype=float)
            if not np.isclose(weights.sum(), 1.0):
                raise ValidationError(f"聚合权重之和必须为 1: {weights.sum()}")
            self.aggregation = weights
        if self.gamma <= 0 or self.temperature <= 0:
            raise ValidationError("gamma 与 temperature 必须为正")

    @classmethod
    def from_config(cls, section: Dict, **overrides) -> "FusionConfig":
        values = {
            "strategy": section.get("strategy", "dot"),
            "gamma": float(section.get("gamma", 10.0)),
            "aggregation": section.get("aggregation"),
            "temperature": float(section.get("temperature", 1.0)),
            "fusion": section.get("fusion", "all"),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def to_grid(point: ImagePoint) -> Tuple[float, float]:
    """图像坐标 -> 网格下标坐标"""
    return point.u - PIXEL_CENTER, point.v - PIXEL_CENTER


def to_image(u: float, v: float, confidence: float = 1.0) -> ImagePoint:
    """网格下标坐标 -> 图像坐标"""
    return ImagePoint(u + PIXEL_CENTER, v + PIXEL_CENTER, confidence)


def soft_argmax(heatmap: Heatmap, temperature: float = 1.0) -> ImagePoint:
    """softmax 加权质心，返回网格下标坐标；置信度为 softmax 后的最大值"""
    grid = heatmap.grid
    if not np.all(np.isfinite(grid)):
        raise NonFinite("热图包含非有限值")
    weights = special.softmax(grid / temperature)
    H, W = grid.shape
    u = float(weights.sum(axis=0) @ np.arange(W))
    v = float(weights.sum(axis=1) @ np.arange(H))
    # 质心始终在网格范围内，裁剪只消除舍入误差
    u = min(max(u, 0.0), W - 1.0)
    v = min(max(v, 0.0), H - 1.0)
    return ImagePoint(u, v, float(min(weights.max(), 1.0)))


def sample_feature(feature_map: FeatureMap, point: Tuple[float, float]) -> np.ndarray:
    """双线性插值采样 F(p')，point 为网格下标坐标 (u, v)"""
    u, v = float(point[0]), float(point[1])
    H, W, _ = feature_map.grid.shape
    if not (0.0 <= u <= W - 1 and 0.0 <= v <= H - 1):
        raise OutOfBounds(f"采样点 ({u:.3f}, {v:.3f}) 超出 [0,{W - 1}]x[0,{H - 1}]")
    coords = np.array([[v], [u]])
    return np.array([
        ndimage.map_coordinates(feature_map.grid[:, :, n], coords, order=1)[0]
        for n in range(feature_map.channels)
    ])


def match_heatmap(feature_ref: FeatureMap, feat_vec: np.ndarray, config: FusionConfig) -> Heatmap:
    """参考视角所有像素与 F(p') 的匹配得分，不做归一化"""
    feat_vec = np.asarray(feat_vec, dtype=float).reshape(-1)
    N = feature_ref.channels
    if feat_vec.size != N:
        raise DimensionMismatch(f"特征通道数不一致: {feat_vec.size} vs {N}")
    if config.strategy == "dot":
        grid = feature_ref.grid @ feat_vec / N
    else:
        w = config.fcl_weights
        if w.size != 2 * N:
            raise DimensionMismatch(f"fcl 权重长度必须为 2N={2 * N}, 实际 {w.size}")
        grid = feature_ref.grid @ w[:N] + float(w[N:] @ feat_vec)
    return Heatmap(grid, view=feature_ref.view)


def pseudo_heatmap(match: Heatmap, mask: Heatmap) -> Heatmap:
    """伪热图 = 匹配热图 ⊙ 极线掩码"""
    if match.shape != mask.shape:
        raise DimensionMismatch(f"匹配热图 {match.shape} 与掩码 {mask.shape} 尺寸不一致")
    return Heatmap(match.grid * mask.grid, joint=match.joint, view=match.view)


def _select_sources(pseudos: List[Heatmap], confidences: Optional[Sequence[float]],
                    config: FusionConfig) -> Tuple[List[Heatmap], Optional[np.ndarray]]:
    """all 返回全部伪热图；most-conf 只保留置信度最高且为正的那个"""
    if not pseudos:
        raise EmptySources("没有源视角的伪热图")
    if config.fusion == "all":
        return pseudos, config.aggregation
    if confidences is None:
        confidences = [soft_argmax(p, config.temperature).confidence for p in pseudos]
    best = int(np.argmax(confidences))
    if not confidences[best] > 0:
        raise EmptySources(f"{len(pseudos)} 个源视角的置信度均为 0")
    weights = None
    if config.aggregation is not None:
        weights = np.asarray([config.aggregation[0], config.aggregation[1 + best]], dtype=float)
        weights = weights / weights.sum()
    return [pseudos[best]], weights


def fuse_and_refine(initial: Heatmap, pseudos: Sequence[Heatmap], config: FusionConfig,
                    source_confidences: Optional[Sequence[float]] = None) -> Tuple[Heatmap, ImagePoint]:
    """聚合初始热图与伪热图，再做 soft-argmax

    Args:
        source_confidences: most-conf 模式下每个源视角的置信度，缺省时取各伪热图的 soft-argmax 置信度
    Returns:
        (融合热图, 网格下标坐标下的精化关键点)
    """
    pseudos = list(pseudos)
    for p in pseudos:
        if p.shape != initial.shape:
            raise DimensionMismatch(f"伪热图 {p.shape} 与初始热图 {initial.shape} 尺寸不一致")
    try:
        sources, weights = _select_sources(pseudos, source_confidences, config)
    except EmptySources as e:
        logger.debug(f"视角 {initial.view} 关节 {initial.joint}: {str(e)}, 保留初始热图")
        return initial, soft_argmax(initial, config.temperature)
    if weights is None:
        weights = np.full(len(sources) + 1, 1.0 / (len(sources) + 1))
    elif len(weights) != len(sources) + 1:
        raise DimensionMismatch(f"聚合权重数 {len(weights)} 与来源数 {len(sources) + 1} 不一致")
    fused = weights[0] * initial.grid
    for w, p in zip(weights[1:], sources):
        fused = fused + w * p.grid
    fused_map = Heatmap(fused, joint=initial.joint, view=initial.view)
    return fused_map, soft_argmax(fused_map, config.temperature)


@dataclass
class SourceKeypoint:
    """源视角的关键点 p'（图像坐标）及其特征 F(p')"""
    camera: CameraParams
    point: ImagePoint
    feature: np.ndarray


def source_keypoint(camera: CameraParams, heatmap: Heatmap, feature_map: FeatureMap,
                    temperature: float = 1.0) -> SourceKeypoint:
    p_grid = soft_argmax(heatmap, temperature)
    feature = sample_feature(feature_map, (p_grid.u, p_grid.v))
    return SourceKeypoint(camera, to_image(p_grid.u, p_grid.v, p_grid.confidence), feature)


def refine_view_joint(cam_ref: CameraParams, initial: Heatmap, feature_ref: FeatureMap,
                      sources: Sequence[SourceKeypoint], config: FusionConfig,
                      rays: Optional[np.ndarray] = None) -> Tuple[ImagePoint, List[Heatmap]]:
    """单个 (参考视角, 关节) 的 MVF

    每个源视角的 F(p') 与参考视角特征匹配，再乘以 p' 的极线掩码。
    返回图像坐标下的精化点及伪热图。
    """
    pseudos = []
    for src in sources:
        match = match_heatmap(feature_ref, src.feature, config)
        match.joint = initial.joint
        mask = epipolar_mask(cam_ref, src.camera, src.point, initial.width, initial.height,
                             config.gamma, rays=rays)
        pseudos.append(pseudo_heatmap(match, mask))
    confidences = [src.point.confidence for src in sources]
    _, refined = fuse_and_refine(initial, pseudos, config, confidences)
    return to_image(refined.u, refined.v, refined.confidence), pseudos


def initial_observation(view_ids: Sequence[int], heatmaps: Sequence[Sequence[Heatmap]],
                        temperature: float = 1.0, frame: int = 0) -> MultiViewObservation:
    """每张热图 soft-argmax 得到的初始 2D 观测（图像坐标）"""
    points, confidence = [], []
    for view_maps in heatmaps:
        extracted = [soft_argmax(h, temperature) for h in view_maps]
        points.append([[p.u + PIXEL_CENTER, p.v + PIXEL_CENTER] for p in extracted])
        confidence.append([p.confidence for p in extracted])
    return MultiViewObservation(list(view_ids), np.array(points), np.array(confidence), frame)


def refine_observation(cameras: Sequence[CameraParams], heatmaps: Sequence[Sequence[Heatmap]],
                       feature_maps: Sequence[FeatureMap], config: FusionConfig,
                       frame: int = 0) -> Tuple[MultiViewObservation, MultiViewObservation]:
    """一帧所有 (视角, 关节) 的 MVF

    Args:
        cameras: 与 heatmaps 第一维对应的相机
        heatmaps: heatmaps[c][k]
        feature_maps: 每个视角一张特征图
    Returns:
        (初始观测, 精化观测)，置信度均为融合前/后热图的 soft-argmax 置信度
    """
    if not (len(cameras) == len(heatmaps) == len(feature_maps)):
        raise DimensionMismatch(
            f"相机 {len(cameras)}、热图 {len(heatmaps)}、特征图 {len(feature_maps)} 的视角数不一致")
    num_joints = len(heatmaps[0]) if heatmaps else 0
    if any(len(view_maps) != num_joints for view_maps in heatmaps):
        raise DimensionMismatch("各视角的热图数量不一致")
    view_ids = [cam.id for cam in cameras]
    initial = initial_observation(view_ids, heatmaps, config.temperature, frame)

    keypoints = [
        [source_keypoint(cam, heatmaps[c][k], feature_maps[c], config.temperature) for k in range(num_joints)]
        for c, cam in enumerate(cameras)
    ]
    points = initial.points.copy()
    confidence = initial.confidence.copy()
    for c, cam_ref in enumerate(cameras):
        height, width = heatmaps[c][0].shape
        rays = pixel_rays(cam_ref, width, height)
        for k in range(num_joints):
            sources = [keypoints[s][k] for s in range(len(cameras)) if s != c]
            refined, _ = refine_view_joint(cam_ref, heatmaps[c][k], feature_maps[c], sources, config, rays)
            points[c, k] = refined.uv
            confidence[c, k] = refined.confidence
    logger.debug(f"帧 {frame}: MVF 平均位移 {np.linalg.norm(points - initial.points, axis=-1).mean():.3f} px")
    return initial, initial.with_points(points, confidence)
