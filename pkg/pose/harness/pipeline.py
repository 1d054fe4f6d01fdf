"""端到端流程：可选 MVF 精化 → 骨盆 LT → AT/HT → 指标"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import time

import numpy as np

from share.util import dump_json

from ..anatomy.pca import AnatomyPrior, orientation_normalize
from ..anatomy.topology import SkeletonTopology
from ..core.errors import DegenerateHips, ValidationError
from ..core.executor import FrameExecutor
from ..core.types import MultiViewObservation, Pose3D, SolverReport
from ..mvf import FusionConfig, refine_observation
from ..plausibility.metrics import MetricReport, eval_metrics
from ..plausibility.model import PlausibilityModel, PppReport, ppp_report
from ..triangulation import (
    CONDITION_LIMIT,
    Cameras,
    algebraic_triangulate,
    assemble_holistic_system,
    holistic_triangulate,
    linear_triangulate,
    pelvis_root,
)
from .io import observations_to_dict, poses_to_dict
from .scene import SyntheticScene

logger = logging.getLogger(__name__)

MODES = ("lt", "at", "ht")
DEFAULT_PPP_THRESHOLDS = (0.05, 0.1, 0.2, 0.3, 0.5)


@dataclass
class PipelineConfig:
    mode: str = "ht"
    use_mvf: bool = False
    fusion: FusionConfig = field(default_factory=FusionConfig)
    condition_limit: float = CONDITION_LIMIT
    align_prior: bool = True
    orientation_passes: int = 2
    vertical: str = "z"
    ppp_thresholds: Tuple[float, ...] = DEFAULT_PPP_THRESHOLDS
    betas: Tuple[float, float, float] = (0.1, 0.01, 0.01)
    threads: int = 1
    dump_dir: Optional[Path] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"未知三角化模式: {self.mode}")
        if self.orientation_passes < 0:
            raise ValidationError(f"orientation_passes 必须非负: {self.orientation_passes}")

    @property
    def label(self) -> str:
        return f"mvf-{self.mode}" if self.use_mvf else self.mode

    @classmethod
    def from_config(cls, solver: Dict, mvf: Dict, plausibility: Dict, anatomy: Dict,
                    **overrides) -> "PipelineConfig":
        values = {
            "fusion": FusionConfig.from_config(mvf),
            "condition_limit": float(solver.get("condition_limit", CONDITION_LIMIT)),
            "align_prior": bool(solver.get("align_prior", True)),
            "orientation_passes": int(solver.get("orientation_passes", 2)),
            "vertical": anatomy.get("vertical", "z"),
            "ppp_thresholds": tuple(float(r) for r in plausibility.get("ppp_thresholds", DEFAULT_PPP_THRESHOLDS)),
            "betas": (float(plausibility.get("beta_pj", 0.1)), float(plausibility.get("beta_bl", 0.01)),
                      float(plausibility.get("beta_ja", 0.01))),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class FrameResult:
    frame: int
    pose: Pose3D
    observation: MultiViewObservation
    report: Optional[SolverReport] = None
    initial: Optional[MultiViewObservation] = None


@dataclass
class PipelineReport:
    label: str
    metrics: MetricReport
    frames: List[FrameResult]
    ppp: Optional[PppReport] = None
    initial_metrics: Optional[MetricReport] = None

    @property
    def poses(self) -> List[Pose3D]:
        return [f.pose for f in self.frames]

    def summary(self) -> dict:
        out = {"mode": self.label, "frames": len(self.frames), "metrics": self.metrics.summary()}
        if self.ppp is not None:
            out["plausibility"] = self.ppp.to_dict()
        if self.initial_metrics is not None:
            out["initial_metrics"] = self.initial_metrics.summary()
        reports = [f.report for f in self.frames if f.report is not None]
        if reports:
            out["solver"] = {
                "max_condition_estimate": max(r.condition_estimate for r in reports),
                "fallbacks": sum(r.status != "cholesky" for r in reports),
            }
        return out


def _lt_pose(cameras: Cameras, obs: MultiViewObservation) -> Pose3D:
    points = []
    for k in range(obs.num_joints):
        views = [(vid, p) for vid, p in obs.joint(k) if p.confidence > 0]
        points.append(linear_triangulate(cameras, views))
    return Pose3D.from_points(np.array(points))


def _prior_active(prior: Optional[AnatomyPrior]) -> bool:
    return prior is not None and any(e.lam > 0 for e in prior.entries.values())


def _aligned_prior(prior: AnatomyPrior, estimate: Pose3D, vertical: str) -> AnatomyPrior:
    """按当前估计的朝向旋转先验；世界根相对坐标 = Rᵀ·归一化坐标"""
    try:
        _, R = orientation_normalize(estimate, prior.topology, vertical)
    except DegenerateHips as e:
        logger.warning(f"无法估计朝向, 使用未旋转的先验: {str(e)}")
        return prior
    return prior.rotated(R.T)


def triangulate_frame(cameras: Cameras, obs: MultiViewObservation, mode: str,
                      prior: Optional[AnatomyPrior] = None,
                      config: Optional[PipelineConfig] = None) -> Tuple[Pose3D, Optional[SolverReport]]:
    """单帧三角化

    ht 模式下先验为空或所有 λ 为 0 时直接走 AT 路径。
    """
    config = config or PipelineConfig(mode=mode)
    if mode == "lt":
        return _lt_pose(cameras, obs), None
    estimate = algebraic_triangulate(cameras, obs)
    if mode == "at" or not _prior_active(prior):
        return estimate, None

    system = assemble_holistic_system(cameras, obs)
    root = pelvis_root(cameras, obs, prior.topology.root_index)
    passes = max(1, config.orientation_passes) if config.align_prior else 1
    report = None
    for _ in range(passes):
        active = _aligned_prior(prior, estimate, config.vertical) if config.align_prior else prior
        estimate, report = holistic_triangulate(system, active, root, config.condition_limit)
    return estimate, report


def dump_stage(dump_dir: Optional[Path], name: str, data) -> None:
    if dump_dir is not None:
        dump_json(data, Path(dump_dir) / f"{name}.json")


def run_pipeline(scene: SyntheticScene, observations: Sequence[MultiViewObservation],
                 config: PipelineConfig, topology: SkeletonTopology,
                 prior: Optional[AnatomyPrior] = None,
                 plausibility: Optional[PlausibilityModel] = None) -> PipelineReport:
    """对整个场景运行流程并评估"""
    if len(observations) != scene.num_frames:
        raise ValidationError(f"观测帧数 {len(observations)} 与场景帧数 {scene.num_frames} 不一致")
    start = time.perf_counter()
    executor = FrameExecutor(config.threads)

    def process(obs: MultiViewObservation) -> FrameResult:
        initial = None
        if config.use_mvf:
            initial, obs = refine_observation(scene.cameras, scene.heatmaps(obs),
                                              scene.feature_maps(obs.frame), config.fusion, obs.frame)
        pose, report = triangulate_frame(scene.cameras, obs, config.mode, prior, config)
        return FrameResult(obs.frame, pose, obs, report, initial)

    frames = executor.map(process, list(observations))
    poses = [f.pose for f in frames]
    angle_model = plausibility.angle_model if plausibility is not None else None
    metrics = eval_metrics(poses, scene.poses, [f.observation for f in frames], scene.cameras,
                           topology, angle_model, config.betas)

    initial_metrics = None
    if config.use_mvf:
        initial_obs = [f.initial for f in frames]
        initial_poses = [triangulate_frame(scene.cameras, o, config.mode, prior, config)[0] for o in initial_obs]
        initial_metrics = eval_metrics(initial_poses, scene.poses, initial_obs, scene.cameras,
                                       topology, angle_model, config.betas)

    ppp = None
    if plausibility is not None:
        ppp = ppp_report(poses, plausibility, topology, config.ppp_thresholds)

    report = PipelineReport(config.label, metrics, frames, ppp, initial_metrics)
    if config.dump_dir is not None:
        if config.use_mvf:
            dump_stage(config.dump_dir, "mvf_initial", observations_to_dict([f.initial for f in frames]))
        dump_stage(config.dump_dir, f"{config.label}_observations", observations_to_dict([f.observation for f in frames]))
        dump_stage(config.dump_dir, f"{config.label}_poses",
                   poses_to_dict(poses, [f.report for f in frames], [f.frame for f in frames]))
    logger.info(f"{config.label}: {len(frames)} 帧, MPJPE {metrics.mpjpe:.3f} mm, "
                f"耗时 {time.perf_counter() - start:.2f}s")
    return report
