"""消融扫描：在同一合成场景上改变一个因素，逐点运行流程

因素与取值写法：
    dim       "25" (只改 hop 0) 或 "0=25,1=20,2=15"
    lambda    "4000" (所有 hop) 或 "0=8000,1=0"
    hops      "0"、"0+1"、"0+1+2"
    views     视角数 n (取前 n 个相机)，n ≥ 2
    matching  "dot/all"、"fcl/most-conf" 等，打开 MVF 精化
"""
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import logging

from ..anatomy.pca import AnatomyPrior, build_prior
from ..anatomy.topology import SkeletonTopology
from ..core.errors import ValidationError
from ..core.types import MultiViewObservation, Pose3D
from ..plausibility.model import PlausibilityModel
from .pipeline import PipelineConfig, PipelineReport, run_pipeline
from .scene import SyntheticScene

logger = logging.getLogger(__name__)

SWEEP_KINDS = ("dim", "lambda", "hops", "views", "matching")


@dataclass
class SweepResult:
    kind: str
    setting: str
    report: PipelineReport

    def metrics(self) -> Dict[str, float]:
        out = dict(self.report.metrics.summary())
        if self.report.ppp is not None:
            out.update({f"PPP@{R:g}": v for R, v in self.report.ppp.fractions.items()})
        return out


def parse_assignments(value: str, cast: Callable = float) -> Dict[Optional[int], float]:
    """"25" → {None: 25}；"0=25,1=20" → {0: 25, 1: 20}"""
    try:
        if "=" not in value:
            return {None: cast(value)}
        out = {}
        for item in value.split(","):
            hop, _, number = item.partition("=")
            out[int(hop)] = cast(number)
        return out
    except ValueError:
        raise ValidationError(f"无法解析扫描取值: {value}")


def first_views(scene: SyntheticScene, observations: Sequence[MultiViewObservation],
                n: int) -> Tuple[SyntheticScene, List[MultiViewObservation]]:
    """只保留前 n 个相机的场景与观测"""
    if not 2 <= n <= len(scene.cameras):
        raise ValidationError(f"视角数必须在 [2, {len(scene.cameras)}] 内: {n}")
    sub = SyntheticScene(scene.cameras[:n], scene.poses, scene.true_2d[:, :n], scene.seed,
                         scene.render, scene.descriptors)
    obs = [MultiViewObservation(list(o.view_ids[:n]), o.points[:n], o.confidence[:n], o.frame)
           for o in observations]
    return sub, obs


def run_sweep(kind: str, values: Sequence[str], scene: SyntheticScene,
              observations: Sequence[MultiViewObservation], topology: SkeletonTopology,
              train_poses: Sequence[Pose3D], dims: Dict[int, int], lambdas: Dict[int, float],
              config: PipelineConfig, plausibility: Optional[PlausibilityModel] = None,
              vertical: str = "z") -> List[SweepResult]:
    """对每个取值运行一次 run_pipeline；先验只在 dim 扫描时重新拟合"""
    if kind not in SWEEP_KINDS:
        raise ValidationError(f"未知扫描因素: {kind}，可选 {SWEEP_KINDS}")
    if not values:
        raise ValidationError("扫描取值为空")

    base: Optional[AnatomyPrior] = None
    if kind != "dim":
        base = build_prior(train_poses, topology, dims, lambdas, vertical=vertical)

    results = []
    for value in values:
        scene_v, obs_v, config_v, prior = scene, list(observations), config, base
        if kind == "dim":
            table = parse_assignments(value, int)
            new_dims = {**dims, **{(0 if h is None else h): D for h, D in table.items()}}
            prior = build_prior(train_poses, topology, new_dims, lambdas, vertical=vertical)
        elif kind == "lambda":
            table = parse_assignments(value)
            if None in table:
                table = {h: table[None] for h in base.hops}
            prior = base.with_lambdas(table)
        elif kind == "hops":
            try:
                hops = sorted({int(h) for h in value.split("+")})
            except ValueError:
                raise ValidationError(f"hop 组合格式应为 0+1+2: {value}")
            missing = [h for h in hops if h not in base.entries]
            if missing:
                raise ValidationError(f"hop {missing} 不在先验中 {base.hops}")
            prior = AnatomyPrior(topology, {h: base.entries[h] for h in hops})
        elif kind == "views":
            try:
                n = int(value)
            except ValueError:
                raise ValidationError(f"视角数必须是整数: {value}")
            scene_v, obs_v = first_views(scene, observations, n)
        else:
            strategy, sep, fusion = value.partition("/")
            if not sep:
                raise ValidationError(f"匹配设置格式应为 STRATEGY/FUSION: {value}")
            config_v = replace(config, use_mvf=True, fusion=replace(config.fusion, strategy=strategy, fusion=fusion))

        report = run_pipeline(scene_v, obs_v, config_v, topology, prior, plausibility)
        logger.info(f"扫描 {kind}={value}: MPJPE {report.metrics.mpjpe:.3f} mm")
        results.append(SweepResult(kind, value, report))
    return results
