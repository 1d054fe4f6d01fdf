from .corruption import CorruptionSpec, corrupt_observations
from .pipeline import (
    FrameResult,
    PipelineConfig,
    PipelineReport,
    run_pipeline,
    triangulate_frame,
)
from .scene import (
    PoseSampler,
    RenderConfig,
    RigConfig,
    SyntheticScene,
    TRAIN_STREAM,
    build_scene,
    gen_poses,
    gen_rig,
)
from .sweep import SWEEP_KINDS, SweepResult, run_sweep

__all__ = [
    "CorruptionSpec",
    "corrupt_observations",
    "FrameResult",
    "PipelineConfig",
    "PipelineReport",
    "run_pipeline",
    "triangulate_frame",
    "PoseSampler",
    "RenderConfig",
    "RigConfig",
    "SyntheticScene",
    "TRAIN_STREAM",
    "build_scene",
    "gen_poses",
    "gen_rig",
    "SWEEP_KINDS",
    "SweepResult",
    "run_sweep",
]
