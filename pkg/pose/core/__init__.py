from .types import (
    NUM_JOINTS,
    ImagePoint,
    Pose3D,
    MultiViewObservation,
    HolisticSystem,
    SolverReport,
    Heatmap,
    FeatureMap,
)
from .executor import FrameExecutor

__all__ = [
    'NUM_JOINTS',
    'ImagePoint',
    'Pose3D',
    'MultiViewObservation',
    'HolisticSystem',
    'SolverReport',
    'Heatmap',
    'FeatureMap',
    'FrameExecutor',
]
