"""htpose：多视角 3D 人体姿态的整体三角化"""
from .core import (
    FeatureMap,
    FrameExecutor,
    Heatmap,
    HolisticSystem,
    ImagePoint,
    MultiViewObservation,
    Pose3D,
    SolverReport,
)
from .geometry import CameraParams, camera_center, epipolar_field, epipolar_mask, project, triangulation_rows
from .triangulation import (
    algebraic_triangulate,
    assemble_holistic_system,
    holistic_triangulate,
    linear_triangulate,
    pelvis_root,
)

__version__ = "0.1.0"

__all__ = [
    "FeatureMap",
    "FrameExecutor",
    "Heatmap",
    "HolisticSystem",
    "ImagePoint",
    "MultiViewObservation",
    "Pose3D",
    "SolverReport",
    "CameraParams",
    "camera_center",
    "epipolar_field",
    "epipolar_mask",
    "project",
    "triangulation_rows",
    "algebraic_triangulate",
    "assemble_holistic_system",
    "holistic_triangulate",
    "linear_triangulate",
    "pelvis_root",
]
