from .angles import angle_features, local_frame, local_spherical_angles, selected_angles
from .gmm import GaussianMixture, fit_gmm, gmm_density
from .metrics import (
    FrameMetrics,
    MetricReport,
    bone_length_loss,
    detection_rate,
    eval_metrics,
    joint_errors,
    mpjpe,
    project_pose,
    reprojection_loss,
)
from .model import (
    JointAngleModel,
    OccupancyGrid,
    PlausibilityModel,
    PlausibilityResult,
    PppReport,
    border_penalty,
    build_occupancy,
    fit_joint_angle_model,
    fit_plausibility_model,
    joint_angle_penalty,
    pose_plausibility,
    ppp_metric,
    ppp_report,
)

__all__ = [
    "angle_features",
    "local_frame",
    "local_spherical_angles",
    "selected_angles",
    "GaussianMixture",
    "fit_gmm",
    "gmm_density",
    "FrameMetrics",
    "MetricReport",
    "bone_length_loss",
    "detection_rate",
    "eval_metrics",
    "joint_errors",
    "mpjpe",
    "project_pose",
    "reprojection_loss",
    "JointAngleModel",
    "OccupancyGrid",
    "PlausibilityModel",
    "PlausibilityResult",
    "PppReport",
    "border_penalty",
    "build_occupancy",
    "fit_joint_angle_model",
    "fit_plausibility_model",
    "joint_angle_penalty",
    "pose_plausibility",
    "ppp_metric",
    "ppp_report",
]
