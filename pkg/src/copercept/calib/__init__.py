"""Camera geometry, homography-based pose recovery and budgeted descriptor matching."""

from .geometry import (
    BehindCameraError,
    CameraModel,
    DegenerateCameraError,
    Extrinsics,
    Intrinsics,
    backproject_ground,
    look_at,
    mounted_camera,
    project,
    project_ground,
    visible_mask,
)
from .matching import BudgetError, QuantizationPlan, match_keypoints, plan_quantization, quantize
from .pipeline import (
    CalibrationInfeasibleError,
    CalibrationReport,
    Correspondence,
    MatchGate,
    build_correspondences,
    calibrate,
    correspondences_from_csv,
    correspondences_to_csv,
    select_reference,
)
from .solver import (
    RankDeficiencyError,
    estimate_homography,
    extrinsic_error,
    recover_extrinsics,
    reprojection_rms,
    rotation_error_deg,
    translation_error_m,
)

__all__ = [
    "BehindCameraError",
    "BudgetError",
    "CalibrationInfeasibleError",
    "CalibrationReport",
    "CameraModel",
    "Correspondence",
    "DegenerateCameraError",
    "Extrinsics",
    "Intrinsics",
    "MatchGate",
    "QuantizationPlan",
    "RankDeficiencyError",
    "backproject_ground",
    "build_correspondences",
    "calibrate",
    "correspondences_from_csv",
    "correspondences_to_csv",
    "estimate_homography",
    "extrinsic_error",
    "look_at",
    "match_keypoints",
    "mounted_camera",
    "plan_quantization",
    "project",
    "project_ground",
    "quantize",
    "recover_extrinsics",
    "reprojection_rms",
    "rotation_error_deg",
    "select_reference",
    "translation_error_m",
    "visible_mask",
]
