"""Scan-to-model registration with semantic gravity priors, plus site tooling.

The core of the package is a trimmed, robust point-to-point ICP whose
rotation step can be steered toward a known gravity direction, weighted by
a per-object-family "how likely is this thing upright" bias resolved from
BIM labels. Around that sit synthetic scene generation, corner detection
for image-based checks, evaluation metrics, and a hand-arm vibration
exposure monitor that emits IFC-flavoured safety records.
"""

from .errors import (
    DegenerateGeometryError,
    EmptyMeshError,
    InfeasibleRegistrationError,
    InsufficientSceneError,
    PriorServiceError,
    SitealignError,
    StreamOrderError,
)
from .evaluation import (
    ComparisonReport,
    DistanceStats,
    ScenarioMetrics,
    build_report,
    directed_hausdorff,
    point_to_mesh_distances,
    point_to_mesh_stats,
    report_to_csv,
    report_to_text,
    symmetric_hausdorff,
)
from .features import (
    CameraIntrinsics,
    CornerParams,
    Roi,
    backproject,
    detect_corners,
    load_depth_pgm,
    load_pgm,
    save_pgm,
    shi_tomasi_scores,
    spatial_gradients,
)
from .geometry import (
    UP,
    RigidTransform,
    Rotation,
    compose,
    geodesic_angle,
    rotation_between,
    seeded_rng,
    tilt_angle,
    unit_vector,
)
from .hav import (
    EAV,
    HavMonitor,
    MonitorConfig,
    SafetyRecord,
    VibrationWindow,
    a8,
    export_records,
    ifc_guid,
    import_records,
    load_records,
    records_to_json,
    save_records,
    vibration_total,
)
from .mesh import OrientedSampleSet, TriangleMesh, sample_mesh_with_normals
from .meshio import (
    load_mesh,
    load_obj,
    load_ply,
    load_ply_points,
    save_obj,
    save_ply,
    save_ply_points,
)
from .priors import (
    PriorServiceConfig,
    SemanticPriorTable,
    build_detection_prompt,
    effective_gravity_weight,
    fallback_priors,
    fetch_priors,
    simplify_label,
)
from .registration import (
    GravityPrior,
    IcpParams,
    PairSet,
    RegistrationResult,
    apply_bias,
    converged,
    gravity_penalty,
    match_pairs,
    project_yaw,
    relax_if_few,
    robust_weights,
    run_registration,
    score_pose,
    solve_rigid,
    trim_pairs,
)
from .scenes import (
    GeneratedScene,
    PlacedObject,
    PrimitiveSpec,
    ScenarioSpec,
    generate_scenario,
    load_preset,
    make_primitive,
    perturb_pose,
    preset_names,
    render_partial_view,
)

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "ComparisonReport",
    "CornerParams",
    "DegenerateGeometryError",
    "DistanceStats",
    "EAV",
    "EmptyMeshError",
    "GeneratedScene",
    "GravityPrior",
    "HavMonitor",
    "IcpParams",
    "InfeasibleRegistrationError",
    "InsufficientSceneError",
    "MonitorConfig",
    "OrientedSampleSet",
    "PairSet",
    "PlacedObject",
    "PrimitiveSpec",
    "PriorServiceConfig",
    "PriorServiceError",
    "RegistrationResult",
    "RigidTransform",
    "Roi",
    "Rotation",
    "SafetyRecord",
    "ScenarioMetrics",
    "ScenarioSpec",
    "SemanticPriorTable",
    "SitealignError",
    "StreamOrderError",
    "TriangleMesh",
    "UP",
    "VibrationWindow",
    "a8",
    "apply_bias",
    "backproject",
    "build_detection_prompt",
    "build_report",
    "compose",
    "converged",
    "detect_corners",
    "directed_hausdorff",
    "effective_gravity_weight",
    "export_records",
    "fallback_priors",
    "fetch_priors",
    "generate_scenario",
    "geodesic_angle",
    "gravity_penalty",
    "ifc_guid",
    "import_records",
    "load_depth_pgm",
    "load_mesh",
    "load_obj",
    "load_pgm",
    "load_ply",
    "load_ply_points",
    "load_preset",
    "load_records",
    "make_primitive",
    "match_pairs",
    "perturb_pose",
    "point_to_mesh_distances",
    "point_to_mesh_stats",
    "preset_names",
    "project_yaw",
    "records_to_json",
    "relax_if_few",
    "render_partial_view",
    "report_to_csv",
    "report_to_text",
    "robust_weights",
    "rotation_between",
    "run_registration",
    "sample_mesh_with_normals",
    "save_obj",
    "save_pgm",
    "save_ply",
    "save_ply_points",
    "save_records",
    "score_pose",
    "seeded_rng",
    "shi_tomasi_scores",
    "simplify_label",
    "solve_rigid",
    "symmetric_hausdorff",
    "tilt_angle",
    "trim_pairs",
    "unit_vector",
    "vibration_total",
]
