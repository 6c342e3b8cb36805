"""Planar bundle adjustment for 2D floor plans.

Jointly refines angle-fixed wall lines and camera xy positions from
per-column floor-boundary observations, with the simulation and evaluation
harness for synthetic-noise experiments.
"""

__version__ = "0.1.0"

from .column_ba import (
    AdjustmentField,
    BAConfig,
    ColumnAdjustment,
    column_jacobian,
    column_residual,
    compute_adjustment_field,
    lm_step,
    robust_filter,
)
from .conditioning import WallCameraStats, projected_stats
from .evaluation import (
    ErrorStats,
    RigidTransform,
    evaluate_floor,
    layout_errors,
    masked_l2_metric,
    pose_errors,
    ransac_align,
    reprojection_errors,
)
from .optimizer import (
    OptimizationTrace,
    OptimizerConfig,
    aggregate_adjustments,
    apply_adjustments,
    optimize,
)
from .regularizer import (
    ValidityMask,
    build_validity_mask,
    closure_residual,
    ldr_propagate,
)
from .renderer import (
    BoundaryObservation,
    ColumnAssignment,
    ImageGeometry,
    RenderError,
    cam2d_to_pixel_row,
    column_azimuth,
    global_to_cam2d,
    intersect_ray_wall,
    project_assigned_boundary,
    render_boundary,
)
from .scene import (
    CameraPose,
    NormTransform,
    RoomPolygon,
    Scene,
    SceneError,
    Wall,
    load_scene,
    normalize_scene,
    offsets_from_vertices,
    save_scene,
    validate_scene,
    vertices_from_offsets,
    wall_from_segment,
)
from .simulation import (
    FloorplanConfig,
    NoiseConfig,
    generate_floorplan,
    perturb_boundaries,
    perturb_scene,
    sample_cameras,
)

__all__ = [
    "AdjustmentField", "BAConfig", "BoundaryObservation", "CameraPose",
    "ColumnAdjustment", "ColumnAssignment", "ErrorStats", "FloorplanConfig",
    "ImageGeometry", "NoiseConfig", "NormTransform", "OptimizationTrace",
    "OptimizerConfig", "RenderError", "RigidTransform", "RoomPolygon",
    "Scene", "SceneError", "ValidityMask", "Wall", "WallCameraStats",
    "aggregate_adjustments", "apply_adjustments", "build_validity_mask",
    "cam2d_to_pixel_row", "closure_residual", "column_azimuth",
    "column_jacobian", "column_residual", "compute_adjustment_field",
    "evaluate_floor", "generate_floorplan", "global_to_cam2d",
    "intersect_ray_wall", "layout_errors", "ldr_propagate", "lm_step",
    "load_scene", "masked_l2_metric", "normalize_scene",
    "offsets_from_vertices", "optimize", "perturb_boundaries",
    "perturb_scene", "pose_errors", "project_assigned_boundary",
    "projected_stats", "ransac_align", "render_boundary",
    "reprojection_errors", "robust_filter", "sample_cameras", "save_scene",
    "validate_scene", "vertices_from_offsets", "wall_from_segment",
]
