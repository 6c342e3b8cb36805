"""Iterative refinement: aggregate per-column adjustments, apply scaled steps.

Per iteration the dense adjustment field is grouped by wall (delta_b) and by
camera (each delta_t component).  Within a group the dominant sign wins a
majority vote among nonzero entries and the update is the mean of the entries
on that side; exact ties fall back to the mean of the whole group.  Updates
are applied with a fixed step multiplier while wall angles stay frozen.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .column_ba import AdjustmentField, BAConfig, compute_adjustment_field
from .renderer import BoundaryObservation, ColumnAssignment, ImageGeometry
from .scene import Scene, SceneError, validate_scene

log = logging.getLogger("planar_ba")

# guard band on normalized coordinates after an update
GUARD_BAND = 1.2
# walls shorter than this after an update are treated as collapsed
MIN_WALL_LENGTH = 1e-9


@dataclass(frozen=True)
class OptimizerConfig:
    iterations: int = 100
    step_scale: float = 2.5
    lm_damping: float = 0.1
    convergence_tol: float = 1e-6
    clamp_walls: bool = True
    clamp_cameras: bool = True
    mask_prob: float = 0.0
    mask_seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.step_scale <= 0:
            raise ValueError("step_scale must be positive")

    def ba_config(self) -> BAConfig:
        return BAConfig(lm_damping=self.lm_damping, mask_prob=self.mask_prob,
                        mask_seed=self.mask_seed)


@dataclass
class OptimizationTrace:
    """Per-iteration diagnostics; exported as CSV for the harness."""

    iterations: list[int] = field(default_factory=list)
    mean_abs_reproj_px: list[float] = field(default_factory=list)
    max_wall_update: list[float] = field(default_factory=list)
    max_cam_update: list[float] = field(default_factory=list)

    def append(self, it: int, mean_eps: float, max_wall: float, max_cam: float):
        self.iterations.append(it)
        self.mean_abs_reproj_px.append(mean_eps)
        self.max_wall_update.append(max_wall)
        self.max_cam_update.append(max_cam)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["iter", "mean_abs_reproj_px",
                             "max_wall_update", "max_cam_update"])
            for row in zip(self.iterations, self.mean_abs_reproj_px,
                           self.max_wall_update, self.max_cam_update):
                writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])


def _majority_mean(values: np.ndarray) -> float:
    """Dominant-sign mean; exact ties average the whole group."""
    if values.size == 0:
        return 0.0
    pos = values > 0
    neg = values < 0
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos > n_neg:
        return float(values[pos].mean())
    if n_neg > n_pos:
        return float(values[neg].mean())
    return float(values.mean())


def aggregate_adjustments(field: AdjustmentField, n_walls: int,
                          n_cameras: int) -> tuple[np.ndarray, np.ndarray]:
    """Reduce the field to one delta_b per wall and one delta_t per camera.

    Camera ids in the field index the returned array directly, so camera ids
    are expected to be 0..n_cameras-1.  Groups with no entries get 0.
    """
    wall_db = np.zeros(n_walls)
    cam_dt = np.zeros((n_cameras, 2))
    if len(field) == 0:
        return wall_db, cam_dt
    order = np.argsort(field.wall_ids, kind="stable")
    sorted_walls = field.wall_ids[order]
    bounds = np.searchsorted(sorted_walls, np.arange(n_walls + 1))
    for k in range(n_walls):
        lo, hi = bounds[k], bounds[k + 1]
        if lo < hi:
            wall_db[k] = _majority_mean(field.delta_b[order[lo:hi]])
    order = np.argsort(field.camera_ids, kind="stable")
    sorted_cams = field.camera_ids[order]
    bounds = np.searchsorted(sorted_cams, np.arange(n_cameras + 1))
    for i in range(n_cameras):
        lo, hi = bounds[i], bounds[i + 1]
        if lo < hi:
            grp = field.delta_t[order[lo:hi]]
            cam_dt[i, 0] = _majority_mean(grp[:, 0])
            cam_dt[i, 1] = _majority_mean(grp[:, 1])
    return wall_db, cam_dt


def apply_adjustments(scene: Scene, wall_db: np.ndarray, cam_dt: np.ndarray,
                      step_scale: float, clamp_walls: bool = True,
                      clamp_cameras: bool = True) -> Scene:
    """Move wall offsets along their normals and shift camera positions.

    Wall directions are untouched (fixed angles); vertices are recomputed
    from the updated lines.  Offsets are clamped so each wall line still
    meets the guard-band box, camera coordinates to the box itself.  A wall
    whose update would collapse it against its neighbours is skipped.
    """
    wall_db = np.asarray(wall_db, dtype=float)
    cam_dt = np.asarray(cam_dt, dtype=float)
    if wall_db.shape != (scene.n_walls,):
        raise SceneError("wall update array has the wrong length")
    if cam_dt.shape != (scene.n_cameras, 2):
        raise SceneError("camera update array has the wrong shape")
    if not np.any(wall_db) and not np.any(cam_dt):
        return scene

    new_offsets = scene.walls.offsets + step_scale * wall_db
    if clamp_walls:
        # |b| above this bound puts the whole line outside the guard box
        bound = GUARD_BAND * np.abs(scene.walls.normals).sum(axis=1)
        new_offsets = np.clip(new_offsets, -bound, bound)
    new_positions = scene.camera_positions() + step_scale * cam_dt
    if clamp_cameras:
        new_positions = np.clip(new_positions, -GUARD_BAND, GUARD_BAND)

    updated = scene.with_geometry(new_offsets, new_positions)
    collapsed = np.nonzero(updated.walls.lengths < MIN_WALL_LENGTH)[0]
    if collapsed.size:
        log.warning("skipping updates for %d collapsed wall(s): %s",
                    collapsed.size, collapsed.tolist())
        reverted = np.array(new_offsets)
        reverted[collapsed] = scene.walls.offsets[collapsed]
        updated = scene.with_geometry(reverted, new_positions)
        still = np.nonzero(updated.walls.lengths < MIN_WALL_LENGTH)[0]
        if still.size:
            log.warning("wall updates reverted entirely this iteration")
            updated = scene.with_geometry(scene.walls.offsets, new_positions)
    return updated


def optimize(scene0: Scene, boundaries: list[BoundaryObservation],
             assignments: list[ColumnAssignment],
             geom: ImageGeometry = ImageGeometry(),
             config: OptimizerConfig = OptimizerConfig()):
    """Refine wall offsets and camera positions from fixed boundary inputs.

    Runs compute -> aggregate -> apply for `iterations` rounds or until the
    largest applied update drops below `convergence_tol`.  Returns the
    refined scene and the per-iteration trace.
    """
    structural = validate_scene(scene0).structural()
    if structural:
        raise SceneError("invalid scene: " + "; ".join(structural))
    if len(boundaries) != len(assignments):
        raise SceneError("boundaries and assignments must pair up")
    if any(c.id != i for i, c in enumerate(scene0.cameras)):
        raise SceneError("camera ids must equal their scene index (0..n-1)")
    ba_cfg = config.ba_config()
    scene = scene0
    trace = OptimizationTrace()
    for it in range(config.iterations):
        fld = compute_adjustment_field(scene, boundaries, assignments, geom, ba_cfg)
        mean_eps = float(np.mean(np.abs(fld.residual_px))) if len(fld) else float("nan")
        wall_db, cam_dt = aggregate_adjustments(fld, scene.n_walls, scene.n_cameras)
        scene = apply_adjustments(scene, wall_db, cam_dt, config.step_scale,
                                  config.clamp_walls, config.clamp_cameras)
        max_wall = float(np.max(np.abs(wall_db), initial=0.0)) * config.step_scale
        max_cam = float(np.max(np.abs(cam_dt), initial=0.0)) * config.step_scale
        trace.append(it, mean_eps, max_wall, max_cam)
        if max(max_wall, max_cam) < config.convergence_tol:
            break
    return scene, trace
