"""Metrics: pose-graph alignment and pose/layout/reprojection error statistics.

Percentages are normalized-unit distances times 100 (a camera offset of
0.05 units reads as a 5% translation error).  Statistics use population
standard deviation and linearly interpolated quantiles.

Alignment is rigid (rotation + translation, no scale): scenes share the
normalization scale, and allowing scale would mask layout-size errors.
RANSAC consensus (2-point minimal samples) is refined by least squares over
the inliers and then polished with a bounded-influence reweighting whose
rejection cutoff adapts to the residual spread: with a tight consensus the
cutoff collapses to the inlier threshold (gross outliers get zero weight and
the fit reproduces the inlier least-squares exactly); in a noise-dominated
regime it degrades gracefully to a robust fit over all pairs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .renderer import BoundaryObservation, ColumnAssignment, ImageGeometry, project_columns
from .scene import Scene, SceneError

log = logging.getLogger("planar_ba")

PERCENT_PER_UNIT = 100.0
RANSAC_ITERATIONS = 1000
RANSAC_INLIER_THRESHOLD = 0.01  # 1% of the normalized extent
_POLISH_ROUNDS = 30
_REPROJ_WEIGHT = 100.0          # weight of the reprojection term in the combined score


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    median: float
    std: float
    p90: float
    count: int = 0
    unit: str = ""


def compute_stats(values: np.ndarray, unit: str = "") -> ErrorStats:
    """Mean/median/population-std/p90 with linear-interpolation quantiles."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return ErrorStats(math.nan, math.nan, math.nan, math.nan, 0, unit)
    return ErrorStats(mean=float(v.mean()),
                      median=float(np.percentile(v, 50)),
                      std=float(v.std()),
                      p90=float(np.percentile(v, 90)),
                      count=int(v.size), unit=unit)


@dataclass(frozen=True)
class RigidTransform:
    """2D rotation + translation; apply() maps predicted points to GT space."""

    rotation: np.ndarray   # (2, 2)
    translation: np.ndarray  # (2,)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    @property
    def angle(self) -> float:
        return float(np.arctan2(self.rotation[1, 0], self.rotation[0, 0]))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(2), np.zeros(2))


def _weighted_rigid_fit(pred: np.ndarray, gt: np.ndarray,
                        weights: np.ndarray | None = None) -> RigidTransform | None:
    """Weighted least-squares rigid registration (2D Kabsch, no scale)."""
    if weights is None:
        weights = np.ones(len(pred))
    total = weights.sum()
    if total <= 0:
        return None
    w = weights / total
    pm = w @ pred
    gm = w @ gt
    pc = pred - pm
    gc = gt - gm
    h = (w[:, None] * pc).T @ gc
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, d]) @ u.T
    return RigidTransform(rot, gm - rot @ pm)


def _two_point_fit(p0, p1, g0, g1) -> RigidTransform | None:
    vp = p1 - p0
    vg = g1 - g0
    if np.hypot(vp[0], vp[1]) < 1e-12:
        return None
    a = np.arctan2(vg[1], vg[0]) - np.arctan2(vp[1], vp[0])
    c, s = np.cos(a), np.sin(a)
    rot = np.array([[c, -s], [s, c]])
    return RigidTransform(rot, g0 - rot @ p0)


def ransac_align(pred_poses: np.ndarray, gt_poses: np.ndarray,
                 inlier_threshold: float = RANSAC_INLIER_THRESHOLD,
                 iterations: int = RANSAC_ITERATIONS,
                 seed: int = 0) -> RigidTransform:
    """Best-consensus rigid transform mapping predicted onto GT positions.

    Deterministic per seed.  Fewer than 2 poses returns identity with a
    warning.
    """
    pred = np.asarray(pred_poses, dtype=float).reshape(-1, 2)
    gt = np.asarray(gt_poses, dtype=float).reshape(-1, 2)
    if pred.shape != gt.shape:
        raise SceneError("pose sets must have matching sizes")
    n = len(pred)
    if n < 2:
        log.warning("ransac_align needs >= 2 pose pairs, returning identity")
        return RigidTransform.identity()
    rng = np.random.default_rng(seed)
    samples = rng.integers(0, n, size=(iterations, 2))
    best = RigidTransform.identity()
    best_count = -1
    for i, j in samples:
        if i == j:
            continue
        model = _two_point_fit(pred[i], pred[j], gt[i], gt[j])
        if model is None:
            continue
        res = np.linalg.norm(model.apply(pred) - gt, axis=1)
        count = int((res < inlier_threshold).sum())
        if count > best_count:
            best_count, best = count, model
    res = np.linalg.norm(best.apply(pred) - gt, axis=1)
    inliers = res < inlier_threshold
    if inliers.sum() >= 2:
        fit = _weighted_rigid_fit(pred[inliers], gt[inliers])
        if fit is not None:
            best = fit
    # bounded-influence polish with an adaptive rejection cutoff
    for _ in range(_POLISH_ROUNDS):
        res = np.linalg.norm(best.apply(pred) - gt, axis=1)
        med = float(np.median(res))
        mad = float(np.median(np.abs(res - med)))
        cutoff = max(inlier_threshold, med + 6.0 * mad)
        w = np.where(res <= cutoff,
                     np.minimum(1.0, inlier_threshold / np.maximum(res, 1e-12)),
                     0.0)
        fit = _weighted_rigid_fit(pred, gt, w)
        if fit is None:
            break
        if np.allclose(fit.rotation, best.rotation, atol=1e-15) and \
                np.allclose(fit.translation, best.translation, atol=1e-15):
            best = fit
            break
        best = fit
    return best


# ---------------------------------------------------------------------------
# Error metrics
# ---------------------------------------------------------------------------

def _wrap_angle(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class PoseErrors:
    translation_pct: ErrorStats
    translation_units: ErrorStats
    rotation_deg: ErrorStats
    per_camera_distance: np.ndarray
    per_camera_rotation: np.ndarray


def pose_errors(pred_scene: Scene, gt_scene: Scene,
                transform: RigidTransform) -> PoseErrors:
    """Per-camera position distance (aligned) and raw rotation difference.

    Rotations are compared without applying the alignment rotation: they are
    pinned to the world axes and never optimized, so they must read the same
    before and after refinement.
    """
    if pred_scene.n_cameras != gt_scene.n_cameras:
        raise SceneError("camera count mismatch between scenes")
    pred = pred_scene.camera_positions()
    gt = gt_scene.camera_positions()
    dist = np.linalg.norm(transform.apply(pred) - gt, axis=1)
    rot = np.abs(_wrap_angle(np.array([p.rotation - g.rotation for p, g
                                       in zip(pred_scene.cameras, gt_scene.cameras)])))
    return PoseErrors(
        translation_pct=compute_stats(dist * PERCENT_PER_UNIT, "%"),
        translation_units=compute_stats(dist, "units"),
        rotation_deg=compute_stats(np.degrees(rot), "deg"),
        per_camera_distance=dist,
        per_camera_rotation=rot,
    )


def visible_wall_mask(scene: Scene, assignments: list[ColumnAssignment]) -> np.ndarray:
    """Walls assigned to at least one column of any camera."""
    mask = np.zeros(scene.n_walls, dtype=bool)
    for assignment in assignments:
        ids = assignment.wall_ids
        mask[ids[ids >= 0]] = True
    return mask


@dataclass(frozen=True)
class LayoutErrors:
    offset_pct: ErrorStats
    offset_units: ErrorStats
    vertex_pct: ErrorStats
    per_wall_offset: np.ndarray
    per_vertex_distance: np.ndarray


def layout_errors(pred_scene: Scene, gt_scene: Scene, visible: np.ndarray,
                  transform: RigidTransform) -> LayoutErrors:
    """Per visible wall |b_pred - b_gt| after aligning the predicted scene.

    A rigid transform maps a wall line (n, b) to (R n, b + (R n) . t); the
    offsets are compared in the GT frame.  Vertex-distance stats over the
    same rooms are emitted as a secondary measure.
    """
    if pred_scene.n_walls != gt_scene.n_walls or \
            len(pred_scene.rooms) != len(gt_scene.rooms):
        raise SceneError("scene topology mismatch")
    visible = np.asarray(visible, dtype=bool)
    if visible.shape != (gt_scene.n_walls,):
        raise SceneError("visibility mask has the wrong length")
    rot_normals = pred_scene.walls.normals @ transform.rotation.T
    b_aligned = pred_scene.walls.offsets + rot_normals @ transform.translation
    diff = np.abs(b_aligned - gt_scene.walls.offsets)[visible]
    pred_pts = transform.apply(np.vstack([r.vertices for r in pred_scene.rooms]))
    gt_pts = np.vstack([r.vertices for r in gt_scene.rooms])
    vert = np.linalg.norm(pred_pts - gt_pts, axis=1)
    return LayoutErrors(
        offset_pct=compute_stats(diff * PERCENT_PER_UNIT, "%"),
        offset_units=compute_stats(diff, "units"),
        vertex_pct=compute_stats(vert * PERCENT_PER_UNIT, "%"),
        per_wall_offset=diff,
        per_vertex_distance=vert,
    )


def reprojection_errors(scene: Scene, boundaries: list[BoundaryObservation],
                        assignments: list[ColumnAssignment],
                        geom: ImageGeometry = ImageGeometry()):
    """|projected - observed| per assigned valid column, in pixel rows.

    Returns (stats, per_column_errors) pooled across all cameras.
    """
    cam_by_id = {c.id: c for c in scene.cameras}
    errs = []
    for boundary, assignment in zip(boundaries, assignments):
        camera = cam_by_id.get(boundary.camera_id)
        if camera is None:
            raise SceneError(f"camera {boundary.camera_id} not in scene")
        rows, _, _, ok = project_columns(scene, camera, assignment.wall_ids, geom)
        ok = ok & boundary.valid
        errs.append(np.abs(rows[ok] - boundary.rows[ok]))
    pooled = np.concatenate(errs) if errs else np.zeros(0)
    return compute_stats(pooled, "px"), pooled


def masked_l2_metric(pred_scene: Scene, gt_scene: Scene,
                     masks: list[np.ndarray]) -> float:
    """L2 norm over camera positions plus the free vertex coordinates only.

    `masks` holds one (K, 2) boolean array per room marking the free
    coordinate of each vertex; constrained coordinates do not contribute.
    """
    if len(masks) != len(gt_scene.rooms) or \
            pred_scene.n_cameras != gt_scene.n_cameras:
        raise SceneError("scene/mask topology mismatch")
    sq = 0.0
    for room_p, room_g, mask in zip(pred_scene.rooms, gt_scene.rooms, masks):
        flags = np.asarray(mask, dtype=bool)
        if flags.shape != room_g.vertices.shape:
            raise SceneError("mask shape must match room vertices")
        d = (room_p.vertices - room_g.vertices)[flags]
        sq += float(np.sum(d * d))
    dc = pred_scene.camera_positions() - gt_scene.camera_positions()
    sq += float(np.sum(dc * dc))
    return math.sqrt(sq)


def combined_objective_score(pred_scene: Scene, gt_scene: Scene,
                             masks: list[np.ndarray],
                             boundaries: list[BoundaryObservation],
                             assignments: list[ColumnAssignment],
                             geom: ImageGeometry = ImageGeometry()) -> float:
    """masked_l2 + 100 * (mean reprojection error / image height)."""
    stats, pooled = reprojection_errors(pred_scene, boundaries, assignments, geom)
    reproj = float(np.mean(pooled)) / geom.height if pooled.size else 0.0
    return masked_l2_metric(pred_scene, gt_scene, masks) + _REPROJ_WEIGHT * reproj


# ---------------------------------------------------------------------------
# Floor-level evaluation bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FloorEvaluation:
    transform: RigidTransform
    pose: PoseErrors
    layout: LayoutErrors
    reprojection: ErrorStats
    reprojection_per_column: np.ndarray


def evaluate_floor(pred_scene: Scene, gt_scene: Scene,
                   boundaries: list[BoundaryObservation],
                   assignments: list[ColumnAssignment],
                   geom: ImageGeometry = ImageGeometry(),
                   seed: int = 0) -> FloorEvaluation:
    """Align poses, then compute pose/layout/reprojection errors for a floor."""
    transform = ransac_align(pred_scene.camera_positions(),
                             gt_scene.camera_positions(), seed=seed)
    pose = pose_errors(pred_scene, gt_scene, transform)
    visible = visible_wall_mask(gt_scene, assignments)
    layout = layout_errors(pred_scene, gt_scene, visible, transform)
    reproj_stats, per_col = reprojection_errors(pred_scene, boundaries,
                                                assignments, geom)
    return FloorEvaluation(transform=transform, pose=pose, layout=layout,
                           reprojection=reproj_stats,
                           reprojection_per_column=per_col)
