"""Column-wise single-step Levenberg-Marquardt adjustments.

For each assigned image column the signed reprojection residual
``eps = projected_row - observed_row`` is linearized in the three free
parameters (wall offset b, camera x, camera y):

    d        = (b - n.T) / (n.r)          plan distance along the ray
    drow/dd  = -(H/pi) * z / (d^2 + z^2)
    deps/db  = drow/dd / (n.r)
    deps/dT  = -drow/dd * n / (n.r)

A single damped step solves ``(J^T J + lambda * diag(J^T J)) delta = -J^T eps``
restricted to components with a non-negligible gradient.  Per-group adaptive
soft clamping then bounds the influence of outlier columns before the
optimizer aggregates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .renderer import (
    GRAZING_TOL,
    BoundaryObservation,
    ColumnAssignment,
    ImageGeometry,
    project_columns,
    ray_directions,
    rows_to_distances,
)
from .scene import CameraPose, Scene, SceneError, Wall

# components with |J_i| below this are excluded from the damped solve
ZERO_GRAD_TOL = 1e-12
# adaptive soft-clamp constants: scale = max(HUBER_K * MAD, HUBER_MIN_SCALE)
HUBER_K = 1.345
HUBER_MIN_SCALE = 1e-6


@dataclass(frozen=True)
class BAConfig:
    """Knobs for the per-column adjustment computation."""

    lm_damping: float = 0.1
    mask_prob: float = 0.0     # per-column drop probability (0 disables)
    mask_seed: int = 0


@dataclass(frozen=True)
class ColumnAdjustment:
    """Single-column result: wall offset and camera translation deltas."""

    camera_id: int
    wall_id: int
    column: int
    delta_b: float
    delta_t: np.ndarray
    valid: bool = True


@dataclass(frozen=True)
class AdjustmentField:
    """Sparse per-(camera, column) adjustments plus boundary-derived channels.

    One entry per assigned valid column.  ``residual_px`` keeps the signed
    reprojection residual and ``hit_displacement`` the world-frame vector from
    the projected wall hit to the boundary-implied hit, which together with
    ``delta_b``/``delta_t`` fill the three 2-vector feature channels.
    """

    camera_ids: np.ndarray     # (M,)
    wall_ids: np.ndarray       # (M,)
    columns: np.ndarray        # (M,)
    delta_b: np.ndarray        # (M,)
    delta_t: np.ndarray        # (M, 2)
    residual_px: np.ndarray    # (M,)
    hit_displacement: np.ndarray  # (M, 2)

    def __post_init__(self):
        for name in ("camera_ids", "wall_ids", "columns"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for name in ("delta_b", "delta_t", "residual_px", "hit_displacement"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return len(self.columns)

    @staticmethod
    def empty() -> "AdjustmentField":
        return AdjustmentField(np.zeros(0, dtype=int), np.zeros(0, dtype=int),
                               np.zeros(0, dtype=int), np.zeros(0),
                               np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)))


# ---------------------------------------------------------------------------
# Single-column operations
# ---------------------------------------------------------------------------

def _column_projection(wall: Wall, camera: CameraPose, c: int, geom: ImageGeometry):
    """Row, distance and n.r for one column, or None when ill-posed."""
    a = camera.rotation + (2.0 * np.pi * (c + 0.5) / geom.width - np.pi)
    ray = np.array([np.sin(a), np.cos(a)])
    ndotr = float(wall.normal @ ray)
    if abs(ndotr) < GRAZING_TOL:
        return None
    d = (wall.offset - float(wall.normal @ camera.position)) / ndotr
    if d <= 1e-9:
        return None
    row = geom.height * (0.5 + np.arctan2(camera.height, d) / np.pi)
    return row, d, ndotr, ray


def column_residual(wall: Wall, camera: CameraPose, observed_row: float,
                    c: int, geom: ImageGeometry) -> float | None:
    """Signed residual projected - observed in pixel rows; None if no hit."""
    proj = _column_projection(wall, camera, c, geom)
    if proj is None:
        return None
    return float(proj[0] - observed_row)


def column_jacobian(wall: Wall, camera: CameraPose, c: int,
                    geom: ImageGeometry) -> np.ndarray | None:
    """[d eps/d b, d eps/d Tx, d eps/d Ty] for one column; None if ill-posed."""
    proj = _column_projection(wall, camera, c, geom)
    if proj is None:
        return None
    _, d, ndotr, _ = proj
    z = camera.height
    drow_dd = -(geom.height / np.pi) * z / (d * d + z * z)
    jb = drow_dd / ndotr
    jt = -drow_dd * wall.normal / ndotr
    return np.array([jb, jt[0], jt[1]])


def lm_step(eps: float, jac: np.ndarray, damping: float):
    """One damped step on the reduced system; zero-gradient components stay 0.

    Solves (J^T J + damping * diag(J^T J)) delta = -J^T eps over the
    components with |J_i| >= 1e-12.  Returns (delta_b, delta_t).
    """
    if damping <= 0:
        raise ValueError(f"damping must be positive, got {damping}")
    jac = np.asarray(jac, dtype=float)
    delta = np.zeros(3)
    active = np.abs(jac) >= ZERO_GRAD_TOL
    if np.any(active) and eps != 0.0:
        g = jac[active]
        a = np.outer(g, g)
        a[np.diag_indices_from(a)] *= 1.0 + damping
        delta[active] = np.linalg.solve(a, -g * eps)
    return float(delta[0]), delta[1:]


def robust_filter(values: np.ndarray) -> np.ndarray:
    """Adaptive soft clamp over one group of adjustments.

    scale = max(1.345 * MAD, 1e-6); values inside the scale pass through,
    larger magnitudes are compressed to sqrt(scale * (2|x| - scale)).  Odd,
    monotone, and never increases a magnitude.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return x.copy()
    med = np.median(x)
    mad = np.median(np.abs(x - med))
    scale = max(HUBER_K * mad, HUBER_MIN_SCALE)
    mag = np.abs(x)
    clamped = np.sqrt(scale * np.maximum(2.0 * mag - scale, 0.0))
    return np.where(mag <= scale, x, np.sign(x) * clamped)


# ---------------------------------------------------------------------------
# Dense per-column field
# ---------------------------------------------------------------------------

def _mask_keep(config: BAConfig, camera_id: int, width: int) -> np.ndarray:
    if config.mask_prob <= 0.0:
        return np.ones(width, dtype=bool)
    rng = np.random.default_rng(np.random.SeedSequence([config.mask_seed, 0x6D61, camera_id]))
    return rng.random(width) >= config.mask_prob


def compute_adjustment_field(scene: Scene,
                             boundaries: list[BoundaryObservation],
                             assignments: list[ColumnAssignment],
                             geom: ImageGeometry = ImageGeometry(),
                             config: BAConfig = BAConfig()) -> AdjustmentField:
    """Residual -> Jacobian -> damped step for every assigned valid column.

    The per-column deltas are then soft-clamped per wall group (delta_b) and
    per camera group (each delta_t component).  Ill-posed columns (grazing
    rays, behind-camera hits, masked-out columns) are dropped, never fatal.
    """
    if len(boundaries) != len(assignments):
        raise SceneError("boundaries and assignments must pair up")
    cam_by_id = {c.id: c for c in scene.cameras}
    lam = config.lm_damping
    out_cam, out_wall, out_col = [], [], []
    out_db, out_dt, out_eps, out_disp = [], [], [], []
    for boundary, assignment in zip(boundaries, assignments):
        if boundary.camera_id != assignment.camera_id:
            raise SceneError("boundary/assignment camera ids differ")
        camera = cam_by_id.get(boundary.camera_id)
        if camera is None:
            raise SceneError(f"camera {boundary.camera_id} not in scene")
        ids = assignment.wall_ids
        rows_hat, dist, ndotr, ok = project_columns(scene, camera, ids, geom)
        ok = ok & boundary.valid & _mask_keep(config, camera.id, geom.width)
        if not np.any(ok):
            continue
        cols = np.nonzero(ok)[0]
        d = dist[cols]
        nr = ndotr[cols]
        eps = rows_hat[cols] - boundary.rows[cols]
        normals = scene.walls.normals[ids[cols]]
        z = camera.height
        drow_dd = -(geom.height / np.pi) * z / (d * d + z * z)
        jac = np.empty((len(cols), 3))
        jac[:, 0] = drow_dd / nr
        jac[:, 1:] = -(drow_dd / nr)[:, None] * normals
        # closed-form damped solve (rank-1 J^T J with diagonal damping):
        # delta_i = -eps / (J_i * (lambda + n_active)) on active components
        active = np.abs(jac) >= ZERO_GRAD_TOL
        n_active = active.sum(axis=1)
        denom = jac * (lam + n_active)[:, None]
        delta = np.where(active & (eps[:, None] != 0.0),
                         -eps[:, None] / np.where(active, denom, 1.0), 0.0)
        rays = ray_directions(camera, geom.width)[cols]
        d_obs = rows_to_distances(boundary.rows[cols], z, geom.height)
        disp = (d_obs - d)[:, None] * rays
        disp[~np.isfinite(d_obs)] = 0.0
        out_cam.append(np.full(len(cols), camera.id))
        out_wall.append(ids[cols])
        out_col.append(cols)
        out_db.append(delta[:, 0])
        out_dt.append(delta[:, 1:])
        out_eps.append(eps)
        out_disp.append(disp)
    if not out_cam:
        return AdjustmentField.empty()
    field = AdjustmentField(
        camera_ids=np.concatenate(out_cam),
        wall_ids=np.concatenate(out_wall),
        columns=np.concatenate(out_col),
        delta_b=np.concatenate(out_db),
        delta_t=np.vstack(out_dt),
        residual_px=np.concatenate(out_eps),
        hit_displacement=np.vstack(out_disp),
    )
    return _apply_group_filters(field)


def _apply_group_filters(field: AdjustmentField) -> AdjustmentField:
    """Soft-clamp delta_b per wall and each delta_t component per camera."""
    delta_b = np.array(field.delta_b)
    delta_t = np.array(field.delta_t)
    for wall_id in np.unique(field.wall_ids):
        grp = field.wall_ids == wall_id
        delta_b[grp] = robust_filter(delta_b[grp])
    for cam_id in np.unique(field.camera_ids):
        grp = field.camera_ids == cam_id
        delta_t[grp, 0] = robust_filter(delta_t[grp, 0])
        delta_t[grp, 1] = robust_filter(delta_t[grp, 1])
    return AdjustmentField(field.camera_ids, field.wall_ids, field.columns,
                           delta_b, delta_t, field.residual_px,
                           field.hit_displacement)


def dump_adjustment_field(field: AdjustmentField, path) -> None:
    """Debug CSV: camera_id,wall_id,column,delta_b,delta_tx,delta_ty."""
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["camera_id", "wall_id", "column",
                         "delta_b", "delta_tx", "delta_ty"])
        for i in range(len(field)):
            writer.writerow([int(field.camera_ids[i]), int(field.wall_ids[i]),
                             int(field.columns[i]), repr(float(field.delta_b[i])),
                             repr(float(field.delta_t[i, 0])),
                             repr(float(field.delta_t[i, 1]))])
