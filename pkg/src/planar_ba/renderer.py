"""1D equirectangular floor-boundary renderer.

Each panorama column c maps to an azimuth ``theta_c = 2*pi*(c + 0.5)/w - pi``;
the global ray direction for a camera with rotation R is
``(sin(R + theta_c), cos(R + theta_c))``, i.e. forward is +y at R = 0.
A wall point at plan distance d from the camera projects to pixel row
``H * (0.5 + atan(z / d) / pi)`` where z is the camera height, so valid floor
rows always lie in the open interval (H/2, H).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import CameraPose, Scene, SceneError, distance_to_boundary

# intersections closer than this along the ray count as behind the camera
MIN_RAY_DIST = 1e-9
# |normal . ray| below this is a grazing ray with no usable intersection
GRAZING_TOL = 1e-9
# tolerance on the segment parameter for visibility clipping
SEGMENT_TOL = 1e-9
# minimum camera clearance from any wall
CAMERA_WALL_CLEARANCE = 1e-6

SENTINEL = -1  # unassigned column


class RenderError(SceneError):
    """Raised when a camera cannot be rendered (outside rooms, on a wall)."""


@dataclass(frozen=True)
class ImageGeometry:
    """Equirectangular image size; height is always half the width."""

    width: int = 512
    height: int = 256

    def __post_init__(self):
        if self.width < 4 or self.width % 2:
            raise SceneError(f"width must be even and >= 4, got {self.width}")
        if self.height != self.width // 2:
            raise SceneError(f"height must be width/2, got {self.width}x{self.height}")


@dataclass(frozen=True)
class BoundaryObservation:
    """Per-column floor-boundary pixel rows; NaN rows where invalid."""

    camera_id: int
    rows: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        valid = np.asarray(self.valid, dtype=bool)
        if rows.shape != valid.shape:
            raise SceneError("rows/valid shape mismatch")
        rows = rows.copy()
        rows[~valid] = np.nan
        rows.setflags(write=False)
        valid = valid.copy()
        valid.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "valid", valid)


@dataclass(frozen=True)
class ColumnAssignment:
    """Per-column global wall ids; -1 marks an unassigned column."""

    camera_id: int
    wall_ids: np.ndarray

    def __post_init__(self):
        ids = np.ascontiguousarray(self.wall_ids, dtype=np.int64)
        ids.setflags(write=False)
        object.__setattr__(self, "wall_ids", ids)


def column_azimuths(width: int) -> np.ndarray:
    """Azimuths of all column centers, strictly increasing across (-pi, pi)."""
    c = np.arange(width, dtype=float)
    return 2.0 * np.pi * (c + 0.5) / width - np.pi


def column_azimuth(c: int, width: int) -> float:
    if not 0 <= c < width:
        raise SceneError(f"column {c} out of range [0, {width})")
    return 2.0 * np.pi * (c + 0.5) / width - np.pi


def ray_directions(camera: CameraPose, width: int) -> np.ndarray:
    """Global unit ray directions for every column of a camera, shape (w, 2)."""
    a = camera.rotation + column_azimuths(width)
    return np.stack([np.sin(a), np.cos(a)], axis=1)


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def global_to_cam2d(point, camera: CameraPose) -> np.ndarray:
    """World point into the camera frame: Rot(-R) @ (p - T)."""
    p = np.asarray(point, dtype=float)
    return rotation_matrix(-camera.rotation) @ (p - camera.position)


def intersect_ray_wall(origin, direction, wall):
    """Intersect a ray with a wall's infinite line.

    Returns (point, t) with t > 0, or None for parallel / behind-camera rays.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    ndotr = float(wall.normal @ direction)
    if abs(ndotr) < GRAZING_TOL:
        return None
    t = (wall.offset - float(wall.normal @ origin)) / ndotr
    if t <= MIN_RAY_DIST:
        return None
    return origin + t * direction, t


def cam2d_to_pixel_row(point_cam, z: float, height: int) -> float:
    """Project a camera-frame floor point to its equirectangular pixel row."""
    p = np.asarray(point_cam, dtype=float)
    d = float(np.hypot(p[0], p[1]))
    if d <= MIN_RAY_DIST:
        raise SceneError("zero-distance point cannot be projected")
    if z <= 0:
        raise SceneError("camera height must be positive")
    return height * (0.5 + np.arctan2(z, d) / np.pi)


def distances_to_rows(dist: np.ndarray, z: float, height: int) -> np.ndarray:
    """Vectorized row projection for positive plan distances."""
    return height * (0.5 + np.arctan2(z, dist) / np.pi)


def rows_to_distances(rows: np.ndarray, z: float, height: int) -> np.ndarray:
    """Invert the row model; rows outside (H/2, H) give non-finite output."""
    rows = np.asarray(rows, dtype=float)
    ang = np.pi * (rows / height - 0.5)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = z / np.tan(ang)
    d = np.where((rows > height / 2) & (rows < height), d, np.nan)
    return d


def project_columns(scene: Scene, camera: CameraPose, wall_ids: np.ndarray,
                    geom: ImageGeometry):
    """Shared projection kernel: assigned walls' infinite lines -> rows.

    Returns (rows, dist, ndotr, valid); entries of invalid columns are NaN.
    Occlusion and segment bounds are deliberately ignored here.
    """
    wall_ids = np.asarray(wall_ids)
    w = geom.width
    if wall_ids.shape != (w,):
        raise SceneError(f"expected {w} columns, got {wall_ids.shape}")
    if np.any(wall_ids >= scene.n_walls):
        raise SceneError("assignment references a wall id outside the scene")
    assigned = wall_ids >= 0
    safe_ids = np.where(assigned, wall_ids, 0)
    normals = scene.walls.normals[safe_ids]
    offsets = scene.walls.offsets[safe_ids]
    rays = ray_directions(camera, w)
    ndotr = np.einsum("ij,ij->i", normals, rays)
    grazing = np.abs(ndotr) < GRAZING_TOL
    denom = np.where(grazing, 1.0, ndotr)
    dist = (offsets - normals @ camera.position) / denom
    valid = assigned & ~grazing & (dist > MIN_RAY_DIST)
    rows = np.full(w, np.nan)
    rows[valid] = distances_to_rows(dist[valid], camera.height, geom.height)
    dist = np.where(valid, dist, np.nan)
    ndotr = np.where(valid, ndotr, np.nan)
    return rows, dist, ndotr, valid


def project_assigned_boundary(scene: Scene, camera: CameraPose,
                              assignment: ColumnAssignment,
                              geom: ImageGeometry) -> BoundaryObservation:
    """Reproject each column's assigned wall without occlusion checks."""
    rows, _, _, valid = project_columns(scene, camera, assignment.wall_ids, geom)
    return BoundaryObservation(camera_id=assignment.camera_id, rows=rows, valid=valid)


def _visible_wall_ids(scene: Scene, camera: CameraPose, geom: ImageGeometry) -> np.ndarray:
    """Nearest segment-clipped wall hit per column within the camera's room."""
    room_idx = scene.containing_room(camera.position)
    if room_idx < 0:
        raise RenderError("camera is not inside exactly one room")
    room = scene.rooms[room_idx]
    if distance_to_boundary(camera.position, room.vertices) < CAMERA_WALL_CLEARANCE:
        raise RenderError("camera lies on a wall")
    sl = scene.walls.room_slice(room_idx)
    normals = scene.walls.normals[sl]          # (K, 2)
    offsets = scene.walls.offsets[sl]          # (K,)
    starts = scene.walls.starts[sl]            # (K, 2)
    dirs = scene.walls.directions[sl]          # (K, 2)
    lengths = scene.walls.lengths[sl]          # (K,)
    rays = ray_directions(camera, geom.width)  # (w, 2)

    ndotr = normals @ rays.T                                   # (K, w)
    num = (offsets - normals @ camera.position)[:, None]       # (K, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / ndotr
    hit = camera.position[None, None, :] + t[:, :, None] * rays[None, :, :]
    s = np.einsum("kwj,kj->kw", hit - starts[:, None, :], dirs)
    ok = (np.abs(ndotr) >= GRAZING_TOL) & (t > MIN_RAY_DIST) \
        & (s >= -SEGMENT_TOL) & (s <= lengths[:, None] + SEGMENT_TOL)
    t = np.where(ok, t, np.inf)
    nearest = np.argmin(t, axis=0)
    if not np.all(np.isfinite(t[nearest, np.arange(geom.width)])):
        raise RenderError("a column failed to hit any wall of the containing room")
    return nearest + sl.start


def render_boundary(scene: Scene, camera: CameraPose,
                    geom: ImageGeometry = ImageGeometry()):
    """Render the floor boundary and ground-truth column-to-wall assignment.

    Visibility is single-room (the camera's containing room); the emitted rows
    are produced by the same projection kernel as `project_assigned_boundary`,
    so re-projecting the returned assignment reproduces them bit-exactly.
    """
    wall_ids = _visible_wall_ids(scene, camera, geom)
    assignment = ColumnAssignment(camera_id=camera.id, wall_ids=wall_ids)
    boundary = project_assigned_boundary(scene, camera, assignment, geom)
    return boundary, assignment


# ---------------------------------------------------------------------------
# Boundary / assignment JSON sidecar
# ---------------------------------------------------------------------------

def boundary_to_dict(boundary: BoundaryObservation, assignment: ColumnAssignment) -> dict:
    rows = [float(r) if v else None for r, v in zip(boundary.rows, boundary.valid)]
    return {"camera_id": int(boundary.camera_id),
            "rows": rows,
            "walls": [int(i) for i in assignment.wall_ids]}


def boundary_from_dict(data: dict):
    rows = np.array([np.nan if r is None else float(r) for r in data["rows"]])
    valid = np.isfinite(rows)
    cam_id = int(data["camera_id"])
    boundary = BoundaryObservation(camera_id=cam_id, rows=rows, valid=valid)
    assignment = ColumnAssignment(camera_id=cam_id,
                                  wall_ids=np.asarray(data["walls"], dtype=np.int64))
    return boundary, assignment
