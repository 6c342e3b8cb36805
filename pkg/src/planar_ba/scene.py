"""Scene data model: rooms, walls in Hesse normal form, cameras, normalization.

Coordinate conventions used throughout the package:

* Wall lines are stored as a fixed unit ``direction`` plus a scalar
  ``offset``.  The wall normal is the direction rotated by +90 degrees
  (counter-clockwise), so ``normal = (-dy, dx)``.  Every point ``p`` on the
  wall line satisfies ``normal . p == offset``.
* Room polygons are wound counter-clockwise at ingestion, which makes wall
  normals point into the room interior and gives offsets a consistent sign.
* Normalized scenes live in ``[-1, 1]^2``.  ``NormTransform`` maps raw
  coordinates to normalized ones via ``p_norm = scale * p_raw + translate``;
  camera heights scale by the same factor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

SCENE_FORMAT = "planar-ba/1"
MAX_WALLS = 300
MAX_CAMERAS = 30

# angular tolerance below which consecutive wall directions count as parallel
PARALLEL_TOL = 1e-9


class SceneError(ValueError):
    """Raised for invalid scene inputs (degenerate geometry, bad files)."""


def rotate90(v: np.ndarray) -> np.ndarray:
    """Rotate 2-vectors by +90 degrees (counter-clockwise): (x, y) -> (-y, x)."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


def cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Scalar 2D cross product a_x*b_y - a_y*b_x."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _readonly_int(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.int64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Wall:
    """1-DoF wall line: fixed unit direction, scalar offset along the normal."""

    direction: np.ndarray
    normal: np.ndarray
    offset: float
    room_id: int
    vertex_id: int

    def line_point(self) -> np.ndarray:
        """An arbitrary point on the wall line (foot of the origin)."""
        return self.normal * self.offset


def wall_from_segment(v_a, v_b, room_id: int = -1, vertex_id: int = -1) -> Wall:
    """Build a Hesse-form wall from a directed segment v_a -> v_b.

    Rejects coincident endpoints (length <= 1e-9).
    """
    v_a = np.asarray(v_a, dtype=float)
    v_b = np.asarray(v_b, dtype=float)
    seg = v_b - v_a
    length = float(np.hypot(seg[0], seg[1]))
    if length <= 1e-9:
        raise SceneError(f"degenerate wall segment: |v_b - v_a| = {length:g}")
    direction = _readonly(seg / length)
    normal = _readonly(rotate90(direction))
    offset = float(normal @ v_a)
    return Wall(direction=direction, normal=normal, offset=offset,
                room_id=room_id, vertex_id=vertex_id)


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise winding."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def ensure_ccw(vertices: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if polygon_area(v) < 0.0:
        return v[::-1].copy()
    return v


def point_in_polygon(point, vertices: np.ndarray) -> bool:
    """Ray-crossing test; boundary points are not guaranteed either way."""
    px, py = float(point[0]), float(point[1])
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    straddle = (y > py) != (yn > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = x + (py - y) / (yn - y) * (xn - x)
    hits = straddle & (px < xs)
    return bool(np.count_nonzero(hits) % 2)


def distance_to_boundary(point, vertices: np.ndarray) -> float:
    """Minimum distance from a point to the polygon's edges."""
    p = np.asarray(point, dtype=float)
    v = np.asarray(vertices, dtype=float)
    a = v
    b = np.roll(v, -1, axis=0)
    ab = b - a
    ap = p[None, :] - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", ap, ab) / np.maximum(denom, 1e-300), 0.0, 1.0)
    closest = a + t[:, None] * ab
    return float(np.min(np.linalg.norm(p[None, :] - closest, axis=1)))


@dataclass(frozen=True)
class RoomPolygon:
    """Closed-loop simple polygon; wall k joins vertex k to vertex k+1 (mod K)."""

    vertices: np.ndarray
    room_type: str = "room"
    room_id: int = -1

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 2:
            # K < 3 violates the closed-loop invariant; it is reported by
            # validate_scene rather than rejected here so malformed inputs
            # can still be inspected
            raise SceneError(f"polygon needs vertices of shape (K, 2), got {v.shape}")
        object.__setattr__(self, "vertices", _readonly(v))

    @property
    def walls(self) -> list[Wall]:
        v = self.vertices
        k = len(v)
        return [wall_from_segment(v[i], v[(i + 1) % k], room_id=self.room_id,
                                  vertex_id=i) for i in range(k)]

    def directions(self) -> np.ndarray:
        v = self.vertices
        seg = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(seg, axis=1)
        if np.any(lengths <= 1e-9):
            raise SceneError("polygon has a degenerate edge")
        return seg / lengths[:, None]


@dataclass(frozen=True)
class CameraPose:
    """Camera with free xy position; rotation and height stay fixed."""

    position: np.ndarray
    rotation: float
    height: float
    id: int = -1

    def __post_init__(self):
        object.__setattr__(self, "position", _readonly(np.asarray(self.position, dtype=float)))
        if not self.height > 0:
            raise SceneError(f"camera height must be positive, got {self.height}")


@dataclass(frozen=True)
class NormTransform:
    """Similarity raw -> normalized: p_norm = scale * p_raw + translate."""

    scale: float
    translate: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translate", _readonly(np.asarray(self.translate, dtype=float)))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) * self.scale + self.translate

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.translate) / self.scale


@dataclass(frozen=True)
class WallArrays:
    """Flat per-wall geometry in global wall order (room-major, edge-minor).

    ``directions``/``normals``/``offsets`` are the source of truth during
    optimization; ``starts``/``lengths`` give the current segment extents for
    visibility tests.
    """

    directions: np.ndarray   # (N, 2) unit
    normals: np.ndarray      # (N, 2) unit, +90 deg from direction
    offsets: np.ndarray      # (N,)
    starts: np.ndarray       # (N, 2) segment start vertex
    lengths: np.ndarray      # (N,)
    room_ids: np.ndarray     # (N,)
    vertex_ids: np.ndarray   # (N,)
    room_ptr: np.ndarray     # (R + 1,) wall index ranges per room

    def __post_init__(self):
        for name in ("directions", "normals", "offsets", "starts", "lengths"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        for name in ("room_ids", "vertex_ids", "room_ptr"):
            object.__setattr__(self, name, _readonly_int(getattr(self, name)))

    @property
    def count(self) -> int:
        return len(self.offsets)

    def room_slice(self, room_index: int) -> slice:
        return slice(int(self.room_ptr[room_index]), int(self.room_ptr[room_index + 1]))

    def wall(self, global_id: int) -> Wall:
        return Wall(direction=self.directions[global_id],
                    normal=self.normals[global_id],
                    offset=float(self.offsets[global_id]),
                    room_id=int(self.room_ids[global_id]),
                    vertex_id=int(self.vertex_ids[global_id]))

    @staticmethod
    def from_rooms(rooms) -> "WallArrays":
        dirs, starts, lens, rids, vids, ptr = [], [], [], [], [], [0]
        for r_idx, room in enumerate(rooms):
            v = room.vertices
            seg = np.roll(v, -1, axis=0) - v
            seg_len = np.linalg.norm(seg, axis=1)
            if np.any(seg_len <= 1e-9):
                raise SceneError(f"room {r_idx} has a degenerate edge")
            dirs.append(seg / seg_len[:, None])
            starts.append(v)
            lens.append(seg_len)
            rids.append(np.full(len(v), r_idx))
            vids.append(np.arange(len(v)))
            ptr.append(ptr[-1] + len(v))
        if not dirs:
            empty2 = np.zeros((0, 2))
            return WallArrays(empty2, empty2, np.zeros(0), empty2, np.zeros(0),
                              np.zeros(0, dtype=int), np.zeros(0, dtype=int),
                              np.asarray(ptr))
        directions = np.vstack(dirs)
        start_pts = np.vstack(starts)
        normals = rotate90(directions)
        offsets = np.einsum("ij,ij->i", normals, start_pts)
        return WallArrays(directions, normals, offsets, start_pts,
                          np.concatenate(lens), np.concatenate(rids),
                          np.concatenate(vids), np.asarray(ptr))


@dataclass(frozen=True)
class Scene:
    """Immutable global floor-plan state.

    Construction from rooms derives the flat wall arrays; `with_geometry`
    rebuilds a scene from updated offsets/camera positions while keeping the
    wall directions bit-identical.
    """

    rooms: tuple[RoomPolygon, ...]
    cameras: tuple[CameraPose, ...] = ()
    doors: tuple[RoomPolygon, ...] = ()
    norm_transform: NormTransform | None = None
    walls: WallArrays = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "rooms", tuple(self.rooms))
        object.__setattr__(self, "cameras", tuple(self.cameras))
        object.__setattr__(self, "doors", tuple(self.doors))
        if self.walls is None:
            object.__setattr__(self, "walls", WallArrays.from_rooms(self.rooms))

    @property
    def n_walls(self) -> int:
        return self.walls.count

    @property
    def n_cameras(self) -> int:
        return len(self.cameras)

    def camera_positions(self) -> np.ndarray:
        if not self.cameras:
            return np.zeros((0, 2))
        return np.array([c.position for c in self.cameras])

    def containing_room(self, point) -> int:
        """Index of the unique room containing the point; -1 if none."""
        hits = [i for i, r in enumerate(self.rooms)
                if point_in_polygon(point, r.vertices)]
        if len(hits) == 1:
            return hits[0]
        return -1

    def with_geometry(self, wall_offsets: np.ndarray | None = None,
                      camera_positions: np.ndarray | None = None) -> "Scene":
        """New scene with updated wall offsets and/or camera positions.

        Wall directions, camera rotations and heights are carried over
        unchanged; room vertices are recomputed from the wall lines.
        """
        w = self.walls
        offsets = w.offsets if wall_offsets is None else np.asarray(wall_offsets, dtype=float)
        if offsets.shape != w.offsets.shape:
            raise SceneError("wall offset array has the wrong length")
        new_rooms = []
        starts = np.empty_like(w.starts)
        lengths = np.empty_like(w.lengths)
        for r_idx, room in enumerate(self.rooms):
            sl = self.walls.room_slice(r_idx)
            verts = vertices_from_offsets(w.directions[sl], offsets[sl])
            new_rooms.append(RoomPolygon(verts, room.room_type, room.room_id))
            seg = np.roll(verts, -1, axis=0) - verts
            starts[sl] = verts
            lengths[sl] = np.linalg.norm(seg, axis=1)
        new_walls = WallArrays(w.directions, w.normals, offsets, starts, lengths,
                               w.room_ids, w.vertex_ids, w.room_ptr)
        cams = self.cameras
        if camera_positions is not None:
            pos = np.asarray(camera_positions, dtype=float)
            if pos.shape != (len(cams), 2):
                raise SceneError("camera position array has the wrong shape")
            cams = tuple(replace(c, position=pos[i]) for i, c in enumerate(cams))
        return Scene(rooms=tuple(new_rooms), cameras=cams, doors=self.doors,
                     norm_transform=self.norm_transform, walls=new_walls)


# ---------------------------------------------------------------------------
# Dual representation: vertices <-> offsets
# ---------------------------------------------------------------------------

def vertices_from_offsets(directions: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Recover polygon vertices from fixed wall directions and offsets.

    Vertex k is the intersection of wall line k-1 and wall line k.  Raises
    if any consecutive pair of walls is parallel (singular intersection).
    """
    directions = np.asarray(directions, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    k = len(offsets)
    if k < 3:
        raise SceneError(f"need K >= 3 walls, got {k}")
    normals = rotate90(directions)
    n_prev = np.roll(normals, 1, axis=0)
    b_prev = np.roll(offsets, 1)
    det = cross2(n_prev, normals)
    if np.any(np.abs(det) < PARALLEL_TOL):
        bad = int(np.argmin(np.abs(det)))
        raise SceneError(f"consecutive walls {bad - 1} and {bad} are parallel")
    # Cramer's rule on [n_prev; n_k] v = [b_prev; b_k]
    x = (b_prev * normals[:, 1] - offsets * n_prev[:, 1]) / det
    y = (n_prev[:, 0] * offsets - normals[:, 0] * b_prev) / det
    return np.stack([x, y], axis=1)


def offsets_from_vertices(polygon: RoomPolygon) -> np.ndarray:
    """Per-wall offsets b_k = normal_k . v_k for a room polygon."""
    v = polygon.vertices
    normals = rotate90(polygon.directions())
    return np.einsum("ij,ij->i", normals, v)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

NORM_MARGIN = 0.05  # bbox margin fraction kept inside [-1, 1]


def normalize_scene(scene: Scene) -> tuple[Scene, NormTransform]:
    """Map the floor bounding box (5% margin) into [-1, 1]^2 isotropically.

    Camera heights scale by the same factor; the transform is recorded on the
    returned scene.
    """
    if not scene.rooms:
        raise SceneError("cannot normalize an empty scene")
    pts = np.vstack([r.vertices for r in scene.rooms])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = float(np.max(hi - lo))
    if extent <= 0.0:
        raise SceneError("scene bounding box has zero extent")
    scale = 2.0 / (extent * (1.0 + NORM_MARGIN))
    center = (lo + hi) / 2.0
    transform = NormTransform(scale=scale, translate=-center * scale)
    rooms = tuple(RoomPolygon(transform.apply(r.vertices), r.room_type, r.room_id)
                  for r in scene.rooms)
    doors = tuple(RoomPolygon(transform.apply(d.vertices), d.room_type, d.room_id)
                  for d in scene.doors)
    cams = tuple(replace(c, position=transform.apply(c.position),
                         height=c.height * scale) for c in scene.cameras)
    return Scene(rooms=rooms, cameras=cams, doors=doors,
                 norm_transform=transform), transform


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _segments_intersect(p1, p2, p3, p4) -> bool:
    """Proper intersection test for non-adjacent polygon edges."""
    d1 = cross2(p4 - p3, p1 - p3)
    d2 = cross2(p4 - p3, p2 - p3)
    d3 = cross2(p2 - p1, p3 - p1)
    d4 = cross2(p2 - p1, p4 - p1)
    return bool(((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)))


def _polygon_simple(vertices: np.ndarray) -> bool:
    v = np.asarray(vertices, dtype=float)
    k = len(v)
    for i in range(k):
        a1, a2 = v[i], v[(i + 1) % k]
        for j in range(i + 1, k):
            if j == i or (j + 1) % k == i or (i + 1) % k == j:
                continue
            if _segments_intersect(a1, a2, v[j], v[(j + 1) % k]):
                return False
    return True


@dataclass
class ValidationReport:
    violations: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, msg: str):
        self.violations.append((code, msg))

    def messages(self) -> list[str]:
        return [msg for _, msg in self.violations]

    def structural(self) -> list[str]:
        """Violations that break the optimization math (as opposed to the
        ground-truth-only invariants like camera containment or coordinate
        range, which perturbed start scenes legitimately violate)."""
        hard = {"loop", "edge", "parallel", "capacity"}
        return [msg for code, msg in self.violations if code in hard]


def validate_scene(scene: Scene) -> ValidationReport:
    """Report every violated scene invariant; never raises."""
    report = ValidationReport()
    for i, room in enumerate(scene.rooms):
        v = room.vertices
        if len(v) < 3:
            report.add("loop", f"room {i}: open loop (K={len(v)} < 3)")
            continue
        seg = np.roll(v, -1, axis=0) - v
        lens = np.linalg.norm(seg, axis=1)
        if np.any(lens <= 1e-9):
            report.add("edge", f"room {i}: degenerate edge")
            continue
        dirs = seg / lens[:, None]
        sines = np.abs(cross2(dirs, np.roll(dirs, -1, axis=0)))
        if np.any(sines < PARALLEL_TOL):
            k = int(np.argmin(sines))
            report.add("parallel",
                       f"room {i}: consecutive walls {k} and {(k + 1) % len(v)} parallel")
        if polygon_area(v) < 0:
            report.add("winding", f"room {i}: clockwise winding")
        if not _polygon_simple(v):
            report.add("simple", f"room {i}: self-intersecting polygon")
    if scene.norm_transform is not None:
        for i, room in enumerate(scene.rooms):
            if np.any(np.abs(room.vertices) > 1.0 + 1e-9):
                report.add("range", f"room {i}: coordinates outside [-1, 1] after normalization")
        for cam in scene.cameras:
            if np.any(np.abs(cam.position) > 1.0 + 1e-9):
                report.add("range", f"camera {cam.id}: position outside [-1, 1]")
    if scene.n_walls > MAX_WALLS:
        report.add("capacity", f"wall count {scene.n_walls} exceeds capacity {MAX_WALLS}")
    if scene.n_cameras > MAX_CAMERAS:
        report.add("capacity", f"camera count {scene.n_cameras} exceeds capacity {MAX_CAMERAS}")
    for cam in scene.cameras:
        if scene.containing_room(cam.position) < 0:
            report.add("containment", f"camera {cam.id}: not inside exactly one room")
    return report


# ---------------------------------------------------------------------------
# JSON scene format ("planar-ba/1")
# ---------------------------------------------------------------------------

def scene_to_dict(scene: Scene) -> dict:
    out = {
        "format": SCENE_FORMAT,
        "rooms": [{"id": r.room_id if r.room_id >= 0 else i,
                   "room_type": r.room_type,
                   "vertices": [[float(x), float(y)] for x, y in r.vertices]}
                  for i, r in enumerate(scene.rooms)],
        "cameras": [{"id": c.id if c.id >= 0 else i,
                     "position": [float(c.position[0]), float(c.position[1])],
                     "rotation_rad": float(c.rotation),
                     "height": float(c.height)}
                    for i, c in enumerate(scene.cameras)],
    }
    if scene.doors:
        out["doors"] = [{"id": d.room_id if d.room_id >= 0 else i,
                         "vertices": [[float(x), float(y)] for x, y in d.vertices]}
                        for i, d in enumerate(scene.doors)]
    if scene.norm_transform is not None:
        t = scene.norm_transform
        out["norm_transform"] = {"scale": float(t.scale),
                                 "translate": [float(t.translate[0]), float(t.translate[1])]}
    return out


def scene_from_dict(data: dict) -> Scene:
    fmt = data.get("format")
    if fmt != SCENE_FORMAT:
        raise SceneError(f"unsupported scene format {fmt!r} (expected {SCENE_FORMAT!r})")
    rooms = tuple(RoomPolygon(ensure_ccw(np.asarray(r["vertices"], dtype=float)),
                              r.get("room_type", "room"), int(r.get("id", i)))
                  for i, r in enumerate(data.get("rooms", [])))
    doors = tuple(RoomPolygon(ensure_ccw(np.asarray(d["vertices"], dtype=float)),
                              "door", int(d.get("id", i)))
                  for i, d in enumerate(data.get("doors", [])))
    cams = tuple(CameraPose(position=np.asarray(c["position"], dtype=float),
                            rotation=float(c.get("rotation_rad", 0.0)),
                            height=float(c["height"]),
                            id=int(c.get("id", i)))
                 for i, c in enumerate(data.get("cameras", [])))
    nt = None
    if "norm_transform" in data:
        raw = data["norm_transform"]
        nt = NormTransform(scale=float(raw["scale"]),
                           translate=np.asarray(raw["translate"], dtype=float))
    return Scene(rooms=rooms, cameras=cams, doors=doors, norm_transform=nt)


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=1, sort_keys=True) + "\n")


def load_scene(path) -> Scene:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SceneError(f"invalid scene JSON in {path}: {e}") from e
    return scene_from_dict(data)
