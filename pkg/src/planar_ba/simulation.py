"""Synthetic floors, camera sampling and noise injection.

Floors are rectilinear: the unit footprint is split recursively into
axis-aligned rooms, some of which get a corner notch carved out.  All
randomness flows through per-entity streams derived from a master seed via
``SeedSequence`` so generation parallelizes without changing outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .renderer import (
    BoundaryObservation,
    ColumnAssignment,
    ImageGeometry,
    boundary_from_dict,
    boundary_to_dict,
    render_boundary,
)
from .scene import (
    CameraPose,
    RoomPolygon,
    Scene,
    SceneError,
    cross2,
    distance_to_boundary,
    normalize_scene,
    point_in_polygon,
)

# domain separation tags for SeedSequence streams
_TAG_FLOORPLAN = 0x10
_TAG_CAMERAS = 0x20
_TAG_SCENE_NOISE = 0x30
_TAG_BOUNDARY_NOISE = 0x40

DEFAULT_CAMERA_HEIGHT = 0.35   # normalized scene units
CAMERA_MARGIN_FRACTION = 0.05  # of the room inradius


@dataclass(frozen=True)
class NoiseConfig:
    """Scene and boundary noise levels, all in normalized scene units."""

    scene_sigma: float = 0.033
    boundary_chance: float = 0.0
    boundary_max_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.boundary_chance <= 1.0:
            raise ValueError("boundary_chance must be in [0, 1]")
        if self.scene_sigma < 0 or self.boundary_max_scale < 0:
            raise ValueError("noise scales must be non-negative")


@dataclass(frozen=True)
class FloorplanConfig:
    rooms_min: int = 4
    rooms_max: int = 8
    extent: float = 12.0        # raw footprint side length before normalization
    min_room_size: float = 2.5  # raw units
    notch_prob: float = 0.35    # chance a room gets an L-shaped corner notch

    def __post_init__(self):
        if not 3 <= self.rooms_min <= self.rooms_max:
            raise ValueError("need 3 <= rooms_min <= rooms_max")
        if self.extent < 2 * self.min_room_size:
            raise SceneError("extent too small for the minimum room size")


def _rng(seed: int, tag: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag, *map(int, extra)]))


def _split_rects(rng: np.random.Generator, config: FloorplanConfig,
                 target: int) -> list[tuple[float, float, float, float]]:
    rects = [(0.0, 0.0, config.extent, config.extent)]
    min_sz = config.min_room_size
    while len(rects) < target:
        splittable = [i for i, (x0, y0, x1, y1) in enumerate(rects)
                      if max(x1 - x0, y1 - y0) >= 2 * min_sz]
        if not splittable:
            raise SceneError("infeasible floorplan config: rooms too small to split")
        areas = np.array([(rects[i][2] - rects[i][0]) * (rects[i][3] - rects[i][1])
                          for i in splittable])
        i = splittable[int(np.argmax(areas))]
        x0, y0, x1, y1 = rects.pop(i)
        w, h = x1 - x0, y1 - y0
        vertical = w > h if abs(w - h) > 1e-9 else bool(rng.random() < 0.5)
        if vertical:
            s = float(rng.uniform(x0 + min_sz, x1 - min_sz))
            rects.insert(i, (x0, y0, s, y1))
            rects.insert(i + 1, (s, y0, x1, y1))
        else:
            s = float(rng.uniform(y0 + min_sz, y1 - min_sz))
            rects.insert(i, (x0, y0, x1, s))
            rects.insert(i + 1, (x0, s, x1, y1))
    return rects


def _notch_polygon(rng: np.random.Generator, rect, min_size: float) -> np.ndarray:
    """Carve a corner rectangle out of the rect, yielding an L-shaped hexagon."""
    x0, y0, x1, y1 = rect
    w, h = x1 - x0, y1 - y0
    nw = float(rng.uniform(0.2, 0.45)) * w
    nh = float(rng.uniform(0.2, 0.45)) * h
    if w - nw < min_size / 2 or h - nh < min_size / 2:
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    corner = int(rng.integers(4))
    if corner == 0:    # carve at (x1, y1)
        pts = [[x0, y0], [x1, y0], [x1, y1 - nh], [x1 - nw, y1 - nh],
               [x1 - nw, y1], [x0, y1]]
    elif corner == 1:  # carve at (x0, y1)
        pts = [[x0, y0], [x1, y0], [x1, y1], [x0 + nw, y1],
               [x0 + nw, y1 - nh], [x0, y1 - nh]]
    elif corner == 2:  # carve at (x0, y0)
        pts = [[x0 + nw, y0], [x1, y0], [x1, y1], [x0, y1],
               [x0, y0 + nh], [x0 + nw, y0 + nh]]
    else:              # carve at (x1, y0)
        pts = [[x0, y0], [x1 - nw, y0], [x1 - nw, y0 + nh], [x1, y0 + nh],
               [x1, y1], [x0, y1]]
    return np.array(pts, dtype=float)


def generate_floorplan(seed: int, config: FloorplanConfig = FloorplanConfig()) -> Scene:
    """Deterministic rectilinear floor with rooms_min..rooms_max rooms.

    The scene comes back normalized into [-1, 1]^2 with no cameras.
    """
    rng = _rng(seed, _TAG_FLOORPLAN)
    target = int(rng.integers(config.rooms_min, config.rooms_max + 1))
    rects = _split_rects(rng, config, target)
    rooms = []
    for i, rect in enumerate(rects):
        if rng.random() < config.notch_prob:
            verts = _notch_polygon(rng, rect, config.min_room_size)
        else:
            x0, y0, x1, y1 = rect
            verts = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        rooms.append(RoomPolygon(verts, "room", i))
    scene, _ = normalize_scene(Scene(rooms=tuple(rooms)))
    return scene


def _room_inradius(room: RoomPolygon, samples: int = 24) -> float:
    """Numeric inradius estimate: max boundary distance over a grid."""
    v = room.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    xs = np.linspace(lo[0], hi[0], samples)
    ys = np.linspace(lo[1], hi[1], samples)
    best = 0.0
    for x in xs:
        for y in ys:
            if point_in_polygon((x, y), v):
                best = max(best, distance_to_boundary((x, y), v))
    return best


def sample_cameras(scene: Scene, imgs_per_room: float, seed: int,
                   height: float = DEFAULT_CAMERA_HEIGHT) -> tuple[CameraPose, ...]:
    """Uniform in-room camera positions with a margin off the walls.

    Each room gets floor(imgs_per_room) cameras plus one more with the
    fractional probability, so the expected count matches the density.
    Rotations are uniform in [0, 2pi); heights are fixed.
    """
    if not scene.rooms:
        raise SceneError("cannot sample cameras in an empty scene")
    if imgs_per_room < 0:
        raise ValueError("imgs_per_room must be non-negative")
    cameras = []
    cam_id = 0
    whole = int(np.floor(imgs_per_room))
    frac = imgs_per_room - whole
    for r_idx, room in enumerate(scene.rooms):
        rng = _rng(seed, _TAG_CAMERAS, r_idx)
        count = whole + (1 if rng.random() < frac else 0)
        if count == 0:
            continue
        inradius = _room_inradius(room)
        if inradius <= 0:
            raise SceneError(f"room {r_idx} is degenerate (no interior)")
        margin = CAMERA_MARGIN_FRACTION * inradius
        lo, hi = room.vertices.min(axis=0), room.vertices.max(axis=0)
        for _ in range(count):
            for _attempt in range(10_000):
                p = rng.uniform(lo, hi)
                if point_in_polygon(p, room.vertices) and \
                        distance_to_boundary(p, room.vertices) >= margin:
                    break
            else:
                raise SceneError(f"could not place a camera in room {r_idx}")
            cameras.append(CameraPose(position=p,
                                      rotation=float(rng.uniform(0, 2 * np.pi)),
                                      height=height, id=cam_id))
            cam_id += 1
    return tuple(cameras)


def perturb_scene(scene: Scene, sigma: float, seed: int) -> Scene:
    """Gaussian noise on every wall offset and camera coordinate.

    Wall directions, camera rotations, heights and assignments are untouched;
    vertices are recomputed from the noisy wall lines.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0.0:
        return scene
    rng = _rng(seed, _TAG_SCENE_NOISE)
    offsets = scene.walls.offsets + rng.normal(0.0, sigma, scene.n_walls)
    positions = scene.camera_positions() + rng.normal(0.0, sigma, (scene.n_cameras, 2))
    return scene.with_geometry(offsets, positions)


def _clamped_wall_shift(scene: Scene, room_idx: int, local_k: int,
                        global_k: int, shift: float, camera: CameraPose) -> float:
    """Keep a wall translation from crossing the camera or its neighbours."""
    w = scene.walls
    n = w.normals[global_k]
    b = w.offsets[global_k]
    # camera side: the wall may approach but not reach the camera
    cam_gap = float(n @ camera.position) - b
    if cam_gap > 0:
        shift = min(shift, 0.95 * cam_gap)
    elif cam_gap < 0:
        shift = max(shift, 0.95 * cam_gap)
    # neighbour side: do not move past the adjacent wall lines' intersection
    sl = w.room_slice(room_idx)
    k0, k1 = sl.start, sl.stop
    count = k1 - k0
    prev_g = k0 + (local_k - 1) % count
    next_g = k0 + (local_k + 1) % count
    n_prev, n_next = w.normals[prev_g], w.normals[next_g]
    det = float(cross2(n_prev, n_next))
    if abs(det) > 1e-12:
        b_prev, b_next = w.offsets[prev_g], w.offsets[next_g]
        qx = (b_prev * n_next[1] - b_next * n_prev[1]) / det
        qy = (n_prev[0] * b_next - n_next[0] * b_prev) / det
        collapse = float(n @ (qx, qy)) - b
        if collapse > 0:
            shift = min(shift, 0.95 * collapse)
        elif collapse < 0:
            shift = max(shift, 0.95 * collapse)
    return shift


def perturb_boundaries(scene: Scene, camera: CameraPose,
                       geom: ImageGeometry, noise: NoiseConfig, seed: int):
    """Render a boundary after shifting random visible walls along their normals.

    Each wall visible from this camera is translated with probability
    ``boundary_chance`` by Uniform(-max_scale, +max_scale), clamped so it
    neither crosses the camera nor inverts against its neighbours.  The
    returned assignment ids are the ones from the clean render; draws are
    independent per (seed, camera).
    """
    clean_boundary, clean_assignment = render_boundary(scene, camera, geom)
    if noise.boundary_chance == 0.0 or noise.boundary_max_scale == 0.0:
        return clean_boundary, clean_assignment
    rng = _rng(seed, _TAG_BOUNDARY_NOISE, camera.id)
    visible = np.unique(clean_assignment.wall_ids)
    visible = visible[visible >= 0]
    selected = rng.random(len(visible)) < noise.boundary_chance
    shifts = rng.uniform(-noise.boundary_max_scale, noise.boundary_max_scale,
                         len(visible))
    if not np.any(selected):
        return clean_boundary, clean_assignment
    offsets = np.array(scene.walls.offsets)
    for wall_id, take, shift in zip(visible, selected, shifts):
        if not take:
            continue
        g = int(wall_id)
        room_idx = int(scene.walls.room_ids[g])
        local_k = int(scene.walls.vertex_ids[g])
        shift = _clamped_wall_shift(scene, room_idx, local_k, g, float(shift), camera)
        offsets[g] += shift
    shifted = scene.with_geometry(offsets, None)
    noisy_boundary, _ = render_boundary(shifted, camera, geom)
    return noisy_boundary, clean_assignment


# ---------------------------------------------------------------------------
# Dataset directory layout: floors/<seed>/{scene.json, gt.json, boundaries/}
# ---------------------------------------------------------------------------

def floor_dir(root, floor_seed: int) -> Path:
    return Path(root) / "floors" / str(int(floor_seed))


def write_boundaries(directory, pairs) -> None:
    """Write per-camera boundary sidecars into <directory>/boundaries/."""
    bdir = Path(directory) / "boundaries"
    bdir.mkdir(parents=True, exist_ok=True)
    for boundary, assignment in pairs:
        payload = boundary_to_dict(boundary, assignment)
        path = bdir / f"{boundary.camera_id}.json"
        path.write_text(json.dumps(payload, sort_keys=True) + "\n")


def read_boundaries(directory) -> list[tuple[BoundaryObservation, ColumnAssignment]]:
    bdir = Path(directory) / "boundaries"
    if not bdir.is_dir():
        raise SceneError(f"missing boundaries directory in {directory}")
    pairs = []
    for path in sorted(bdir.glob("*.json"), key=lambda p: int(p.stem)):
        pairs.append(boundary_from_dict(json.loads(path.read_text())))
    return pairs
