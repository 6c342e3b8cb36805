import numpy as np
import pytest

from planar_ba.renderer import ImageGeometry, render_boundary
from planar_ba.scene import CameraPose, RoomPolygon, Scene
from planar_ba.simulation import generate_floorplan, sample_cameras


@pytest.fixture
def geom():
    return ImageGeometry(512, 256)


@pytest.fixture
def square_scene():
    """Unit-extent square room with a centered camera."""
    room = RoomPolygon(np.array([[-0.5, -0.5], [0.5, -0.5],
                                 [0.5, 0.5], [-0.5, 0.5]]))
    cam = CameraPose(position=np.array([0.0, 0.0]), rotation=0.0,
                     height=0.35, id=0)
    return Scene(rooms=(room,), cameras=(cam,))


def make_floor(seed: int, imgs_per_room: float = 1.0) -> Scene:
    """Normalized synthetic floor with sampled cameras."""
    scene = generate_floorplan(seed)
    cams = sample_cameras(scene, imgs_per_room, seed)
    return Scene(rooms=scene.rooms, cameras=cams, doors=scene.doors,
                 norm_transform=scene.norm_transform, walls=scene.walls)


def render_all(scene: Scene, geom: ImageGeometry):
    pairs = [render_boundary(scene, c, geom) for c in scene.cameras]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def random_simple_rectilinear(rng: np.random.Generator) -> np.ndarray:
    """Random staircase-style rectilinear polygon, CCW, occasionally with a
    45-degree corner cut."""
    n_steps = int(rng.integers(2, 5))
    # strictly decreasing x levels and increasing y levels for the staircase
    x_levels = np.sort(rng.uniform(0.3, 1.0, n_steps))[::-1]
    pts = [(0.0, 0.0), (x_levels[0] + rng.uniform(0.2, 0.5), 0.0)]
    x = pts[1][0]
    y = 0.0
    for i in range(n_steps):
        y = y + rng.uniform(0.15, 0.4)
        pts.append((x, y))
        x = x_levels[i] - 0.06 * i  # >= 0.3 - 0.18 > 0
        pts.append((x, y))
    y = y + rng.uniform(0.15, 0.4)
    pts.append((x, y))
    pts.append((0.0, y))
    v = np.array(pts)
    if rng.random() < 0.5:
        # chamfer the first corner to exercise a 45-degree wall
        cut = 0.05
        v = np.vstack([[cut, 0.0], v[1:], [0.0, cut]])
    return v
