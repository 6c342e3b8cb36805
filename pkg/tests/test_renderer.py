"""Renderer: azimuths, projection model, visibility, render/project consistency."""

import numpy as np
import pytest

from planar_ba.renderer import (
    BoundaryObservation,
    ColumnAssignment,
    ImageGeometry,
    RenderError,
    boundary_from_dict,
    boundary_to_dict,
    cam2d_to_pixel_row,
    column_azimuth,
    column_azimuths,
    global_to_cam2d,
    intersect_ray_wall,
    project_assigned_boundary,
    ray_directions,
    render_boundary,
)
from planar_ba.scene import CameraPose, RoomPolygon, Scene, SceneError, wall_from_segment

from conftest import make_floor


class TestGeometry:
    def test_height_invariant(self):
        with pytest.raises(SceneError):
            ImageGeometry(512, 200)
        with pytest.raises(SceneError):
            ImageGeometry(5, 2)
        with pytest.raises(SceneError):
            ImageGeometry(2, 1)
        assert ImageGeometry(512, 256).height == 256


class TestColumnAzimuth:
    def test_near_center(self):
        assert column_azimuth(255, 512) == pytest.approx(-np.pi / 512)

    def test_first_column(self):
        assert column_azimuth(0, 512) == pytest.approx(-np.pi + np.pi / 512)

    def test_strictly_increasing_span(self):
        az = column_azimuths(512)
        assert np.all(np.diff(az) > 0)
        assert az[0] > -np.pi and az[-1] < np.pi

    def test_out_of_range(self):
        with pytest.raises(SceneError):
            column_azimuth(512, 512)


class TestIntersectRayWall:
    def test_vertical_wall(self):
        wall = wall_from_segment((2, -1), (2, 1))  # line x = 2
        hit = intersect_ray_wall((0, 0), (1, 0), wall)
        assert hit is not None
        point, t = hit
        np.testing.assert_allclose(point, [2, 0], atol=1e-12)
        assert t == pytest.approx(2.0)

    def test_horizontal_wall(self):
        wall = wall_from_segment((1, 3), (-1, 3))  # line y = 3
        hit = intersect_ray_wall((0, 0), (0, 1), wall)
        point, t = hit
        np.testing.assert_allclose(point, [0, 3], atol=1e-12)
        assert t == pytest.approx(3.0)

    def test_parallel_none(self):
        wall = wall_from_segment((1, 3), (-1, 3))
        assert intersect_ray_wall((0, 0), (1, 0), wall) is None

    def test_behind_none(self):
        wall = wall_from_segment((2, -1), (2, 1))
        assert intersect_ray_wall((0, 0), (-1, 0), wall) is None

    def test_point_on_line(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a, b = rng.uniform(-2, 2, (2, 2))
            if np.linalg.norm(b - a) < 1e-3:
                continue
            wall = wall_from_segment(a, b)
            ang = rng.uniform(0, 2 * np.pi)
            hit = intersect_ray_wall(rng.uniform(-2, 2, 2),
                                     np.array([np.sin(ang), np.cos(ang)]), wall)
            if hit is not None:
                point, t = hit
                assert abs(wall.normal @ point - wall.offset) < 1e-9
                assert t > 0


class TestPixelRow:
    def test_45_degree_depression(self):
        assert cam2d_to_pixel_row((0.35, 0), 0.35, 256) == pytest.approx(192.0)

    def test_30_degree_depression(self):
        d = 0.35 * np.sqrt(3)
        assert cam2d_to_pixel_row((d, 0), 0.35, 256) == pytest.approx(256 * (2 / 3))

    def test_horizon_limit(self):
        row = cam2d_to_pixel_row((1e9, 0), 0.35, 256)
        assert row == pytest.approx(128.0, abs=1e-3)

    def test_monotone_decreasing_in_distance(self):
        d = np.linspace(0.01, 100, 1000)
        rows = np.array([cam2d_to_pixel_row((x, 0), 0.35, 256) for x in d])
        assert np.all(np.diff(rows) < 0)
        assert np.all(rows > 128) and np.all(rows < 256)

    def test_zero_distance_rejected(self):
        with pytest.raises(SceneError):
            cam2d_to_pixel_row((0, 0), 0.35, 256)


class TestGlobalToCam2d:
    def test_camera_center(self):
        cam = CameraPose(position=np.array([2.0, 3.0]), rotation=0.7, height=1.0, id=0)
        np.testing.assert_allclose(global_to_cam2d((2, 3), cam), [0, 0], atol=1e-12)

    def test_zero_rotation(self):
        cam = CameraPose(position=np.array([1.0, 1.0]), rotation=0.0, height=1.0, id=0)
        np.testing.assert_allclose(global_to_cam2d((2, 3), cam), [1, 2], atol=1e-12)

    def test_quarter_turn(self):
        cam = CameraPose(position=np.array([0.0, 0.0]), rotation=np.pi / 2,
                         height=1.0, id=0)
        np.testing.assert_allclose(global_to_cam2d((1, 0), cam), [0, -1], atol=1e-12)

    def test_matrix_oracle(self):
        # brute-force matrix multiply with Rot(a) = [[cos,-sin],[sin,cos]]
        rng = np.random.default_rng(5)
        for _ in range(200):
            pos = rng.uniform(-2, 2, 2)
            rot = rng.uniform(-np.pi, np.pi)
            p = rng.uniform(-2, 2, 2)
            cam = CameraPose(position=pos, rotation=rot, height=1.0, id=0)
            c, s = np.cos(-rot), np.sin(-rot)
            expected = np.array([[c, -s], [s, c]]) @ (p - pos)
            np.testing.assert_allclose(global_to_cam2d(p, cam), expected, atol=1e-12)

    def test_ray_direction_matches_forward_axis(self):
        # at rotation R the ray base direction is [sin R, cos R]
        cam = CameraPose(position=np.zeros(2), rotation=0.3, height=1.0, id=0)
        rays = ray_directions(cam, 512)
        mid = 0.5 * (rays[255] + rays[256])
        mid /= np.linalg.norm(mid)
        np.testing.assert_allclose(mid, [np.sin(0.3), np.cos(0.3)], atol=1e-9)


class TestRenderBoundary:
    def test_square_room_wall_centers(self, square_scene, geom):
        # camera height equals half-extent, so wall-center columns sit at 0.75H
        scene = Scene(rooms=square_scene.rooms,
                      cameras=(CameraPose(position=np.zeros(2), rotation=0.0,
                                          height=0.5, id=0),))
        boundary, _ = render_boundary(scene, scene.cameras[0], geom)
        # forward (+y) is between columns 255 and 256 at rotation 0
        assert boundary.rows[255] == pytest.approx(192.0, abs=0.01)
        assert boundary.rows[127] == pytest.approx(192.0, abs=0.01)  # -x
        assert boundary.rows[383] == pytest.approx(192.0, abs=0.01)  # +x

    def test_all_columns_hit(self, geom):
        for seed in range(5):
            scene = make_floor(seed)
            for cam in scene.cameras:
                boundary, assignment = render_boundary(scene, cam, geom)
                assert np.all(boundary.valid)
                assert np.all(assignment.wall_ids >= 0)
                assert np.all(boundary.rows > geom.height / 2)
                assert np.all(boundary.rows < geom.height)

    def test_assignment_changes_at_corners(self, square_scene, geom):
        boundary, assignment = render_boundary(square_scene,
                                               square_scene.cameras[0], geom)
        ids = assignment.wall_ids
        switches = np.nonzero(np.diff(ids) != 0)[0]
        # four walls seen from the center: four transitions (one wraps)
        changes = len(switches) + (1 if ids[0] != ids[-1] else 0)
        assert changes == 4
        # transitions happen at the corner azimuths (diagonal directions)
        az = column_azimuths(geom.width)
        for c in switches:
            corner = (az[c] + az[c + 1]) / 2
            assert min(abs(corner - a) for a in
                       (-3 * np.pi / 4, -np.pi / 4, np.pi / 4, 3 * np.pi / 4)) < 0.02

    def test_only_own_room_walls(self, geom):
        scene = make_floor(3)
        for cam in scene.cameras:
            room_idx = scene.containing_room(cam.position)
            _, assignment = render_boundary(scene, cam, geom)
            assert np.all(scene.walls.room_ids[assignment.wall_ids] == room_idx)

    def test_camera_outside_rejected(self, square_scene, geom):
        outside = CameraPose(position=np.array([5.0, 5.0]), rotation=0.0,
                             height=0.35, id=9)
        with pytest.raises(RenderError):
            render_boundary(square_scene, outside, geom)

    def test_camera_on_wall_rejected(self, square_scene, geom):
        on_wall = CameraPose(position=np.array([0.5 - 1e-9, 0.0]), rotation=0.0,
                             height=0.35, id=9)
        with pytest.raises(RenderError):
            render_boundary(square_scene, on_wall, geom)

    def test_nonconvex_room_occlusion(self, geom):
        # L-shaped room: the notch hides part of the far wall
        verts = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]],
                         dtype=float)
        cam = CameraPose(position=np.array([0.4, 0.4]), rotation=0.0,
                         height=0.3, id=0)
        scene = Scene(rooms=(RoomPolygon(verts),), cameras=(cam,))
        boundary, assignment = render_boundary(scene, cam, geom)
        assert np.all(boundary.valid)
        # the notch walls (ids 2, 3) must be visible from inside the L
        assert {2, 3} <= set(assignment.wall_ids.tolist())


class TestProjectAssigned:
    def test_render_project_bit_exact(self, geom):
        for seed in range(5):
            scene = make_floor(seed)
            for cam in scene.cameras:
                boundary, assignment = render_boundary(scene, cam, geom)
                reproj = project_assigned_boundary(scene, cam, assignment, geom)
                assert np.array_equal(boundary.rows, reproj.rows)
                assert np.array_equal(boundary.valid, reproj.valid)

    def test_no_occlusion_check(self, geom):
        # assigning a far wall straight through a near one still projects it
        verts = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]],
                         dtype=float)
        cam = CameraPose(position=np.array([0.4, 0.4]), rotation=0.0,
                         height=0.3, id=0)
        scene = Scene(rooms=(RoomPolygon(verts),), cameras=(cam,))
        _, assignment = render_boundary(scene, cam, geom)
        far_wall = 1  # x = 2 line, partially occluded by the notch
        forced = ColumnAssignment(camera_id=0,
                                  wall_ids=np.full(geom.width, far_wall))
        reproj = project_assigned_boundary(scene, cam, forced, geom)
        # columns aiming at +x hit it in front; -x columns are behind -> invalid
        assert reproj.valid[383]
        assert not reproj.valid[127]

    def test_wall_moved_away_lowers_row(self, geom, square_scene):
        cam = square_scene.cameras[0]
        boundary, assignment = render_boundary(square_scene, cam, geom)
        # move wall 0 outward along its inward normal (negative shift)
        offsets = np.array(square_scene.walls.offsets)
        wall = 0
        offsets[wall] -= 0.05
        moved = square_scene.with_geometry(offsets, None)
        reproj = project_assigned_boundary(moved, cam, assignment, geom)
        cols = assignment.wall_ids == wall
        assert np.all(reproj.rows[cols] < boundary.rows[cols])

    def test_all_sentinel_all_invalid(self, square_scene, geom):
        empty = ColumnAssignment(camera_id=0,
                                 wall_ids=np.full(geom.width, -1))
        reproj = project_assigned_boundary(square_scene, square_scene.cameras[0],
                                           empty, geom)
        assert not np.any(reproj.valid)
        assert np.all(np.isnan(reproj.rows))

    def test_out_of_range_wall_id_rejected(self, square_scene, geom):
        bad = ColumnAssignment(camera_id=0, wall_ids=np.full(geom.width, 99))
        with pytest.raises(SceneError):
            project_assigned_boundary(square_scene, square_scene.cameras[0],
                                      bad, geom)


class TestBoundarySidecar:
    def test_round_trip(self, square_scene, geom):
        boundary, assignment = render_boundary(square_scene,
                                               square_scene.cameras[0], geom)
        data = boundary_to_dict(boundary, assignment)
        assert set(data) == {"camera_id", "rows", "walls"}
        b2, a2 = boundary_from_dict(data)
        assert np.array_equal(boundary.rows, b2.rows)
        assert np.array_equal(assignment.wall_ids, a2.wall_ids)

    def test_invalid_columns_null(self):
        rows = np.array([190.0, np.nan, 200.0])
        boundary = BoundaryObservation(camera_id=1, rows=rows,
                                       valid=np.array([True, False, True]))
        assignment = ColumnAssignment(camera_id=1,
                                      wall_ids=np.array([0, -1, 2]))
        data = boundary_to_dict(boundary, assignment)
        assert data["rows"][1] is None
        assert data["walls"][1] == -1
        b2, a2 = boundary_from_dict(data)
        assert not b2.valid[1] and np.isnan(b2.rows[1])
