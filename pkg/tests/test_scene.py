"""Scene model: Hesse walls, dual representation, normalization, validation."""

import json

import numpy as np
import pytest

from planar_ba.scene import (
    CameraPose,
    RoomPolygon,
    Scene,
    SceneError,
    load_scene,
    normalize_scene,
    offsets_from_vertices,
    save_scene,
    scene_from_dict,
    scene_to_dict,
    validate_scene,
    vertices_from_offsets,
    wall_from_segment,
)

from conftest import make_floor, random_simple_rectilinear

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


class TestWallFromSegment:
    def test_axis_aligned(self):
        w = wall_from_segment((0, 0), (2, 0))
        np.testing.assert_allclose(w.direction, [1, 0])
        np.testing.assert_allclose(w.normal, [0, 1])
        assert w.offset == 0.0

    def test_vertical(self):
        w = wall_from_segment((1, 1), (1, 3))
        np.testing.assert_allclose(w.direction, [0, 1])
        np.testing.assert_allclose(w.normal, [-1, 0])
        assert w.offset == -1.0

    def test_diagonal(self):
        w = wall_from_segment((0, 0), (1, 1))
        s = np.sqrt(2) / 2
        np.testing.assert_allclose(w.direction, [s, s])
        np.testing.assert_allclose(w.normal, [-s, s])
        assert abs(w.offset) < 1e-12

    def test_endpoints_on_line(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = rng.uniform(-5, 5, (2, 2))
            if np.linalg.norm(b - a) < 1e-6:
                continue
            w = wall_from_segment(a, b)
            assert abs(np.linalg.norm(w.direction) - 1.0) < 1e-12
            np.testing.assert_allclose(w.normal, [-w.direction[1], w.direction[0]])
            assert abs(w.normal @ a - w.offset) < 1e-12
            assert abs(w.normal @ b - w.offset) < 1e-12

    def test_degenerate_rejected(self):
        with pytest.raises(SceneError):
            wall_from_segment((1, 1), (1, 1))


class TestDualRepresentation:
    def test_unit_square_offsets(self):
        # CCW square with CCW (+90 deg) normals pointing into the room
        poly = RoomPolygon(UNIT_SQUARE)
        np.testing.assert_allclose(offsets_from_vertices(poly), [0, -1, -1, 0],
                                   atol=1e-12)

    def test_unit_square_reconstruction(self):
        poly = RoomPolygon(UNIT_SQUARE)
        verts = vertices_from_offsets(poly.directions(), offsets_from_vertices(poly))
        np.testing.assert_allclose(verts, UNIT_SQUARE, atol=1e-12)

    def test_offset_shift_translates(self):
        # a rigid translation t shifts offset k by exactly normal_k . t
        poly = RoomPolygon(UNIT_SQUARE)
        dirs = poly.directions()
        normals = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)
        offs = offsets_from_vertices(poly)
        t = np.array([0.5, 0.5])
        verts = vertices_from_offsets(dirs, offs + normals @ t)
        assert len(verts) == 4
        np.testing.assert_allclose(verts, UNIT_SQUARE + t, atol=1e-12)

    def test_round_trip_random_polygons(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            poly = RoomPolygon(random_simple_rectilinear(rng))
            dirs = poly.directions()
            offs = offsets_from_vertices(poly)
            verts = vertices_from_offsets(dirs, offs)
            np.testing.assert_allclose(verts, poly.vertices, atol=1e-9)
            # each reconstructed vertex satisfies both incident line equations
            normals = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)
            for k in range(len(verts)):
                assert abs(normals[k] @ verts[k] - offs[k]) < 1e-9
                assert abs(normals[k - 1] @ verts[k] - offs[k - 1]) < 1e-9

    def test_translation_covariance(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            v = random_simple_rectilinear(rng)
            t = rng.uniform(-3, 3, 2)
            poly = RoomPolygon(v)
            moved = RoomPolygon(v + t)
            dirs = poly.directions()
            normals = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)
            shift = offsets_from_vertices(moved) - offsets_from_vertices(poly)
            np.testing.assert_allclose(shift, normals @ t, atol=1e-9)

    def test_wall_count_equals_vertex_count(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            poly = RoomPolygon(random_simple_rectilinear(rng))
            assert len(poly.walls) == len(poly.vertices)

    def test_parallel_consecutive_rejected(self):
        dirs = np.array([[1, 0], [1, 0], [0, 1]], dtype=float)
        with pytest.raises(SceneError):
            vertices_from_offsets(dirs, np.zeros(3))

    def test_too_few_walls_rejected(self):
        with pytest.raises(SceneError):
            vertices_from_offsets(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))


class TestNormalize:
    def test_square_floor_scale(self):
        room = RoomPolygon(np.array([[0, 0], [10, 0], [10, 10], [0, 10]], dtype=float))
        cam = CameraPose(position=np.array([5.0, 5.0]), rotation=0.1, height=1.5, id=0)
        scene, t = normalize_scene(Scene(rooms=(room,), cameras=(cam,)))
        assert t.scale == pytest.approx(2.0 / 10.5)
        np.testing.assert_allclose(scene.rooms[0].vertices.mean(axis=0), [0, 0],
                                   atol=1e-12)
        np.testing.assert_allclose(scene.cameras[0].position, [0, 0], atol=1e-12)
        assert scene.cameras[0].height == pytest.approx(1.5 * 2.0 / 10.5)
        assert scene.cameras[0].rotation == 0.1

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            room = RoomPolygon(random_simple_rectilinear(rng) * rng.uniform(3, 30))
            scene, t = normalize_scene(Scene(rooms=(room,)))
            back = t.invert(scene.rooms[0].vertices)
            np.testing.assert_allclose(back, room.vertices, atol=1e-9)

    def test_all_coordinates_in_unit_box(self):
        for seed in range(10):
            scene = make_floor(seed)
            for room in scene.rooms:
                assert np.all(np.abs(room.vertices) <= 1.0)

    def test_zero_extent_rejected(self):
        room = RoomPolygon(np.array([[0, 0], [0, 0], [0, 0]], dtype=float))
        with pytest.raises(SceneError):
            normalize_scene(Scene(rooms=(room,)))

    def test_empty_scene_rejected(self):
        with pytest.raises(SceneError):
            normalize_scene(Scene(rooms=()))


class TestValidate:
    def test_valid_unit_square(self, square_scene):
        assert validate_scene(square_scene).ok

    def test_open_loop(self):
        bad = Scene(rooms=(RoomPolygon(np.array([[0, 0], [1, 0]], dtype=float)),))
        report = validate_scene(bad)
        assert any("open loop" in m for m in report.messages())

    def test_capacity_violation(self):
        rooms = []
        for i in range(76):  # 304 walls > 300
            base = np.array([2.0 * i, 0.0])
            rooms.append(RoomPolygon(UNIT_SQUARE + base, room_id=i))
        report = validate_scene(Scene(rooms=tuple(rooms)))
        assert any("capacity" in m for m in report.messages())

    def test_parallel_consecutive_reported(self):
        v = np.array([[0, 0], [1, 0], [2, 0], [2, 1], [0, 1]], dtype=float)
        report = validate_scene(Scene(rooms=(RoomPolygon(v),)))
        assert any("parallel" in m for m in report.messages())

    def test_camera_outside_reported(self):
        room = RoomPolygon(UNIT_SQUARE)
        cam = CameraPose(position=np.array([5.0, 5.0]), rotation=0.0, height=0.3, id=0)
        report = validate_scene(Scene(rooms=(room,), cameras=(cam,)))
        assert any("camera" in m for m in report.messages())
        assert not report.structural()


class TestSceneContainer:
    def test_wall_enumeration_room_major(self):
        scene = make_floor(0)
        w = scene.walls
        assert w.count == sum(len(r.vertices) for r in scene.rooms)
        # room-major, edge-minor global ids
        gid = 0
        for r_idx, room in enumerate(scene.rooms):
            for k in range(len(room.vertices)):
                assert w.room_ids[gid] == r_idx
                assert w.vertex_ids[gid] == k
                gid += 1

    def test_wall_arrays_consistent(self):
        scene = make_floor(1)
        w = scene.walls
        np.testing.assert_allclose(np.linalg.norm(w.directions, axis=1), 1.0,
                                   atol=1e-12)
        np.testing.assert_allclose(
            w.normals, np.stack([-w.directions[:, 1], w.directions[:, 0]], axis=1))
        np.testing.assert_allclose(np.einsum("ij,ij->i", w.normals, w.starts),
                                   w.offsets, atol=1e-12)

    def test_with_geometry_preserves_directions(self):
        scene = make_floor(2)
        rng = np.random.default_rng(0)
        new_offsets = scene.walls.offsets + rng.normal(0, 0.01, scene.n_walls)
        moved = scene.with_geometry(new_offsets, None)
        assert np.array_equal(moved.walls.directions, scene.walls.directions)
        np.testing.assert_allclose(moved.walls.offsets, new_offsets)
        # vertices satisfy the new line equations
        for r_idx, room in enumerate(moved.rooms):
            sl = moved.walls.room_slice(r_idx)
            n = moved.walls.normals[sl]
            b = moved.walls.offsets[sl]
            v = room.vertices
            np.testing.assert_allclose(np.einsum("ij,ij->i", n, v), b, atol=1e-9)

    def test_immutable_arrays(self, square_scene):
        with pytest.raises(ValueError):
            square_scene.walls.offsets[0] = 9.9
        with pytest.raises(ValueError):
            square_scene.rooms[0].vertices[0, 0] = 5.0


class TestSceneJson:
    def test_round_trip(self, tmp_path):
        scene = make_floor(4)
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        loaded = load_scene(path)
        assert len(loaded.rooms) == len(scene.rooms)
        for a, b in zip(loaded.rooms, scene.rooms):
            np.testing.assert_allclose(a.vertices, b.vertices)
        for a, b in zip(loaded.cameras, scene.cameras):
            np.testing.assert_allclose(a.position, b.position)
            assert a.rotation == b.rotation and a.height == b.height
        assert loaded.norm_transform.scale == scene.norm_transform.scale

    def test_byte_determinism(self, tmp_path):
        scene = make_floor(5)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_scene(scene, p1)
        save_scene(scene, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_format_guard(self):
        with pytest.raises(SceneError):
            scene_from_dict({"format": "something-else", "rooms": []})

    def test_cw_input_rewound(self):
        data = scene_to_dict(Scene(rooms=(RoomPolygon(UNIT_SQUARE),)))
        data["rooms"][0]["vertices"] = data["rooms"][0]["vertices"][::-1]
        loaded = scene_from_dict(data)
        from planar_ba.scene import polygon_area
        assert polygon_area(loaded.rooms[0].vertices) > 0

    def test_doors_preserved(self, tmp_path):
        door = RoomPolygon(np.array([[0.4, 0], [0.6, 0], [0.6, 0.02], [0.4, 0.02]]),
                           "door")
        scene = Scene(rooms=(RoomPolygon(UNIT_SQUARE),), doors=(door,))
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        loaded = load_scene(path)
        assert len(loaded.doors) == 1
        np.testing.assert_allclose(loaded.doors[0].vertices, door.vertices)

    def test_bad_json_rejected(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(SceneError):
            load_scene(path)
