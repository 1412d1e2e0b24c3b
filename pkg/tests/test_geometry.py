"""Tests for meshes, the BVH, penetration queries and OBJ files."""
import numpy as np
import pytest

from app.exceptions import MeshError, ObjParseError, RenderOnlyMeshError
from app.geometry import (
    box_mesh,
    build_bvh,
    detect_penetrations,
    icosphere,
    load_obj,
    nearest_surface_point,
    parse_obj,
    point_inside,
    points_inside,
    unit_square_pair,
    write_obj,
)
from app.geometry.bvh import (
    RAY_DIRECTION,
    closest_points_on_triangles,
    nearest_surface_points,
    ray_crossings,
    winding_along_ray,
)
from app.geometry.mesh import TriMesh


@pytest.fixture(scope="module")
def centered_cube():
    return box_mesh((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))


@pytest.fixture(scope="module")
def sphere():
    return icosphere(0.5, subdivisions=3)


def brute_force_nearest(mesh, p):
    corners = mesh.triangle_points
    q = np.repeat(np.asarray(p, dtype=float)[None], len(corners), axis=0)
    closest = closest_points_on_triangles(q, corners[:, 0], corners[:, 1], corners[:, 2])
    return float(np.min(np.linalg.norm(closest - q, axis=1)))


class TestTriMesh:
    """Construction and structural queries."""

    def test_cube_is_watertight(self, centered_cube):
        assert centered_cube.watertight
        assert centered_cube.triangle_count == 12

    def test_open_square_is_render_only(self):
        square = unit_square_pair()
        assert not square.watertight
        assert square.open_edge_count == 4

    def test_index_out_of_range(self):
        with pytest.raises(MeshError):
            TriMesh(np.zeros((3, 3)), [[0, 1, 3]])

    def test_degenerate_triangle(self):
        """Collinear corners are rejected and the triangle is named."""
        with pytest.raises(MeshError) as exc:
            TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
        assert exc.value.details["triangle"] == 0

    def test_flipped_face_breaks_watertightness(self, centered_cube):
        triangles = centered_cube.triangles.copy()
        triangles[0] = triangles[0, ::-1]
        assert not TriMesh(centered_cube.vertices, triangles).watertight

    def test_icosphere_is_closed(self, sphere):
        assert sphere.watertight
        np.testing.assert_allclose(np.linalg.norm(sphere.vertices, axis=1), 0.5)


class TestBvh:
    """Tree construction."""

    def test_single_triangle_is_one_leaf(self):
        mesh = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        bvh = build_bvh(mesh)
        assert bvh.node_count == 1
        assert bvh.is_leaf[0]
        np.testing.assert_array_equal(bvh.leaf_triangles(0), [0])

    def test_root_box_of_unit_cube(self):
        bvh = build_bvh(box_mesh())
        np.testing.assert_array_equal(bvh.box_min[0], [0, 0, 0])
        np.testing.assert_array_equal(bvh.box_max[0], [1, 1, 1])

    def test_leaves_partition_triangles(self, sphere):
        """Every triangle sits in exactly one leaf."""
        bvh = build_bvh(sphere)
        leaves = np.flatnonzero(bvh.is_leaf)
        owned = np.concatenate([bvh.leaf_triangles(n) for n in leaves])
        np.testing.assert_array_equal(np.sort(owned), np.arange(sphere.triangle_count))

    def test_empty_mesh(self):
        with pytest.raises(MeshError):
            build_bvh(TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int)))


class TestInside:
    """Inside/outside classification by ray crossings."""

    def test_cube_center(self, centered_cube):
        bvh = build_bvh(centered_cube)
        assert point_inside(centered_cube, bvh, (0.0, 0.0, 0.0))
        assert not point_inside(centered_cube, bvh, (2.0, 0.0, 0.0))

    def test_random_points_against_sphere(self, sphere):
        """Agrees with |p| < r away from the tessellation band."""
        rng = np.random.default_rng(11)
        points = rng.uniform(-1.0, 1.0, (1000, 3))
        radius = np.linalg.norm(points, axis=1)
        # inscribed radius of the subdivided icosphere is above 0.49
        clear = (radius < 0.49) | (radius > 0.5)
        inside = points_inside(sphere, build_bvh(sphere), points)
        np.testing.assert_array_equal(inside[clear], radius[clear] < 0.49)

    def test_crossings_match_brute_force_on_soup(self):
        """BVH-pruned ray crossings equal a scan over all 500 triangles of a random soup."""
        rng = np.random.default_rng(17)
        centers = rng.uniform(-1.0, 1.0, (500, 1, 3))
        corners = centers + rng.uniform(-0.2, 0.2, (500, 3, 3))
        soup = TriMesh(corners.reshape(-1, 3), np.arange(1500).reshape(500, 3), check=False)
        points = rng.uniform(-1.2, 1.2, (300, 3))

        winding = winding_along_ray(soup, build_bvh(soup), points)
        expected = [
            np.sum(ray_crossings(np.repeat(p[None], 500, axis=0), RAY_DIRECTION, soup.triangle_points))
            for p in points
        ]
        assert np.any(winding != 0.0)
        np.testing.assert_array_equal(winding, expected)

    def test_point_on_axis_of_symmetry(self, centered_cube):
        """Points aligned with edges still classify correctly."""
        bvh = build_bvh(centered_cube)
        assert point_inside(centered_cube, bvh, (0.0, 0.25, 0.25))
        assert not point_inside(centered_cube, bvh, (-1.0, 0.0, 0.0))


class TestNearestPoint:
    """Closest surface point queries."""

    def test_point_on_vertex(self, centered_cube):
        bvh = build_bvh(centered_cube)
        closest, distance = nearest_surface_point(centered_cube, bvh, centered_cube.vertices[3])
        assert distance == 0.0
        np.testing.assert_array_equal(closest, centered_cube.vertices[3])

    def test_above_square(self):
        square = unit_square_pair()
        closest, distance = nearest_surface_point(square, build_bvh(square), (0.0, 0.0, 2.0))
        assert distance == pytest.approx(2.0)
        np.testing.assert_allclose(closest, [0.0, 0.0, 0.0], atol=1e-12)

    def test_matches_brute_force(self, sphere):
        rng = np.random.default_rng(5)
        points = rng.uniform(-1.0, 1.0, (200, 3))
        _, distances, _ = nearest_surface_points(sphere, build_bvh(sphere), points)
        expected = [brute_force_nearest(sphere, p) for p in points]
        np.testing.assert_allclose(distances, expected, atol=1e-9)


class TestPenetrations:
    """Intruding vertices between closed meshes."""

    def test_far_apart(self):
        assert detect_penetrations(box_mesh(), box_mesh((3, 3, 3), (4, 4, 4))) == []

    def test_nested_cube(self):
        """All eight corners of a small cube lie inside a large one."""
        inner = box_mesh((0.4, 0.4, 0.4), (0.6, 0.6, 0.6))
        hits = detect_penetrations(inner, box_mesh())
        assert sorted(h.vertex_index for h in hits) == list(range(8))
        for hit in hits:
            assert hit.depth == pytest.approx(0.4)

    def test_overlapping_spheres(self):
        """Depth of each intruding vertex is its distance to the host sphere surface."""
        center = np.array([1.5, 0.0, 0.0])
        host = icosphere(1.0, subdivisions=4)
        intruder = icosphere(1.0, subdivisions=4, center=center)
        hits = detect_penetrations(intruder, host)
        assert hits
        # the polyhedral host sits at most this far inside the true sphere
        tessellation = 1.0 - np.min(np.abs(np.einsum("ij,ij->i",
                                                     host.triangle_points.mean(axis=1),
                                                     _unit_normals(host))))
        for hit in hits:
            v = intruder.vertices[hit.vertex_index]
            expected = 1.0 - np.linalg.norm(v)
            assert abs(hit.depth - expected) <= tessellation + 1e-6

    def test_open_host_rejected(self):
        with pytest.raises(RenderOnlyMeshError):
            detect_penetrations(box_mesh(), unit_square_pair(0.5))


def _unit_normals(mesh):
    p = mesh.triangle_points
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


class TestObj:
    """OBJ parsing and writing."""

    def test_quad_is_split(self):
        mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        assert mesh.triangle_count == 2
        np.testing.assert_array_equal(mesh.triangles, [[0, 1, 2], [0, 2, 3]])

    def test_zero_index(self):
        """Index 0 is an error that names the line."""
        with pytest.raises(ObjParseError) as exc:
            parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", "tri.obj")
        assert exc.value.line_number == 4
        assert "tri.obj:4" in exc.value.message

    def test_slash_and_negative_indices(self):
        mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2/5/1 -1\n")
        np.testing.assert_array_equal(mesh.triangles, [[0, 1, 2]])

    def test_missing_vertex(self):
        with pytest.raises(ObjParseError):
            parse_obj("v 0 0 0\nf 1 2 3\n")

    def test_file_round_trip(self, tmp_path, centered_cube):
        path = tmp_path / "cube.obj"
        write_obj(centered_cube, path)
        loaded = load_obj(path)
        np.testing.assert_array_equal(loaded.triangles, centered_cube.triangles)
        np.testing.assert_allclose(loaded.vertices, centered_cube.vertices, atol=1e-6)
        assert b"\r\n" not in path.read_bytes()
