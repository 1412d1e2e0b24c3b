"""Tests for projection, the soft and hard rasterizers and image helpers."""
import numpy as np
import pytest

from app.autodiff import Tape, backward
from app.exceptions import AssetIOError, MeshError, ResolutionMismatchError
from app.geometry.mesh import PosedMesh, TriMesh
from app.hand.limits import Handedness
from app.hand.rig import pose_mesh
from app.rendering import (
    GrayImage,
    compose_shadow,
    intersection_over_union,
    pixel_centers,
    project,
    render_silhouette_hard,
    render_silhouette_soft,
    soft_silhouette,
    threshold,
)
from app.rendering import rasterizer
from app.rendering.image import check_resolution
from app.schemas import Camera, Light, RenderSettings

from .conftest import facing_pose


@pytest.fixture
def big_triangle():
    return TriMesh([[-0.3, -0.3, -1.0], [0.3, -0.3, -1.0], [0.0, 0.3, -1.0]], [[0, 1, 2]])


def pixel_at(camera, x_ndc, y_ndc):
    """(row, col) of the pixel containing an NDC point."""
    height, width = camera.resolution
    return int((1.0 - y_ndc) * height / 2.0), int((x_ndc + 1.0) * width / 2.0)


class TestProjection:
    """Perspective projection."""

    def test_optical_axis(self):
        tape = Tape()
        x, y, depth = project(Camera(), (0.0, 0.0, -1.0), tape).value
        assert (x, y) == (0.0, 0.0)
        assert depth == 1.0

    def test_edge_of_frame(self):
        """A point at tan(fov/2) * d * aspect maps to x = 1."""
        camera = Camera(resolution=(120, 160))
        d = 2.0
        point = (camera.tan_half_fov * d * camera.aspect, 0.0, -d)
        x, y, _ = project(camera, point, Tape()).value
        assert x == pytest.approx(1.0)
        assert y == 0.0

    def test_gradient_wrt_depth(self):
        """d x_ndc / d z = x / (z^2 k) for a point off axis."""
        camera = Camera()
        tape = Tape()
        p = tape.leaf(np.array([0.2, 0.0, -1.0]))
        projected = project(camera, p, tape)
        grads = backward(tape, tape.apply("sum", projected * np.array([1.0, 0.0, 0.0])))
        k = camera.tan_half_fov * camera.aspect
        np.testing.assert_allclose(grads[p], [1.0 / k, 0.0, 0.2 / k])

    def test_pixel_centers(self):
        xs, ys = pixel_centers(Camera(resolution=(2, 4)))
        np.testing.assert_allclose(xs, [-0.75, -0.25, 0.25, 0.75])
        np.testing.assert_allclose(ys, [0.5, -0.5])


class TestSoftRasterizer:
    """Differentiable silhouettes."""

    def test_empty_and_covered_pixels(self, big_triangle, small_camera):
        image = soft_silhouette([big_triangle], small_camera, RenderSettings(sigma=1e-4)).pixels
        assert image[0, 0] < 1e-3
        k = small_camera.tan_half_fov
        row, col = pixel_at(small_camera, 0.0, -0.1 / k)
        assert image[row, col] >= 1.0 - 1e-3

    def test_background_level(self, big_triangle, small_camera):
        image = soft_silhouette([big_triangle], small_camera, RenderSettings(background=0.25)).pixels
        assert image[0, 0] == pytest.approx(0.25)
        assert image.max() <= 1.0

    def test_matches_hard_at_small_sigma(self, left_rig):
        """The hand at 256x256: mean |soft - hard| < 0.01 once sigma is tiny."""
        camera = Camera(resolution=(256, 256))
        mesh = pose_mesh(left_rig, facing_pose(Handedness.LEFT))
        hard = render_silhouette_hard([mesh], camera).pixels
        soft = soft_silhouette([mesh], camera, RenderSettings(sigma=1e-7)).pixels
        assert hard.sum() > 500
        assert np.mean(np.abs(soft - hard)) < 0.01

    def test_larger_sigma_blurs(self, big_triangle, small_camera):
        sharp = soft_silhouette([big_triangle], small_camera, RenderSettings(), sigma=1e-5).pixels
        blurry = soft_silhouette([big_triangle], small_camera, RenderSettings(), sigma=1e-2).pixels
        assert np.count_nonzero((blurry > 0.01) & (blurry < 0.99)) > np.count_nonzero((sharp > 0.01) & (sharp < 0.99))

    def test_culled_behind_camera(self, big_triangle, small_camera):
        behind = TriMesh(big_triangle.vertices * [1.0, 1.0, -1.0], big_triangle.triangles)
        image = soft_silhouette([behind], small_camera, RenderSettings()).pixels
        assert not image.any()

    def test_area_gradient_points_outward(self, big_triangle, small_camera):
        """Pushing the corners away from the centroid grows the silhouette."""
        tape = Tape()
        vertices = tape.leaf(big_triangle.vertices)
        posed = PosedMesh(vertices, big_triangle.triangles, watertight=False)
        image = render_silhouette_soft([posed], small_camera, RenderSettings(sigma=1e-3), tape)
        grad = backward(tape, tape.apply("sum", image))[vertices]
        assert np.all(np.isfinite(grad))
        outward = big_triangle.vertices - big_triangle.vertices.mean(axis=0)
        outward[:, 2] = 0.0
        assert np.sum(grad * outward) > 0.0

    def test_tile_size_does_not_change_image(self, left_rig, small_camera, monkeypatch):
        mesh = pose_mesh(left_rig, facing_pose(Handedness.LEFT))
        reference = soft_silhouette([mesh], small_camera, RenderSettings(sigma=1e-3)).pixels
        monkeypatch.setattr(rasterizer, "PAIRS_PER_TILE", 97)
        tiled = soft_silhouette([mesh], small_camera, RenderSettings(sigma=1e-3)).pixels
        np.testing.assert_allclose(tiled, reference, atol=1e-12)

    def test_nothing_to_render(self, small_camera):
        with pytest.raises(MeshError):
            soft_silhouette([], small_camera, RenderSettings())


class TestHardRasterizer:
    """Binary silhouettes."""

    def test_two_hands_cover_more(self, rigs, small_camera):
        left = pose_mesh(rigs[Handedness.LEFT], facing_pose(Handedness.LEFT, t=(-0.1, -0.085, -0.5)))
        right = pose_mesh(rigs[Handedness.RIGHT], facing_pose(Handedness.RIGHT, t=(0.1, -0.085, -0.5)))
        one = render_silhouette_hard([left], small_camera)
        both = render_silhouette_hard([left, right], small_camera)
        assert both.pixels.sum() > one.pixels.sum() > 0
        assert set(np.unique(both.pixels)) <= {0.0, 1.0}

    def test_resolution_override(self, big_triangle, small_camera):
        image = render_silhouette_hard([big_triangle], small_camera, resolution=(32, 48))
        assert image.resolution == (32, 48)

    def test_winding_independent(self, big_triangle, small_camera):
        flipped = TriMesh(big_triangle.vertices, big_triangle.triangles[:, ::-1])
        a = render_silhouette_hard([big_triangle], small_camera).pixels
        b = render_silhouette_hard([flipped], small_camera).pixels
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("columns, rows", [(3, 0), (0, -2), (-5, 4)])
    def test_shift_in_image_plane(self, small_camera, columns, rows):
        """Moving a flat shape at fixed depth by whole pixels moves its silhouette by the same pixels."""
        depth = 1.0
        shape = np.array([[-0.213, -0.171, -depth], [0.187, -0.129, -depth], [0.031, 0.243, -depth]])
        height, width = small_camera.resolution
        step_x = 2.0 / width * depth * small_camera.tan_half_fov * small_camera.aspect
        step_y = 2.0 / height * depth * small_camera.tan_half_fov
        moved = shape + [columns * step_x, rows * step_y, 0.0]
        before = render_silhouette_hard([TriMesh(shape, [[0, 1, 2]])], small_camera).pixels
        after = render_silhouette_hard([TriMesh(moved, [[0, 1, 2]])], small_camera).pixels
        assert before.sum() > 0
        # +y in camera space is up, toward row 0
        np.testing.assert_array_equal(after, np.roll(before, (-rows, columns), axis=(0, 1)))


class TestImages:
    """GrayImage and comparisons."""

    def test_range_checked(self):
        with pytest.raises(ValueError):
            GrayImage(np.full((2, 2), 1.5))

    def test_quantization(self):
        image = GrayImage(np.array([[0.0, 0.5, 1.0]]))
        np.testing.assert_array_equal(image.to_uint8(), [[0, 128, 255]])

    def test_pgm_round_trip(self, tmp_path):
        image = GrayImage(np.array([[0.0, 1.0], [1.0, 0.0]]))
        path = tmp_path / "mask.pgm"
        image.save_pgm(path)
        assert path.read_bytes().startswith(b"P5")
        np.testing.assert_array_equal(GrayImage.load(path).pixels, image.pixels)

    def test_png_and_pgm_decode_alike(self, tmp_path):
        image = GrayImage(np.random.default_rng(5).integers(0, 256, size=(7, 9)) / 255.0)
        image.save_pgm(tmp_path / "frame.pgm")
        image.save_png(tmp_path / "frame.png")
        pgm = GrayImage.load(tmp_path / "frame.pgm").to_uint8()
        png = GrayImage.load(tmp_path / "frame.png").to_uint8()
        np.testing.assert_array_equal(pgm, png)
        np.testing.assert_array_equal(pgm, image.to_uint8())

    def test_missing_file(self, tmp_path):
        with pytest.raises(AssetIOError) as exc:
            GrayImage.load(tmp_path / "nope.png")
        assert "nope.png" in exc.value.message

    def test_iou(self):
        a = GrayImage(np.array([[1.0, 1.0], [0.0, 0.0]]))
        b = GrayImage(np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert intersection_over_union(a, b) == pytest.approx(0.5)
        assert intersection_over_union(GrayImage.blank((2, 2)), GrayImage.blank((2, 2))) == 1.0

    def test_threshold(self):
        image = threshold(GrayImage(np.array([[0.49, 0.5]])))
        np.testing.assert_array_equal(image.pixels, [[0.0, 1.0]])

    def test_resolution_mismatch(self):
        with pytest.raises(ResolutionMismatchError):
            check_resolution((4, 4), (4, 5))

    def test_shadow_darkens_covered_pixels(self):
        shadow = compose_shadow(GrayImage(np.array([[0.0, 1.0]])), Light())
        assert shadow.pixels[0, 0] == pytest.approx(0.92)
        assert shadow.pixels[0, 1] == pytest.approx(0.12)
