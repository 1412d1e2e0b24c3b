"""Tests for pose blending and shadow-to-shadow sequences."""
import numpy as np
import pytest

from app.assets import bundled_target
from app.exceptions import ResolutionMismatchError
from app.hand.limits import Handedness, joint_index
from app.hand.rig import pose_mesh
from app.hand.rotations import axis_angle_quat, quat_multiply, rotation_angle
from app.interpolation import blend_frames, blend_params, interpolate, optimize_pair
from app.losses import HAND_ORDER
from app.rendering import GrayImage, intersection_over_union, render_silhouette_hard, soft_silhouette
from app.schemas import Camera, OptimConfig, RenderSettings

from .conftest import facing_pose


def bent(degrees: float, t=(0.0, -0.085, -0.45)):
    theta = np.zeros((15, 3))
    theta[joint_index("middle", 2), 2] = np.radians(degrees)
    return facing_pose(Handedness.LEFT, t=t, theta=theta)


@pytest.fixture
def left_only(left_rig):
    return {Handedness.LEFT: left_rig}


class TestBlending:
    """Pose blending."""

    def test_midpoint_angles_and_translation(self, left_rig):
        a, b = bent(0.0), bent(40.0, t=(0.1, -0.085, -0.45))
        mid = blend_params(a, b, 0.5, left_rig)
        assert np.degrees(mid.theta[joint_index("middle", 2), 2]) == pytest.approx(20.0)
        np.testing.assert_allclose(mid.t, [0.05, -0.085, -0.45])

    def test_rotation_takes_short_arc(self, left_rig):
        a = bent(0.0)
        turn = axis_angle_quat([0.0, 1.0, 0.0], np.radians(60.0))
        b = facing_pose(Handedness.LEFT)
        b = type(b)(theta=b.theta, q=-quat_multiply(turn, a.q), t=b.t)
        mid = blend_params(a, b, 0.5, left_rig)
        assert rotation_angle(a.q, mid.q) == pytest.approx(np.radians(30.0))

    def test_result_is_clamped(self, left_rig):
        a = bent(0.0)
        b = bent(40.0)
        mid = blend_params(a, b, 0.25, left_rig)
        assert left_rig.limits.contains(mid.theta)


class TestFrames:
    """Sequences of blended poses."""

    def test_endpoints_are_the_inputs(self, left_only):
        a, b = {Handedness.LEFT: bent(0.0)}, {Handedness.LEFT: bent(40.0)}
        frames = blend_frames(a, b, 4, left_only)
        assert len(frames) == 5
        assert frames[0] is a and frames[-1] is b

    def test_identical_endpoints(self, left_only):
        a = {Handedness.LEFT: bent(25.0)}
        frames = blend_frames(a, {Handedness.LEFT: bent(25.0)}, 2, left_only)
        for frame in frames:
            np.testing.assert_array_equal(frame[Handedness.LEFT].theta, a[Handedness.LEFT].theta)
            np.testing.assert_allclose(frame[Handedness.LEFT].q, a[Handedness.LEFT].q, atol=1e-15)

    def test_single_step_is_endpoints_only(self, left_only):
        a, b = {Handedness.LEFT: bent(0.0)}, {Handedness.LEFT: bent(40.0)}
        sequence = interpolate(a, b, 1, rigs=left_only)
        assert sequence.frames == [a, b]
        assert sequence.alphas == [0.0, 1.0]
        assert not sequence.refined

    def test_alphas_and_pen_terms(self, left_only):
        a, b = {Handedness.LEFT: bent(0.0)}, {Handedness.LEFT: bent(40.0)}
        sequence = interpolate(a, b, 4, rigs=left_only)
        assert sequence.alphas == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert sequence.steps == 4
        assert sequence.pen_terms == [0.0] * 5

    def test_zero_steps(self, left_only):
        a = {Handedness.LEFT: bent(0.0)}
        with pytest.raises(ValueError):
            blend_frames(a, a, 0, left_only)

    def test_hands_must_match(self, rigs):
        with pytest.raises(ValueError):
            blend_frames({Handedness.LEFT: bent(0.0)}, {Handedness.RIGHT: facing_pose(Handedness.RIGHT)}, 2, rigs)


class TestRefinement:
    """Per-frame optimization against both targets."""

    def test_requires_targets(self, left_only):
        a, b = {Handedness.LEFT: bent(0.0)}, {Handedness.LEFT: bent(40.0)}
        with pytest.raises(ValueError):
            interpolate(a, b, 2, refine=True, rigs=left_only)

    def test_same_target_barely_moves(self, left_rig, left_only):
        """With I_A = I_B and matching endpoints, refined angles stay within 1 degree on average."""
        camera = Camera(resolution=(32, 32))
        render = RenderSettings(sigma=1e-3)
        pose = {Handedness.LEFT: bent(20.0)}
        target = soft_silhouette([pose_mesh(left_rig, pose[Handedness.LEFT])], camera, render)
        sequence = interpolate(pose, {Handedness.LEFT: bent(20.0)}, 2, refine=True, rigs=left_only,
                               targets=[target, target], camera=camera, render=render, iterations=10, workers=1)
        assert sequence.refined
        moved = sequence.frames[1][Handedness.LEFT].theta - pose[Handedness.LEFT].theta
        assert np.degrees(np.mean(np.abs(moved))) < 1.0
        assert sequence.frames[0] is pose

    def test_pair_with_identical_targets_barely_moves(self, left_rig, left_only):
        """I_A = I_B: fitting B from A's result adds under 1 degree of mean joint motion."""
        camera = Camera(resolution=(32, 32))
        render = RenderSettings(sigma=1e-3, anneal=False)
        pose = {Handedness.LEFT: bent(20.0)}
        target = soft_silhouette([pose_mesh(left_rig, pose[Handedness.LEFT])], camera, render)
        fit = optimize_pair(target, target, left_only, OptimConfig(iterations=20, restarts=1), init=pose,
                            camera=camera, render=render, workers=1)
        assert fit.record_b.converged
        moved = fit.params_b[Handedness.LEFT].theta - fit.params_a[Handedness.LEFT].theta
        assert np.degrees(np.mean(np.abs(moved))) < 1.0

    def test_pair_resolution_checked(self, left_only):
        with pytest.raises(ResolutionMismatchError):
            optimize_pair(GrayImage.blank((32, 32)), GrayImage.blank((16, 16)), left_only, OptimConfig(iterations=1))


@pytest.mark.slow
class TestRabbitToBird:
    """Two hands morphing between the bundled rabbit and bird shadows."""

    def test_refined_sequence(self, rigs):
        camera = Camera(resolution=(128, 128))
        render = RenderSettings()
        targets = [bundled_target("rabbit", camera.resolution), bundled_target("bird", camera.resolution)]
        fit = optimize_pair(targets[0], targets[1], rigs, OptimConfig(), camera=camera, render=render, workers=1)
        for params, target in zip((fit.params_a, fit.params_b), targets):
            rendered = render_silhouette_hard([pose_mesh(rigs[h], params[h]) for h in HAND_ORDER], camera)
            assert intersection_over_union(rendered, target) > 0.9

        sequence = interpolate(fit.params_a, fit.params_b, 30, refine=True, rigs=rigs, targets=targets,
                               camera=camera, render=render, workers=1)
        assert len(sequence) == 31
        assert sequence.frames[0] is fit.params_a
        assert sequence.frames[30] is fit.params_b
        for frame, pen in zip(sequence.frames[1:-1], sequence.pen_terms[1:-1]):
            assert pen < 1e-6
            for hand, params in frame.items():
                assert rigs[hand].limits.contains(params.theta)
