"""Tests for joint limits, rigs, forward kinematics and rig/params files."""
from dataclasses import replace

import numpy as np
import pytest

from app.autodiff import Tape
from app.exceptions import ConfigError, RigValidationError
from app.hand.limits import Handedness, default_limits, joint_index
from app.hand.rig import (
    BASE_ORIENTATION,
    PARAMS_PER_HAND,
    HandParams,
    HandRig,
    chain_transforms,
    clamp_pose,
    is_clamped,
    make_procedural_hand,
    pose_mesh,
)
from app.hand.rig_io import load_params, load_rig, save_params, save_rig
from app.hand.rotations import matrix_to_quat, quat_to_matrix, rotation_angle, slerp
from app.losses import pose_penetration
from app.optimizer import random_init


class TestJointLimits:
    """The limit table and clamping."""

    def test_right_thumb_first_joint(self):
        assert default_limits(Handedness.RIGHT).bound("thumb", 1) == (-50.0, -10.0, -30.0)

    def test_left_index_second_joint(self):
        assert default_limits(Handedness.LEFT).bound("index", 2) == (0.0, 0.0, 45.0)

    def test_right_middle_third_joint(self):
        assert default_limits(Handedness.RIGHT).bound("middle", 3) == (0.0, 0.0, -45.0)

    def test_row_order(self):
        """Rows run index, middle, little, ring, thumb."""
        assert joint_index("index", 1) == 0
        assert joint_index("middle", 2) == 4
        assert joint_index("thumb", 3) == 14

    def test_unknown_finger(self):
        with pytest.raises(ValueError):
            joint_index("pinky", 1)

    def test_clamp_below_negative_bound(self):
        """Right thumb J.1 theta of -80 degrees clamps to -50."""
        limits = default_limits(Handedness.RIGHT)
        theta = np.zeros((15, 3))
        theta[joint_index("thumb", 1), 0] = np.radians(-80.0)
        clamped = limits.clamp(theta)
        assert np.degrees(clamped[joint_index("thumb", 1), 0]) == pytest.approx(-50.0)

    def test_clamp_above_positive_bound(self):
        """Left index J.1 phi of 40 degrees clamps to 25."""
        limits = default_limits(Handedness.LEFT)
        theta = np.zeros((15, 3))
        theta[joint_index("index", 1), 1] = np.radians(40.0)
        clamped = limits.clamp(theta)
        assert np.degrees(clamped[joint_index("index", 1), 1]) == pytest.approx(25.0)

    def test_zero_bound_locks_channel(self):
        limits = default_limits(Handedness.LEFT)
        theta = np.full((15, 3), 0.3)
        clamped = limits.clamp(theta)
        assert clamped[joint_index("index", 2), 0] == 0.0

    def test_clamp_is_idempotent(self):
        limits = default_limits(Handedness.RIGHT)
        theta = np.random.default_rng(2).uniform(-2.0, 2.0, (15, 3))
        once = limits.clamp(theta)
        np.testing.assert_array_equal(limits.clamp(once), once)
        assert limits.contains(once)

    def test_flexion_sign_mirrors_between_hands(self):
        """Non-thumb z bounds are non-negative on the left hand and non-positive on the right."""
        fingers = [joint_index(f, j) for f in ("index", "middle", "little", "ring") for j in (1, 2, 3)]
        assert np.all(default_limits(Handedness.LEFT).bounds_deg[fingers, 2] >= 0.0)
        assert np.all(default_limits(Handedness.RIGHT).bounds_deg[fingers, 2] <= 0.0)

    def test_inner_range_nested(self):
        limits = default_limits(Handedness.LEFT)
        lo, hi = limits.inner(0.5)
        assert np.all(limits.lower <= lo) and np.all(hi <= limits.upper)


class TestHandParams:
    """Pose containers."""

    def test_parameter_count(self):
        assert PARAMS_PER_HAND == 52
        assert HandParams.rest().vector().shape == (52,)

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            HandParams(theta=np.zeros((14, 3)))

    def test_clamp_pose_normalizes_quaternion(self, left_rig):
        params = HandParams.rest(q=[2.0, 0.0, 0.0, 0.0])
        clamped = clamp_pose(params, left_rig.limits)
        np.testing.assert_array_equal(clamped.q, [1.0, 0.0, 0.0, 0.0])
        assert is_clamped(clamped, left_rig.limits)

    def test_vector_round_trip(self):
        params = HandParams(theta=np.full((15, 3), 0.1), t=[0.1, 0.2, 0.3])
        assert params.with_vector(params.vector()).equals(params)


class TestRigValidation:
    """Structural rig checks."""

    def test_procedural_rigs_are_valid(self, left_rig, right_rig):
        for rig in (left_rig, right_rig):
            assert rig.joint_count == 16
            assert rig.rest_mesh.watertight

    def test_weights_must_sum_to_one(self, left_rig):
        weights = left_rig.skin_weights.copy()
        weights[7] = 0.9
        with pytest.raises(RigValidationError) as exc:
            replace(left_rig, skin_weights=weights)
        assert exc.value.details["vertex"] == 7
        assert "vertex 7" in exc.value.message

    def test_joint_count(self, left_rig):
        with pytest.raises(RigValidationError) as exc:
            replace(left_rig, parents=left_rig.parents[:15], joint_positions=left_rig.joint_positions[:15])
        assert "expected 15 articulated joints" in exc.value.message

    def test_parent_order(self, left_rig):
        parents = left_rig.parents.copy()
        parents[2] = 5
        with pytest.raises(RigValidationError):
            replace(left_rig, parents=parents)

    def test_negative_weight(self, left_rig):
        indices = np.concatenate([left_rig.skin_indices, np.zeros_like(left_rig.skin_indices)], axis=1)
        weights = np.concatenate([left_rig.skin_weights, np.zeros_like(left_rig.skin_weights)], axis=1)
        weights[0] = [1.5, -0.5]
        with pytest.raises(RigValidationError):
            replace(left_rig, skin_indices=indices, skin_weights=weights)

    def test_rest_pose_is_penetration_free(self, left_rig):
        params = {Handedness.LEFT: HandParams.rest()}
        assert pose_penetration(params, {Handedness.LEFT: left_rig}) == 0.0


class TestForwardKinematics:
    """Joint frames and skinning."""

    def test_identity_pose_reproduces_rest(self, left_rig):
        posed = pose_mesh(left_rig, HandParams.rest())
        np.testing.assert_allclose(posed.vertices, left_rig.rest_mesh.vertices, atol=1e-12)

    def test_quarter_turn_chain(self):
        """A child one unit along x under a 90 degree z turn lands on (0, 1, 0)."""
        tape = Tape()
        c, s = np.cos(np.pi / 2), np.sin(np.pi / 2)
        turn = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        local = tape.constant(np.eye(3)[None])
        _, positions = chain_transforms(
            tape, np.array([-1, 0]), np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
            local, tape.constant(turn), tape.constant(np.zeros(3)),
        )
        np.testing.assert_allclose(tape.array(positions)[1], [0.0, 1.0, 0.0], atol=1e-15)

    def test_translation_moves_every_vertex(self, left_rig):
        offset = np.array([0.1, -0.2, -0.5])
        posed = pose_mesh(left_rig, HandParams.rest(t=offset))
        np.testing.assert_allclose(posed.vertices, left_rig.rest_mesh.vertices + offset, atol=1e-12)

    def test_flexion_moves_only_its_finger(self, left_rig):
        theta = np.zeros((15, 3))
        theta[joint_index("index", 2), 2] = np.radians(30.0)
        posed = pose_mesh(left_rig, HandParams(theta=theta)).vertices
        moved = np.any(np.abs(posed - left_rig.rest_mesh.vertices) > 1e-12, axis=1)
        owners = left_rig.skin_indices[moved, 0]
        assert moved.any()
        # index J.2 is joint 2, J.3 is joint 3
        assert set(owners.tolist()) <= {2, 3}

    def test_base_orientation_faces_camera(self, left_rig):
        """Fingers point up (+y) after the base rotation."""
        params = HandParams.rest(q=matrix_to_quat(BASE_ORIENTATION[Handedness.LEFT]))
        tips = pose_mesh(left_rig, params).vertices
        assert tips[:, 1].max() > 0.1
        assert abs(tips[:, 0]).max() < 0.08

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_small_perturbation_moves_vertices_little(self, rigs, seed):
        """A parameter nudge of norm below 1e-6 moves no skinned vertex by more than 1 mm."""
        rng = np.random.default_rng(seed)
        for hand, params in random_init(seed, rigs).items():
            delta = rng.normal(size=PARAMS_PER_HAND)
            delta *= 0.9e-6 / np.linalg.norm(delta)
            before = pose_mesh(rigs[hand], params).vertices
            after = pose_mesh(rigs[hand], params.with_vector(params.vector() + delta)).vertices
            assert np.max(np.linalg.norm(after - before, axis=1)) <= 1e-3

    def test_mirror_symmetry(self, left_rig, right_rig):
        np.testing.assert_allclose(right_rig.joint_positions, left_rig.joint_positions * [-1, 1, 1])


class TestRotations:
    """Quaternion helpers."""

    def test_matrix_round_trip(self):
        for matrix in BASE_ORIENTATION.values():
            np.testing.assert_allclose(quat_to_matrix(matrix_to_quat(matrix)), matrix, atol=1e-12)

    def test_slerp_endpoints(self):
        a = np.array([1.0, 0.0, 0.0, 0.0])
        b = matrix_to_quat(BASE_ORIENTATION[Handedness.RIGHT])
        np.testing.assert_allclose(slerp(a, b, 0.0), a, atol=1e-12)
        assert rotation_angle(slerp(a, b, 1.0), b) < 1e-6

    def test_slerp_halfway(self):
        a = np.array([1.0, 0.0, 0.0, 0.0])
        b = np.array([np.cos(0.5), 0.0, 0.0, np.sin(0.5)])
        assert rotation_angle(a, slerp(a, b, 0.5)) == pytest.approx(0.5)


class TestFiles:
    """Rig and params files."""

    def test_rig_round_trip(self, tmp_path, right_rig):
        path = tmp_path / "right.json"
        save_rig(right_rig, path)
        loaded = load_rig(path)
        assert loaded.handedness is Handedness.RIGHT
        np.testing.assert_array_equal(loaded.rest_mesh.vertices, right_rig.rest_mesh.vertices)
        np.testing.assert_array_equal(loaded.segments, right_rig.segments)

    def test_params_keep_angles(self, tmp_path):
        theta = np.zeros((15, 3))
        theta[joint_index("middle", 1), 2] = np.radians(40.0)
        params = {Handedness.LEFT: HandParams(theta=theta, q=matrix_to_quat(BASE_ORIENTATION[Handedness.LEFT]),
                                              t=[0.0, -0.08, -0.45])}
        path = tmp_path / "params.json"
        save_params(params, path)
        loaded = load_params(path)[Handedness.LEFT]
        np.testing.assert_allclose(loaded.theta, theta, atol=1e-12)
        np.testing.assert_allclose(loaded.t, [0.0, -0.08, -0.45])

    def test_out_of_limit_params_clamped(self, tmp_path, app_log):
        theta = np.zeros((15, 3))
        theta[joint_index("thumb", 1), 0] = np.radians(-80.0)
        path = tmp_path / "params.json"
        save_params({Handedness.RIGHT: HandParams(theta=theta)}, path)
        loaded = load_params(path)[Handedness.RIGHT]
        assert np.degrees(loaded.theta[joint_index("thumb", 1), 0]) == pytest.approx(-50.0)
        assert "clamped" in app_log.text

    def test_malformed_params(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text('{"hands": {"left": {"beta": [1, 1]}}}')
        with pytest.raises(ConfigError):
            load_params(path)

    def test_rig_file_missing_mesh(self, tmp_path):
        path = tmp_path / "rig.json"
        path.write_text('{"handedness": "left", "parents": [], "joint_positions": [], '
                        '"skin_indices": [], "skin_weights": []}')
        with pytest.raises(RigValidationError):
            load_rig(path)


@pytest.mark.parametrize("handedness", list(Handedness))
def test_procedural_hand_scales(handedness):
    small = make_procedural_hand(handedness, scale=0.5)
    full = make_procedural_hand(handedness)
    np.testing.assert_allclose(small.rest_mesh.vertices, full.rest_mesh.vertices * 0.5)
    assert isinstance(small, HandRig)
