"""The parametric hand: rig definition, forward kinematics and skinning.

A rig has 16 joints: the wrist root followed by index, middle, little, ring
and thumb with three joints each. Rest joint frames are aligned with the rig
frame, so each vertex is stored relative to the rest position of the joints
that influence it and posing is rotate-then-translate per influence.
"""
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import FrozenSet, NamedTuple, Optional, Tuple

import numpy as np

from ..autodiff import Tape, VarId
from ..exceptions import RigValidationError
from ..geometry.mesh import PosedMesh, TriMesh, merge_meshes
from ..geometry.primitives import box_mesh, capsule
from .limits import ARTICULATED_JOINTS, FINGERS, JOINTS_PER_FINGER, Handedness, JointLimits, default_limits
from .rotations import IDENTITY_QUATERNION, euler_xyz, normalize_quaternion, quat_to_matrix, quat_to_matrix_recorded

JOINT_COUNT = ARTICULATED_JOINTS + 1
MAX_INFLUENCES = 4
WEIGHT_TOLERANCE = 1e-6
BETA_SIZE = 1 + len(FINGERS)

# Rig frame to camera frame with the palm facing the camera and fingers up.
BASE_ORIENTATION = {
    Handedness.LEFT: np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
    Handedness.RIGHT: np.array([[0.0, 0.0, -1.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
}


def finger_of_joint(joint: int) -> int:
    """Finger index of an articulated joint, -1 for the root."""
    return (joint - 1) // JOINTS_PER_FINGER if joint > 0 else -1


# ============= Parameters =============

@dataclass(frozen=True, eq=False)
class HandParams:
    """Pose of one hand.

    ``beta`` holds a global scale and one length scale per finger and stays
    fixed during optimization. ``theta`` is (15, 3) Euler angles in radians,
    ``q`` a (w, x, y, z) quaternion and ``t`` the wrist position in meters.
    """

    theta: np.ndarray
    q: np.ndarray = field(default_factory=lambda: IDENTITY_QUATERNION.copy())
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    beta: np.ndarray = field(default_factory=lambda: np.ones(BETA_SIZE))

    def __post_init__(self):
        for name, shape in (("theta", (ARTICULATED_JOINTS, 3)), ("q", (4,)), ("t", (3,)), ("beta", (BETA_SIZE,))):
            value = np.array(getattr(self, name), dtype=float)
            if value.shape != shape:
                raise ValueError(f"HandParams.{name} needs shape {shape}, got {value.shape}")
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def rest(cls, q=None, t=None, beta=None) -> "HandParams":
        return cls(
            theta=np.zeros((ARTICULATED_JOINTS, 3)),
            q=IDENTITY_QUATERNION if q is None else q,
            t=np.zeros(3) if t is None else t,
            beta=np.ones(BETA_SIZE) if beta is None else beta,
        )

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def vector(self) -> np.ndarray:
        """Optimized parameters as one flat vector: theta, q, t."""
        return np.concatenate([self.theta.ravel(), self.q, self.t])

    def with_vector(self, vector: np.ndarray) -> "HandParams":
        vector = np.asarray(vector, dtype=float)
        n = ARTICULATED_JOINTS * 3
        return replace(self, theta=vector[:n].reshape(ARTICULATED_JOINTS, 3), q=vector[n:n + 4], t=vector[n + 4:n + 7])

    def equals(self, other: "HandParams") -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("theta", "q", "t", "beta"))


PARAMS_PER_HAND = ARTICULATED_JOINTS * 3 + 4 + 3


def clamp_pose(params: HandParams, limits: JointLimits) -> HandParams:
    """Clamp every angle channel into its interval and renormalize Q."""
    return replace(params, theta=limits.clamp(params.theta), q=normalize_quaternion(params.q))


def is_clamped(params: HandParams, limits: JointLimits, q_tolerance: float = 1e-9) -> bool:
    return limits.contains(params.theta) and abs(np.linalg.norm(params.q) - 1.0) <= q_tolerance


# ============= Rig =============

@dataclass(frozen=True, eq=False)
class HandRig:
    """Kinematic tree, rest mesh, skin weights and joint limits of one hand.

    ``skin_indices``/``skin_weights`` are (N, K) with K <= 4; unused slots
    carry weight 0. ``segments`` optionally labels every triangle with the
    joint it rides on, enabling the self-penetration check.
    """

    handedness: Handedness
    parents: np.ndarray
    joint_positions: np.ndarray
    rest_mesh: TriMesh
    skin_indices: np.ndarray
    skin_weights: np.ndarray
    limits: JointLimits
    segments: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "handedness", Handedness(self.handedness))
        object.__setattr__(self, "parents", np.asarray(self.parents, dtype=np.int64))
        object.__setattr__(self, "joint_positions", np.asarray(self.joint_positions, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "skin_indices", np.atleast_2d(np.asarray(self.skin_indices, dtype=np.int64)))
        object.__setattr__(self, "skin_weights", np.atleast_2d(np.asarray(self.skin_weights, dtype=float)))
        if self.segments is not None:
            object.__setattr__(self, "segments", np.asarray(self.segments, dtype=np.int64))
        validate_rig(self)

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    @property
    def offsets(self) -> np.ndarray:
        """Rest offset of each joint from its parent; the root keeps its position."""
        offsets = self.joint_positions.copy()
        offsets[1:] -= self.joint_positions[self.parents[1:]]
        return offsets

    @property
    def base_orientation(self) -> np.ndarray:
        return BASE_ORIENTATION[self.handedness]

    @cached_property
    def adjacent(self) -> FrozenSet[FrozenSet[int]]:
        """Joint pairs whose geometry may touch: every joint and its parent."""
        return frozenset(frozenset((j, int(self.parents[j]))) for j in range(1, self.joint_count))

    @cached_property
    def influence_matrix(self) -> np.ndarray:
        """One-hot (N, K, J) map from influence slots to joints."""
        return (self.skin_indices[..., None] == np.arange(self.joint_count)).astype(float)

    def joint_scales(self, beta: np.ndarray) -> np.ndarray:
        """Per-joint length scale from the finger scales in ``beta``."""
        scales = np.ones(self.joint_count)
        for j in range(1, self.joint_count):
            scales[j] = beta[1 + finger_of_joint(j)]
        return scales

    def local_vertices(self, beta: np.ndarray) -> np.ndarray:
        """(N, K, 3) rest vertices in the frame of each influencing joint."""
        local = self.rest_mesh.vertices[:, None, :] - self.joint_positions[self.skin_indices]
        return local * self.joint_scales(beta)[self.skin_indices][..., None]

    def scaled_offsets(self, beta: np.ndarray) -> np.ndarray:
        scales = self.joint_scales(beta)
        offsets = self.offsets
        # a finger's first joint sits on the palm; only later bones stretch
        inner = np.array([j > 0 and self.parents[j] > 0 for j in range(self.joint_count)])
        offsets[inner] *= scales[inner, None]
        return offsets


def validate_rig(rig: HandRig) -> None:
    """Raise RigValidationError on the first broken rig invariant."""
    parents, n_joints = rig.parents, len(rig.parents)
    if n_joints - 1 != ARTICULATED_JOINTS:
        raise RigValidationError(
            f"expected {ARTICULATED_JOINTS} articulated joints, got {n_joints - 1}",
            joints=n_joints - 1,
        )
    if rig.joint_positions.shape != (n_joints, 3):
        raise RigValidationError("joint positions must be one 3D point per joint")
    if parents[0] != -1:
        raise RigValidationError("joint 0 must be the root (parent -1)")
    for j in range(1, n_joints):
        if not 0 <= parents[j] < j:
            raise RigValidationError(
                f"joint {j} has parent {int(parents[j])}, parents must precede their children",
                joint=j,
            )

    n_vertices = rig.rest_mesh.vertex_count
    indices, weights = rig.skin_indices, rig.skin_weights
    if indices.shape != weights.shape or indices.shape[0] != n_vertices:
        raise RigValidationError(
            f"skin tables must have one row per vertex ({n_vertices})",
            shape=list(indices.shape),
        )
    if indices.shape[1] > MAX_INFLUENCES:
        raise RigValidationError(f"at most {MAX_INFLUENCES} influences per vertex, got {indices.shape[1]}")
    if indices.size and (indices.min() < 0 or indices.max() >= n_joints):
        raise RigValidationError("skin joint index out of range")
    negative = np.flatnonzero(np.any(weights < 0.0, axis=1))
    if negative.size:
        raise RigValidationError(f"vertex {int(negative[0])} has a negative skin weight", vertex=int(negative[0]))
    sums = weights.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > WEIGHT_TOLERANCE)
    if bad.size:
        vertex = int(bad[0])
        raise RigValidationError(
            f"skin weights of vertex {vertex} sum to {sums[vertex]:.6f}, expected 1",
            vertex=vertex,
        )

    if not rig.rest_mesh.watertight:
        raise RigValidationError(
            f"rest mesh is not watertight ({rig.rest_mesh.open_edge_count} unpaired edges)",
            open_edges=rig.rest_mesh.open_edge_count,
        )
    if rig.segments is not None and (
        rig.segments.shape != (rig.rest_mesh.triangle_count,)
        or rig.segments.min() < 0 or rig.segments.max() >= n_joints
    ):
        raise RigValidationError("segments must label every triangle with a joint index")


# ============= Procedural hand =============

_PALM_LENGTH = 0.075
_PALM_HALF_THICKNESS = 0.01
_PALM_HALF_WIDTH = 0.035

# knuckle z, capsule radius and bone lengths, in finger order
_FINGER_LAYOUT = {
    "index": (-0.0315, 0.0075, (0.038, 0.024, 0.020)),
    "middle": (-0.0105, 0.0080, (0.042, 0.027, 0.021)),
    "little": (0.0315, 0.0065, (0.030, 0.020, 0.018)),
    "ring": (0.0105, 0.0075, (0.039, 0.026, 0.021)),
}
_THUMB_ROOT = np.array([0.020, 0.014, -0.026])
_THUMB_DIRECTION = np.array([1.0, 0.25, -0.35]) / np.linalg.norm([1.0, 0.25, -0.35])
_THUMB_RADIUS = 0.009
_THUMB_LENGTHS = (0.032, 0.028, 0.024)


def _left_hand_geometry(scale: float) -> Tuple[np.ndarray, TriMesh, np.ndarray]:
    joints = [np.zeros(3)]
    parts = [box_mesh((0.0, -_PALM_HALF_THICKNESS, -_PALM_HALF_WIDTH), (_PALM_LENGTH, _PALM_HALF_THICKNESS, _PALM_HALF_WIDTH))]
    labels = [0]

    for finger in FINGERS:
        if finger == "thumb":
            root, direction, radius, lengths = _THUMB_ROOT, _THUMB_DIRECTION, _THUMB_RADIUS, _THUMB_LENGTHS
        else:
            z, radius, lengths = _FINGER_LAYOUT[finger]
            root, direction = np.array([_PALM_LENGTH, 0.0, z]), np.array([1.0, 0.0, 0.0])
        start = root
        for length in lengths:
            end = start + direction * length
            joints.append(start)
            parts.append(capsule(start, end, radius))
            labels.append(len(joints) - 1)
            start = end

    mesh, part_of_triangle = merge_meshes(*parts)
    segments = np.asarray(labels)[part_of_triangle]
    return np.asarray(joints) * scale, TriMesh(mesh.vertices * scale, mesh.triangles), segments


def make_procedural_hand(handedness: Handedness = Handedness.LEFT, scale: float = 1.0) -> HandRig:
    """Low-poly hand: a palm box and a three-capsule chain per finger.

    Each capsule is rigidly bound to its joint. The right hand is the left
    hand mirrored across x = 0 with triangle winding flipped.
    """
    handedness = Handedness(handedness)
    joints, mesh, segments = _left_hand_geometry(scale)
    if handedness is Handedness.RIGHT:
        mirror = np.array([-1.0, 1.0, 1.0])
        joints = joints * mirror
        mesh = TriMesh(mesh.vertices * mirror, mesh.triangles[:, ::-1])

    # vertex -> owning joint via the triangle labels
    owner = np.zeros(mesh.vertex_count, dtype=np.int64)
    owner[mesh.triangles.ravel()] = np.repeat(segments, 3)

    parents = [-1]
    for f in range(len(FINGERS)):
        parents += [0] + [1 + f * JOINTS_PER_FINGER + k for k in range(JOINTS_PER_FINGER - 1)]

    return HandRig(
        handedness=handedness,
        parents=np.asarray(parents),
        joint_positions=joints,
        rest_mesh=mesh,
        skin_indices=owner[:, None],
        skin_weights=np.ones((mesh.vertex_count, 1)),
        limits=default_limits(handedness),
        segments=segments,
    )


# ============= Forward kinematics and skinning =============

class PoseVars(NamedTuple):
    """Tape handles for the optimized parameters of one hand."""

    theta: VarId
    q: VarId
    t: VarId

    @classmethod
    def record(cls, tape: Tape, params: HandParams, track: bool = True) -> "PoseVars":
        make = tape.leaf if track else tape.constant
        return cls(make(params.theta), make(params.q), make(params.t))


class JointTransforms(NamedTuple):
    rotations: VarId   # (J, 3, 3)
    positions: VarId   # (J, 3)
    pose: PoseVars
    beta: np.ndarray


def chain_transforms(
    tape: Tape,
    parents: np.ndarray,
    offsets: np.ndarray,
    local_rotations: VarId,
    root_rotation: VarId,
    root_translation: VarId,
) -> Tuple[VarId, VarId]:
    """World frames down a kinematic tree.

    R_j = R_parent @ L_j and p_j = p_parent + R_parent @ offset_j, with the
    root at (root_rotation, root_translation). ``local_rotations`` holds L_j
    for joints 1..J-1.
    """
    rotations, positions = [root_rotation], [root_translation]
    for j in range(1, len(parents)):
        parent_r, parent_p = rotations[parents[j]], positions[parents[j]]
        positions.append(parent_p + parent_r @ np.asarray(offsets[j], dtype=float))
        rotations.append(parent_r @ local_rotations[j - 1])
    return tape.apply("stack", *rotations, axis=0), tape.apply("stack", *positions, axis=0)


def forward_kinematics(rig: HandRig, params: HandParams, tape: Tape, pose: Optional[PoseVars] = None) -> JointTransforms:
    """Recorded world transform of every joint.

    The root carries the global scale beta[0], Q and t; each child adds its
    rest offset (finger scaled) and its intrinsic XYZ Euler rotation.
    """
    pose = pose or PoseVars.record(tape, params)
    local = euler_xyz(tape, pose.theta)
    root_rotation = quat_to_matrix_recorded(tape, pose.q) * float(params.beta[0])
    rotations, positions = chain_transforms(
        tape, rig.parents, rig.scaled_offsets(params.beta), local, root_rotation, pose.t,
    )
    return JointTransforms(rotations, positions, pose, params.beta)


def skin(rig: HandRig, transforms: JointTransforms, tape: Tape) -> PosedMesh:
    """Linear blend skinning: v' = sum_k w_k (R_{j_k} v_k + p_{j_k})."""
    onehot = rig.influence_matrix
    weights = rig.skin_weights
    local = rig.local_vertices(transforms.beta)

    def forward(rotations, positions):
        blend_r = np.einsum("nkb,nk->nkb", onehot, weights)
        value = np.einsum("nkb,bij,nkj->ni", blend_r, rotations, local) + np.einsum("nkb,bi->ni", blend_r, positions)

        def vjp(g):
            grad_r = np.einsum("nkb,ni,nkj->bij", blend_r, g, local)
            grad_p = np.einsum("nkb,ni->bi", blend_r, g)
            return grad_r, grad_p

        return value, vjp

    vertices = tape.fused("skin", forward, [transforms.rotations, transforms.positions])
    return PosedMesh(
        vertices=vertices,
        triangles=rig.rest_mesh.triangles,
        watertight=rig.rest_mesh.watertight,
        segments=rig.segments,
        adjacent=rig.adjacent,
    )


def pose_mesh(rig: HandRig, params: HandParams) -> TriMesh:
    """Posed mesh as plain numbers (no gradients)."""
    tape = Tape()
    posed = skin(rig, forward_kinematics(rig, params, tape, PoseVars.record(tape, params, track=False)), tape)
    return posed.snapshot()
