"""Rotation helpers: recorded Euler/quaternion matrices and plain numpy conversions.

Quaternions are stored scalar-first, ``(w, x, y, z)``. scipy's ``Rotation``
uses scalar-last, so conversions at that boundary reorder the components.
"""
import numpy as np
from scipy.spatial.transform import Rotation

from ..autodiff import Tape, VarId

IDENTITY_QUATERNION = np.array([1.0, 0.0, 0.0, 0.0])


# ============= Recorded (differentiable) =============

def _axis_matrices(angles: np.ndarray):
    """Rx, Ry, Rz and their angle derivatives for (..., 3) angle arrays."""
    c, s = np.cos(angles), np.sin(angles)
    zero, one = np.zeros_like(c[..., 0]), np.ones_like(c[..., 0])

    def build(rows):
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    cx, sx, cy, sy, cz, sz = c[..., 0], s[..., 0], c[..., 1], s[..., 1], c[..., 2], s[..., 2]
    rx = build([[one, zero, zero], [zero, cx, -sx], [zero, sx, cx]])
    ry = build([[cy, zero, sy], [zero, one, zero], [-sy, zero, cy]])
    rz = build([[cz, -sz, zero], [sz, cz, zero], [zero, zero, one]])
    drx = build([[zero, zero, zero], [zero, -sx, -cx], [zero, cx, -sx]])
    dry = build([[-sy, zero, cy], [zero, zero, zero], [-cy, zero, -sy]])
    drz = build([[-sz, -cz, zero], [cz, -sz, zero], [zero, zero, zero]])
    return (rx, ry, rz), (drx, dry, drz)


def euler_matrices(angles: np.ndarray) -> np.ndarray:
    """Intrinsic X-then-Y-then-Z rotation matrices, R = Rx @ Ry @ Rz."""
    (rx, ry, rz), _ = _axis_matrices(np.asarray(angles, dtype=float))
    return rx @ ry @ rz


def euler_xyz(tape: Tape, angles: VarId) -> VarId:
    """Record ``euler_matrices`` for a (..., 3) angle array as one node."""

    def forward(a):
        (rx, ry, rz), (drx, dry, drz) = _axis_matrices(a)
        value = rx @ ry @ rz
        partials = (drx @ ry @ rz, rx @ dry @ rz, rx @ ry @ drz)

        def vjp(g):
            return (np.stack([np.sum(g * p, axis=(-2, -1)) for p in partials], axis=-1),)

        return value, vjp

    return tape.fused("euler_xyz", forward, [angles])


def _quaternion_basis(u: np.ndarray):
    w, x, y, z = u
    value = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
    derivatives = 2.0 * np.array([
        [[0, -z, y], [z, 0, -x], [-y, x, 0]],
        [[0, y, z], [y, -2 * x, -w], [z, w, -2 * x]],
        [[-2 * y, x, w], [x, 0, z], [-w, z, -2 * y]],
        [[-2 * z, -w, x], [w, -2 * z, y], [x, y, 0]],
    ])
    return value, derivatives


def quat_to_matrix_recorded(tape: Tape, q: VarId) -> VarId:
    """Rotation matrix of ``q / |q|``, recorded as one node."""

    def forward(qv):
        norm = np.linalg.norm(qv)
        u = qv / norm
        value, derivatives = _quaternion_basis(u)

        def vjp(g):
            gu = np.einsum("ij,kij->k", g, derivatives)
            return ((gu - u * (u @ gu)) / norm,)

        return value, vjp

    return tape.fused("quat_to_matrix", forward, [q])


# ============= Plain numpy =============

def normalize_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def quat_to_matrix(q) -> np.ndarray:
    value, _ = _quaternion_basis(normalize_quaternion(q))
    return value


def matrix_to_quat(matrix) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0 for a rotation matrix."""
    x, y, z, w = Rotation.from_matrix(np.asarray(matrix, dtype=float)).as_quat()
    q = np.array([w, x, y, z])
    return -q if q[0] < 0 else q


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def axis_angle_quat(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2.0)], np.sin(angle / 2.0) * axis])


def rotation_angle(a, b) -> float:
    """Angle (radians) of the relative rotation between two quaternions."""
    dot = abs(float(np.dot(normalize_quaternion(a), normalize_quaternion(b))))
    return 2.0 * float(np.arccos(min(1.0, dot)))


def slerp(q1, q2, alpha: float) -> np.ndarray:
    """Spherical interpolation along the short arc."""
    q1, q2 = normalize_quaternion(q1), normalize_quaternion(q2)
    dot = float(np.dot(q1, q2))
    if dot < 0.0:
        q2, dot = -q2, -dot

    # nearly parallel: fall back to normalized lerp
    if dot > 0.9995:
        return normalize_quaternion(q1 + alpha * (q2 - q1))

    angle = np.arccos(dot)
    sin_angle = np.sin(angle)
    return (np.sin((1.0 - alpha) * angle) * q1 + np.sin(alpha * angle) * q2) / sin_angle
