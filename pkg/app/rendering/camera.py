"""Perspective projection for the fixed camera at the origin."""
from typing import Tuple

import numpy as np

from ..autodiff import Tape, VarId
from ..schemas import Camera


def _scales(camera: Camera) -> Tuple[float, float]:
    return camera.tan_half_fov * camera.aspect, camera.tan_half_fov


def project_array(camera: Camera, points: np.ndarray) -> np.ndarray:
    """(..., 3) camera-space points to (..., 3) rows of (x_ndc, y_ndc, depth).

    Depth is the distance along the view axis (-z). Points at or behind the
    camera get finite placeholder coordinates; callers cull them by depth.
    """
    points = np.asarray(points, dtype=float)
    kx, ky = _scales(camera)
    depth = -points[..., 2]
    safe = np.where(depth > 0.0, depth, 1.0)
    return np.stack([points[..., 0] / (safe * kx), points[..., 1] / (safe * ky), depth], axis=-1)


def project_points(camera: Camera, points: VarId, tape: Tape) -> VarId:
    """Recorded projection of an (N, 3) point array."""
    kx, ky = _scales(camera)

    def forward(p):
        value = project_array(camera, p)
        depth = value[..., 2]
        safe = np.where(depth > 0.0, depth, 1.0)

        def vjp(g):
            gx, gy, gd = g[..., 0], g[..., 1], g[..., 2]
            grad = np.empty_like(p)
            grad[..., 0] = gx / (safe * kx)
            grad[..., 1] = gy / (safe * ky)
            grad[..., 2] = (gx * p[..., 0] / kx + gy * p[..., 1] / ky) / (safe * safe) - gd
            return (grad,)

        return value, vjp

    return tape.fused("project", forward, [points])


def project(camera: Camera, point, tape: Tape) -> VarId:
    """Project one point; returns a recorded (x_ndc, y_ndc, depth) triple."""
    if not isinstance(point, VarId):
        point = tape.leaf(point)
    return project_points(camera, point, tape)


def pixel_centers(camera: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """NDC coordinates of pixel centers: x per column, y per row (row 0 on top)."""
    height, width = camera.resolution
    xs = (np.arange(width) + 0.5) * (2.0 / width) - 1.0
    ys = 1.0 - (np.arange(height) + 0.5) * (2.0 / height)
    return xs, ys
