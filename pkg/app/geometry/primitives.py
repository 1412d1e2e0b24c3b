"""Closed, outward-oriented primitive meshes."""
from typing import Dict, Tuple

import numpy as np

from .mesh import TriMesh

_BOX_TRIANGLES = np.array([
    [0, 4, 6], [0, 6, 2],   # -x
    [1, 3, 7], [1, 7, 5],   # +x
    [0, 1, 5], [0, 5, 4],   # -y
    [2, 6, 7], [2, 7, 3],   # +y
    [0, 2, 3], [0, 3, 1],   # -z
    [4, 5, 7], [4, 7, 6],   # +z
])

_GOLDEN = (1.0 + 5.0 ** 0.5) / 2.0

_ICOSAHEDRON_VERTICES = np.array([
    [-1, _GOLDEN, 0], [1, _GOLDEN, 0], [-1, -_GOLDEN, 0], [1, -_GOLDEN, 0],
    [0, -1, _GOLDEN], [0, 1, _GOLDEN], [0, -1, -_GOLDEN], [0, 1, -_GOLDEN],
    [_GOLDEN, 0, -1], [_GOLDEN, 0, 1], [-_GOLDEN, 0, -1], [-_GOLDEN, 0, 1],
], dtype=float)

_ICOSAHEDRON_TRIANGLES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def box_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> TriMesh:
    """Axis-aligned box with 12 triangles."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    bits = np.array([[(i >> axis) & 1 for axis in range(3)] for i in range(8)], dtype=float)
    return TriMesh(lo + bits * (hi - lo), _BOX_TRIANGLES)


def icosphere(radius: float = 1.0, subdivisions: int = 2, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Subdivided icosahedron with every vertex on the sphere."""
    vertices = [v / np.linalg.norm(v) for v in _ICOSAHEDRON_VERTICES]
    triangles = list(_ICOSAHEDRON_TRIANGLES)

    for _ in range(subdivisions):
        midpoints: Dict[Tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoints:
                m = vertices[a] + vertices[b]
                vertices.append(m / np.linalg.norm(m))
                midpoints[key] = len(vertices) - 1
            return midpoints[key]

        refined = []
        for a, b, c in triangles:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        triangles = refined

    points = np.asarray(vertices) * radius + np.asarray(center, dtype=float)
    return TriMesh(points, np.asarray(triangles))


def capsule(start, end, radius: float, around: int = 8, cap_rings: int = 2) -> TriMesh:
    """Cylinder between two points closed by hemispherical caps."""
    start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    axis = end - start
    axis /= np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    side = np.cross(helper, axis)
    side /= np.linalg.norm(side)
    up = np.cross(axis, side)

    angles = 2.0 * np.pi * np.arange(around) / around
    circle = np.outer(np.cos(angles), side) + np.outer(np.sin(angles), up)

    # Rings from the start pole to the end pole; the two equator rings bound the cylinder.
    polar = np.pi / 2.0 * np.arange(1, cap_rings + 1) / cap_rings
    rings = [start - axis * radius * np.cos(a) + circle * radius * np.sin(a) for a in polar]
    rings += [end + axis * radius * np.cos(a) + circle * radius * np.sin(a) for a in polar[::-1]]

    vertices = [start - axis * radius, *rings, end + axis * radius]
    vertices = np.vstack([np.atleast_2d(v) for v in vertices])
    first_pole, last_pole = 0, len(vertices) - 1

    def ring_index(ring: int, j: int) -> int:
        return 1 + ring * around + (j % around)

    triangles = []
    for j in range(around):
        triangles.append((first_pole, ring_index(0, j + 1), ring_index(0, j)))
    for ring in range(len(rings) - 1):
        for j in range(around):
            a, b = ring_index(ring, j), ring_index(ring, j + 1)
            c, d = ring_index(ring + 1, j + 1), ring_index(ring + 1, j)
            triangles += [(a, b, c), (a, c, d)]
    for j in range(around):
        triangles.append((last_pole, ring_index(len(rings) - 1, j), ring_index(len(rings) - 1, j + 1)))

    return TriMesh(vertices, np.asarray(triangles))


def unit_square_pair(z: float = 0.0) -> TriMesh:
    """Open unit square [0, 1]^2 at height ``z`` split into two triangles (render-only)."""
    vertices = np.array([[0.0, 0.0, z], [1.0, 0.0, z], [1.0, 1.0, z], [0.0, 1.0, z]])
    return TriMesh(vertices, np.array([[0, 1, 2], [0, 2, 3]]))
