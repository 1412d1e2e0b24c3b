"""Bounding volume hierarchy over triangles and the point queries built on it.

The tree is stored flat: node ``i`` has an axis-aligned box, child indices
(``-1`` marks a leaf) and, for leaves, a range into ``order`` listing its
triangles. Queries are batched: every query point walks the tree together
with the others, one level per step, so the work per level is plain numpy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from ..exceptions import MeshError
from .mesh import TriMesh

# Components (1, 0.5^3, 0.25^7), normalized: no mesh edge lines up with it by accident.
RAY_DIRECTION = np.array([1.0, 0.5 ** 3, 0.25 ** 7]) / np.linalg.norm([1.0, 0.5 ** 3, 0.25 ** 7])

LEAF_SIZE = 4


@dataclass(frozen=True)
class Bvh:
    box_min: np.ndarray
    box_max: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.left)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    def leaf_triangles(self, node: int) -> np.ndarray:
        return self.order[self.start[node]:self.start[node] + self.count[node]]


def build_bvh(mesh: TriMesh, leaf_size: int = LEAF_SIZE) -> Bvh:
    """Median-split BVH; each node splits on the longest axis of its centroids."""
    if mesh.is_empty:
        raise MeshError("cannot build a BVH over an empty mesh")

    points = mesh.triangle_points
    tri_min, tri_max = points.min(axis=1), points.max(axis=1)
    centroids = points.mean(axis=1)

    box_min: List[np.ndarray] = []
    box_max: List[np.ndarray] = []
    left: List[int] = []
    right: List[int] = []
    start: List[int] = []
    count: List[int] = []
    order: List[int] = []

    def build(indices: np.ndarray) -> int:
        node = len(left)
        box_min.append(tri_min[indices].min(axis=0))
        box_max.append(tri_max[indices].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(len(order))
        count.append(0)

        extent = np.ptp(centroids[indices], axis=0)
        if len(indices) <= leaf_size or extent.max() <= 0.0:
            order.extend(int(i) for i in indices)
            count[node] = len(indices)
            return node

        axis = int(np.argmax(extent))
        ranked = indices[np.argsort(centroids[indices, axis], kind="stable")]
        half = len(ranked) // 2
        left[node] = build(ranked[:half])
        right[node] = build(ranked[half:])
        return node

    build(np.arange(mesh.triangle_count))
    return Bvh(
        box_min=np.asarray(box_min),
        box_max=np.asarray(box_max),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        start=np.asarray(start, dtype=np.int64),
        count=np.asarray(count, dtype=np.int64),
        order=np.asarray(order, dtype=np.int64),
    )


def _candidate_pairs(
    bvh: Bvh,
    n_queries: int,
    box_test: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> Tuple[np.ndarray, np.ndarray]:
    """(query, triangle) pairs whose leaf boxes pass ``box_test``."""
    queries = np.arange(n_queries)
    nodes = np.zeros(n_queries, dtype=np.int64)
    found_queries, found_triangles = [], []

    while queries.size:
        keep = box_test(queries, nodes)
        queries, nodes = queries[keep], nodes[keep]
        leaf = bvh.left[nodes] < 0

        leaf_queries, leaf_nodes = queries[leaf], nodes[leaf]
        if leaf_queries.size:
            counts = bvh.count[leaf_nodes]
            firsts = np.repeat(bvh.start[leaf_nodes], counts)
            offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
            found_queries.append(np.repeat(leaf_queries, counts))
            found_triangles.append(bvh.order[firsts + offsets])

        inner_queries, inner_nodes = queries[~leaf], nodes[~leaf]
        queries = np.concatenate([inner_queries, inner_queries])
        nodes = np.concatenate([bvh.left[inner_nodes], bvh.right[inner_nodes]])

    if not found_queries:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(found_queries), np.concatenate(found_triangles)


# ============= Inside / outside =============

def ray_crossings(origins: np.ndarray, direction: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Signed crossings of rays with triangles (Möller–Trumbore).

    ``origins`` and ``corners`` are paired row by row. Returns +1 where the
    ray leaves through the triangle's outward side, -1 where it enters, 0 on
    a miss.
    """
    v0, v1, v2 = corners[:, 0], corners[:, 1], corners[:, 2]
    e1, e2 = v1 - v0, v2 - v0
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-18
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origins - v0
    u = np.einsum("ij,ij->i", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1)
    v = (qvec @ direction) * inv_det
    t = np.einsum("ij,ij->i", e2, qvec) * inv_det
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 0.0)
    # det = -direction . (e1 x e2): negative det means leaving an outward face
    return np.where(hit, -np.sign(det), 0.0)


def winding_along_ray(mesh: TriMesh, bvh: Bvh, points: np.ndarray) -> np.ndarray:
    """Signed number of surface crossings along the fixed ray from each point."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    direction = RAY_DIRECTION
    inverse = 1.0 / direction

    def hits_box(queries, nodes):
        origin = points[queries]
        t1 = (bvh.box_min[nodes] - origin) * inverse
        t2 = (bvh.box_max[nodes] - origin) * inverse
        near = np.minimum(t1, t2).max(axis=1)
        far = np.maximum(t1, t2).min(axis=1)
        return far >= np.maximum(near, 0.0)

    queries, triangles = _candidate_pairs(bvh, len(points), hits_box)
    winding = np.zeros(len(points))
    if queries.size:
        crossings = ray_crossings(points[queries], direction, mesh.triangle_points[triangles])
        winding = np.bincount(queries, weights=crossings, minlength=len(points))
    return winding


def points_inside(mesh: TriMesh, bvh: Bvh, points: np.ndarray) -> np.ndarray:
    """Inside test for many points at once; meaningful on watertight meshes only."""
    return np.rint(winding_along_ray(mesh, bvh, points)) != 0


def point_inside(mesh: TriMesh, bvh: Bvh, p) -> bool:
    """Whether ``p`` lies inside the closed mesh (nonzero crossing count)."""
    return bool(points_inside(mesh, bvh, np.asarray(p, dtype=float).reshape(1, 3))[0])


# ============= Nearest surface point =============

def closest_points_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest point on triangle (a, b, c) to p, row-wise (Voronoi-region walk)."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        result = a + ab * (vb / denom)[:, None] + ac * (vc / denom)[:, None]

        # Regions are tested from last to first so the earliest matching one wins.
        edge_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        result = np.where(edge_bc[:, None], b + (c - b) * w[:, None], result)

        edge_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        w = d2 / (d2 - d6)
        result = np.where(edge_ac[:, None], a + ac * w[:, None], result)

        vertex_c = (d6 >= 0) & (d5 <= d6)
        result = np.where(vertex_c[:, None], c, result)

        edge_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        w = d1 / (d1 - d3)
        result = np.where(edge_ab[:, None], a + ab * w[:, None], result)

        vertex_b = (d3 >= 0) & (d4 <= d3)
        result = np.where(vertex_b[:, None], b, result)

        vertex_a = (d1 <= 0) & (d2 <= 0)
        result = np.where(vertex_a[:, None], a, result)
    return result


def nearest_surface_points(mesh: TriMesh, bvh: Bvh, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closest surface point, distance and triangle for each query point.

    The nearest vertex bounds the search radius; boxes farther away than that
    are pruned. Ties between triangles resolve to the lowest triangle index.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(points)
    if n == 0:
        return np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=np.int64)

    bound, _ = mesh.kdtree.query(points)
    bound2 = bound ** 2 * (1.0 + 1e-9) + 1e-18

    def within_bound(queries, nodes):
        p = points[queries]
        gap = np.maximum(np.maximum(bvh.box_min[nodes] - p, 0.0), p - bvh.box_max[nodes])
        return np.einsum("ij,ij->i", gap, gap) <= bound2[queries]

    queries, triangles = _candidate_pairs(bvh, n, within_bound)
    corners = mesh.triangle_points[triangles]
    closest = closest_points_on_triangles(points[queries], corners[:, 0], corners[:, 1], corners[:, 2])
    diff = points[queries] - closest
    dist2 = np.einsum("ij,ij->i", diff, diff)

    ranking = np.lexsort((triangles, dist2, queries))
    queries, triangles, closest, dist2 = queries[ranking], triangles[ranking], closest[ranking], dist2[ranking]
    first = np.flatnonzero(np.r_[True, queries[1:] != queries[:-1]])

    out_points = np.empty((n, 3))
    out_dist = np.empty(n)
    out_tri = np.empty(n, dtype=np.int64)
    out_points[queries[first]] = closest[first]
    out_dist[queries[first]] = np.sqrt(dist2[first])
    out_tri[queries[first]] = triangles[first]
    return out_points, out_dist, out_tri


def nearest_surface_point(mesh: TriMesh, bvh: Bvh, p) -> Tuple[np.ndarray, float]:
    """Closest point on the mesh surface to ``p`` and its distance."""
    closest, dist, _ = nearest_surface_points(mesh, bvh, np.asarray(p, dtype=float).reshape(1, 3))
    return closest[0], float(dist[0])
