"""Vertex-in-mesh penetration queries feeding the pen loss."""
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from ..exceptions import RenderOnlyMeshError
from ..logging_config import logger
from .bvh import Bvh, build_bvh, nearest_surface_points, points_inside
from .mesh import TriMesh


@dataclass(frozen=True)
class Penetration:
    """One intruding vertex: its index, depth (m) and the closest host point."""

    vertex_index: int
    depth: float
    nearest_point: np.ndarray


@dataclass(frozen=True)
class PenetrationSet:
    """Penetrations as parallel arrays, convenient for vectorized losses."""

    vertex_indices: np.ndarray
    depths: np.ndarray
    nearest_points: np.ndarray

    @classmethod
    def empty(cls) -> "PenetrationSet":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros((0, 3)))

    def __len__(self) -> int:
        return len(self.vertex_indices)

    def to_list(self) -> List[Penetration]:
        return [
            Penetration(int(i), float(d), p.copy())
            for i, d, p in zip(self.vertex_indices, self.depths, self.nearest_points)
        ]


def concatenate(sets: Iterable[PenetrationSet]) -> PenetrationSet:
    sets = [s for s in sets if len(s)]
    if not sets:
        return PenetrationSet.empty()
    return PenetrationSet(
        np.concatenate([s.vertex_indices for s in sets]),
        np.concatenate([s.depths for s in sets]),
        np.concatenate([s.nearest_points for s in sets]),
    )


def find_penetrations(points: np.ndarray, host: TriMesh, host_bvh: Optional[Bvh] = None) -> PenetrationSet:
    """Points strictly inside ``host``, with their depth below its surface."""
    if not host.watertight:
        raise RenderOnlyMeshError(host.open_edge_count)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    host_bvh = host_bvh or build_bvh(host)

    lo, hi = host.bounds
    candidates = np.flatnonzero(np.all((points > lo) & (points < hi), axis=1))
    if candidates.size == 0:
        return PenetrationSet.empty()

    candidates = candidates[points_inside(host, host_bvh, points[candidates])]
    if candidates.size == 0:
        return PenetrationSet.empty()

    nearest, depth, _ = nearest_surface_points(host, host_bvh, points[candidates])
    keep = depth > 0.0
    return PenetrationSet(candidates[keep], depth[keep], nearest[keep])


def detect_penetrations(intruder: TriMesh, host: TriMesh, host_bvh: Optional[Bvh] = None) -> List[Penetration]:
    """Every intruder vertex strictly inside the closed host mesh."""
    return find_penetrations(intruder.vertices, host, host_bvh).to_list()


# ============= Self penetration =============

def _segment_boxes(mesh: TriMesh, segments: np.ndarray) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    corners = mesh.triangle_points
    boxes = {}
    for label in np.unique(segments):
        points = corners[segments == label].reshape(-1, 3)
        boxes[int(label)] = (points.min(axis=0), points.max(axis=0))
    return boxes


def segment_penetrations(
    mesh: TriMesh,
    segments: np.ndarray,
    adjacent: FrozenSet[FrozenSet[int]],
) -> PenetrationSet:
    """Penetrations between rigid parts of one mesh that are not allowed to touch.

    ``segments`` labels each triangle with its part. A part intrudes on
    another when some of its vertices (those not shared with the host part)
    lie inside the host part's closed surface. Parts listed together in
    ``adjacent`` (and a part with itself) are skipped. Host parts that are
    not closed are skipped with a debug message.
    """
    segments = np.asarray(segments)
    boxes = _segment_boxes(mesh, segments)
    labels = sorted(boxes)
    hosts: Dict[int, Tuple[TriMesh, np.ndarray, Optional[Bvh]]] = {}
    found: List[PenetrationSet] = []

    for intruder in labels:
        intruder_vertices = np.unique(mesh.triangles[segments == intruder])
        for host_label in labels:
            if host_label == intruder or frozenset((intruder, host_label)) in adjacent:
                continue
            (a_lo, a_hi), (b_lo, b_hi) = boxes[intruder], boxes[host_label]
            if np.any(a_hi < b_lo) or np.any(b_hi < a_lo):
                continue

            if host_label not in hosts:
                part, used = mesh.submesh(segments == host_label)
                if not part.watertight:
                    logger.debug(
                        f"Part {host_label} is not closed, skipped as a penetration host",
                        extra={"segment": host_label, "open_edges": part.open_edge_count},
                    )
                hosts[host_label] = (part, used, build_bvh(part) if part.watertight else None)
            part, used, bvh = hosts[host_label]
            if bvh is None:
                continue

            vertices = np.setdiff1d(intruder_vertices, used, assume_unique=True)
            hits = find_penetrations(mesh.vertices[vertices], part, bvh)
            if len(hits):
                found.append(PenetrationSet(vertices[hits.vertex_indices], hits.depths, hits.nearest_points))

    return concatenate(found)
