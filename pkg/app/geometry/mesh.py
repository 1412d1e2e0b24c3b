"""Indexed triangle meshes."""
from __future__ import annotations

from dataclasses import InitVar, dataclass, field
from functools import cached_property
from typing import FrozenSet, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from ..autodiff import VarId
from ..exceptions import MeshError

DEGENERATE_AREA = 1e-12  # m²


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh in world space (meters).

    Vertices are an (N, 3) float array, triangles an (F, 3) array of vertex
    indices. Construction checks index ranges and rejects degenerate
    triangles; watertightness is computed lazily and only gates
    inside/outside queries.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check: bool):
        vertices = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

        if not check:
            return
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError(
                f"triangle indices must lie in [0, {len(vertices)})",
                vertex_count=len(vertices),
            )
        if triangles.size:
            areas = self.areas
            bad = np.flatnonzero(areas <= DEGENERATE_AREA)
            if bad.size:
                raise MeshError(
                    f"triangle {int(bad[0])} is degenerate (area {areas[bad[0]]:.3e} m²)",
                    triangle=int(bad[0]),
                )

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    @property
    def is_empty(self) -> bool:
        return self.triangle_count == 0

    @property
    def triangle_points(self) -> np.ndarray:
        """Corner positions, shape (F, 3, 3)."""
        return self.vertices[self.triangles]

    @property
    def areas(self) -> np.ndarray:
        p = self.triangle_points
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)] if self.triangle_count else self.vertices
        return used.min(axis=0), used.max(axis=0)

    @cached_property
    def open_edge_count(self) -> int:
        """Directed edges that lack exactly one oppositely oriented partner."""
        if self.is_empty:
            return 0
        edges = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        n = np.int64(self.vertex_count)
        keys = edges[:, 0] * n + edges[:, 1]
        reverse = edges[:, 1] * n + edges[:, 0]
        unique, counts = np.unique(keys, return_counts=True)
        duplicated = np.isin(keys, unique[counts > 1])
        unpaired = ~np.isin(reverse, keys)
        return int(np.count_nonzero(duplicated | unpaired))

    @cached_property
    def watertight(self) -> bool:
        """Every edge is shared by exactly two triangles with opposite orientation."""
        return not self.is_empty and self.open_edge_count == 0

    @cached_property
    def kdtree(self) -> cKDTree:
        """Search tree over the vertices referenced by triangles."""
        return cKDTree(self.vertices[np.unique(self.triangles)])

    def submesh(self, triangle_mask: np.ndarray) -> Tuple["TriMesh", np.ndarray]:
        """Mesh made of the selected triangles with compacted vertices.

        Returns the submesh and, for each of its vertices, the index of the
        vertex in this mesh.
        """
        triangles = self.triangles[np.asarray(triangle_mask)]
        used, remapped = np.unique(triangles, return_inverse=True)
        return TriMesh(self.vertices[used], remapped.reshape(-1, 3), check=False), used

    def translated(self, offset) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(offset, dtype=float), self.triangles)


def merge_meshes(*meshes: TriMesh) -> Tuple[TriMesh, np.ndarray]:
    """Concatenate meshes; also returns the source index of every triangle."""
    vertices, triangles, labels = [], [], []
    offset = 0
    for label, mesh in enumerate(meshes):
        vertices.append(mesh.vertices)
        triangles.append(mesh.triangles + offset)
        labels.append(np.full(mesh.triangle_count, label, dtype=np.int64))
        offset += mesh.vertex_count
    return TriMesh(np.concatenate(vertices), np.concatenate(triangles)), np.concatenate(labels)


@dataclass(frozen=True)
class PosedMesh:
    """A mesh whose vertex positions are recorded on a tape.

    ``segments`` optionally labels every triangle with the rigid part it
    belongs to; ``adjacent`` lists part pairs allowed to touch. Together they
    drive the self-penetration check.
    """

    vertices: VarId
    triangles: np.ndarray
    watertight: bool
    segments: Optional[np.ndarray] = None
    adjacent: FrozenSet[FrozenSet[int]] = field(default_factory=frozenset)

    @classmethod
    def constant(cls, mesh: TriMesh, tape, track: bool = True) -> "PosedMesh":
        """Put a fixed mesh on a tape, as a leaf unless ``track`` is off."""
        vertices = tape.leaf(mesh.vertices) if track else tape.constant(mesh.vertices)
        return cls(vertices=vertices, triangles=mesh.triangles, watertight=mesh.watertight)

    def positions(self) -> np.ndarray:
        return self.vertices.tape.array(self.vertices)

    def snapshot(self) -> TriMesh:
        """Numeric mesh at the recorded vertex positions (not re-validated)."""
        return TriMesh(self.positions(), self.triangles, check=False)
