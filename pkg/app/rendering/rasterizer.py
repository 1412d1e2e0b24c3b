"""Soft (differentiable) and hard silhouette rasterization.

Soft coverage of pixel p by triangle j uses the signed squared distance from
p to the projected triangle's boundary, z = sign * d^2 / sigma (positive
inside). Per pair the contribution is softplus(z) - softplus(-9), counted
only where z >= -9 (within 3 * sqrt(sigma) of the triangle), and

    pixel = 1 - exp(-sum of contributions)

which is the product of complements of sigmoid(z) with every factor rescaled
so it reaches exactly 1 at the influence radius. Depth plays no part beyond
culling triangles that leave the near/far range.

(triangle, pixel) pairs are processed in tiles of consecutive triangles;
tile boundaries depend only on the scene, and partial sums are combined in
tile order, so results never depend on scheduling.
"""
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, log_expit

from ..autodiff import Tape, VarId
from ..exceptions import MeshError
from ..geometry.mesh import PosedMesh, TriMesh
from ..schemas import Camera, RenderSettings
from .camera import pixel_centers, project_array, project_points
from .image import GrayImage

INFLUENCE_RADIUS = 3.0  # in units of sqrt(sigma)
_Z_CUTOFF = -INFLUENCE_RADIUS ** 2
_FADE = float(-log_expit(-_Z_CUTOFF))  # softplus at the cutoff
PAIRS_PER_TILE = 1 << 18

# Multiplies the rasterizer's vertex adjoint; only fault-injection tests change it.
ADJOINT_SCALE = 1.0


def softplus(z: np.ndarray) -> np.ndarray:
    return -log_expit(-z)


# ============= Pair enumeration =============

def _visible(depth: np.ndarray, triangles: np.ndarray, camera: Camera) -> np.ndarray:
    d = depth[triangles]
    return np.all((d >= camera.near) & (d <= camera.far), axis=1)


def _pixel_ranges(corners: np.ndarray, camera: Camera, radius: float):
    """Inclusive column/row ranges of pixel centers within ``radius`` of each triangle's box."""
    height, width = camera.resolution
    lo = corners.min(axis=1) - radius
    hi = corners.max(axis=1) + radius
    c0 = np.ceil((lo[:, 0] + 1.0) * width / 2.0 - 0.5)
    c1 = np.floor((hi[:, 0] + 1.0) * width / 2.0 - 0.5)
    r0 = np.ceil((1.0 - hi[:, 1]) * height / 2.0 - 0.5)
    r1 = np.floor((1.0 - lo[:, 1]) * height / 2.0 - 0.5)
    c0 = np.clip(c0, 0, width).astype(np.int64)
    c1 = np.clip(c1, -1, width - 1).astype(np.int64)
    r0 = np.clip(r0, 0, height).astype(np.int64)
    r1 = np.clip(r1, -1, height - 1).astype(np.int64)
    return c0, c1, r0, r1


def _tiles(corners: np.ndarray, camera: Camera, radius: float) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield (triangle, flat pixel) index pairs, a few hundred thousand at a time."""
    width = camera.width
    c0, c1, r0, r1 = _pixel_ranges(corners, camera, radius)
    ncols = np.maximum(c1 - c0 + 1, 0)
    nrows = np.maximum(r1 - r0 + 1, 0)
    counts = ncols * nrows

    triangles = np.flatnonzero(counts)
    start = 0
    while start < len(triangles):
        running = np.cumsum(counts[triangles[start:]])
        stop = start + max(1, int(np.searchsorted(running, PAIRS_PER_TILE, side="right")))
        tile = triangles[start:stop]
        n = counts[tile]
        local = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
        cols = np.repeat(ncols[tile], n)
        row = np.repeat(r0[tile], n) + local // cols
        col = np.repeat(c0[tile], n) + local % cols
        yield np.repeat(tile, n), row * width + col
        start = stop


# ============= Distance to the triangle boundary =============

def _cross2(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _boundary_distance(points: np.ndarray, corners: np.ndarray):
    """Squared distance to the nearest edge, that edge, its parameter and p - q.

    Ties between edges go to the lowest edge index.
    """
    best_d2 = best_t = best_r = None
    best_edge = np.zeros(len(points), dtype=np.int64)
    for e in range(3):
        a, b = corners[:, e], corners[:, (e + 1) % 3]
        ab = b - a
        length2 = np.einsum("ij,ij->i", ab, ab)
        t = np.einsum("ij,ij->i", points - a, ab) / np.where(length2 > 0.0, length2, 1.0)
        t = np.clip(t, 0.0, 1.0)
        r = points - (a + ab * t[:, None])
        d2 = np.einsum("ij,ij->i", r, r)
        if best_d2 is None:
            best_d2, best_t, best_r = d2, t, r
            continue
        closer = d2 < best_d2
        best_d2 = np.where(closer, d2, best_d2)
        best_t = np.where(closer, t, best_t)
        best_r = np.where(closer[:, None], r, best_r)
        best_edge = np.where(closer, e, best_edge)
    return best_d2, best_edge, best_t, best_r


def _inside(points: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Point-in-triangle for either winding; zero-area triangles contain nothing."""
    area = _cross2(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    orientation = np.sign(area)
    inside = area != 0.0
    for e in range(3):
        a, b = corners[:, e], corners[:, (e + 1) % 3]
        inside &= _cross2(b - a, points - a) * orientation >= 0.0
    return inside


# ============= Soft rasterizer =============

MeshLike = Union[PosedMesh, TriMesh]


def _on_tape(meshes: Sequence[MeshLike], tape: Tape) -> List[PosedMesh]:
    if not meshes:
        raise MeshError("nothing to render: the mesh list is empty")
    return [m if isinstance(m, PosedMesh) else PosedMesh.constant(m, tape, track=False) for m in meshes]


def _stack_triangles(meshes: Sequence[PosedMesh]) -> Tuple[np.ndarray, List[int]]:
    triangles, sizes, offset = [], [], 0
    for mesh in meshes:
        n = mesh.vertices.shape[0]
        triangles.append(np.asarray(mesh.triangles) + offset)
        sizes.append(n)
        offset += n
    return np.concatenate(triangles).reshape(-1, 3), sizes


def rasterize_soft(
    projected: Sequence[np.ndarray],
    triangles: np.ndarray,
    camera: Camera,
    sigma: float,
    background: float = 0.0,
):
    """Soft silhouette of projected vertices; returns (image, vjp).

    ``projected`` holds one (N_i, 3) array of (x_ndc, y_ndc, depth) per mesh
    and ``triangles`` indexes their concatenation. ``vjp`` maps an image
    cotangent to one (N_i, 3) gradient per mesh.
    """
    height, width = camera.resolution
    xs, ys = pixel_centers(camera)
    sizes = [len(p) for p in projected]
    verts = np.concatenate([np.asarray(p, dtype=float).reshape(-1, 3) for p in projected])
    visible = np.flatnonzero(_visible(verts[:, 2], triangles, camera))
    tris = triangles[visible]
    corners = verts[:, :2][tris]
    radius = INFLUENCE_RADIUS * np.sqrt(sigma)

    def pairs():
        for tri, pix in _tiles(corners, camera, radius):
            points = np.stack([xs[pix % width], ys[pix // width]], axis=1)
            c = corners[tri]
            d2, edge, t, r = _boundary_distance(points, c)
            sign = np.where(_inside(points, c), 1.0, -1.0)
            z = sign * d2 / sigma
            keep = z >= _Z_CUTOFF
            yield tri[keep], pix[keep], z[keep], sign[keep], edge[keep], t[keep], r[keep]

    coverage = np.zeros(height * width)
    for _, pix, z, *_ in pairs():
        coverage += np.bincount(pix, weights=softplus(z) - _FADE, minlength=height * width)
    transmitted = np.exp(-coverage)
    image = (background + (1.0 - background) * (1.0 - transmitted)).reshape(height, width)

    def vjp(g):
        g_coverage = np.asarray(g, dtype=float).reshape(-1) * (1.0 - background) * transmitted
        grad = np.zeros((len(verts), 2))
        for tri, pix, z, sign, edge, t, r in pairs():
            g_d2 = g_coverage[pix] * expit(z) * sign / sigma
            start = tris[tri, edge]
            end = tris[tri, (edge + 1) % 3]
            weight_start = (-2.0 * (1.0 - t) * g_d2)[:, None] * r
            weight_end = (-2.0 * t * g_d2)[:, None] * r
            for axis in range(2):
                grad[:, axis] += np.bincount(start, weights=weight_start[:, axis], minlength=len(verts))
                grad[:, axis] += np.bincount(end, weights=weight_end[:, axis], minlength=len(verts))
        grad *= ADJOINT_SCALE
        full = np.concatenate([grad, np.zeros((len(verts), 1))], axis=1)
        return tuple(np.split(full, np.cumsum(sizes)[:-1]))

    return image, vjp


def render_silhouette_soft(
    meshes: Sequence[MeshLike],
    camera: Camera,
    settings: RenderSettings,
    tape: Tape,
    sigma: Optional[float] = None,
) -> VarId:
    """Recorded soft silhouette, an (H, W) node with values in [0, 1].

    ``sigma`` overrides ``settings.sigma`` (used by the annealing schedule).
    """
    posed = _on_tape(meshes, tape)
    triangles, _ = _stack_triangles(posed)
    sigma = settings.sigma if sigma is None else float(sigma)
    projected = [project_points(camera, m.vertices, tape) for m in posed]

    def forward(*arrays):
        image, vjp = rasterize_soft(arrays, triangles, camera, sigma, settings.background)
        if np.any((image < 0.0) | (image > 1.0)):
            raise ValueError("soft silhouette left [0, 1]")
        return image, vjp

    return tape.fused("rasterize_soft", forward, projected)


def soft_silhouette(meshes: Sequence[TriMesh], camera: Camera, settings: RenderSettings,
                    sigma: Optional[float] = None) -> GrayImage:
    """Soft silhouette as a plain image (no gradient bookkeeping kept)."""
    tape = Tape()
    return GrayImage(tape.array(render_silhouette_soft(meshes, camera, settings, tape, sigma)))


# ============= Hard rasterizer =============

def render_silhouette_hard(
    meshes: Sequence[TriMesh],
    camera: Camera,
    resolution: Optional[Tuple[int, int]] = None,
) -> GrayImage:
    """Binary silhouette: 1 where a pixel center lies in any projected triangle."""
    if not meshes:
        raise MeshError("nothing to render: the mesh list is empty")
    if resolution is not None:
        camera = camera.at_resolution(resolution)
    height, width = camera.resolution
    xs, ys = pixel_centers(camera)

    verts = np.concatenate([project_array(camera, m.vertices) for m in meshes])
    offsets = np.cumsum([0] + [m.vertex_count for m in meshes[:-1]])
    triangles = np.concatenate([m.triangles + o for m, o in zip(meshes, offsets)]).reshape(-1, 3)
    tris = triangles[_visible(verts[:, 2], triangles, camera)]
    corners = verts[:, :2][tris]

    covered = np.zeros(height * width, dtype=bool)
    for tri, pix in _tiles(corners, camera, 0.0):
        points = np.stack([xs[pix % width], ys[pix // width]], axis=1)
        covered[pix[_inside(points, corners[tri])]] = True
    return GrayImage(covered.reshape(height, width).astype(float))
