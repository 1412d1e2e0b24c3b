"""The objective: image term, penetration penalty, optional limit penalty."""
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tape, VarId
from .exceptions import RenderOnlyMeshError
from .geometry.mesh import PosedMesh, TriMesh
from .geometry.penetration import PenetrationSet, find_penetrations, segment_penetrations
from .hand.limits import Handedness, JointLimits
from .hand.rig import HandParams, HandRig, PoseVars, forward_kinematics, skin
from .rendering.image import GrayImage, check_resolution
from .rendering.rasterizer import render_silhouette_soft
from .schemas import Camera, LossReport, LossWeights, RenderSettings

HAND_ORDER = (Handedness.LEFT, Handedness.RIGHT)


# ============= Image term =============

def image_l2(target: GrayImage, rendered: VarId, tape: Tape, mode: str = "l2") -> VarId:
    """Distance between a rendered image node and the target.

    ``l2`` is the root of the summed squared differences, ``mse`` their mean.
    At zero difference the l2 gradient is taken as 0.
    """
    if mode not in ("l2", "mse"):
        raise ValueError(f"unknown image loss '{mode}'")
    if isinstance(rendered, GrayImage):
        rendered = tape.constant(rendered.pixels)
    check_resolution(target.resolution, rendered.shape)
    goal = target.pixels

    def forward(image):
        diff = image - goal
        squared = float(np.sum(diff * diff))
        if mode == "mse":
            return np.asarray(squared / diff.size), lambda g: (g * 2.0 * diff / diff.size,)
        norm = np.sqrt(squared)
        scale = 1.0 / norm if norm > 0.0 else 0.0
        return np.asarray(norm), lambda g: (g * scale * diff,)

    return tape.fused(f"image_{mode}", forward, [rendered])


def mean_squared_error(image_term: float, mode: str, pixel_count: int) -> float:
    """Mean squared pixel error implied by an image term."""
    return image_term ** 2 / pixel_count if mode == "l2" else image_term


# ============= Penetration term =============

def _depth_term(hits: PenetrationSet, points: np.ndarray) -> Tuple[float, np.ndarray]:
    """Sum of squared depths and its gradient wrt the intruding points."""
    grad = np.zeros_like(points)
    if not len(hits):
        return 0.0, grad
    np.add.at(grad, hits.vertex_indices, 2.0 * (points[hits.vertex_indices] - hits.nearest_points))
    return float(np.sum(hits.depths ** 2)), grad


def penetration_value(meshes: Sequence[PosedMesh], positions: Sequence[np.ndarray]):
    """Value and vjp of the penetration penalty at the given vertex positions."""
    grads = [np.zeros_like(p) for p in positions]
    solids = [TriMesh(p, m.triangles, check=False) for p, m in zip(positions, meshes)]

    cross: List[float] = []
    if len(meshes) == 2:
        for intruder, host in ((0, 1), (1, 0)):
            value, grad = _depth_term(find_penetrations(positions[intruder], solids[host]), positions[intruder])
            grads[intruder] += grad
            cross.append(value)

    own: List[float] = []
    for k, mesh in enumerate(meshes):
        if mesh.segments is None:
            continue
        value, grad = _depth_term(segment_penetrations(solids[k], mesh.segments, mesh.adjacent), positions[k])
        grads[k] += grad
        own.append(value)

    # (ab + ba) + (aa + bb): symmetric in the two meshes bit for bit
    total = sum(cross) + sum(own)

    def vjp(g):
        return tuple(g * grad for grad in grads)

    return np.asarray(total), vjp


def penetration_loss(mesh_a: PosedMesh, mesh_b: Optional[PosedMesh], tape: Tape) -> VarId:
    """Sum of squared penetration depths between and within the hands.

    Cross terms count the vertices of each hand inside the other; self terms
    count vertices inside non-adjacent parts of the same hand. The host
    surface is held fixed, so an intruding vertex v with nearest host point
    n receives gradient 2 (v - n).
    """
    meshes = [m for m in (mesh_a, mesh_b) if m is not None]
    for mesh in meshes:
        if not mesh.watertight:
            raise RenderOnlyMeshError(mesh.snapshot().open_edge_count)

    def forward(*positions):
        return penetration_value(meshes, positions)

    return tape.fused("penetration", forward, [m.vertices for m in meshes])


def pose_penetration(params: Mapping[Handedness, HandParams], rigs: Mapping[Handedness, HandRig]) -> float:
    """Penetration penalty of posed hands, as a number."""
    tape = Tape()
    meshes = []
    for hand in HAND_ORDER:
        if hand in params:
            pose = PoseVars.record(tape, params[hand], track=False)
            meshes.append(skin(rigs[hand], forward_kinematics(rigs[hand], params[hand], tape, pose), tape))
    return penetration_loss(meshes[0], meshes[1] if len(meshes) > 1 else None, tape).value


# ============= Limit term =============

def limit_penalty(theta: VarId, limits: JointLimits, tape: Tape) -> VarId:
    """Sum of squared out-of-range angles (radians)."""
    over = tape.apply("relu", theta - limits.upper)
    under = tape.apply("relu", limits.lower - theta)
    return tape.apply("sum", over * over + under * under)


# ============= Total =============

class Objective(NamedTuple):
    total: VarId
    report: LossReport
    poses: Dict[Handedness, PoseVars]
    meshes: Dict[Handedness, PosedMesh]
    image: VarId


def evaluate_objective(
    target: GrayImage,
    params: Mapping[Handedness, HandParams],
    rigs: Mapping[Handedness, HandRig],
    camera: Camera,
    settings: RenderSettings,
    weights: LossWeights,
    tape: Tape,
    sigma: Optional[float] = None,
    iteration: int = 0,
    poses: Optional[Mapping[Handedness, PoseVars]] = None,
) -> Objective:
    """FK, skinning, rendering and every loss term on one tape.

    ``poses`` supplies existing tape handles for the pose parameters;
    by default fresh leaves are recorded from ``params``.
    """
    check_resolution(camera.resolution, target.resolution)
    hands = [h for h in HAND_ORDER if h in params]
    if not hands:
        raise ValueError("at least one hand is required")

    handles, poses, meshes = poses, {}, {}
    for hand in hands:
        poses[hand] = handles[hand] if handles else PoseVars.record(tape, params[hand])
        meshes[hand] = skin(rigs[hand], forward_kinematics(rigs[hand], params[hand], tape, poses[hand]), tape)

    image = render_silhouette_soft([meshes[h] for h in hands], camera, settings, tape, sigma)
    image_term = image_l2(target, image, tape, settings.image_loss)
    pen_term = penetration_loss(meshes[hands[0]], meshes[hands[1]] if len(hands) > 1 else None, tape)
    limit_term = tape.constant(0.0)
    for hand in hands:
        limit_term = limit_term + limit_penalty(poses[hand].theta, rigs[hand].limits, tape)

    total = weights.w_image * image_term + weights.w_pen * pen_term + weights.w_limit * limit_term
    report = LossReport(
        iteration=iteration,
        total=total.value,
        image_term=image_term.value,
        pen_term=pen_term.value,
        limit_term=limit_term.value,
    )
    return Objective(total, report, poses, meshes, image)


def total_loss(
    target: GrayImage,
    params_left: Optional[HandParams],
    params_right: Optional[HandParams],
    rigs: Mapping[Handedness, HandRig],
    camera: Camera,
    settings: RenderSettings,
    weights: LossWeights,
    tape: Tape,
) -> Tuple[VarId, LossReport]:
    """Weighted objective for up to two hands and its decomposition."""
    params = {h: p for h, p in zip(HAND_ORDER, (params_left, params_right)) if p is not None}
    objective = evaluate_objective(target, params, rigs, camera, settings, weights, tape)
    return objective.total, objective.report
