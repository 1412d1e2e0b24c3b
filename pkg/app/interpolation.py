"""Shadow-to-shadow transitions: endpoint fitting, pose blending and per-frame refinement."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .autodiff import Tape
from .exceptions import NonFiniteGradientError
from .hand.limits import Handedness
from .hand.rig import PARAMS_PER_HAND, HandParams, HandRig, PoseVars, clamp_pose, forward_kinematics, skin
from .hand.rotations import slerp
from .logging_config import logger
from .losses import HAND_ORDER, image_l2, penetration_loss, pose_penetration
from .optimizer import AdamState, RunRecord, adam_step, optimize, rate_vector
from .rendering.image import GrayImage, check_resolution
from .rendering.rasterizer import render_silhouette_soft
from .schemas import Camera, LossWeights, OptimConfig, RenderSettings
from .settings import settings

Pose = Dict[Handedness, HandParams]

REFINE_LIMIT = 100
PEN_FREE = 1e-6


class EndpointFit(NamedTuple):
    params_a: Pose
    params_b: Pose
    record_a: RunRecord
    record_b: RunRecord


@dataclass
class ShadowSequence:
    """T + 1 poses from A to B; frames 0 and T are the endpoint objects themselves."""

    frames: List[Pose]
    alphas: List[float]
    refined: bool
    pen_terms: List[float] = field(default_factory=list)
    endpoint_records: Optional[EndpointFit] = None

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def steps(self) -> int:
        return len(self.frames) - 1


def optimize_pair(
    target_a: GrayImage,
    target_b: GrayImage,
    rigs: Mapping[Handedness, HandRig],
    config: OptimConfig,
    init: Optional[Pose] = None,
    **kwargs,
) -> EndpointFit:
    """Fit A, then fit B starting from A's result.

    B runs a single restart so its pose stays a small motion away from A.
    """
    check_resolution(target_a.resolution, target_b.resolution)
    record_a = optimize(target_a, rigs, init, config, **kwargs)
    warm = config.model_copy(update={"restarts": 1})
    record_b = optimize(target_b, rigs, record_a.final_params, warm, **kwargs)
    return EndpointFit(record_a.final_params, record_b.final_params, record_a, record_b)


# ============= Blending =============

def blend_params(a: HandParams, b: HandParams, alpha: float, rig: HandRig) -> HandParams:
    """Linear theta and t, short-arc slerp for Q, then clamped."""
    blended = replace(
        a,
        theta=a.theta + alpha * (b.theta - a.theta),
        q=a.q if np.array_equal(a.q, b.q) else slerp(a.q, b.q, alpha),
        t=a.t + alpha * (b.t - a.t),
        beta=a.beta + alpha * (b.beta - a.beta),
    )
    return clamp_pose(blended, rig.limits)


def blend_frames(params_a: Pose, params_b: Pose, steps: int, rigs: Mapping[Handedness, HandRig]) -> List[Pose]:
    if steps < 1:
        raise ValueError(f"an interpolation needs at least one step, got {steps}")
    if set(params_a) != set(params_b):
        raise ValueError("both endpoints must pose the same hands")
    frames = [params_a]
    for k in range(1, steps):
        alpha = k / steps
        frames.append({h: blend_params(params_a[h], params_b[h], alpha, rigs[h]) for h in params_a})
    frames.append(params_b)
    return frames


# ============= Refinement =============

def blended_objective(
    pose: Pose,
    alpha: float,
    targets: Sequence[GrayImage],
    rigs: Mapping[Handedness, HandRig],
    camera: Camera,
    render: RenderSettings,
    weights: LossWeights,
    tape: Tape,
):
    """(1 - alpha) |I_A - R|^2 + alpha |I_B - R|^2 + w_pen * pen, with its pose handles and pen value."""
    hands = [h for h in HAND_ORDER if h in pose]
    handles, meshes = {}, []
    for hand in hands:
        handles[hand] = PoseVars.record(tape, pose[hand])
        meshes.append(skin(rigs[hand], forward_kinematics(rigs[hand], pose[hand], tape, handles[hand]), tape))

    image = render_silhouette_soft(meshes, camera, render, tape)
    to_a = tape.apply("powi", image_l2(targets[0], image, tape), n=2)
    to_b = tape.apply("powi", image_l2(targets[1], image, tape), n=2)
    pen = penetration_loss(meshes[0], meshes[1] if len(meshes) > 1 else None, tape)
    total = (1.0 - alpha) * to_a + alpha * to_b + weights.w_pen * pen
    return total, handles, pen.value


def refine_frame(
    pose: Pose,
    alpha: float,
    targets: Sequence[GrayImage],
    rigs: Mapping[Handedness, HandRig],
    camera: Camera,
    render: RenderSettings,
    weights: LossWeights,
    config: OptimConfig,
    iterations: int = REFINE_LIMIT,
) -> Pose:
    """Adam on the blended objective from the blend.

    Returns the best iterate, preferring penetration-free ones; the blend
    itself competes as iterate 0.
    """
    hands = [h for h in HAND_ORDER if h in pose]
    rates = rate_vector(config, len(hands))
    state = AdamState.zeros(len(hands) * PARAMS_PER_HAND)
    best_key, best = None, pose

    for it in range(min(iterations, REFINE_LIMIT) + 1):
        tape = Tape()
        total, handles, pen = blended_objective(pose, alpha, targets, rigs, camera, render, weights, tape)
        if not np.isfinite(total.value):
            logger.warning(f"Refinement at alpha={alpha:.3f} stopped: non-finite objective", extra={"alpha": alpha})
            break
        key = (pen >= PEN_FREE, total.value)
        if best_key is None or key < best_key:
            best_key, best = key, pose
        if it == iterations:
            break

        grads = tape.backward(total)
        grad_vec = np.concatenate([
            np.concatenate([np.ravel(grads[handles[h].theta]), grads[handles[h].q], grads[handles[h].t]])
            for h in hands
        ])
        vector = np.concatenate([pose[h].vector() for h in hands])
        try:
            vector = adam_step(vector, grad_vec, state, rates, config.betas, config.eps)
        except NonFiniteGradientError as e:
            logger.warning(f"Refinement at alpha={alpha:.3f} stopped: {e.message}", extra={"alpha": alpha})
            break
        chunks = np.split(vector, len(hands))
        pose = {h: clamp_pose(pose[h].with_vector(c), rigs[h].limits) for h, c in zip(hands, chunks)}

    logger.debug(f"Refined frame at alpha={alpha:.3f}", extra={"alpha": alpha, "objective": best_key[1] if best_key else None})
    return best


def _refine_job(args) -> Pose:
    return refine_frame(*args)


def interpolate(
    params_a: Pose,
    params_b: Pose,
    steps: int,
    refine: bool = False,
    *,
    rigs: Mapping[Handedness, HandRig],
    targets: Optional[Sequence[GrayImage]] = None,
    camera: Optional[Camera] = None,
    render: Optional[RenderSettings] = None,
    weights: Optional[LossWeights] = None,
    config: Optional[OptimConfig] = None,
    iterations: int = REFINE_LIMIT,
    workers: Optional[int] = None,
) -> ShadowSequence:
    """Pose sequence of ``steps + 1`` frames with alpha = k / steps.

    With ``refine`` every intermediate frame is optimized independently
    (in parallel when ``workers > 1``) against both targets; endpoints are
    never touched.
    """
    frames = blend_frames(params_a, params_b, steps, rigs)
    alphas = [k / steps for k in range(steps + 1)]

    if refine and steps > 1:
        if targets is None or len(targets) != 2:
            raise ValueError("refinement needs both target images")
        check_resolution(targets[0].resolution, targets[1].resolution)
        camera = camera or Camera(resolution=targets[0].resolution)
        render = render or RenderSettings()
        weights = weights or LossWeights()
        config = config or OptimConfig()
        workers = settings.workers if workers is None else workers
        rig_map = {h: rigs[h] for h in params_a}

        jobs = [(frames[k], alphas[k], targets, rig_map, camera, render, weights, config, iterations)
                for k in range(1, steps)]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
                refined = list(pool.map(_refine_job, jobs))
        else:
            refined = [_refine_job(job) for job in jobs]
        frames = [frames[0]] + refined + [frames[-1]]

    pen_terms = [pose_penetration(frame, rigs) for frame in frames]
    logger.info(
        f"Interpolated {steps + 1} frames (refine={refine})",
        extra={"frames": steps + 1, "refined": refine, "max_pen": max(pen_terms)},
    )
    return ShadowSequence(frames=frames, alphas=alphas, refined=bool(refine and steps > 1), pen_terms=pen_terms)
