"""Gradient-based pose fitting: Adam with per-group rates, clamping and restarts."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from .autodiff import Tape
from .exceptions import AppException, NonFiniteGradientError, NumericAbortError
from .hand.limits import Handedness
from .hand.rig import PARAMS_PER_HAND, HandParams, HandRig, clamp_pose, is_clamped
from .hand.rotations import axis_angle_quat, matrix_to_quat, normalize_quaternion, quat_multiply
from .logging_config import logger
from .losses import HAND_ORDER, evaluate_objective, mean_squared_error
from .rendering.image import GrayImage
from .schemas import Camera, LossReport, LossWeights, OptimConfig, RenderSettings
from .settings import settings

MAX_INIT_TILT = np.radians(30.0)
INIT_DEPTH_RANGE = (0.35, 0.6)
# wrist offsets that centre each hand (fingers up) in view
_INIT_CENTER = {1: {Handedness.LEFT: (0.0, -0.085), Handedness.RIGHT: (0.0, -0.085)},
                2: {Handedness.LEFT: (-0.07, -0.085), Handedness.RIGHT: (0.07, -0.085)}}

Pose = Dict[Handedness, HandParams]


# ============= Adam =============

@dataclass
class AdamState:
    """First and second moments plus the step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(params_vec, grads, state: AdamState, rate, betas=(0.9, 0.999), eps: float = 1e-8) -> np.ndarray:
    """One bias-corrected Adam update; ``rate`` may be a scalar or per coordinate.

    Updates ``state`` in place and returns the new parameter vector.
    """
    params_vec = np.asarray(params_vec, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params_vec.shape != grads.shape or state.m.shape != grads.shape:
        raise ValueError(f"dimension mismatch: params {params_vec.shape}, grads {grads.shape}, state {state.m.shape}")
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise NonFiniteGradientError(int(bad[0]), float(grads[bad[0]]))

    beta1, beta2 = betas
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grads
    state.v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    return params_vec - rate * m_hat / (np.sqrt(v_hat) + eps)


def rate_vector(config: OptimConfig, hands: int) -> np.ndarray:
    per_hand = np.concatenate([
        np.full(PARAMS_PER_HAND - 7, config.rates.theta),
        np.full(4, config.rates.q),
        np.full(3, config.rates.t),
    ])
    return np.tile(per_hand, hands)


# ============= Initialization =============

def random_init(seed: int, rigs: Mapping[Handedness, HandRig], camera: Optional[Camera] = None) -> Pose:
    """Random starting pose for every rigged hand, deterministic per seed.

    Angles are drawn from the central half of each limit interval; Q is a
    tilt of at most 30 degrees composed with the palm-to-camera orientation;
    the wrist sits 0.35 to 0.6 m in front of the camera.
    """
    camera = camera or Camera()
    rng = np.random.default_rng(seed)
    hands = [h for h in HAND_ORDER if h in rigs]
    poses = {}
    for hand in hands:
        rig = rigs[hand]
        lo, hi = rig.limits.inner(0.5)
        theta = rng.uniform(lo, hi)

        axis = rng.normal(size=3)
        tilt = axis_angle_quat(axis, rng.uniform(0.0, MAX_INIT_TILT))
        q = normalize_quaternion(quat_multiply(tilt, matrix_to_quat(rig.base_orientation)))

        depth = rng.uniform(*INIT_DEPTH_RANGE)
        x, y = _INIT_CENTER[len(hands)][hand]
        jitter = rng.uniform(-0.01, 0.01, size=2)
        t = np.array([x + jitter[0], y + jitter[1], -depth])
        poses[hand] = clamp_pose(HandParams(theta=theta, q=q, t=t), rig.limits)
    return poses


# ============= Run records =============

@dataclass(frozen=True)
class Snapshot:
    restart: int
    iteration: int
    params: Pose


@dataclass
class RestartResult:
    restart: int
    seed: int
    status: str = "completed"      # converged | completed | aborted
    stop_reason: str = "iterations"
    iterations: int = 0
    best_iteration: int = 0
    best_image_term: Optional[float] = None
    best_params: Optional[Pose] = None
    history: List[LossReport] = field(default_factory=list)
    sigmas: List[float] = field(default_factory=list)
    best_so_far: List[float] = field(default_factory=list)
    snapshots: List[Snapshot] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def aborted(self) -> bool:
        return self.status == "aborted"


@dataclass
class RunRecord:
    """Everything one optimization produced; the best restart's pose is final."""

    seed: int
    config: OptimConfig
    restarts: List[RestartResult]
    best_restart: int
    final_params: Pose

    @property
    def best(self) -> RestartResult:
        return self.restarts[self.best_restart]

    @property
    def converged(self) -> bool:
        return self.best.status == "converged"

    @property
    def final_image_term(self) -> float:
        return self.best.best_image_term

    @property
    def hands(self) -> List[Handedness]:
        return [h for h in HAND_ORDER if h in self.final_params]


# ============= Optimization loop =============

def sigma_schedule(iteration: int, iterations: int, render: RenderSettings) -> float:
    """Geometric anneal from sigma_start to sigma over the first part of the run."""
    span = int(render.anneal_fraction * iterations) if render.anneal else 0
    if span <= 0 or iteration >= span or render.sigma_start <= render.sigma:
        return render.sigma
    return render.sigma_start * (render.sigma / render.sigma_start) ** (iteration / span)


def _to_vector(pose: Pose, hands) -> np.ndarray:
    return np.concatenate([pose[h].vector() for h in hands])


def _from_vector(vector: np.ndarray, pose: Pose, hands, rigs) -> Pose:
    chunks = np.split(vector, len(hands))
    return {h: clamp_pose(pose[h].with_vector(c), rigs[h].limits) for h, c in zip(hands, chunks)}


def _check_pose(pose: Pose, start: Pose, rigs) -> None:
    for hand, params in pose.items():
        if not is_clamped(params, rigs[hand].limits):
            raise AppException(f"{hand.value} hand left its joint limits after a step")
        if not np.array_equal(params.beta, start[hand].beta):
            raise AppException(f"{hand.value} hand shape parameters changed during optimization")


def run_restart(
    restart: int,
    seed: int,
    start: Pose,
    target: GrayImage,
    rigs: Mapping[Handedness, HandRig],
    camera: Camera,
    render: RenderSettings,
    weights: LossWeights,
    config: OptimConfig,
    snapshot_every: int,
    iterations: Optional[int] = None,
) -> RestartResult:
    """Optimize one start pose; a non-finite loss or gradient aborts this restart only."""
    hands = [h for h in HAND_ORDER if h in start]
    iterations = config.iterations if iterations is None else iterations
    pose = {h: clamp_pose(start[h], rigs[h].limits) for h in hands}
    rates = rate_vector(config, len(hands))
    state = AdamState.zeros(len(hands) * PARAMS_PER_HAND)
    pixels = target.height * target.width
    anneal_end = int(render.anneal_fraction * iterations) if render.anneal else 0

    result = RestartResult(restart=restart, seed=seed)
    for it in range(iterations + 1):
        sigma = sigma_schedule(it, iterations, render)
        tape = Tape()
        objective = evaluate_objective(target, pose, rigs, camera, render, weights, tape, sigma, it)
        report = objective.report
        result.iterations = it

        if not np.isfinite(report.total):
            result.status, result.stop_reason = "aborted", "non-finite loss"
            result.error = f"non-finite loss {report.total} at iteration {it}"
            logger.warning(f"Restart {restart} aborted: {result.error}", extra={"restart": restart, "iteration": it})
            return result

        if result.best_image_term is None or report.image_term < result.best_image_term:
            result.best_image_term = report.image_term
            result.best_iteration = it
            result.best_params = pose
        result.history.append(report)
        result.sigmas.append(sigma)
        result.best_so_far.append(result.best_image_term)

        if it % snapshot_every == 0:
            result.snapshots.append(Snapshot(restart, it, pose))
            logger.info(
                f"Restart {restart} iteration {it}: total={report.total:.6g} image={report.image_term:.6g} "
                f"pen={report.pen_term:.3g}",
                extra={"restart": restart, "iteration": it, "total": report.total,
                       "image_term": report.image_term, "pen_term": report.pen_term, "sigma": sigma},
            )

        if sigma == render.sigma and mean_squared_error(report.image_term, render.image_loss, pixels) < config.tolerance:
            result.status, result.stop_reason = "converged", "tolerance"
            break
        window = config.plateau_window
        if it >= anneal_end + window:
            before = result.best_so_far[-1 - window]
            if before - result.best_image_term <= config.plateau_tolerance * max(abs(before), 1e-12):
                result.stop_reason = "plateau"
                break
        if it == iterations:
            break

        grads = tape.backward(objective.total)
        grad_vec = np.concatenate([
            np.concatenate([np.ravel(grads[objective.poses[h].theta]), grads[objective.poses[h].q], grads[objective.poses[h].t]])
            for h in hands
        ])
        try:
            vector = adam_step(_to_vector(pose, hands), grad_vec, state, rates, config.betas, config.eps)
        except NonFiniteGradientError as e:
            result.status, result.stop_reason, result.error = "aborted", "non-finite gradient", e.message
            logger.warning(f"Restart {restart} aborted: {e.message}", extra={"restart": restart, "iteration": it})
            return result
        pose = _from_vector(vector, pose, hands, rigs)
        if settings.debug:
            _check_pose(pose, start, rigs)

    if not result.snapshots or result.snapshots[-1].iteration != result.iterations:
        result.snapshots.append(Snapshot(restart, result.iterations, pose))
    return result


def _restart_job(args) -> RestartResult:
    return run_restart(*args)


def optimize(
    target: GrayImage,
    rigs: Mapping[Handedness, HandRig],
    init: Optional[Pose],
    config: OptimConfig,
    camera: Optional[Camera] = None,
    render: Optional[RenderSettings] = None,
    weights: Optional[LossWeights] = None,
    workers: Optional[int] = None,
) -> RunRecord:
    """Fit hand poses to ``target`` over ``config.restarts`` starts.

    Restart 0 starts from ``init`` (random when None); restart r > 0 from
    ``random_init(seed + r)``. The kept result is the restart with the lowest
    best image term; ties go to the lower restart index.
    """
    camera = camera or Camera(resolution=target.resolution)
    render = render or RenderSettings()
    weights = weights or LossWeights()
    workers = settings.workers if workers is None else workers
    snapshot_every = config.snapshot_every or settings.snapshot_every
    hands = {h: rigs[h] for h in HAND_ORDER if h in rigs}

    jobs = []
    for r in range(config.restarts):
        seed = config.seed + r
        start = init if (r == 0 and init is not None) else random_init(seed, hands, camera)
        start = {h: start[h] for h in hands}
        jobs.append((r, seed, start, target, hands, camera, render, weights, config, snapshot_every))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_restart_job, jobs))
    else:
        results = [_restart_job(job) for job in jobs]

    finished = [r for r in results if not r.aborted]
    if not finished:
        raise NumericAbortError(len(results), results[-1].error or "unknown")
    best = min(finished, key=lambda r: (r.best_image_term, r.restart))
    logger.info(
        f"Best restart {best.restart}: image term {best.best_image_term:.6g} ({best.status})",
        extra={"restart": best.restart, "image_term": best.best_image_term, "status": best.status},
    )
    return RunRecord(seed=config.seed, config=config, restarts=results, best_restart=best.restart,
                     final_params=best.best_params)


def single_hand_mode(
    target: GrayImage,
    rig: HandRig,
    init: Optional[HandParams],
    config: OptimConfig,
    **kwargs,
) -> RunRecord:
    """``optimize`` with one hand only."""
    start = None if init is None else {rig.handedness: init}
    return optimize(target, {rig.handedness: rig}, start, config, **kwargs)
