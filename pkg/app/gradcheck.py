"""Finite-difference verification of every recorded gradient.

Four stages run in order: elementary tape operations, forward kinematics
with skinning, the soft rasterizer and the full objective. Each compares the
tape's reverse sweep against central differences and reports the worst
relative error |a - n| / max(|a|, |n|, floor).
"""
from typing import Callable, List, NamedTuple, Sequence, Tuple

import numpy as np

from .assets import bundled_target
from .autodiff import Tape, VarId
from .exceptions import GradcheckFailure
from .geometry.mesh import PosedMesh, TriMesh
from .hand.limits import Handedness
from .hand.rig import BASE_ORIENTATION, HandParams, PoseVars, clamp_pose, forward_kinematics, make_procedural_hand, skin
from .hand.rotations import matrix_to_quat
from .logging_config import log_timing, logger
from .losses import evaluate_objective
from .rendering.rasterizer import render_silhouette_soft
from .schemas import Camera, LossWeights, RenderSettings

STAGES = ("autodiff", "fk_skin", "rasterizer", "total_loss")
THRESHOLDS = {"autodiff": 1e-4, "fk_skin": 1e-4, "rasterizer": 1e-3, "total_loss": 1e-3}
# below this magnitude gradients are compared absolutely
FLOORS = {"autodiff": 1e-6, "fk_skin": 1e-6, "rasterizer": 1e-4, "total_loss": 1e-4}

RASTER_RESOLUTION = (64, 64)
RASTER_TRIANGLES = 20
RASTER_SEEDS = 5
RASTER_SIGMA = 1e-3
FK_POSES = 20

Scalar = Callable[[Tape, List[VarId]], VarId]


class StageReport(NamedTuple):
    stage: str
    worst_error: float
    parameter: str
    threshold: float
    checked: int

    @property
    def passed(self) -> bool:
        return self.worst_error <= self.threshold


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _evaluate(fn: Scalar, values: Sequence[np.ndarray]) -> float:
    tape = Tape()
    return tape.value(fn(tape, [tape.leaf(v) for v in values]))


def compare_gradients(
    fn: Scalar,
    values: Sequence[np.ndarray],
    names: Sequence[str],
    floor: float,
    step: Callable[[float], float],
) -> Tuple[float, str, int]:
    """Worst relative error of every input entry against central differences."""
    values = [np.array(v, dtype=float) for v in values]
    tape = Tape()
    leaves = [tape.leaf(v) for v in values]
    grads = tape.backward(fn(tape, leaves))

    worst, where, checked = 0.0, "", 0
    for k, (value, name) in enumerate(zip(values, names)):
        analytic = np.asarray(grads[leaves[k]], dtype=float)
        for idx in np.ndindex(value.shape):
            h = step(float(value[idx]))
            plus = [v.copy() for v in values]
            minus = [v.copy() for v in values]
            plus[k][idx] += h
            minus[k][idx] -= h
            numeric = (_evaluate(fn, plus) - _evaluate(fn, minus)) / (2.0 * h)
            error = relative_error(float(analytic[idx]), numeric, floor)
            checked += 1
            if error > worst or not where:
                worst, where = error, f"{name}{list(idx) if value.ndim else ''}"
    return worst, where, checked


def _step_relative(x: float) -> float:
    return 1e-5 * max(1.0, abs(x))


def _step_fixed(x: float) -> float:
    return 1e-6


def _weighted_sum(tape: Tape, value: VarId, weights: np.ndarray) -> VarId:
    return tape.apply("sum", value * weights)


# ============= Stages =============

def _operation_cases(rng: np.random.Generator):
    """(name, fn, inputs) per elementary operation, inputs kept off kinks and poles."""
    def u(*shape):
        return rng.uniform(-2.0, 2.0, size=shape)

    def away(x, gap=0.2):
        return np.where(np.abs(x) < gap, np.sign(x + 1e-12) * gap, x)

    a, b = u(2, 3), u(2, 3)
    separated = b + np.where(b >= a, 0.3, -0.3)
    w = u(2, 3)

    def unary(op, **params):
        return lambda tape, x: _weighted_sum(tape, tape.apply(op, x[0], **params), w)

    def binary(op):
        return lambda tape, x: _weighted_sum(tape, tape.apply(op, x[0], x[1]), w)

    cases = [
        ("add", binary("add"), [a, b]),
        ("sub", binary("sub"), [a, b]),
        ("mul", binary("mul"), [a, b]),
        ("div", binary("div"), [a, away(b, 0.5)]),
        ("neg", unary("neg"), [a]),
        ("sin", unary("sin"), [a]),
        ("cos", unary("cos"), [a]),
        ("exp", unary("exp"), [a]),
        ("sqrt", unary("sqrt"), [np.abs(a) + 0.5]),
        ("sigmoid", unary("sigmoid"), [a]),
        ("min", binary("min"), [a, separated]),
        ("max", binary("max"), [a, separated]),
        ("relu", unary("relu"), [away(a)]),
        ("powi", unary("powi", n=3), [a]),
        ("matmul", lambda tape, x: _weighted_sum(tape, x[0] @ x[1], np.ones((2, 4))), [a, u(3, 4)]),
        ("sum", lambda tape, x: _weighted_sum(tape, tape.apply("sum", x[0], axis=0), w[0]), [a]),
        ("getitem", lambda tape, x: _weighted_sum(tape, x[0][:, 1:], w[:, 1:]), [a]),
        ("stack", lambda tape, x: _weighted_sum(tape, tape.apply("stack", x[0], x[1], axis=0), np.stack([w, -w])), [a, b]),
        ("reshape", lambda tape, x: _weighted_sum(tape, tape.apply("reshape", x[0], shape=(3, 2)), w.reshape(3, 2)), [a]),
        ("composite", lambda tape, x: tape.apply("sin", x[0]) * tape.apply("exp", x[0]), [np.array(0.7)]),
    ]

    # a random 10-operation graph over three scalars
    ops = rng.choice(["add", "sub", "mul", "sin", "cos", "sigmoid"], size=10)
    picks = rng.integers(0, 1 << 16, size=(10, 2))

    def dag(tape, x):
        nodes = list(x)
        for op, (i, j) in zip(ops, picks):
            first = nodes[i % len(nodes)]
            if op in ("add", "sub", "mul"):
                nodes.append(tape.apply(op, first, nodes[j % len(nodes)]))
            else:
                nodes.append(tape.apply(op, first))
        return nodes[-1]

    cases.append(("graph", dag, [u(), u(), u()]))
    return cases


def check_autodiff(seed: int) -> StageReport:
    rng = np.random.default_rng(seed)
    worst, where, checked = 0.0, "", 0
    for name, fn, inputs in _operation_cases(rng):
        names = [f"{name}.x{k}" for k in range(len(inputs))]
        error, at, n = compare_gradients(fn, inputs, names, FLOORS["autodiff"], _step_relative)
        checked += n
        if error > worst or not where:
            worst, where = error, at
    return StageReport("autodiff", worst, where, THRESHOLDS["autodiff"], checked)


def _random_pose(rng: np.random.Generator, rig, t, theta=None) -> HandParams:
    if theta is None:
        theta = rng.uniform(*rig.limits.inner(0.3))
    params = HandParams(
        theta=theta,
        q=matrix_to_quat(BASE_ORIENTATION[rig.handedness]) + rng.normal(scale=0.05, size=4),
        t=t,
        beta=rng.uniform(0.9, 1.1, size=6),
    )
    return clamp_pose(params, rig.limits)


def check_fk_skin(seed: int, poses: int = FK_POSES) -> StageReport:
    rng = np.random.default_rng(seed)
    worst, where, checked = 0.0, "", 0
    for k in range(poses):
        rig = make_procedural_hand(Handedness.LEFT if k % 2 == 0 else Handedness.RIGHT)
        params = _random_pose(rng, rig, rng.uniform(-0.2, 0.2, size=3))
        weights = rng.normal(size=(rig.rest_mesh.vertex_count, 3))

        def fn(tape, x, params=params, rig=rig, weights=weights):
            pose = PoseVars(*x)
            posed = skin(rig, forward_kinematics(rig, params, tape, pose), tape)
            return _weighted_sum(tape, posed.vertices, weights)

        error, at, n = compare_gradients(
            fn, [params.theta, params.q, params.t], [f"pose{k}.theta", f"pose{k}.q", f"pose{k}.t"],
            FLOORS["fk_skin"], _step_relative,
        )
        checked += n
        if error > worst or not where:
            worst, where = error, at
    return StageReport("fk_skin", worst, where, THRESHOLDS["fk_skin"], checked)


def random_scene(rng: np.random.Generator, camera: Camera, count: int = RASTER_TRIANGLES) -> TriMesh:
    """``count`` separate triangles in front of the camera, mostly on screen."""
    centers = rng.uniform(-0.7, 0.7, size=(count, 1, 2))
    ndc = centers + rng.uniform(-0.25, 0.25, size=(count, 3, 2))
    depth = rng.uniform(0.8, 2.0, size=(count, 1))
    kx, ky = camera.tan_half_fov * camera.aspect, camera.tan_half_fov
    points = np.stack([ndc[..., 0] * depth * kx, ndc[..., 1] * depth * ky, -np.broadcast_to(depth, (count, 3))], axis=-1)
    return TriMesh(points.reshape(-1, 3), np.arange(3 * count).reshape(count, 3), check=False)


def check_rasterizer(seed: int) -> StageReport:
    camera = Camera(resolution=RASTER_RESOLUTION)
    settings = RenderSettings(sigma=RASTER_SIGMA, anneal=False)
    worst, where, checked = 0.0, "", 0
    for k in range(RASTER_SEEDS):
        rng = np.random.default_rng([seed, k])
        scene = random_scene(rng, camera)
        weights = rng.uniform(0.0, 1.0, size=camera.resolution)

        def fn(tape, x, scene=scene, weights=weights):
            mesh = PosedMesh(x[0], scene.triangles, watertight=False)
            return _weighted_sum(tape, render_silhouette_soft([mesh], camera, settings, tape), weights)

        error, at, n = compare_gradients(fn, [scene.vertices], [f"scene{k}.vertices"], FLOORS["rasterizer"], _step_fixed)
        checked += n
        if error > worst or not where:
            worst, where = error, at
    return StageReport("rasterizer", worst, where, THRESHOLDS["rasterizer"], checked)


def check_total_loss(seed: int) -> StageReport:
    """Every pose parameter of a two-hand scene against a disc target."""
    rng = np.random.default_rng(seed)
    camera = Camera(resolution=RASTER_RESOLUTION)
    settings = RenderSettings(sigma=RASTER_SIGMA, anneal=False)
    target = bundled_target("disc", RASTER_RESOLUTION)
    rigs = {h: make_procedural_hand(h) for h in (Handedness.LEFT, Handedness.RIGHT)}
    # hands well apart and close to rest so the penetration term stays zero under perturbation
    params = {}
    for hand, x in ((Handedness.LEFT, -0.12), (Handedness.RIGHT, 0.12)):
        rig = rigs[hand]
        theta = rig.limits.clamp(rng.normal(scale=0.05, size=(15, 3)))
        params[hand] = _random_pose(rng, rig, np.array([x, -0.08, -0.5]), theta)
    hands = list(params)
    names = [f"{h.value}.{part}" for h in hands for part in ("theta", "q", "t")]
    values = [getattr(params[h], part) for h in hands for part in ("theta", "q", "t")]

    def fn(tape, x):
        handles = {h: PoseVars(*x[3 * i:3 * i + 3]) for i, h in enumerate(hands)}
        return evaluate_objective(target, params, rigs, camera, settings, LossWeights(), tape, poses=handles).total

    error, at, n = compare_gradients(fn, values, names, FLOORS["total_loss"], _step_fixed)
    return StageReport("total_loss", error, at, THRESHOLDS["total_loss"], n)


# ============= Runner =============

_CHECKS = {
    "autodiff": check_autodiff,
    "fk_skin": check_fk_skin,
    "rasterizer": check_rasterizer,
    "total_loss": check_total_loss,
}


def run_gradcheck(seed: int = 0, stages: Sequence[str] = STAGES) -> List[StageReport]:
    """Run the requested stages in order and report each one."""
    reports = []
    for stage in stages:
        with log_timing(f"gradcheck {stage}", stage=stage):
            report = _CHECKS[stage](seed)
        level = logger.info if report.passed else logger.error
        level(
            f"{stage}: worst relative error {report.worst_error:.3e} at {report.parameter} "
            f"({report.checked} checked, threshold {report.threshold:.0e})",
            extra={"stage": stage, "error": report.worst_error, "parameter": report.parameter},
        )
        reports.append(report)
    return reports


def raise_on_failure(reports: Sequence[StageReport]) -> None:
    for report in reports:
        if not report.passed:
            raise GradcheckFailure(report.stage, report.parameter, report.worst_error, report.threshold)
