"""Command services: load inputs, run the pipeline, write every output file."""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from .assets import BUNDLED_PREFIX, Target, load_target
from .exceptions import AssetIOError, ConfigError, NumericAbortError
from .geometry.obj_io import write_obj
from .hand.limits import Handedness
from .hand.rig import HandParams, HandRig, make_procedural_hand, pose_mesh
from .hand.rig_io import load_params, load_rig, save_params
from .interpolation import EndpointFit, interpolate, optimize_pair
from .logging_config import log_timing, logger
from .losses import HAND_ORDER
from .manifest import ManifestWriter
from .optimizer import RunRecord, optimize
from .rendering.image import GrayImage, compose_shadow
from .rendering.rasterizer import render_silhouette_hard, soft_silhouette
from .schemas import (
    ConfigRecord,
    FinalRecord,
    FrameRecord,
    IterationRecord,
    RestartRecord,
    RunConfig,
    SnapshotRecord,
)
from .settings import settings

PathLike = Union[str, Path]
Pose = Dict[Handedness, HandParams]

MANIFEST = "manifest.jsonl"
LOSS_LOG = "losses.jsonl"
FINAL_PARAMS = "final_params.json"


@dataclass
class CommandResult:
    output_dir: Path
    final: FinalRecord


# ============= Inputs =============

def load_run_config(path: PathLike) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise AssetIOError(str(path), str(e))
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError.from_validation(e)


def hands_for(count: int) -> Tuple[Handedness, ...]:
    return HAND_ORDER[:count]


def build_rigs(config: RunConfig, hands: Sequence[Handedness], base_dir: Path) -> Dict[Handedness, HandRig]:
    """Rig per hand: the configured rig file, else the procedural hand."""
    rigs = {}
    for hand in hands:
        path = getattr(config.rigs, hand.value)
        if path is None:
            rigs[hand] = make_procedural_hand(hand)
        else:
            rig = load_rig(_resolve(path, base_dir))
            if rig.handedness is not hand:
                raise ConfigError(f"rigs.{hand.value}", f"rig file is a {rig.handedness.value} hand")
            rigs[hand] = rig
    return rigs


def output_directory(config: RunConfig, base_dir: Path, override: Optional[PathLike] = None) -> Path:
    if override is not None:
        return Path(override)
    return _resolve(config.output_dir, base_dir) if config.output_dir else Path(settings.output_dir)


def _resolve(path: str, base_dir: Path) -> Path:
    path = Path(path)
    return path if path.is_absolute() else base_dir / path


def _target(source: str, config: RunConfig, base_dir: Path) -> Target:
    if not source.startswith(BUNDLED_PREFIX):
        source = str(_resolve(source, base_dir))
    return load_target(source, config.camera.resolution)


# ============= Exports =============

def export_pose(
    pose: Mapping[Handedness, HandParams],
    rigs: Mapping[Handedness, HandRig],
    config: RunConfig,
    directory: Path,
    stem: str,
    meshes: bool = True,
    soft: bool = True,
) -> List[str]:
    """Hard and soft silhouettes (PGM and PNG), the shadow composite and one OBJ per hand.

    Returns file names relative to ``directory``.
    """
    hands = [h for h in HAND_ORDER if h in pose]
    posed = [pose_mesh(rigs[h], pose[h]) for h in hands]
    files = []

    hard = render_silhouette_hard(posed, config.camera)
    hard.save_pgm(directory / f"{stem}_hard.pgm")
    hard.save_png(directory / f"{stem}_hard.png")
    files += [f"{stem}_hard.pgm", f"{stem}_hard.png"]
    if soft:
        image = soft_silhouette(posed, config.camera, config.render)
        image.save_pgm(directory / f"{stem}_soft.pgm")
        files.append(f"{stem}_soft.pgm")
    if config.light is not None:
        compose_shadow(hard, config.light).save_pgm(directory / f"{stem}_shadow.pgm")
        files.append(f"{stem}_shadow.pgm")
    if meshes:
        for hand, mesh in zip(hands, posed):
            write_obj(mesh, directory / f"{stem}_{hand.value}.obj")
            files.append(f"{stem}_{hand.value}.obj")
    return files


def _write_run_records(manifest: ManifestWriter, losses: ManifestWriter, record: RunRecord) -> None:
    for restart in record.restarts:
        for report, sigma, best in zip(restart.history, restart.sigmas, restart.best_so_far):
            entry = IterationRecord(
                restart=restart.restart,
                iteration=report.iteration,
                sigma=sigma,
                total=report.total,
                image_term=report.image_term,
                pen_term=report.pen_term,
                limit_term=report.limit_term,
                best_image_term=best,
            )
            manifest.write(entry)
            losses.write(entry)


def _write_snapshots(
    manifest: ManifestWriter,
    record: RunRecord,
    rigs: Mapping[Handedness, HandRig],
    config: RunConfig,
    directory: Path,
    prefix: str = "",
) -> None:
    (directory / "snapshots").mkdir(parents=True, exist_ok=True)
    for restart in record.restarts:
        for snap in restart.snapshots:
            stem = f"snapshots/{prefix}r{snap.restart}_i{snap.iteration:05d}"
            save_params(snap.params, directory / f"{stem}_params.json")
            files = export_pose(snap.params, rigs, config, directory, stem, meshes=False)
            manifest.write(SnapshotRecord(
                restart=snap.restart,
                iteration=snap.iteration,
                params=f"{stem}_params.json",
                hard=files[0],
                soft=f"{stem}_soft.pgm",
            ))
        manifest.write(RestartRecord(
            restart=restart.restart,
            seed=restart.seed,
            status=restart.status,
            iterations=restart.iterations,
            best_iteration=restart.best_iteration,
            best_image_term=restart.best_image_term,
            error=restart.error,
        ))


def _config_record(command: str, config: RunConfig, **extra) -> ConfigRecord:
    echo = config.model_dump(mode="json")
    echo.update(extra)
    return ConfigRecord(command=command, seed=config.effective_optim.seed, config=echo)


# ============= optimize =============

def run_optimization(config_path: PathLike) -> CommandResult:
    """Fit the hands to the configured target and export the result."""
    config_path = Path(config_path)
    config = load_run_config(config_path)
    base_dir = config_path.parent
    if not config.targets:
        raise ConfigError("targets", "at least one target image is required")

    target = _target(config.targets[0], config, base_dir)
    rigs = build_rigs(config, hands_for(config.hands), base_dir)
    out = output_directory(config, base_dir)
    out.mkdir(parents=True, exist_ok=True)
    target.silhouette.save_pgm(out / "target.pgm")
    target.original.save_pgm(out / "target_source.pgm")

    with ManifestWriter(out / MANIFEST) as manifest, ManifestWriter(out / LOSS_LOG) as losses:
        manifest.write(_config_record("optimize", config))
        try:
            with log_timing("optimize", target=target.source, hands=config.hands):
                record = optimize(
                    target.silhouette, rigs, None, config.effective_optim,
                    camera=config.camera, render=config.render, weights=config.weights,
                )
        except NumericAbortError as e:
            manifest.write(FinalRecord(status="aborted", details=e.details))
            raise

        _write_run_records(manifest, losses, record)
        _write_snapshots(manifest, record, rigs, config, out)

        # final outputs come from the params file as written, so `render` reproduces them
        save_params(record.final_params, out / FINAL_PARAMS)
        final_pose = load_params(out / FINAL_PARAMS, {h: r.limits for h, r in rigs.items()})
        files = [FINAL_PARAMS, "target.pgm", "target_source.pgm", MANIFEST, LOSS_LOG]
        files += export_pose(final_pose, rigs, config, out, "final")

        final = FinalRecord(
            status="converged" if record.converged else "completed",
            best_restart=record.best_restart,
            image_term=record.final_image_term,
            converged=record.converged,
            files=files,
        )
        manifest.write(final)

    logger.info(
        f"Optimization finished: image term {record.final_image_term:.6g}, outputs in {out}",
        extra={"output_dir": str(out), "image_term": record.final_image_term, "converged": record.converged},
    )
    return CommandResult(out, final)


# ============= render =============

def render_params(params_path: PathLike, config_path: PathLike, out_dir: PathLike) -> CommandResult:
    """Render a params file with the configured camera and rigs."""
    config_path = Path(config_path)
    config = load_run_config(config_path)
    base_dir = config_path.parent
    rigs = build_rigs(config, HAND_ORDER, base_dir)
    pose = load_params(params_path, {h: r.limits for h, r in rigs.items()})
    rigs = {h: rigs[h] for h in pose}

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with log_timing("render", params=str(params_path)):
        files = export_pose(pose, rigs, config, out, "render")
    final = FinalRecord(status="completed", files=files)
    with ManifestWriter(out / MANIFEST) as manifest:
        manifest.write(_config_record("render", config, params=str(params_path)))
        manifest.write(final)
    return CommandResult(out, final)


# ============= interpolate =============

def _is_params_file(source: str) -> bool:
    return source.lower().endswith(".json")


def run_interpolation(
    source_a: str,
    source_b: str,
    config_path: PathLike,
    steps: Optional[int] = None,
    refine: Optional[bool] = None,
) -> CommandResult:
    """Shadow sequence between two endpoints, each a params file or a target image.

    Target endpoints are optimized first (B warm-started from A); params
    endpoints are used as given. Refinement targets for a params endpoint
    are its own hard silhouette.
    """
    config_path = Path(config_path)
    config = load_run_config(config_path)
    base_dir = config_path.parent
    steps = config.interpolation.frames if steps is None else steps
    refine = config.interpolation.refine if refine is None else refine
    if steps < 1:
        raise ConfigError("T", f"the frame count must be at least 1, got {steps}")

    modes = {"a": "params" if _is_params_file(source_a) else "target",
             "b": "params" if _is_params_file(source_b) else "target"}
    rigs = build_rigs(config, HAND_ORDER, base_dir)
    limits = {h: r.limits for h, r in rigs.items()}
    loaded: Dict[str, Pose] = {}
    for key, source in (("a", source_a), ("b", source_b)):
        if modes[key] == "params":
            loaded[key] = load_params(_resolve(source, base_dir), limits)
    hands = tuple(h for h in HAND_ORDER if h in next(iter(loaded.values()))) if loaded else hands_for(config.hands)
    if any(set(pose) != set(hands) for pose in loaded.values()):
        raise ConfigError("b", "both endpoints must pose the same hands")
    rigs = {h: rigs[h] for h in hands}

    out = output_directory(config, base_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    optim = config.effective_optim
    kwargs = dict(camera=config.camera, render=config.render, weights=config.weights)

    with ManifestWriter(out / MANIFEST) as manifest:
        manifest.write(_config_record("interpolate", config, modes=modes, frames=steps, refine=refine))

        targets: Dict[str, GrayImage] = {}
        records: List[Tuple[str, RunRecord]] = []
        if modes["a"] == "target":
            targets["a"] = _target(source_a, config, base_dir).silhouette
        if modes["b"] == "target":
            targets["b"] = _target(source_b, config, base_dir).silhouette

        try:
            with log_timing("endpoints", modes=modes):
                if len(targets) == 2:
                    fit: EndpointFit = optimize_pair(targets["a"], targets["b"], rigs, optim, **kwargs)
                    loaded["a"], loaded["b"] = fit.params_a, fit.params_b
                    records += [("a", fit.record_a), ("b", fit.record_b)]
                elif "a" in targets:
                    record = optimize(targets["a"], rigs, None, optim, **kwargs)
                    loaded["a"] = record.final_params
                    records.append(("a", record))
                elif "b" in targets:
                    warm = optim.model_copy(update={"restarts": 1})
                    record = optimize(targets["b"], rigs, loaded["a"], warm, **kwargs)
                    loaded["b"] = record.final_params
                    records.append(("b", record))
        except NumericAbortError as e:
            manifest.write(FinalRecord(status="aborted", details=e.details))
            raise

        for key, record in records:
            _write_snapshots(manifest, record, rigs, config, out, prefix=f"{key}_")

        # frames 0 and T are the fitted poses themselves
        for key in ("a", "b"):
            save_params(loaded[key], out / f"endpoint_{key}_params.json")
        for key in ("a", "b"):
            if key not in targets:
                targets[key] = render_silhouette_hard([pose_mesh(rigs[h], loaded[key][h]) for h in hands], config.camera)

        with log_timing("interpolate", frames=steps + 1, refine=refine):
            sequence = interpolate(
                loaded["a"], loaded["b"], steps, refine,
                rigs=rigs, targets=(targets["a"], targets["b"]), config=optim, **kwargs,
            )

        files = ["endpoint_a_params.json", "endpoint_b_params.json"]
        for k, (frame, alpha, pen) in enumerate(zip(sequence.frames, sequence.alphas, sequence.pen_terms)):
            stem = f"frames/frame_{k:03d}"
            save_params(frame, out / f"{stem}_params.json")
            frame_files = [f"{stem}_params.json"] + export_pose(frame, rigs, config, out, stem, soft=False)
            manifest.write(FrameRecord(
                frame=k,
                alpha=alpha,
                refined=sequence.refined and 0 < k < steps,
                pen_term=pen,
                files=frame_files,
            ))
            files += frame_files

        final = FinalRecord(
            status="completed",
            files=files,
            details={"modes": modes, "frames": len(sequence), "refined": sequence.refined,
                     "max_pen_term": max(sequence.pen_terms)},
        )
        manifest.write(final)

    logger.info(f"Wrote {len(sequence)} frames to {out}", extra={"output_dir": str(out), "frames": len(sequence)})
    return CommandResult(out, final)
