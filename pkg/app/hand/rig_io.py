"""Rig and params files (JSON documents validated with pydantic)."""
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np
from pydantic import ValidationError

from ..exceptions import AssetIOError, ConfigError, RigValidationError
from ..geometry.obj_io import format_obj, load_obj, parse_obj
from ..logging_config import logger
from ..schemas import HandParamsFile, ParamsFile, RigFile
from .limits import Handedness, JointLimits, default_limits
from .rig import HandParams, HandRig, clamp_pose
from .rotations import matrix_to_quat, quat_to_matrix

PathLike = Union[str, Path]


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise AssetIOError(str(path), str(e))


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise AssetIOError(str(path), str(e))


# ============= Rig files =============

def load_rig(path: PathLike) -> HandRig:
    """Read and validate a rig file."""
    path = Path(path)
    try:
        document = RigFile.model_validate_json(_read_text(path))
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get("loc", ()))
        raise RigValidationError(f"{path}: {field or 'document'}: {first.get('msg')}", path=str(path))

    if document.mesh_obj is not None:
        mesh = parse_obj(document.mesh_obj, f"{path}#mesh_obj")
    else:
        mesh = load_obj(path.parent / document.mesh_path)

    handedness = Handedness(document.handedness)
    limits = default_limits(handedness) if document.limits_deg is None else JointLimits(np.array(document.limits_deg))
    try:
        return HandRig(
            handedness=handedness,
            parents=np.array(document.parents),
            joint_positions=np.array(document.joint_positions, dtype=float),
            rest_mesh=mesh,
            skin_indices=np.array(document.skin_indices),
            skin_weights=np.array(document.skin_weights, dtype=float),
            limits=limits,
            segments=None if document.segments is None else np.array(document.segments),
        )
    except ValueError as e:
        raise RigValidationError(f"{path}: {e}", path=str(path))


def save_rig(rig: HandRig, path: PathLike) -> None:
    """Write a rig with its rest mesh embedded; floats keep full precision."""
    document = RigFile(
        handedness=rig.handedness.value,
        parents=rig.parents.tolist(),
        joint_positions=rig.joint_positions.tolist(),
        mesh_obj=format_obj(rig.rest_mesh, exact=True),
        skin_indices=rig.skin_indices.tolist(),
        skin_weights=rig.skin_weights.tolist(),
        limits_deg=rig.limits.bounds_deg.tolist(),
        segments=None if rig.segments is None else rig.segments.tolist(),
    )
    _write_text(Path(path), document.model_dump_json(indent=1))


# ============= Params files =============

def params_to_file(params: HandParams) -> HandParamsFile:
    return HandParamsFile(
        beta=params.beta.tolist(),
        theta_deg=np.degrees(params.theta).tolist(),
        rotation=quat_to_matrix(params.q).tolist(),
        t=params.t.tolist(),
    )


def params_from_file(entry: HandParamsFile) -> HandParams:
    return HandParams(
        theta=np.radians(np.array(entry.theta_deg, dtype=float)),
        q=matrix_to_quat(np.array(entry.rotation, dtype=float)),
        t=np.array(entry.t, dtype=float),
        beta=np.array(entry.beta, dtype=float),
    )


def save_params(params: Mapping[Handedness, HandParams], path: PathLike) -> None:
    document = ParamsFile(hands={Handedness(h).value: params_to_file(p) for h, p in params.items()})
    _write_text(Path(path), document.model_dump_json(indent=1))


def load_params(
    path: PathLike,
    limits: Optional[Mapping[Handedness, JointLimits]] = None,
) -> Dict[Handedness, HandParams]:
    """Read a params file, clamping out-of-limit angles with a warning."""
    path = Path(path)
    try:
        document = ParamsFile.model_validate_json(_read_text(path))
    except ValidationError as e:
        raise ConfigError.from_validation(e, prefix=f"{path}: ")

    result = {}
    for name, entry in document.hands.items():
        handedness = Handedness(name)
        table = (limits or {}).get(handedness) or default_limits(handedness)
        params = params_from_file(entry)
        clamped = clamp_pose(params, table)
        if not np.array_equal(clamped.theta, params.theta):
            channels = int(np.count_nonzero(clamped.theta != params.theta))
            logger.warning(
                f"{path}: {channels} {handedness.value} hand angle(s) outside joint limits, clamped",
                extra={"path": str(path), "hand": handedness.value, "channels": channels},
            )
        result[handedness] = clamped
    return result
