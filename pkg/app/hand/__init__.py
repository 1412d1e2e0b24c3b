"""Parametric hand: limits, forward kinematics, skinning and rig files."""
from .limits import FINGERS, Handedness, JointLimits, default_limits
from .rig import (
    HandParams,
    HandRig,
    JointTransforms,
    PoseVars,
    clamp_pose,
    forward_kinematics,
    make_procedural_hand,
    pose_mesh,
    skin,
)
from .rig_io import load_params, load_rig, save_params, save_rig

__all__ = [
    "FINGERS",
    "HandParams",
    "HandRig",
    "Handedness",
    "JointLimits",
    "JointTransforms",
    "PoseVars",
    "clamp_pose",
    "default_limits",
    "forward_kinematics",
    "load_params",
    "load_rig",
    "make_procedural_hand",
    "pose_mesh",
    "save_params",
    "save_rig",
    "skin",
]
