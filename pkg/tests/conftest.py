"""Shared fixtures."""
import json
import logging

import numpy as np
import pytest

from app.hand.limits import Handedness
from app.hand.rig import BASE_ORIENTATION, HandParams, make_procedural_hand
from app.hand.rotations import matrix_to_quat
from app.schemas import Camera


@pytest.fixture(scope="session")
def left_rig():
    return make_procedural_hand(Handedness.LEFT)


@pytest.fixture(scope="session")
def right_rig():
    return make_procedural_hand(Handedness.RIGHT)


@pytest.fixture(scope="session")
def rigs(left_rig, right_rig):
    return {Handedness.LEFT: left_rig, Handedness.RIGHT: right_rig}


@pytest.fixture
def small_camera():
    return Camera(resolution=(64, 64))


def facing_pose(handedness: Handedness, t=(0.0, -0.085, -0.45), theta=None) -> HandParams:
    """Palm toward the camera, fingers up, wrist at ``t``."""
    return HandParams(
        theta=np.zeros((15, 3)) if theta is None else theta,
        q=matrix_to_quat(BASE_ORIENTATION[handedness]),
        t=np.asarray(t, dtype=float),
    )


@pytest.fixture
def write_config(tmp_path):
    """Write a run configuration next to an ``out`` directory and return its path."""

    def write(**sections):
        document = {"output_dir": "out", **sections}
        path = tmp_path / "config.json"
        path.write_text(json.dumps(document))
        return path

    return write


@pytest.fixture
def app_log(caplog):
    """caplog wired to the application logger, which does not propagate."""
    logger = logging.getLogger("handshadow")
    logger.addHandler(caplog.handler)
    caplog.set_level(logging.DEBUG, logger="handshadow")
    yield caplog
    logger.removeHandler(caplog.handler)
