"""Per-joint angular limits for the 15 articulated joints of each hand.

Each channel bound ``b`` (degrees, about x, y, z) is the far end of a
one-sided interval whose near end is the rest angle 0, so the feasible range
of a channel is ``[min(0, b), max(0, b)]``. A zero bound locks its channel.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Tuple

import numpy as np


class Handedness(str, Enum):
    LEFT = "left"
    RIGHT = "right"


FINGERS: Tuple[str, ...] = ("index", "middle", "little", "ring", "thumb")
JOINTS_PER_FINGER = 3
ARTICULATED_JOINTS = len(FINGERS) * JOINTS_PER_FINGER

# (x, y, z) bounds in degrees for J.1, J.2, J.3 of every finger.
_TABLE: Dict[Handedness, Dict[str, Tuple[Tuple[float, float, float], ...]]] = {
    Handedness.RIGHT: {
        "index": ((0.0, -15.0, -35.0), (0.0, 0.0, -45.0), (0.0, 0.0, -15.0)),
        "middle": ((0.0, -25.0, -15.0), (0.0, 0.0, -15.0), (0.0, 0.0, -45.0)),
        "little": ((0.0, -40.0, -35.0), (0.0, 0.0, -45.0), (0.0, 0.0, -5.0)),
        "ring": ((0.0, -15.0, -35.0), (0.0, 0.0, -45.0), (0.0, 0.0, -15.0)),
        "thumb": ((-50.0, -10.0, -30.0), (-10.0, -20.0, -10.0), (-5.0, -50.0, 0.0)),
    },
    Handedness.LEFT: {
        "index": ((0.0, 25.0, 75.0), (0.0, 0.0, 45.0), (0.0, 0.0, 75.0)),
        "middle": ((0.0, 10.0, 75.0), (0.0, 0.0, 55.0), (0.0, 0.0, 75.0)),
        "little": ((0.0, 25.0, 75.0), (0.0, 0.0, 55.0), (0.0, 0.0, 65.0)),
        "ring": ((0.0, 15.0, 75.0), (0.0, 0.0, 55.0), (0.0, 0.0, 75.0)),
        "thumb": ((20.0, 30.0, 40.0), (10.0, 20.0, 20.0), (5.0, 25.0, 0.0)),
    },
}


def joint_index(finger: str, joint: int) -> int:
    """Row of ``finger`` joint ``joint`` (1-based, J.1..J.3) in a 15-row table."""
    if finger not in FINGERS:
        raise ValueError(f"unknown finger '{finger}'")
    if not 1 <= joint <= JOINTS_PER_FINGER:
        raise ValueError(f"joint must be 1..{JOINTS_PER_FINGER}, got {joint}")
    return FINGERS.index(finger) * JOINTS_PER_FINGER + joint - 1


@dataclass(frozen=True)
class JointLimits:
    """Signed bounds, shape (15, 3), in degrees."""

    bounds_deg: np.ndarray

    def __post_init__(self):
        bounds = np.array(self.bounds_deg, dtype=float)
        if bounds.shape != (ARTICULATED_JOINTS, 3):
            raise ValueError(f"joint limits need shape ({ARTICULATED_JOINTS}, 3), got {bounds.shape}")
        if not np.all(np.isfinite(bounds)):
            raise ValueError("joint limits must be finite")
        bounds.setflags(write=False)
        object.__setattr__(self, "bounds_deg", bounds)

    @property
    def lower(self) -> np.ndarray:
        """Lower ends in radians."""
        return np.radians(np.minimum(0.0, self.bounds_deg))

    @property
    def upper(self) -> np.ndarray:
        """Upper ends in radians."""
        return np.radians(np.maximum(0.0, self.bounds_deg))

    def bound(self, finger: str, joint: int) -> Tuple[float, float, float]:
        return tuple(float(b) for b in self.bounds_deg[joint_index(finger, joint)])

    def clamp(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(theta, dtype=float), self.lower, self.upper)

    def contains(self, theta: np.ndarray) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all((theta >= self.lower) & (theta <= self.upper)))

    def excess(self, theta: np.ndarray) -> np.ndarray:
        """How far each channel lies outside its interval (radians, 0 inside)."""
        theta = np.asarray(theta, dtype=float)
        return np.maximum(theta - self.upper, 0.0) + np.maximum(self.lower - theta, 0.0)

    def inner(self, fraction: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
        """Central ``fraction`` of every interval, in radians."""
        lo, hi = self.lower, self.upper
        margin = 0.5 * (1.0 - fraction) * (hi - lo)
        return lo + margin, hi - margin


def default_limits(handedness: Handedness) -> JointLimits:
    """Limit table for one hand, rows ordered index, middle, little, ring, thumb."""
    table = _TABLE[Handedness(handedness)]
    return JointLimits(np.array([row for finger in FINGERS for row in table[finger]]))
