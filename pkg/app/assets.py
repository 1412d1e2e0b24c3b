"""Bundled target silhouettes and target loading."""
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw

from .exceptions import AssetIOError
from .hand.limits import ARTICULATED_JOINTS, Handedness
from .hand.rig import BASE_ORIENTATION, HandParams, make_procedural_hand, pose_mesh
from .hand.rotations import matrix_to_quat
from .logging_config import logger
from .rendering.image import GrayImage, check_resolution, threshold
from .rendering.rasterizer import render_silhouette_hard
from .schemas import Camera

BUNDLED_PREFIX = "bundled:"
CANVAS = 256

Point = Tuple[float, float]


def _ellipse_points(center: Point, radii: Point, angle_deg: float = 0.0, count: int = 48) -> List[Point]:
    a = np.radians(angle_deg)
    s = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    x, y = radii[0] * np.cos(s), radii[1] * np.sin(s)
    return [(center[0] + x[i] * np.cos(a) - y[i] * np.sin(a), center[1] + x[i] * np.sin(a) + y[i] * np.cos(a))
            for i in range(count)]


def _draw_disc(draw: ImageDraw.ImageDraw) -> None:
    draw.ellipse((88, 88, 168, 168), fill=255)


def _draw_ellipse(draw: ImageDraw.ImageDraw) -> None:
    draw.ellipse((100, 72, 156, 184), fill=255)


def _draw_rabbit(draw: ImageDraw.ImageDraw) -> None:
    draw.polygon(_ellipse_points((122, 176), (56, 38), -8.0), fill=255)      # body
    draw.ellipse((140, 106, 200, 162), fill=255)                              # head
    draw.polygon(_ellipse_points((158, 78), (10, 34), -12.0), fill=255)      # ears
    draw.polygon(_ellipse_points((184, 80), (9, 32), 14.0), fill=255)
    draw.ellipse((56, 158, 84, 186), fill=255)                                # tail


def _draw_bird(draw: ImageDraw.ImageDraw) -> None:
    draw.polygon(_ellipse_points((124, 144), (60, 30), -12.0), fill=255)     # body
    draw.ellipse((164, 90, 208, 134), fill=255)                               # head
    draw.polygon([(204, 104), (234, 114), (204, 122)], fill=255)              # beak
    draw.polygon([(104, 138), (140, 56), (160, 64), (146, 140)], fill=255)    # wing
    draw.polygon([(76, 150), (26, 124), (32, 170)], fill=255)                 # tail


_DRAWINGS: Dict[str, Callable[[ImageDraw.ImageDraw], None]] = {
    "disc": _draw_disc,
    "ellipse": _draw_ellipse,
    "rabbit": _draw_rabbit,
    "bird": _draw_bird,
}

# wrist placement of the self-rendered hand target
HAND_TARGET_T = (0.0, -0.085, -0.45)

BUNDLED = tuple(_DRAWINGS) + ("hand",)


def hand_target_params() -> HandParams:
    """Left hand, palm to camera, with the index and middle fingers slightly bent."""
    theta = np.zeros((ARTICULATED_JOINTS, 3))
    theta[1, 2] = theta[4, 2] = np.radians(20.0)
    q = matrix_to_quat(BASE_ORIENTATION[Handedness.LEFT])
    return HandParams(theta=theta, q=q, t=HAND_TARGET_T)


def bundled_target(name: str, resolution: Tuple[int, int] = (CANVAS, CANVAS)) -> GrayImage:
    """Binary silhouette by name at (height, width)."""
    height, width = resolution
    if name == "hand":
        rig = make_procedural_hand(Handedness.LEFT)
        return render_silhouette_hard([pose_mesh(rig, hand_target_params())], Camera(resolution=(height, width)))
    if name not in _DRAWINGS:
        raise AssetIOError(f"{BUNDLED_PREFIX}{name}", f"unknown bundled target, choose from {', '.join(BUNDLED)}")

    canvas = Image.new("L", (CANVAS, CANVAS), 0)
    _DRAWINGS[name](ImageDraw.Draw(canvas))
    if (height, width) != (CANVAS, CANVAS):
        canvas = canvas.resize((width, height), Image.Resampling.NEAREST)
    return GrayImage((np.asarray(canvas) >= 128).astype(float))


def write_bundled_targets(directory: Union[str, Path], resolution: Tuple[int, int] = (CANVAS, CANVAS)) -> List[Path]:
    """Write every bundled target as ``<name>.pgm``."""
    directory = Path(directory)
    paths = []
    for name in BUNDLED:
        path = directory / f"{name}.pgm"
        bundled_target(name, resolution).save_pgm(path)
        paths.append(path)
    logger.info(f"Wrote {len(paths)} bundled targets to {directory}", extra={"directory": str(directory)})
    return paths


class Target(NamedTuple):
    """A target silhouette, the image it was thresholded from and where it came from."""

    silhouette: GrayImage
    original: GrayImage
    source: str


def load_target(source: str, resolution: Optional[Tuple[int, int]] = None, base_dir: Optional[Path] = None) -> Target:
    """Load an image path or ``bundled:<name>``, thresholded at 0.5.

    Bundled targets are drawn at ``resolution``; files must already match it.
    """
    if source.startswith(BUNDLED_PREFIX):
        image = bundled_target(source[len(BUNDLED_PREFIX):], resolution or (CANVAS, CANVAS))
    else:
        path = Path(source)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        image = GrayImage.load(path)
        if resolution is not None:
            check_resolution(resolution, image.resolution)
    return Target(threshold(image, 0.5), image, source)
