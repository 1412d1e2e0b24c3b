"""Grayscale images, 8-bit export and silhouette comparisons."""
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image

from ..exceptions import AssetIOError, ResolutionMismatchError
from ..schemas import Light

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """H x W image with every pixel in [0, 1]; row 0 is the top row."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=float)
        if pixels.ndim != 2:
            raise ValueError(f"GrayImage needs a 2D array, got shape {pixels.shape}")
        if not np.all((pixels >= 0.0) & (pixels <= 1.0)):
            raise ValueError("GrayImage pixels must lie in [0, 1]")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @classmethod
    def blank(cls, resolution: Tuple[int, int], value: float = 0.0) -> "GrayImage":
        return cls(np.full(tuple(resolution), float(value)))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.pixels.shape

    def to_uint8(self) -> np.ndarray:
        """Round-half-up quantization of 255 * value."""
        return np.floor(self.pixels * 255.0 + 0.5).astype(np.uint8)

    def save_pgm(self, path: PathLike) -> None:
        _save(self, path, "PPM")

    def save_png(self, path: PathLike) -> None:
        _save(self, path, "PNG")

    @classmethod
    def load(cls, path: PathLike) -> "GrayImage":
        """Read any format Pillow understands, converting to 8-bit grayscale."""
        path = Path(path)
        try:
            with Image.open(path) as img:
                grid = np.asarray(img.convert("L"), dtype=float)
        except (OSError, ValueError) as e:
            raise AssetIOError(str(path), str(e))
        return cls(grid / 255.0)


def _save(image: GrayImage, path: PathLike, fmt: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(image.to_uint8()).save(path, format=fmt)
    except OSError as e:
        raise AssetIOError(str(path), str(e))


def check_resolution(expected: Tuple[int, int], actual: Tuple[int, int]) -> None:
    if tuple(expected) != tuple(actual):
        raise ResolutionMismatchError(tuple(expected), tuple(actual))


def threshold(image: GrayImage, level: float = 0.5) -> GrayImage:
    """Binary silhouette: 1 where the pixel is at least ``level``."""
    return GrayImage((image.pixels >= level).astype(float))


def intersection_over_union(a: GrayImage, b: GrayImage) -> float:
    """IoU of two silhouettes thresholded at 0.5; two empty images score 1."""
    check_resolution(a.resolution, b.resolution)
    sa, sb = a.pixels >= 0.5, b.pixels >= 0.5
    union = np.count_nonzero(sa | sb)
    if union == 0:
        return 1.0
    return np.count_nonzero(sa & sb) / union


def compose_shadow(silhouette: GrayImage, light: Light) -> GrayImage:
    """The silhouette as a dark shadow on a wall facing the camera.

    The wall's brightness follows the light's incidence on it; covered
    pixels fade toward the shadow brightness.
    """
    direction = np.asarray(light.direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    lit = light.wall_brightness * max(0.0, -float(direction[2]))
    shadow = min(light.shadow_brightness, lit)
    return GrayImage(lit + (shadow - lit) * silhouette.pixels)
