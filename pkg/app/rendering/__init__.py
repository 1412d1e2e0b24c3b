"""Camera projection, soft/hard silhouette rasterization and image files."""
from .camera import pixel_centers, project, project_array, project_points
from .image import GrayImage, compose_shadow, intersection_over_union, threshold
from .rasterizer import render_silhouette_hard, render_silhouette_soft, soft_silhouette

__all__ = [
    "GrayImage",
    "compose_shadow",
    "intersection_over_union",
    "pixel_centers",
    "project",
    "project_array",
    "project_points",
    "render_silhouette_hard",
    "render_silhouette_soft",
    "soft_silhouette",
    "threshold",
]
