"""Triangle meshes, BVH queries, penetration detection and OBJ files."""
from .bvh import Bvh, build_bvh, nearest_surface_point, nearest_surface_points, point_inside, points_inside
from .mesh import PosedMesh, TriMesh, merge_meshes
from .obj_io import load_obj, parse_obj, write_obj
from .penetration import Penetration, PenetrationSet, detect_penetrations, find_penetrations, segment_penetrations
from .primitives import box_mesh, capsule, icosphere, unit_square_pair

__all__ = [
    "Bvh",
    "Penetration",
    "PenetrationSet",
    "PosedMesh",
    "TriMesh",
    "box_mesh",
    "build_bvh",
    "capsule",
    "detect_penetrations",
    "find_penetrations",
    "icosphere",
    "unit_square_pair",
    "load_obj",
    "merge_meshes",
    "nearest_surface_point",
    "nearest_surface_points",
    "parse_obj",
    "point_inside",
    "points_inside",
    "segment_penetrations",
    "write_obj",
]
