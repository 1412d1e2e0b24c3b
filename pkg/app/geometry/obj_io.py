"""ASCII Wavefront OBJ reading and writing (``v`` and ``f`` records only)."""
from pathlib import Path
from typing import List, Union

import numpy as np

from ..exceptions import AssetIOError, ObjParseError
from .mesh import TriMesh

PathLike = Union[str, Path]


def _parse_index(token: str, vertex_count: int, source: str, line_number: int) -> int:
    # "7", "7/2" and "7//3" all name vertex 7
    try:
        index = int(token.split("/")[0])
    except ValueError:
        raise ObjParseError(source, line_number, f"bad face index '{token}'")
    if index == 0:
        raise ObjParseError(source, line_number, "face index 0 is invalid, OBJ indices are 1-based")
    resolved = index - 1 if index > 0 else vertex_count + index
    if not 0 <= resolved < vertex_count:
        raise ObjParseError(source, line_number, f"face index {index} refers to a missing vertex")
    return resolved


def parse_obj(text: str, source: str = "<string>") -> TriMesh:
    """Parse OBJ text; polygons with more than three corners are fan-triangulated."""
    vertices: List[List[float]] = []
    triangles: List[List[int]] = []

    for line_number, line in enumerate(text.splitlines(), start=1):
        tokens = line.split("#", 1)[0].split()
        if not tokens:
            continue
        if tokens[0] == "v":
            if len(tokens) < 4:
                raise ObjParseError(source, line_number, "vertex needs three coordinates")
            try:
                vertices.append([float(x) for x in tokens[1:4]])
            except ValueError:
                raise ObjParseError(source, line_number, "vertex coordinate is not a number")
        elif tokens[0] == "f":
            corners = [_parse_index(t, len(vertices), source, line_number) for t in tokens[1:]]
            if len(corners) < 3:
                raise ObjParseError(source, line_number, "face needs at least three vertices")
            for k in range(1, len(corners) - 1):
                triangles.append([corners[0], corners[k], corners[k + 1]])
        # other records (vn, vt, o, g, s, usemtl, ...) are ignored

    return TriMesh(np.asarray(vertices, dtype=float).reshape(-1, 3), np.asarray(triangles, dtype=np.int64).reshape(-1, 3))


def format_obj(mesh: TriMesh, exact: bool = False) -> str:
    """OBJ text with 6-decimal coordinates, or shortest round-trip reprs if ``exact``."""
    if exact:
        lines = [f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.vertices]
    else:
        lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n"


def load_obj(path: PathLike) -> TriMesh:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise AssetIOError(str(path), str(e))
    return parse_obj(text, str(path))


def write_obj(mesh: TriMesh, path: PathLike) -> None:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(format_obj(mesh))
    except OSError as e:
        raise AssetIOError(str(path), str(e))
