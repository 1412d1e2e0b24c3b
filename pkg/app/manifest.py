"""JSON-lines run manifests.

One pydantic record per line; no timestamps, so identical runs write
identical manifests.
"""
import json
from pathlib import Path
from typing import IO, List, Optional, Union

from pydantic import BaseModel

from .exceptions import AssetIOError


class ManifestWriter:
    """Append records to a manifest file.

    Usage:
        with ManifestWriter(path) as manifest:
            manifest.write(ConfigRecord(...))
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._handle: Optional[IO[str]] = None
        self.count = 0

    def __enter__(self) -> "ManifestWriter":
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = open(self.path, "w", encoding="utf-8", newline="\n")
        except OSError as e:
            raise AssetIOError(str(self.path), str(e))
        return self

    def __exit__(self, *exc) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def write(self, record: BaseModel) -> None:
        if self._handle is None:
            raise RuntimeError("manifest is not open")
        self._handle.write(record.model_dump_json() + "\n")
        self.count += 1


def read_manifest(path: Union[str, Path]) -> List[dict]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise AssetIOError(str(path), str(e))
    return [json.loads(line) for line in text.splitlines() if line.strip()]
