"""Data-lake manifest: file records, format tags, deterministic ingestion."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator

logger = logging.getLogger(__name__)


class UnreadableRoot(OSError):
    """The lake root does not exist or cannot be listed."""


class FormatTag(str, Enum):
    CSV = "csv"
    GPKG = "gpkg"
    XLSX = "xlsx"
    NPZ = "npz"
    CDF = "cdf"
    OTHER = "other"


_EXTENSION_TAGS = {
    ".csv": FormatTag.CSV,
    ".gpkg": FormatTag.GPKG,
    ".xlsx": FormatTag.XLSX,
    ".npz": FormatTag.NPZ,
    ".cdf": FormatTag.CDF,
}


def format_tag_for(path: str | Path) -> FormatTag:
    """Map a file extension (case-insensitive) to its format tag."""
    return _EXTENSION_TAGS.get(Path(path).suffix.lower(), FormatTag.OTHER)


@dataclass
class LakeFile:
    file_id: str
    path: str  # relative to the lake root, POSIX separators
    format_tag: FormatTag
    byte_size: int
    cluster_id: str | None = None
    unreadable: bool = False

    @property
    def basename(self) -> str:
        return self.path.rsplit("/", 1)[-1]

    def as_dict(self) -> dict:
        return {
            "file_id": self.file_id,
            "path": self.path,
            "format_tag": self.format_tag.value,
            "byte_size": self.byte_size,
            "cluster_id": self.cluster_id,
            "unreadable": self.unreadable,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LakeFile":
        return cls(
            file_id=data["file_id"],
            path=data["path"],
            format_tag=FormatTag(data["format_tag"]),
            byte_size=data["byte_size"],
            cluster_id=data.get("cluster_id"),
            unreadable=data.get("unreadable", False),
        )


@dataclass
class LakeManifest:
    """The data lake: one record per regular file under the root.

    Files are ordered by relative path, so a manifest built twice from the
    same tree is identical. Paths are unique by construction.
    """

    root: str
    files: list[LakeFile] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.files)

    def __iter__(self) -> Iterator[LakeFile]:
        return iter(self.files)

    def by_id(self, file_id: str) -> LakeFile:
        for f in self.files:
            if f.file_id == file_id:
                return f
        raise KeyError(file_id)

    def by_path(self, path: str) -> LakeFile | None:
        for f in self.files:
            if f.path == path:
                return f
        return None

    @property
    def file_ids(self) -> list[str]:
        return [f.file_id for f in self.files]

    def abspath(self, f: LakeFile) -> Path:
        return Path(self.root) / f.path

    def content_hash(self, f: LakeFile) -> str:
        """SHA-256 of the file bytes; used to key preview and analysis caches."""
        h = hashlib.sha256()
        with open(self.abspath(f), "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
        return h.hexdigest()

    def as_dict(self) -> dict:
        return {"root": self.root, "files": [f.as_dict() for f in self.files]}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "LakeManifest":
        data = json.loads(Path(path).read_text())
        return cls(root=data["root"], files=[LakeFile.from_dict(f) for f in data["files"]])


def ingest_manifest(root_path: str | Path) -> LakeManifest:
    """Walk a lake root and build its manifest.

    Individual unreadable files are recorded with ``unreadable=True`` rather
    than aborting the ingest; an unreadable root raises :class:`UnreadableRoot`.
    """
    root = Path(root_path)
    if not root.is_dir() or not os.access(root, os.R_OK):
        raise UnreadableRoot(f"lake root not readable: {root}")

    files: list[LakeFile] = []
    paths = sorted(p for p in root.rglob("*") if p.is_file())
    for index, path in enumerate(paths):
        rel = path.relative_to(root).as_posix()
        readable = os.access(path, os.R_OK)
        try:
            size = path.stat().st_size
        except OSError:
            size = 0
            readable = False
        if not readable:
            logger.warning("unreadable lake file: %s", rel)
        files.append(
            LakeFile(
                file_id=f"f{index:04d}",
                path=rel,
                format_tag=format_tag_for(rel),
                byte_size=size,
                unreadable=not readable,
            )
        )
    return LakeManifest(root=str(root), files=files)
