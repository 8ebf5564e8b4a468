"""Per-format file previews: bounded, deterministic text renderings.

Dispatch is total over the format tags. Tabular formats show column names,
inferred types, and the first 20 rows; NPZ shows keys with values summarized
past the size cap; CDF shows archive info plus global attributes; anything
else shows its first 20 lines. A parse failure falls back to the plain-text
rendering behind a diagnostic banner.
"""

from __future__ import annotations

import json
import logging
import sqlite3
from contextlib import closing
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import cdf as cdfmod
from . import xlsx as xlsxmod
from .lake import FormatTag, LakeFile, LakeManifest

logger = logging.getLogger(__name__)

PREVIEW_CHAR_CAP = 16_384
CELL_CHAR_CAP = 80
PREVIEW_ROWS = 20
NPZ_VALUE_ELEMENT_CAP = 100


@dataclass
class FilePreview:
    file_id: str
    rendered_text: str
    truncated: bool


def _cap_cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and pd.isna(value):
        return ""
    if isinstance(value, (bytes, bytearray, memoryview)):
        return f"<blob {len(value)} bytes>"
    text = str(value)
    if len(text) > CELL_CHAR_CAP:
        return text[: CELL_CHAR_CAP - 3] + "..."
    return text


def _infer_dtype(values: list[object]) -> str:
    """Pandas-style dtype label for a column of python values."""
    present = [v for v in values if v is not None]
    if not present:
        return "object"
    if all(isinstance(v, bool) for v in present):
        return "bool"
    if all(isinstance(v, int) and not isinstance(v, bool) for v in present):
        return "int64"
    if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in present):
        return "float64"
    return "object"


def _render_table(columns: list[str], dtypes: list[str], rows: list[list[object]], total: int) -> list[str]:
    lines = [
        f"columns ({len(columns)}): " + ", ".join(_cap_cell(c) for c in columns),
        "types: " + ", ".join(f"{_cap_cell(c)}={d}" for c, d in zip(columns, dtypes)),
        f"rows: showing {len(rows)} of {total}",
    ]
    if rows:
        lines.append(" | ".join(_cap_cell(c) for c in columns))
        for row in rows:
            lines.append(" | ".join(_cap_cell(v) for v in row))
    return lines


def _render_csv(path: Path, max_rows: int) -> str:
    df = pd.read_csv(path)
    total = len(df)
    head = df.head(max_rows)
    columns = [str(c) for c in df.columns]
    dtypes = [str(t) for t in df.dtypes]
    rows = [[row[c] for c in df.columns] for _, row in head.iterrows()]
    return "\n".join(_render_table(columns, dtypes, rows, total))


def _split_header(rows: list[list[object]]) -> tuple[list[str], list[list[object]]]:
    if not rows:
        return [], []
    header = [("" if v is None else str(v)) for v in rows[0]]
    return header, rows[1:]


def _render_xlsx(path: Path, max_rows: int) -> str:
    sheets = xlsxmod.read_workbook(path)
    lines = [f"sheets ({len(sheets)}): " + ", ".join(name for name, _ in sheets)]
    for name, rows in sheets:
        columns, data = _split_header(rows)
        dtypes = [_infer_dtype([r[i] for r in data]) for i in range(len(columns))]
        lines.append(f"## sheet: {name}")
        lines.extend(_render_table(columns, dtypes, data[:max_rows], len(data)))
    return "\n".join(lines)


def _render_gpkg(path: Path, max_rows: int) -> str:
    uri = f"file:{path}?mode=ro"
    with closing(sqlite3.connect(uri, uri=True)) as conn:
        try:
            layer_rows = conn.execute(
                "SELECT table_name FROM gpkg_contents ORDER BY table_name"
            ).fetchall()
        except sqlite3.DatabaseError as exc:
            raise ValueError(f"not a geopackage: {exc}") from exc
        layers = [r[0] for r in layer_rows]
        lines = [f"layers ({len(layers)}): " + ", ".join(layers)]
        for layer in layers:
            info = conn.execute(f'PRAGMA table_info("{layer}")').fetchall()
            columns = [c[1] for c in info]
            dtypes = [(c[2] or "any").lower() for c in info]
            total = conn.execute(f'SELECT COUNT(*) FROM "{layer}"').fetchone()[0]
            rows = [list(r) for r in conn.execute(f'SELECT * FROM "{layer}" LIMIT {max_rows}')]
            lines.append(f"## layer: {layer}")
            lines.extend(_render_table(columns, dtypes, rows, total))
    return "\n".join(lines)


def _render_npz(path: Path) -> str:
    with np.load(path, allow_pickle=False) as archive:
        keys = list(archive.files)
        lines = [f"keys ({len(keys)}): " + ", ".join(keys)]
        for key in keys:
            arr = archive[key]
            lines.append(f"## key: {key}")
            lines.append(f"shape={arr.shape}, dtype={arr.dtype}")
            if arr.size <= NPZ_VALUE_ELEMENT_CAP:
                lines.append(np.array2string(arr, max_line_width=120, threshold=NPZ_VALUE_ELEMENT_CAP + 1))
            else:
                lines.append(f"(values summarized: {arr.size} elements exceed preview cap)")
    return "\n".join(lines)


def _render_cdf(path: Path) -> str:
    info = cdfmod.read_cdf(path)
    lines = [
        f"cdf version: {info.version}",
        f"encoding: {info.encoding} ({info.encoding_name})",
        f"majority: {info.majority}",
        (f"zvariables ({len(info.z_variables)}): " + ", ".join(info.z_variables)).rstrip(),
        (f"rvariables ({len(info.r_variables)}): " + ", ".join(info.r_variables)).rstrip(),
        f"attributes ({len(info.attributes)}): "
        + ", ".join(f"{a.name} ({'global' if a.is_global else 'variable'})" for a in info.attributes),
        "global attributes:",
    ]
    for name, entries in info.global_attributes().items():
        for num in sorted(entries):
            lines.append(f"  {name}[{num}] = {_cap_cell(entries[num])}")
    return "\n".join(lines)


def _render_text(path: Path, max_lines: int) -> str:
    with open(path, encoding="utf-8", errors="replace") as fh:
        lines = []
        for _ in range(max_lines):
            line = fh.readline()
            if not line:
                break
            lines.append(line.rstrip("\n"))
    return "\n".join(lines)


def render_preview(
    file: LakeFile,
    root: str | Path,
    max_rows: int = PREVIEW_ROWS,
    char_cap: int = PREVIEW_CHAR_CAP,
) -> FilePreview:
    """Render a bounded preview for one lake file.

    Never mutates the underlying file. A format-specific parse failure falls
    back to the first-20-lines text rendering with a diagnostic banner.
    """
    path = Path(root) / file.path
    tag = file.format_tag
    try:
        if tag is FormatTag.CSV:
            text = _render_csv(path, max_rows)
        elif tag is FormatTag.XLSX:
            text = _render_xlsx(path, max_rows)
        elif tag is FormatTag.GPKG:
            text = _render_gpkg(path, max_rows)
        elif tag is FormatTag.NPZ:
            text = _render_npz(path)
        elif tag is FormatTag.CDF:
            text = _render_cdf(path)
        else:
            text = _render_text(path, max_rows)
    except OSError:
        raise
    except Exception as exc:  # noqa: BLE001 - any parser failure falls back to text
        logger.warning("preview parse failure for %s: %s", file.path, exc)
        banner = f"[parse failure: {type(exc).__name__}: {exc}; falling back to text preview]"
        text = banner + "\n" + _render_text(path, max_rows)

    truncated = len(text) > char_cap
    if truncated:
        text = text[:char_cap]
    return FilePreview(file_id=file.file_id, rendered_text=text, truncated=truncated)


class PreviewStore:
    """Preview rendering with an on-disk cache keyed by file content hash."""

    def __init__(self, manifest: LakeManifest, cache_dir: str | Path | None = None):
        self.manifest = manifest
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._hashes: dict[str, str] = {}

    def file_hash(self, file: LakeFile) -> str:
        if file.file_id not in self._hashes:
            self._hashes[file.file_id] = self.manifest.content_hash(file)
        return self._hashes[file.file_id]

    def get(self, file: LakeFile, max_rows: int = PREVIEW_ROWS) -> FilePreview:
        if self.cache_dir is None:
            return render_preview(file, self.manifest.root, max_rows=max_rows)
        key = f"{self.file_hash(file)}.r{max_rows}.json"
        cached = self.cache_dir / key
        if cached.exists():
            data = json.loads(cached.read_text())
            return FilePreview(file.file_id, data["rendered_text"], data["truncated"])
        preview = render_preview(file, self.manifest.root, max_rows=max_rows)
        cached.write_text(
            json.dumps({"rendered_text": preview.rendered_text, "truncated": preview.truncated})
        )
        return preview

    def sample_rows(self, file: LakeFile, rows: int = 5) -> str:
        """A short re-rendered excerpt suitable for embedding in file plans."""
        return self.get(file, max_rows=rows).rendered_text
