"""Minimal read-only XLSX support built on the stdlib zip + XML modules.

Only what previews need: sheet names in workbook order and cell values per
sheet. Shared strings, inline strings, booleans, and numbers are handled;
formulas surface as their cached values.
"""

from __future__ import annotations

import re
import zipfile
from pathlib import Path
from xml.etree import ElementTree

_NS = {"m": "http://schemas.openxmlformats.org/spreadsheetml/2006/main"}
_REL_NS = {"r": "http://schemas.openxmlformats.org/package/2006/relationships"}
_RID_ATTR = "{http://schemas.openxmlformats.org/officeDocument/2006/relationships}id"

_CELL_REF = re.compile(r"([A-Z]+)(\d+)")


class XlsxError(ValueError):
    """The file is not a parseable XLSX workbook."""


def _column_index(ref: str) -> int:
    """'A' -> 0, 'Z' -> 25, 'AA' -> 26."""
    col = 0
    for ch in ref:
        col = col * 26 + (ord(ch) - ord("A") + 1)
    return col - 1


def _cell_value(cell: ElementTree.Element, shared: list[str]):
    ctype = cell.get("t", "n")
    v = cell.find("m:v", _NS)
    if ctype == "inlineStr":
        t = cell.find("m:is/m:t", _NS)
        return t.text if t is not None else ""
    if v is None or v.text is None:
        return None
    text = v.text
    if ctype == "s":
        return shared[int(text)]
    if ctype == "b":
        return text == "1"
    if ctype in ("str", "e"):
        return text
    # numeric: keep integers as int so type inference can tell them apart
    num = float(text)
    return int(num) if num.is_integer() else num


def read_workbook(path: str | Path) -> list[tuple[str, list[list[object]]]]:
    """Return ``[(sheet_name, rows)]`` in workbook order.

    Rows are dense lists padded with ``None`` for skipped cells.
    """
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as exc:
        raise XlsxError(f"not an xlsx archive: {exc}") from exc

    with zf:
        try:
            workbook = ElementTree.fromstring(zf.read("xl/workbook.xml"))
            rels = ElementTree.fromstring(zf.read("xl/_rels/workbook.xml.rels"))
        except (KeyError, ElementTree.ParseError) as exc:
            raise XlsxError(f"malformed workbook: {exc}") from exc

        targets = {
            rel.get("Id"): rel.get("Target", "")
            for rel in rels.findall("r:Relationship", _REL_NS)
        }

        shared: list[str] = []
        if "xl/sharedStrings.xml" in zf.namelist():
            strings = ElementTree.fromstring(zf.read("xl/sharedStrings.xml"))
            for si in strings.findall("m:si", _NS):
                shared.append("".join(t.text or "" for t in si.iter(f"{{{_NS['m']}}}t")))

        sheets: list[tuple[str, list[list[object]]]] = []
        for sheet in workbook.findall("m:sheets/m:sheet", _NS):
            name = sheet.get("name", "Sheet")
            target = targets.get(sheet.get(_RID_ATTR), "")
            member = "xl/" + target.lstrip("/") if not target.startswith("xl/") else target
            try:
                data = ElementTree.fromstring(zf.read(member))
            except (KeyError, ElementTree.ParseError) as exc:
                raise XlsxError(f"malformed sheet {name!r}: {exc}") from exc
            sheets.append((name, _read_rows(data, shared)))
        if not sheets:
            raise XlsxError("workbook declares no sheets")
        return sheets


def _read_rows(sheet: ElementTree.Element, shared: list[str]) -> list[list[object]]:
    rows: list[list[object]] = []
    for row in sheet.findall("m:sheetData/m:row", _NS):
        values: list[object] = []
        for cell in row.findall("m:c", _NS):
            ref = cell.get("r", "")
            match = _CELL_REF.match(ref)
            col = _column_index(match.group(1)) if match else len(values)
            while len(values) < col:
                values.append(None)
            values.append(_cell_value(cell, shared))
        rows.append(values)
    width = max((len(r) for r in rows), default=0)
    for r in rows:
        r.extend([None] * (width - len(r)))
    return rows
