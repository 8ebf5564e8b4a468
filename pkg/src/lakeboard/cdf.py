"""Minimal reader for uncompressed CDF v3 archives.

Parses just enough of the record structure for an info dump: the descriptor
record (version, encoding, majority), attribute records with their global
entry values, and variable names. Control fields in a CDF are always
big-endian; only entry values follow the archive's declared encoding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

MAGIC_V3 = 0xCDF30001
MAGIC_UNCOMPRESSED = 0x0000FFFF
MAGIC_COMPRESSED = 0xCCCC0001

GLOBAL_SCOPE = 1
VARIABLE_SCOPE = 2

ENCODING_NAMES = {
    1: "NETWORK",
    2: "SUN",
    3: "VAX",
    4: "DECSTATION",
    5: "SGI",
    6: "IBMPC",
    7: "IBMRS",
    9: "PPC",
    11: "HP",
    12: "NEXT",
    13: "ALPHAOSF1",
    14: "ALPHAVMSd",
    15: "ALPHAVMSg",
    16: "ALPHAVMSi",
    17: "ARM_LITTLE",
    18: "ARM_BIG",
}
_LITTLE_ENDIAN_ENCODINGS = {3, 4, 6, 13, 16, 17}

# data type -> (struct code, size); strings handled separately
_NUMERIC_TYPES = {
    1: ("b", 1),   # INT1
    2: ("h", 2),   # INT2
    4: ("i", 4),   # INT4
    8: ("q", 8),   # INT8
    11: ("B", 1),  # UINT1
    12: ("H", 2),  # UINT2
    14: ("I", 4),  # UINT4
    21: ("f", 4),  # REAL4
    22: ("d", 8),  # REAL8
    31: ("d", 8),  # EPOCH
    33: ("q", 8),  # TIME_TT2000
    41: ("b", 1),  # BYTE
    44: ("f", 4),  # FLOAT
    45: ("d", 8),  # DOUBLE
}
_STRING_TYPES = {51, 52}  # CHAR, UCHAR


class CdfError(ValueError):
    """The file is not an uncompressed CDF v3 archive we can read."""


@dataclass
class CdfAttribute:
    name: str
    scope: int  # GLOBAL_SCOPE or VARIABLE_SCOPE
    entries: dict[int, object] = field(default_factory=dict)

    @property
    def is_global(self) -> bool:
        return self.scope == GLOBAL_SCOPE


@dataclass
class CdfInfo:
    version: str
    encoding: int
    majority: str  # "row" or "column"
    z_variables: list[str]
    r_variables: list[str]
    attributes: list[CdfAttribute]

    @property
    def encoding_name(self) -> str:
        return ENCODING_NAMES.get(self.encoding, f"UNKNOWN({self.encoding})")

    def global_attributes(self) -> dict[str, dict[int, object]]:
        return {a.name: a.entries for a in self.attributes if a.is_global}


class _Reader:
    def __init__(self, data: bytes):
        self.data = data

    def u32(self, offset: int) -> int:
        return struct.unpack_from(">i", self.data, offset)[0]

    def u64(self, offset: int) -> int:
        return struct.unpack_from(">q", self.data, offset)[0]

    def name(self, offset: int) -> str:
        raw = self.data[offset : offset + 256]
        return raw.split(b"\x00", 1)[0].decode("ascii", errors="replace").strip()


def read_cdf(path: str | Path) -> CdfInfo:
    data = Path(path).read_bytes()
    if len(data) < 8 + 312:
        raise CdfError("file too small to be a CDF v3 archive")
    magic1, magic2 = struct.unpack_from(">II", data, 0)
    if magic1 != MAGIC_V3:
        raise CdfError(f"unsupported CDF magic 0x{magic1:08X} (only v3 supported)")
    if magic2 == MAGIC_COMPRESSED:
        raise CdfError("compressed CDF archives are not supported")
    if magic2 != MAGIC_UNCOMPRESSED:
        raise CdfError(f"unrecognized CDF magic trailer 0x{magic2:08X}")

    r = _Reader(data)
    cdr = 8  # CDR immediately follows the 8-byte magic
    if r.u32(cdr + 8) != 1:
        raise CdfError("missing CDF descriptor record")
    gdr = r.u64(cdr + 12)
    version = f"{r.u32(cdr + 20)}.{r.u32(cdr + 24)}.{r.u32(cdr + 44)}"
    encoding = r.u32(cdr + 28)
    flags = r.u32(cdr + 32)
    majority = "row" if flags & 1 else "column"

    if r.u32(gdr + 8) != 2:
        raise CdfError("missing global descriptor record")
    r_vdr_head = r.u64(gdr + 12)
    z_vdr_head = r.u64(gdr + 20)
    adr_head = r.u64(gdr + 28)
    num_attrs = r.u32(gdr + 48)

    value_order = "<" if encoding in _LITTLE_ENDIAN_ENCODINGS else ">"

    attributes: list[CdfAttribute] = []
    offset = adr_head
    for _ in range(num_attrs):
        if offset == 0:
            break
        attr = CdfAttribute(name=r.name(offset + 68), scope=r.u32(offset + 28))
        aedr = r.u64(offset + 20)  # global (gr) entry chain
        while aedr:
            num, value = _read_entry(r, aedr, value_order)
            attr.entries[num] = value
            aedr = r.u64(aedr + 12)
        attributes.append(attr)
        offset = r.u64(offset + 12)

    return CdfInfo(
        version=version,
        encoding=encoding,
        majority=majority,
        z_variables=_variable_names(r, z_vdr_head),
        r_variables=_variable_names(r, r_vdr_head),
        attributes=attributes,
    )


def _variable_names(r: _Reader, head: int) -> list[str]:
    names = []
    offset = head
    while offset:
        names.append(r.name(offset + 84))
        offset = r.u64(offset + 12)
    return names


def _read_entry(r: _Reader, aedr: int, value_order: str) -> tuple[int, object]:
    entry_num = r.u32(aedr + 28)
    data_type = r.u32(aedr + 24)
    num_elems = r.u32(aedr + 32)
    value_offset = aedr + 56
    if data_type in _STRING_TYPES:
        raw = r.data[value_offset : value_offset + num_elems]
        return entry_num, raw.split(b"\x00", 1)[0].decode("ascii", errors="replace")
    spec = _NUMERIC_TYPES.get(data_type)
    if spec is None:
        return entry_num, f"<unsupported type {data_type}>"
    code, size = spec
    values = struct.unpack_from(f"{value_order}{num_elems}{code}", r.data, value_offset)
    return entry_num, values[0] if num_elems == 1 else list(values)
