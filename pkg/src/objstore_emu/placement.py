"""Deterministic chunk placement.

A chunk's OSD index is computed purely from (object id, part number)
with FNV-1a-64, so any party holding the metadata can enumerate every
chunk location without a lookup.  The filename grammar
"<hex-uuid>-<part>.chunk" is a stable external contract.
"""

from __future__ import annotations

import re
import struct

from .object_model import ObjectId

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

_CHUNK_NAME_RE = re.compile(r"^([0-9a-f]{32})-([0-9]+)\.chunk$")


def fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = FNV_OFFSET_BASIS
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def osd_index(oid: ObjectId, part: int, n_osd: int) -> int:
    """Map (id, part) to an OSD index in [0, n_osd)."""
    if n_osd < 1:
        raise ValueError("n_osd must be >= 1")
    return fnv1a_64(oid.bytes + struct.pack("<Q", part)) % n_osd


def chunk_filename(oid: ObjectId, part: int) -> str:
    return f"{oid.hex}-{part}.chunk"


def parse_chunk_filename(name: str) -> tuple[ObjectId, int]:
    """Inverse of chunk_filename; raises ValueError on mismatch."""
    m = _CHUNK_NAME_RE.match(name)
    if m is None:
        raise ValueError(f"not a chunk filename: {name!r}")
    return ObjectId.from_hex(m.group(1)), int(m.group(2))
