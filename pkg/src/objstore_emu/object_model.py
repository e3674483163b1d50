"""Core domain types and the canonical on-disk metadata encoding.

Objects are immutable n-dimensional arrays identified by a random UUID.
The metadata record ("OBJM") stores everything needed to locate and
reassemble an object: id, dtype, shape and, for chunked objects, the
chunk grid.  All integers are little-endian; element payloads are
row-major little-endian throughout the store.
"""

from __future__ import annotations

import enum
import math
import struct
import urllib.parse
import uuid
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    InvariantViolation,
    NonDivisibleChunk,
    RankMismatch,
    TruncatedRecord,
    UnsupportedVersion,
)

META_MAGIC = b"OBJM"
META_VERSION = 1


class DType(enum.IntEnum):
    """Supported element types."""

    I32 = 1
    F32 = 2
    F64 = 3

    @property
    def elem_size(self) -> int:
        return _ELEM_SIZE[self]

    @property
    def numpy_dtype(self) -> np.dtype:
        return _NUMPY_DTYPE[self]

    @classmethod
    def from_numpy(cls, dt) -> "DType":
        dt = np.dtype(dt)
        for code, nd in _NUMPY_DTYPE.items():
            if nd == dt.newbyteorder("<"):
                return code
        raise InvariantViolation(f"unsupported element type: {dt}")


_ELEM_SIZE = {DType.I32: 4, DType.F32: 4, DType.F64: 8}
_NUMPY_DTYPE = {
    DType.I32: np.dtype("<i4"),
    DType.F32: np.dtype("<f4"),
    DType.F64: np.dtype("<f8"),
}


@dataclass(frozen=True)
class ObjectId:
    """128-bit random object identifier (UUID version 4)."""

    bytes: bytes

    def __post_init__(self):
        if len(self.bytes) != 16:
            raise InvariantViolation("ObjectId must be 16 bytes")

    @classmethod
    def generate(cls) -> "ObjectId":
        return cls(uuid.uuid4().bytes)

    @property
    def hex(self) -> str:
        return self.bytes.hex()

    @classmethod
    def from_hex(cls, s: str) -> "ObjectId":
        return cls(bytes.fromhex(s))

    def __str__(self) -> str:
        return self.hex


def _check_dims(dims, what: str) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims:
        raise InvariantViolation(f"{what} must have rank >= 1")
    if any(d < 1 for d in dims):
        raise InvariantViolation(f"{what} entries must be positive: {dims}")
    if math.prod(dims) >= 2**64:
        raise InvariantViolation(f"{what} element count overflows 64 bits")
    return dims


@dataclass(frozen=True)
class Shape:
    """Positive-rank tensor shape."""

    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims, "shape"))

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def elements(self) -> int:
        return math.prod(self.dims)


@dataclass(frozen=True)
class ChunkGrid:
    """Regular chunking of a shape: per-axis chunk dims and counts.

    Part numbers are the row-major enumeration of the grid.
    """

    chunk_dims: tuple[int, ...]
    grid_dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "chunk_dims", _check_dims(self.chunk_dims, "chunk_dims"))
        object.__setattr__(self, "grid_dims", _check_dims(self.grid_dims, "grid_dims"))
        if len(self.chunk_dims) != len(self.grid_dims):
            raise RankMismatch("chunk_dims and grid_dims rank differ")

    @property
    def chunk_count(self) -> int:
        return math.prod(self.grid_dims)

    def part_to_coords(self, part: int) -> tuple[int, ...]:
        """Row-major grid coordinates of a part number."""
        coords = []
        for g in reversed(self.grid_dims):
            coords.append(part % g)
            part //= g
        return tuple(reversed(coords))

    def coords_to_part(self, coords) -> int:
        part = 0
        for c, g in zip(coords, self.grid_dims):
            part = part * g + c
        return part


def validate_chunking(shape: Shape, chunk_dims) -> ChunkGrid:
    """Validate that chunk_dims evenly tiles shape and build the grid."""
    chunk_dims = _check_dims(chunk_dims, "chunk_dims")
    if len(chunk_dims) != shape.rank:
        raise RankMismatch(
            f"chunk rank {len(chunk_dims)} != shape rank {shape.rank}"
        )
    grid = []
    for dim, cdim in zip(shape.dims, chunk_dims):
        if dim % cdim != 0:
            raise NonDivisibleChunk(f"{cdim} does not divide {dim}")
        grid.append(dim // cdim)
    return ChunkGrid(chunk_dims, tuple(grid))


@dataclass(frozen=True)
class ObjectMeta:
    """Metadata record for one committed object version.

    The name is the logical key; it is not stored inside the encoded
    record (the metadata filename carries it).
    """

    name: str
    id: ObjectId
    dtype: DType
    shape: Shape
    grid: ChunkGrid | None = None

    def __post_init__(self):
        if not self.name:
            raise InvariantViolation("object name must be non-empty")
        if self.grid is not None:
            # grid must actually tile the shape
            validate_chunking(self.shape, self.grid.chunk_dims)

    @property
    def chunked(self) -> bool:
        return self.grid is not None

    @property
    def chunk_count(self) -> int:
        return self.grid.chunk_count if self.grid is not None else 1

    @property
    def chunk_dims(self) -> tuple[int, ...]:
        return self.grid.chunk_dims if self.grid is not None else self.shape.dims

    @property
    def nbytes(self) -> int:
        return self.shape.elements * self.dtype.elem_size


def sanitize_name(name: str) -> str:
    """Percent-encode a logical object name into a safe filename.

    A leading dot is escaped as well: dot-prefixed filenames are
    reserved for in-flight temp files.
    """
    safe = urllib.parse.quote(name, safe="")
    if safe.startswith("."):
        safe = "%2E" + safe[1:]
    return safe


def unsanitize_name(filename: str) -> str:
    return urllib.parse.unquote(filename)


def meta_encode(meta: ObjectMeta) -> bytes:
    """Canonical binary encoding of a metadata record.

    Layout: "OBJM", version u16, id 16B, dtype u8, chunked u8, rank u8,
    reserved u8, dims rank*u64; if chunked: chunk_dims rank*u64 and
    chunk_count u64.  Little-endian throughout.
    """
    rank = meta.shape.rank
    out = bytearray()
    out += META_MAGIC
    out += struct.pack("<H", META_VERSION)
    out += meta.id.bytes
    out += struct.pack("<BBBB", meta.dtype, int(meta.chunked), rank, 0)
    out += struct.pack(f"<{rank}Q", *meta.shape.dims)
    if meta.grid is not None:
        out += struct.pack(f"<{rank}Q", *meta.grid.chunk_dims)
        out += struct.pack("<Q", meta.grid.chunk_count)
    return bytes(out)


def meta_encoded_len(rank: int, chunked: bool) -> int:
    """Record length as a pure function of rank and chunked-ness."""
    n = 26 + 8 * rank
    if chunked:
        n += 8 * rank + 8
    return n


def meta_decode(data: bytes, name: str = "") -> ObjectMeta:
    """Exact inverse of meta_encode; validates all invariants."""
    if len(data) < 4:
        raise TruncatedRecord(f"{len(data)} bytes, need at least 4")
    if data[:4] != META_MAGIC:
        raise BadMagic(f"expected OBJM, got {data[:4]!r}")
    if len(data) < 26:
        raise TruncatedRecord(f"{len(data)} bytes, need fixed header of 26")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != META_VERSION:
        raise UnsupportedVersion(f"version {version}")
    oid = ObjectId(data[6:22])
    dtype_code, chunked_flag, rank, reserved = struct.unpack_from("<BBBB", data, 22)
    try:
        dtype = DType(dtype_code)
    except ValueError:
        raise InvariantViolation(f"unknown dtype code {dtype_code}") from None
    if chunked_flag not in (0, 1):
        raise InvariantViolation(f"bad chunked flag {chunked_flag}")
    if rank < 1:
        raise InvariantViolation("rank must be >= 1")
    expected = meta_encoded_len(rank, bool(chunked_flag))
    if len(data) < expected:
        raise TruncatedRecord(f"{len(data)} bytes, layout needs {expected}")
    if len(data) > expected:
        raise InvariantViolation(f"{len(data) - expected} trailing bytes")
    off = 26
    dims = struct.unpack_from(f"<{rank}Q", data, off)
    off += 8 * rank
    try:
        shape = Shape(dims)
        grid = None
        if chunked_flag:
            chunk_dims = struct.unpack_from(f"<{rank}Q", data, off)
            off += 8 * rank
            (chunk_count,) = struct.unpack_from("<Q", data, off)
            grid = validate_chunking(shape, chunk_dims)
            if grid.chunk_count != chunk_count:
                raise InvariantViolation(
                    f"stored chunk_count {chunk_count} != derived {grid.chunk_count}"
                )
        return ObjectMeta(name or oid.hex, oid, dtype, shape, grid)
    except (RankMismatch, NonDivisibleChunk) as e:
        raise InvariantViolation(str(e)) from e


def as_object_array(data, dtype: DType | None = None) -> np.ndarray:
    """Coerce input to a C-contiguous little-endian array of a supported dtype."""
    arr = np.ascontiguousarray(data)
    if dtype is None:
        dtype = DType.from_numpy(arr.dtype)
    arr = np.ascontiguousarray(arr, dtype=dtype.numpy_dtype)
    return arr
