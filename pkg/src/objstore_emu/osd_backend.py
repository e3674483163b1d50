"""Data plane: emulated OSD directories holding immutable chunk files.

Each OSD is a directory "osd-K" under the store root.  A chunk file is
self-describing ("OBJC" header + raw payload) and is published with
temp-write + fsync + rename + directory fsync, so a concurrent reader
either sees nothing or a complete file.  Chunk files are never
overwritten or deleted.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AlreadyInitialized,
    ChunkExists,
    ChunkNotFound,
    CorruptChunk,
)
from .object_model import DType, ObjectId
from .placement import chunk_filename, osd_index, parse_chunk_filename

CHUNK_MAGIC = b"OBJC"
CHUNK_VERSION = 1
MARKER_NAME = "objstore-emu.marker"
FORMAT_NAME = "objstore-emu v1"


def chunk_header_len(rank: int) -> int:
    # magic 4 + version 2 + dtype 1 + rank 1 + part 4 + reserved 4
    # + id 16 + dims rank*8
    return 32 + 8 * rank


def encode_chunk_header(oid: ObjectId, part: int, dtype: DType, chunk_dims) -> bytes:
    rank = len(chunk_dims)
    return (
        CHUNK_MAGIC
        + struct.pack("<HBBII", CHUNK_VERSION, dtype, rank, part, 0)
        + oid.bytes
        + struct.pack(f"<{rank}Q", *chunk_dims)
    )


def fsync_dir(path) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def publish_file(final_path: Path, tmp_path: Path, payload_parts) -> int:
    """Write parts to tmp, fsync, rename into place, fsync the directory."""
    total = 0
    with open(tmp_path, "wb") as f:
        for part in payload_parts:
            f.write(part)
            total += len(part)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp_path, final_path)
    fsync_dir(final_path.parent)
    return total


@dataclass
class StoreRoot:
    """An opened store root: fixed OSD count plus directory layout."""

    root: Path
    n_osd: int

    def osd_dir(self, index: int) -> Path:
        return self.root / f"osd-{index}"

    @property
    def meta_dir(self) -> Path:
        return self.root / "meta"

    def chunk_path(self, oid: ObjectId, part: int) -> Path:
        return self.osd_dir(osd_index(oid, part, self.n_osd)) / chunk_filename(oid, part)


def store_init(root, n_osd: int) -> StoreRoot:
    """Create the directory tree and marker; reopen if already initialized."""
    if n_osd < 1:
        raise ValueError("n_osd must be >= 1")
    root = Path(root)
    marker = root / MARKER_NAME
    if marker.exists():
        existing = store_open(root)
        if existing.n_osd != n_osd:
            raise AlreadyInitialized(
                f"store at {root} has n_osd={existing.n_osd}, requested {n_osd}"
            )
        return existing
    if root.exists() and any(root.iterdir()):
        raise AlreadyInitialized(f"{root} is non-empty and not a store")
    root.mkdir(parents=True, exist_ok=True)
    for i in range(n_osd):
        (root / f"osd-{i}").mkdir()
    (root / "meta").mkdir()
    marker.write_text(f"{FORMAT_NAME} n_osd={n_osd}\n")
    fsync_dir(root)
    return StoreRoot(root, n_osd)


def store_open(root) -> StoreRoot:
    root = Path(root)
    marker = root / MARKER_NAME
    try:
        line = marker.read_text().strip()
    except FileNotFoundError:
        raise AlreadyInitialized(f"{root} is not an initialized store") from None
    prefix = f"{FORMAT_NAME} n_osd="
    if not line.startswith(prefix):
        raise AlreadyInitialized(f"unrecognized marker in {root}: {line!r}")
    return StoreRoot(root, int(line[len(prefix):]))


def write_chunk(store: StoreRoot, oid: ObjectId, part: int, data: np.ndarray) -> int:
    """Durably publish one immutable chunk; returns bytes written."""
    dtype = DType.from_numpy(data.dtype)
    payload = np.ascontiguousarray(data, dtype=dtype.numpy_dtype).tobytes()
    header = encode_chunk_header(oid, part, dtype, data.shape)
    final = store.chunk_path(oid, part)
    if final.exists():
        raise ChunkExists(f"{oid.hex} part {part} already written")
    tmp = final.parent / f".tmp-{oid.hex}-{part}-{os.getpid()}"
    return publish_file(final, tmp, (header, payload))


def read_chunk(store: StoreRoot, oid: ObjectId, part: int) -> np.ndarray:
    """Lock-free read of one chunk; validates the header against the request."""
    path = store.chunk_path(oid, part)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise ChunkNotFound(f"{oid.hex} part {part}") from None
    if len(raw) < 32 or raw[:4] != CHUNK_MAGIC:
        raise CorruptChunk(f"{path}: bad or truncated header")
    version, dtype_code, rank, hdr_part, _ = struct.unpack_from("<HBBII", raw, 4)
    if version != CHUNK_VERSION:
        raise CorruptChunk(f"{path}: version {version}")
    hdr_id = raw[16:32]
    try:
        dtype = DType(dtype_code)
    except ValueError:
        raise CorruptChunk(f"{path}: dtype code {dtype_code}") from None
    if hdr_id != oid.bytes or hdr_part != part:
        raise CorruptChunk(f"{path}: header identity mismatch")
    hlen = chunk_header_len(rank)
    if len(raw) < hlen:
        raise CorruptChunk(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}Q", raw, 32)
    expected = hlen + math.prod(dims) * dtype.elem_size
    if len(raw) != expected:
        raise CorruptChunk(f"{path}: {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw[hlen:], dtype=dtype.numpy_dtype).reshape(dims)


def audit_placement(store: StoreRoot) -> list[str]:
    """Scan every chunk file; return descriptions of misplaced/corrupt ones."""
    problems = []
    for i in range(store.n_osd):
        for entry in sorted(store.osd_dir(i).iterdir()):
            if entry.name.startswith("."):
                continue
            try:
                oid, part = parse_chunk_filename(entry.name)
            except ValueError:
                problems.append(f"{entry}: unrecognized filename")
                continue
            expected = osd_index(oid, part, store.n_osd)
            if expected != i:
                problems.append(f"{entry}: placed in osd-{i}, hash says osd-{expected}")
                continue
            try:
                read_chunk(store, oid, part)
            except CorruptChunk as e:
                problems.append(str(e))
    return problems
