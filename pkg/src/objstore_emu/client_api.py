"""User-facing store facade: PUT/GET plus the multi-writer chunked-PUT
session protocol.

A chunked PUT starts a session that carries a fresh UUID; the session
token is a plain picklable value, so the master can hand it to worker
processes over any IPC.  Workers write their parts independently; the
master's commit publishes the metadata and makes the object visible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metadata_store, osd_backend
from .errors import (
    AlreadyCommitted,
    MissingChunks,
    PartOutOfRange,
    ShapeMismatch,
)
from .object_model import (
    ChunkGrid,
    DType,
    ObjectId,
    ObjectMeta,
    Shape,
    as_object_array,
    validate_chunking,
)
from .osd_backend import StoreRoot


@dataclass(frozen=True)
class PutToken:
    """Everything a worker needs to write chunks of an in-flight object."""

    id: ObjectId
    dtype: DType
    shape: Shape
    grid: ChunkGrid

    @property
    def chunk_count(self) -> int:
        return self.grid.chunk_count


@dataclass
class PutSession:
    """Master-side state of one chunked PUT."""

    meta: ObjectMeta
    committed: bool = field(default=False)

    @property
    def token(self) -> PutToken:
        return PutToken(self.meta.id, self.meta.dtype, self.meta.shape, self.meta.grid)

    @property
    def parts_expected(self) -> int:
        return self.meta.chunk_count


class ObjectStore:
    """Facade over one store root; safe for concurrent multi-process use."""

    def __init__(self, root: StoreRoot):
        self._root = root

    @classmethod
    def init(cls, root, n_osd: int) -> "ObjectStore":
        return cls(osd_backend.store_init(root, n_osd))

    @classmethod
    def open(cls, root) -> "ObjectStore":
        return cls(osd_backend.store_open(root))

    @property
    def root(self) -> Path:
        return self._root.root

    @property
    def n_osd(self) -> int:
        return self._root.n_osd

    @property
    def store_root(self) -> StoreRoot:
        return self._root

    # -- whole-object operations ------------------------------------------

    def put(self, name: str, data) -> ObjectId:
        """Single-chunk PUT: write part 0, commit, return the new id."""
        arr = as_object_array(data)
        meta = ObjectMeta(
            name,
            ObjectId.generate(),
            DType.from_numpy(arr.dtype),
            Shape(arr.shape),
        )
        osd_backend.write_chunk(self._root, meta.id, 0, arr)
        metadata_store.commit_meta(self._root, meta)
        return meta.id

    def get(self, name: str) -> tuple[ObjectMeta, np.ndarray]:
        meta = self.lookup(name)
        return meta, self.get_version(meta)

    def get_version(self, meta: ObjectMeta) -> np.ndarray:
        """Read an object version from its metadata record alone.

        Every chunk location is derived from (id, grid) by the placement
        hash; no directory listing or lookup is involved.
        """
        if meta.grid is None:
            return osd_backend.read_chunk(self._root, meta.id, 0).reshape(meta.shape.dims)
        grid = meta.grid
        out = np.empty(meta.shape.dims, dtype=meta.dtype.numpy_dtype)
        for part in range(grid.chunk_count):
            chunk = osd_backend.read_chunk(self._root, meta.id, part)
            out[_chunk_slices(grid, part)] = chunk.reshape(grid.chunk_dims)
        return out

    def get_chunk(self, name: str, part: int) -> np.ndarray:
        meta = self.lookup(name)
        if not 0 <= part < meta.chunk_count:
            raise PartOutOfRange(f"part {part} of {meta.chunk_count}")
        return osd_backend.read_chunk(self._root, meta.id, part)

    # -- chunked PUT sessions ---------------------------------------------

    def begin_chunked_put(self, name: str, dtype: DType, shape, chunk_dims) -> PutSession:
        shape = shape if isinstance(shape, Shape) else Shape(tuple(shape))
        grid = validate_chunking(shape, chunk_dims)
        meta = ObjectMeta(name, ObjectId.generate(), DType(dtype), shape, grid)
        return PutSession(meta)

    def put_chunk(self, token: PutToken, part: int, data) -> int:
        if not 0 <= part < token.chunk_count:
            raise PartOutOfRange(f"part {part} of {token.chunk_count}")
        arr = as_object_array(data)
        if tuple(arr.shape) != token.grid.chunk_dims:
            raise ShapeMismatch(
                f"chunk shape {tuple(arr.shape)} != {token.grid.chunk_dims}"
            )
        if DType.from_numpy(arr.dtype) != token.dtype:
            raise ShapeMismatch(f"dtype {arr.dtype} != {token.dtype.name}")
        return osd_backend.write_chunk(self._root, token.id, part, arr)

    def commit(self, session: PutSession, verify_complete: bool = True) -> None:
        """Publish the session's metadata, making the object visible."""
        if session.committed:
            raise AlreadyCommitted(session.meta.name)
        if verify_complete:
            missing = [
                part
                for part in range(session.parts_expected)
                if not self._root.chunk_path(session.meta.id, part).exists()
            ]
            if missing:
                raise MissingChunks(f"{session.meta.name}: parts {missing} absent")
        metadata_store.commit_meta(self._root, session.meta)
        session.committed = True

    # -- namespace ---------------------------------------------------------

    def lookup(self, name: str) -> ObjectMeta:
        return metadata_store.lookup_meta(self._root, name)

    def list_names(self) -> list[str]:
        return metadata_store.list_names(self._root)

    def audit(self) -> list[str]:
        return osd_backend.audit_placement(self._root)


def _chunk_slices(grid: ChunkGrid, part: int) -> tuple[slice, ...]:
    coords = grid.part_to_coords(part)
    return tuple(
        slice(c * d, (c + 1) * d) for c, d in zip(coords, grid.chunk_dims)
    )
