"""Shared-file comparison arm: P workers writing disjoint regions of one
preallocated file under per-stripe exclusive locks.

The stripe locks emulate a distributed lock manager enforcing POSIX
consistency on a shared file: even though worker regions are disjoint,
every write acquires exclusive byte-range locks on all stripes its
region overlaps, in ascending stripe order (deadlock freedom).  Workers
are expected to be OS processes so the fcntl locks are real; an
in-process threading fallback exists for platforms with broken range
locks.
"""

from __future__ import annotations

import math
import os
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid, PartOutOfRange
from .object_model import DType, Shape, as_object_array, validate_chunking

try:
    import fcntl
except ImportError:  # non-POSIX
    fcntl = None

# fallback stripe mutexes for thread-based workers
_thread_locks: dict[tuple[str, int], threading.Lock] = defaultdict(threading.Lock)
_thread_locks_guard = threading.Lock()


@dataclass(frozen=True)
class SharedFileConfig:
    """Layout of the shared file and its lock granularity."""

    path: Path
    dtype: DType
    shape: Shape
    chunk_dims: tuple[int, ...]
    n_workers: int
    procs_per_stripe: int = 32

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        grid = validate_chunking(self.shape, self.chunk_dims)
        if any(g != 1 for g in grid.grid_dims[1:]):
            raise ConfigInvalid("shared file regions must be row-blocks (axis-0 chunking)")
        if grid.chunk_count != self.n_workers:
            raise ConfigInvalid(
                f"{grid.chunk_count} row-blocks for {self.n_workers} workers"
            )
        if self.procs_per_stripe < 1:
            raise ConfigInvalid("procs_per_stripe must be >= 1")

    @property
    def stripe_count(self) -> int:
        return max(1, self.n_workers // self.procs_per_stripe)

    @property
    def file_bytes(self) -> int:
        return self.shape.elements * self.dtype.elem_size

    @property
    def chunk_bytes(self) -> int:
        return math.prod(self.chunk_dims) * self.dtype.elem_size

    def stripe_span(self, s: int) -> tuple[int, int]:
        """Byte range [start, end) of stripe s."""
        L, n = self.file_bytes, self.stripe_count
        return s * L // n, (s + 1) * L // n

    def region_span(self, part: int) -> tuple[int, int]:
        """Byte range [start, end) of worker part's row-block."""
        if not 0 <= part < self.n_workers:
            raise PartOutOfRange(f"part {part} of {self.n_workers}")
        start = part * self.chunk_bytes
        return start, start + self.chunk_bytes

    def stripes_overlapping(self, start: int, end: int) -> list[int]:
        return [
            s
            for s in range(self.stripe_count)
            if max(start, self.stripe_span(s)[0]) < min(end, self.stripe_span(s)[1])
        ]


class SharedFile:
    """Handle to an open shared file; one per worker process."""

    def __init__(self, config: SharedFileConfig, use_fcntl: bool = True):
        self.config = config
        self.use_fcntl = use_fcntl and fcntl is not None
        self._fd = os.open(config.path, os.O_RDWR)
        self.lock_trace: list[tuple[int, tuple[int, ...]]] = []

    def close(self) -> None:
        os.close(self._fd)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _acquire(self, stripe: int, exclusive: bool):
        if self.use_fcntl:
            start, end = self.config.stripe_span(stripe)
            kind = fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH
            fcntl.lockf(self._fd, kind, end - start, start, os.SEEK_SET)
            return None
        with _thread_locks_guard:
            lock = _thread_locks[(str(self.config.path), stripe)]
        lock.acquire()
        return lock

    def _release(self, stripe: int, token):
        if self.use_fcntl:
            start, end = self.config.stripe_span(stripe)
            fcntl.lockf(self._fd, fcntl.LOCK_UN, end - start, start, os.SEEK_SET)
        else:
            token.release()

    def write_region(self, part: int, data) -> int:
        """Strongly consistent write of one worker's row-block."""
        cfg = self.config
        arr = as_object_array(data, cfg.dtype)
        if tuple(arr.shape) != cfg.chunk_dims:
            raise ConfigInvalid(f"region shape {arr.shape} != {cfg.chunk_dims}")
        start, end = cfg.region_span(part)
        stripes = cfg.stripes_overlapping(start, end)
        self.lock_trace.append((part, tuple(stripes)))
        held = [(s, self._acquire(s, exclusive=True)) for s in stripes]
        try:
            payload = arr.tobytes()
            os.pwrite(self._fd, payload, start)
            os.fsync(self._fd)
        finally:
            for s, token in reversed(held):
                self._release(s, token)
        return len(payload)

    def read_all(self) -> np.ndarray:
        """Full-array readback under shared locks on every stripe."""
        cfg = self.config
        held = [(s, self._acquire(s, exclusive=False)) for s in range(cfg.stripe_count)]
        try:
            raw = os.pread(self._fd, cfg.file_bytes, 0)
        finally:
            for s, token in reversed(held):
                self._release(s, token)
        return np.frombuffer(raw, dtype=cfg.dtype.numpy_dtype).reshape(cfg.shape.dims)


def shared_create(config: SharedFileConfig) -> SharedFile:
    """Preallocate the data file and write the config sidecar."""
    if config.path.exists():
        raise FileExistsError(config.path)
    with open(config.path, "wb") as f:
        f.truncate(config.file_bytes)
    dims = "x".join(str(d) for d in config.shape.dims)
    sidecar = config.path.with_name(config.path.name + ".cfg")
    sidecar.write_text(
        f"dtype={config.dtype.name} dims={dims} stripe_count={config.stripe_count}\n"
    )
    return SharedFile(config)


def shared_open(config: SharedFileConfig, use_fcntl: bool = True) -> SharedFile:
    return SharedFile(config, use_fcntl=use_fcntl)
