"""Benchmark harness: compute/I-O skeleton workload, multi-process weak
scaling driver, per-operation profiling and statistical reporting.

A run iterates over compute cycles; every io_every cycles each of the P
worker processes writes its row-block, either as an object-store chunked
PUT (master begins a session, the token is broadcast over pipes, workers
write chunks and sign in to a barrier, the master commits) or as a
locked region write into one shared file.  Every operation is recorded
with a monotonic timestamp; aggregates are pure reductions of the raw
record dump, which is always written alongside them.
"""

from __future__ import annotations

import csv
import math
import multiprocessing as mp
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .client_api import ObjectStore
from .errors import ConfigInvalid, IncompletePhase, WorkerFailure
from .object_model import DType, Shape
from .sharedfile import SharedFile, SharedFileConfig, shared_create

OBJSTORE = "objstore"
SHAREDFILE = "sharedfile"

RECORD_FIELDS = ("worker", "phase", "op", "bytes", "start", "duration")

CSV_FIELDS = (
    "backend",
    "workers",
    "chunk_rows",
    "chunk_cols",
    "dtype",
    "n_osd",
    "procs_per_stripe",
    "repeats",
    "bw_median_mib_s",
    "bw_min_mib_s",
    "bw_max_mib_s",
    "io_time_mean_s",
    "compute_time_mean_s",
)


@dataclass(frozen=True)
class BenchConfig:
    """One benchmark configuration (weak scaling: per-worker data fixed)."""

    backend: str
    n_workers: int
    root: Path
    chunk_dims: tuple[int, int] = (64, 4096)
    dtype: DType = DType.I32
    cycles: int = 200
    io_every: int = 5
    repeats: int = 5
    n_osd: int = 4
    procs_per_stripe: int = 32
    compute_units: int = 1
    verify_commits: bool = False

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        if self.backend not in (OBJSTORE, SHAREDFILE):
            raise ConfigInvalid(f"unknown backend {self.backend!r}")
        if self.n_workers < 1 or self.cycles < 1 or self.io_every < 1:
            raise ConfigInvalid("workers, cycles and io_every must be positive")
        if self.cycles % self.io_every != 0:
            raise ConfigInvalid("cycles must be a multiple of io_every")
        if len(self.chunk_dims) != 2 or any(d < 1 for d in self.chunk_dims):
            raise ConfigInvalid("chunk_dims must be two positive integers")
        if self.repeats < 1:
            raise ConfigInvalid("repeats must be positive")

    @property
    def n_phases(self) -> int:
        return self.cycles // self.io_every

    @property
    def object_shape(self) -> tuple[int, int]:
        rows, cols = self.chunk_dims
        return (rows * self.n_workers, cols)

    @property
    def chunk_bytes(self) -> int:
        return math.prod(self.chunk_dims) * self.dtype.elem_size


@dataclass(frozen=True)
class OpRecord:
    """One profiled operation from one worker."""

    worker: int
    phase: int
    op: str
    bytes: int
    start: float
    duration: float


@dataclass
class PhaseStats:
    phase: int
    total_bytes: int
    io_span: float
    bandwidth_mib_s: float
    worker_io_time: dict[int, float]


@dataclass
class RunStats:
    phases: list[PhaseStats]
    total_bytes: int
    total_io_time: float
    total_span: float
    run_bandwidth_mib_s: float
    compute_time_s: float = 0.0


# -- deterministic content --------------------------------------------------

_FILL_MULT = 2654435761  # Knuth multiplicative constant


def fill_chunk(phase: int, part: int, chunk_dims, dtype: DType = DType.I32) -> np.ndarray:
    """Deterministic content of one worker's row-block in one phase."""
    n = math.prod(chunk_dims)
    base = phase * 1_000_003 + part * 7_919 + 1
    vals = ((base + np.arange(n, dtype=np.int64)) * _FILL_MULT) % (2**31)
    return vals.astype(dtype.numpy_dtype).reshape(chunk_dims)


def fill_object(phase: int, n_workers: int, chunk_dims, dtype: DType = DType.I32) -> np.ndarray:
    """Full array of one phase: row-blocks of all workers stacked."""
    return np.concatenate(
        [fill_chunk(phase, w, chunk_dims, dtype) for w in range(n_workers)], axis=0
    )


def compute_kernel(local: np.ndarray, units: int) -> np.ndarray:
    """Fixed arithmetic load: repeated 3-point stencil passes."""
    a = local.astype(np.int64, copy=True)
    for _ in range(units):
        a = (a + np.roll(a, 1, axis=0) + np.roll(a, -1, axis=0)) // 3 + 1
    return a


# -- aggregation ------------------------------------------------------------

DATA_OPS = frozenset({"put_chunk", "shared_write"})


def aggregate(records: list[OpRecord]) -> RunStats:
    """Pure reduction of raw op records to the reported quantities.

    Phase bandwidth is span-based: total data bytes over (latest op end
    minus earliest op start) within the phase.
    """
    by_phase: dict[int, list[OpRecord]] = {}
    for r in records:
        by_phase.setdefault(r.phase, []).append(r)
    phases = []
    for k in sorted(by_phase):
        ops = by_phase[k]
        data_bytes = sum(r.bytes for r in ops if r.op in DATA_OPS)
        if data_bytes == 0:
            raise IncompletePhase(f"phase {k} has no data operations")
        span = max(r.start + r.duration for r in ops) - min(r.start for r in ops)
        if span <= 0:
            raise IncompletePhase(f"phase {k} has zero io span")
        per_worker: dict[int, float] = {}
        for r in ops:
            per_worker[r.worker] = per_worker.get(r.worker, 0.0) + r.duration
        phases.append(
            PhaseStats(
                phase=k,
                total_bytes=data_bytes,
                io_span=span,
                bandwidth_mib_s=data_bytes / 2**20 / span,
                worker_io_time=per_worker,
            )
        )
    total_bytes = sum(p.total_bytes for p in phases)
    total_span = sum(p.io_span for p in phases)
    total_io_time = sum(max(p.worker_io_time.values()) for p in phases)
    return RunStats(
        phases=phases,
        total_bytes=total_bytes,
        total_io_time=total_io_time,
        total_span=total_span,
        run_bandwidth_mib_s=total_bytes / 2**20 / total_span,
    )


# -- worker processes -------------------------------------------------------


def _worker_main(config: BenchConfig, rank: int, repeat_dir: Path, conn, barrier) -> None:
    records: list[OpRecord] = []
    compute_s = 0.0
    local = fill_chunk(0, rank, config.chunk_dims, config.dtype)

    store = None
    if config.backend == OBJSTORE:
        store = ObjectStore.open(repeat_dir / "store")

    phase = 0
    for cycle in range(1, config.cycles + 1):
        t0 = time.monotonic()
        compute_kernel(local, config.compute_units)
        compute_s += time.monotonic() - t0
        if cycle % config.io_every != 0:
            continue

        data = fill_chunk(phase, rank, config.chunk_dims, config.dtype)
        if config.backend == OBJSTORE:
            if rank == 0:
                session = store.begin_chunked_put(
                    f"phase-{phase}", config.dtype, config.object_shape, config.chunk_dims
                )
                conn.send(session.token)
                token = session.token
            else:
                token = conn.recv()

            t0 = time.monotonic()
            nbytes = store.put_chunk(token, rank, data)
            records.append(OpRecord(rank, phase, "put_chunk", nbytes, t0, time.monotonic() - t0))

            t0 = time.monotonic()
            barrier.wait()
            records.append(OpRecord(rank, phase, "barrier", 0, t0, time.monotonic() - t0))

            if rank == 0:
                t0 = time.monotonic()
                store.commit(session, verify_complete=config.verify_commits)
                records.append(OpRecord(rank, phase, "commit", 0, t0, time.monotonic() - t0))
        else:
            if rank == 0:
                conn.send(phase)  # wait for the coordinator to create the file
                path = conn.recv()
            else:
                path = conn.recv()
            sf_config = _shared_config(config, path)
            with SharedFile(sf_config) as sf:
                t0 = time.monotonic()
                nbytes = sf.write_region(rank, data)
                records.append(
                    OpRecord(rank, phase, "shared_write", nbytes, t0, time.monotonic() - t0)
                )
            barrier.wait()
        phase += 1

    conn.send((records, compute_s))
    conn.close()


def _shared_config(config: BenchConfig, path) -> SharedFileConfig:
    return SharedFileConfig(
        path=path,
        dtype=config.dtype,
        shape=Shape(config.object_shape),
        chunk_dims=config.chunk_dims,
        n_workers=config.n_workers,
        procs_per_stripe=config.procs_per_stripe,
    )


def _run_once(config: BenchConfig, repeat: int) -> tuple[RunStats, list[OpRecord]]:
    repeat_dir = config.root / f"rep{repeat}"
    repeat_dir.mkdir(parents=True, exist_ok=True)
    if config.backend == OBJSTORE:
        ObjectStore.init(repeat_dir / "store", config.n_osd)

    ctx = mp.get_context("fork")
    barrier = ctx.Barrier(config.n_workers)
    pipes = [ctx.Pipe() for _ in range(config.n_workers)]
    procs = []
    for rank in range(config.n_workers):
        p = ctx.Process(
            target=_worker_main,
            args=(config, rank, repeat_dir, pipes[rank][1], barrier),
            daemon=True,
        )
        p.start()
        procs.append(p)

    conns = [c for c, _ in pipes]
    results: list[tuple[list[OpRecord], float] | None] = [None] * config.n_workers
    try:
        if config.backend == OBJSTORE:
            # broadcast the session token from worker 0 to the others
            for phase in range(config.n_phases):
                token = conns[0].recv()
                for c in conns[1:]:
                    c.send(token)
        else:
            # create each phase's shared file, then release the workers
            for phase in range(config.n_phases):
                conns[0].recv()
                path = repeat_dir / f"phase-{phase}.dat"
                shared_create(_shared_config(config, path)).close()
                for c in conns:
                    c.send(path)
        for rank, c in enumerate(conns):
            results[rank] = c.recv()
    finally:
        for p in procs:
            p.join(timeout=120)
        for p in procs:
            if p.exitcode != 0:
                raise WorkerFailure(f"worker exited with code {p.exitcode}")

    records = [r for recs, _ in results for r in recs]
    compute_times = [c for _, c in results]
    _dump_records(repeat_dir / "records.csv", records)
    stats = aggregate(records)
    stats.compute_time_s = statistics.mean(compute_times)
    return stats, records


def run_benchmark(config: BenchConfig) -> list[RunStats]:
    """Execute config.repeats independent runs, each on a clean root."""
    runs = []
    for repeat in range(config.repeats):
        stats, _ = _run_once(config, repeat)
        runs.append(stats)
    return runs


def _dump_records(path: Path, records: list[OpRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([r.worker, r.phase, r.op, r.bytes, f"{r.start:.9f}", f"{r.duration:.9f}"])


def load_records(path) -> list[OpRecord]:
    records = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            records.append(
                OpRecord(
                    worker=int(row["worker"]),
                    phase=int(row["phase"]),
                    op=row["op"],
                    bytes=int(row["bytes"]),
                    start=float(row["start"]),
                    duration=float(row["duration"]),
                )
            )
    return records


# -- reporting --------------------------------------------------------------


def summarize(config: BenchConfig, runs: list[RunStats]) -> dict:
    """One report row: median/min/max bandwidth, mean I/O and compute time."""
    bws = [r.run_bandwidth_mib_s for r in runs]
    return {
        "backend": config.backend,
        "workers": config.n_workers,
        "chunk_rows": config.chunk_dims[0],
        "chunk_cols": config.chunk_dims[1],
        "dtype": config.dtype.name,
        "n_osd": config.n_osd if config.backend == OBJSTORE else "",
        "procs_per_stripe": config.procs_per_stripe if config.backend == SHAREDFILE else "",
        "repeats": len(runs),
        "bw_median_mib_s": round(statistics.median(bws), 3),
        "bw_min_mib_s": round(min(bws), 3),
        "bw_max_mib_s": round(max(bws), 3),
        "io_time_mean_s": round(statistics.mean(r.total_io_time for r in runs), 6),
        "compute_time_mean_s": round(statistics.mean(r.compute_time_s for r in runs), 6),
    }


def write_report_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def format_table(rows: list[dict]) -> str:
    if not rows:
        return "(no results)\n"
    widths = {k: max(len(k), *(len(str(r[k])) for r in rows)) for k in CSV_FIELDS}
    header = "  ".join(k.ljust(widths[k]) for k in CSV_FIELDS)
    sep = "  ".join("-" * widths[k] for k in CSV_FIELDS)
    lines = [header, sep]
    for r in rows:
        lines.append("  ".join(str(r[k]).ljust(widths[k]) for k in CSV_FIELDS))
    return "\n".join(lines) + "\n"
