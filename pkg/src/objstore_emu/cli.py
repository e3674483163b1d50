"""Command-line entry point for store management and benchmarking."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import bench
from .client_api import ObjectStore
from .errors import StoreError
from .object_model import DType
from .placement import osd_index

ENV_ROOT = "OBJSTORE_EMU_ROOT"


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}, expected e.g. 64x4096")
    if not dims or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(f"dims must be positive: {text!r}")
    return dims


def _root(args) -> Path:
    if args.root is not None:
        return Path(args.root)
    env = os.environ.get(ENV_ROOT)
    if env:
        return Path(env)
    raise StoreError(f"no store root: pass --root or set {ENV_ROOT}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="objstore-emu",
        description="Filesystem-backed object store emulator and I/O benchmark.",
    )
    parser.add_argument("--root", help=f"store root (default: ${ENV_ROOT})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="initialize a store root")
    p.add_argument("--osds", type=int, default=4, help="number of emulated OSDs")

    p = sub.add_parser("put", help="store a raw little-endian array file as an object")
    p.add_argument("name")
    p.add_argument("file")
    p.add_argument("--dtype", choices=[d.name for d in DType], default="I32")
    p.add_argument("--dims", type=_parse_dims, required=True, help="e.g. 256x4096")
    p.add_argument("--chunk", type=_parse_dims, help="chunk dims, e.g. 64x4096")

    p = sub.add_parser("get", help="read an object into a raw payload file")
    p.add_argument("name")
    p.add_argument("file")

    p = sub.add_parser("stat", help="print metadata and resolved chunk locations")
    p.add_argument("name")

    sub.add_parser("ls", help="list committed object names")

    sub.add_parser("audit", help="scan chunk placement and integrity")

    p = sub.add_parser("bench", help="run the weak-scaling benchmark")
    p.add_argument("--backend", choices=[bench.OBJSTORE, bench.SHAREDFILE], required=True)
    p.add_argument("--workers", type=int, required=True)
    p.add_argument("--chunk", type=_parse_dims, default=(64, 4096))
    p.add_argument("--cycles", type=int, default=200)
    p.add_argument("--io-every", type=int, default=5)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--osds", type=int, default=4)
    p.add_argument("--procs-per-stripe", type=int, default=32)
    p.add_argument("--compute-units", type=int, default=1)
    p.add_argument("--out", help="write the report row to this CSV")

    p = sub.add_parser("report", help="render report CSVs as one table")
    p.add_argument("csv", nargs="+")

    return parser


def cmd_init(args) -> int:
    store = ObjectStore.init(_root(args), args.osds)
    print(f"initialized {store.root} with {store.n_osd} OSDs")
    return 0


def cmd_put(args) -> int:
    store = ObjectStore.open(_root(args))
    dtype = DType[args.dtype]
    raw = Path(args.file).read_bytes()
    arr = np.frombuffer(raw, dtype=dtype.numpy_dtype).reshape(args.dims)
    if args.chunk is None:
        oid = store.put(args.name, arr)
    else:
        session = store.begin_chunked_put(args.name, dtype, args.dims, args.chunk)
        grid = session.meta.grid
        for part in range(grid.chunk_count):
            coords = grid.part_to_coords(part)
            slices = tuple(
                slice(c * d, (c + 1) * d) for c, d in zip(coords, grid.chunk_dims)
            )
            store.put_chunk(session.token, part, arr[slices])
        store.commit(session)
        oid = session.meta.id
    print(oid.hex)
    return 0


def cmd_get(args) -> int:
    store = ObjectStore.open(_root(args))
    _, arr = store.get(args.name)
    Path(args.file).write_bytes(arr.tobytes())
    return 0


def cmd_stat(args) -> int:
    store = ObjectStore.open(_root(args))
    meta = store.lookup(args.name)
    dims = "x".join(str(d) for d in meta.shape.dims)
    print(f"name:   {meta.name}")
    print(f"id:     {meta.id.hex}")
    print(f"dtype:  {meta.dtype.name}")
    print(f"shape:  {dims}")
    if meta.chunked:
        cdims = "x".join(str(d) for d in meta.grid.chunk_dims)
        print(f"chunks: {meta.chunk_count} of {cdims}")
    else:
        print("chunks: 1 (unchunked)")
    for part in range(meta.chunk_count):
        idx = osd_index(meta.id, part, store.n_osd)
        path = store.store_root.chunk_path(meta.id, part)
        print(f"  part {part}: osd-{idx} {path}")
    return 0


def cmd_ls(args) -> int:
    store = ObjectStore.open(_root(args))
    for name in store.list_names():
        print(name)
    return 0


def cmd_audit(args) -> int:
    store = ObjectStore.open(_root(args))
    problems = store.audit()
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        return 1
    print("audit clean")
    return 0


def cmd_bench(args) -> int:
    config = bench.BenchConfig(
        backend=args.backend,
        n_workers=args.workers,
        root=_root(args),
        chunk_dims=args.chunk,
        cycles=args.cycles,
        io_every=args.io_every,
        repeats=args.repeats,
        n_osd=args.osds,
        procs_per_stripe=args.procs_per_stripe,
        compute_units=args.compute_units,
    )
    runs = bench.run_benchmark(config)
    row = bench.summarize(config, runs)
    if args.out:
        bench.write_report_csv([row], args.out)
    sys.stdout.write(bench.format_table([row]))
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.csv:
        with open(path, newline="") as f:
            rows.extend(csv.DictReader(f))
    sys.stdout.write(bench.format_table(rows))
    return 0


_COMMANDS = {
    "init": cmd_init,
    "put": cmd_put,
    "get": cmd_get,
    "stat": cmd_stat,
    "ls": cmd_ls,
    "audit": cmd_audit,
    "bench": cmd_bench,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StoreError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
