import hashlib
import threading

import numpy as np
import pytest

from objstore_emu.errors import (
    AlreadyInitialized,
    ChunkExists,
    ChunkNotFound,
    CorruptChunk,
)
from objstore_emu.object_model import DType, ObjectId
from objstore_emu.osd_backend import (
    audit_placement,
    chunk_header_len,
    encode_chunk_header,
    read_chunk,
    store_init,
    store_open,
    write_chunk,
)
from objstore_emu.placement import osd_index


@pytest.fixture
def root(tmp_path):
    return store_init(tmp_path / "store", 4)


class TestStoreInit:
    def test_layout_created(self, tmp_path):
        store = store_init(tmp_path / "s", 4)
        for i in range(4):
            assert (store.root / f"osd-{i}").is_dir()
        assert (store.root / "meta").is_dir()

    def test_reopen_same_n_osd(self, tmp_path):
        store_init(tmp_path / "s", 4)
        again = store_init(tmp_path / "s", 4)
        assert again.n_osd == 4

    def test_reopen_mismatch(self, tmp_path):
        store_init(tmp_path / "s", 4)
        with pytest.raises(AlreadyInitialized):
            store_init(tmp_path / "s", 8)

    def test_open_uninitialized(self, tmp_path):
        with pytest.raises(AlreadyInitialized):
            store_open(tmp_path / "missing")

    def test_init_over_foreign_dir(self, tmp_path):
        d = tmp_path / "s"
        d.mkdir()
        (d / "junk").write_text("x")
        with pytest.raises(AlreadyInitialized):
            store_init(d, 4)

    def test_marker_format(self, tmp_path):
        store = store_init(tmp_path / "s", 7)
        marker = (store.root / "objstore-emu.marker").read_text()
        assert marker == "objstore-emu v1 n_osd=7\n"


class TestWriteRead:
    def test_round_trip(self, root):
        oid = ObjectId.generate()
        data = np.arange(64 * 128, dtype="<f8").reshape(64, 128)
        write_chunk(root, oid, 0, data)
        out = read_chunk(root, oid, 0)
        assert out.dtype == np.dtype("<f8")
        np.testing.assert_array_equal(out, data)

    def test_bytes_written_64x4096_i32(self, root):
        oid = ObjectId.generate()
        data = np.zeros((64, 4096), dtype="<i4")
        # header for rank 2 is 48 bytes; payload 64*4096*4 = 1 MiB
        assert write_chunk(root, oid, 0, data) == 48 + 1_048_576
        assert chunk_header_len(2) == 48

    def test_immutability(self, root):
        oid = ObjectId.generate()
        data = np.ones((4, 4), dtype="<i4")
        write_chunk(root, oid, 1, data)
        with pytest.raises(ChunkExists):
            write_chunk(root, oid, 1, data)

    def test_placement_conforms(self, root):
        oid = ObjectId.generate()
        for part in range(8):
            write_chunk(root, oid, part, np.full((2, 2), part, dtype="<i4"))
        for part in range(8):
            idx = osd_index(oid, part, root.n_osd)
            assert (root.osd_dir(idx) / f"{oid.hex}-{part}.chunk").exists()

    def test_missing_chunk(self, root):
        with pytest.raises(ChunkNotFound):
            read_chunk(root, ObjectId.generate(), 0)

    def test_truncated_chunk_detected(self, root):
        oid = ObjectId.generate()
        write_chunk(root, oid, 0, np.arange(16, dtype="<i4"))
        path = root.chunk_path(oid, 0)
        raw = path.read_bytes()
        path.write_bytes(raw[:-1])
        with pytest.raises(CorruptChunk):
            read_chunk(root, oid, 0)

    def test_identity_mismatch_detected(self, root):
        a, b = ObjectId.generate(), ObjectId.generate()
        write_chunk(root, a, 0, np.arange(4, dtype="<i4"))
        # copy a's chunk file to where b's part 0 would be placed
        root.chunk_path(b, 0).write_bytes(root.chunk_path(a, 0).read_bytes())
        with pytest.raises(CorruptChunk):
            read_chunk(root, b, 0)

    def test_golden_chunk_file(self, root, request):
        golden = request.path.parent / "golden" / "chunk_f64_2x3_part5.bin"
        oid = ObjectId(bytes(range(16)))
        data = np.arange(6, dtype="<f8").reshape(2, 3)
        write_chunk(root, oid, 5, data)
        assert root.chunk_path(oid, 5).read_bytes() == golden.read_bytes()

    def test_header_encoding(self):
        hdr = encode_chunk_header(ObjectId(bytes(16)), 3, DType.F32, (8, 8, 8))
        assert len(hdr) == chunk_header_len(3) == 56
        assert hdr[:4] == b"OBJC"


class TestImmutabilityAudit:
    def test_bytes_stable_across_activity(self, root):
        oid = ObjectId.generate()
        write_chunk(root, oid, 0, np.arange(100, dtype="<i4"))
        path = root.chunk_path(oid, 0)
        before = hashlib.sha256(path.read_bytes()).hexdigest()
        # arbitrary later store activity
        for _ in range(20):
            write_chunk(root, ObjectId.generate(), 0, np.arange(50, dtype="<f4"))
        assert hashlib.sha256(path.read_bytes()).hexdigest() == before

    def test_audit_clean_store(self, root):
        for _ in range(10):
            write_chunk(root, ObjectId.generate(), 0, np.ones(8, dtype="<i4"))
        assert audit_placement(root) == []

    def test_audit_flags_misplaced(self, root):
        oid = ObjectId.generate()
        write_chunk(root, oid, 0, np.ones(8, dtype="<i4"))
        good = osd_index(oid, 0, root.n_osd)
        bad = (good + 1) % root.n_osd
        path = root.chunk_path(oid, 0)
        path.rename(root.osd_dir(bad) / path.name)
        problems = audit_placement(root)
        assert len(problems) == 1 and "osd-" in problems[0]

    def test_audit_flags_corrupt(self, root):
        oid = ObjectId.generate()
        write_chunk(root, oid, 0, np.ones(8, dtype="<i4"))
        path = root.chunk_path(oid, 0)
        path.write_bytes(path.read_bytes()[:-2])
        assert len(audit_placement(root)) == 1


class TestAtomicPublish:
    def test_reader_never_sees_partial_chunk(self, root):
        # writer publishes successive parts while a reader polls the final
        # paths; every successful read must be complete and valid
        oid = ObjectId.generate()
        n_parts = 200
        data = np.arange(1024, dtype="<i4")
        errors = []
        stop = threading.Event()

        def reader():
            while not stop.is_set():
                for part in range(n_parts):
                    try:
                        out = read_chunk(root, oid, part)
                        if not np.array_equal(out, data + part):
                            errors.append(f"part {part}: wrong content")
                    except ChunkNotFound:
                        pass
                    except CorruptChunk as e:
                        errors.append(str(e))

        t = threading.Thread(target=reader)
        t.start()
        try:
            for part in range(n_parts):
                write_chunk(root, oid, part, data + part)
        finally:
            stop.set()
            t.join()
        assert errors == []
