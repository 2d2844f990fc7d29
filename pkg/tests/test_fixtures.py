"""Fixture program tests: integrity of the checked-in binaries and
end-to-end behavior of each program under the kernel."""

import hashlib
import math
import struct

import pytest

from procwasm import abi
from procwasm import fixtures
from procwasm.errors import BadImage
from procwasm.guest_exec import ShimConfig
from procwasm.kernel import boot


def run_fixture(name, argv=None, image=None, config=None, timeout=60):
    """Boot, run one fixture to completion, return (report, kernel)."""
    full = dict(fixtures.fixture_image())
    full.update(image or {})
    k = boot(full, config)
    pid = k.spawn_process(f"/bin/{name}", argv,
                          stdout_path="/results/stdout",
                          stderr_path="/results/stderr")
    rep = k.wait(pid, timeout=timeout)
    return rep, k


class TestIntegrity:
    def test_manifest_lists_all_programs(self):
        assert sorted(fixtures.fixture_names()) == [
            "append_stress", "cat", "matmul", "pipeline"]

    def test_checked_in_binaries_match_manifest(self):
        for name, rel, digest in fixtures.manifest_entries():
            raw = (fixtures.data_dir() / rel).read_bytes()
            assert hashlib.sha256(raw).hexdigest() == digest

    def test_builders_reproduce_checked_in_bytes(self):
        for name in fixtures.fixture_names():
            assert fixtures.BUILDERS[name]() == fixtures.load_fixture(name)

    def test_load_unknown_fixture(self):
        with pytest.raises(BadImage):
            fixtures.load_fixture("no-such-program")

    def test_load_detects_corruption(self, monkeypatch):
        entries = [(n, r, "0" * 64) for n, r, _ in fixtures.manifest_entries()]
        monkeypatch.setattr(fixtures, "manifest_entries", lambda: entries)
        with pytest.raises(BadImage, match="hash mismatch"):
            fixtures.load_fixture("cat")

    def test_fixture_image_paths(self):
        image = fixtures.fixture_image()
        assert set(image) == {"/bin/append_stress", "/bin/cat",
                              "/bin/matmul", "/bin/pipeline"}
        assert all(isinstance(v, bytes) for v in image.values())


class TestCat:
    def test_copies_file_to_stdout(self):
        data = bytes((i * 7 + 3) % 256 for i in range(200_007))
        rep, k = run_fixture("cat", ["/bin/cat", "/data/in.bin"],
                             image={"/data/in.bin": data})
        try:
            assert rep.exit_code == 0
            assert k.read_file("/results/stdout") == data
        finally:
            k.shutdown()

    def test_large_copy_request_counts(self):
        # 200,007 bytes through a 65,536-byte buffer: the data region
        # holds 61,440, so the copy takes exactly 4 reads and 4 writes.
        data = bytes(i % 256 for i in range(200_007))
        rep, k = run_fixture("cat", ["/bin/cat", "/data/in.bin"],
                             image={"/data/in.bin": data},
                             config=ShimConfig(aux_capacity=65_536))
        try:
            assert rep.exit_code == 0
            assert rep.requests_sent[abi.SYS_READ] == 4
            assert rep.requests_sent[abi.SYS_WRITE] == 4
            assert k.read_file("/results/stdout") == data
        finally:
            k.shutdown()

    def test_empty_file(self):
        rep, k = run_fixture("cat", ["/bin/cat", "/data/empty"],
                             image={"/data/empty": b""})
        try:
            assert rep.exit_code == 0
            assert k.read_file("/results/stdout") == b""
        finally:
            k.shutdown()

    def test_missing_input_exits_nonzero(self):
        rep, k = run_fixture("cat", ["/bin/cat", "/data/nope"])
        try:
            assert rep.exit_code == 1
        finally:
            k.shutdown()

    def test_no_argument_reads_stdin_eof(self):
        rep, k = run_fixture("cat")
        try:
            assert rep.exit_code == 0
            assert k.read_file("/results/stdout") == b""
        finally:
            k.shutdown()


class TestPipeline:
    def test_pattern_crosses_pipe_intact(self):
        rep, k = run_fixture("pipeline", timeout=120)
        try:
            assert rep.exit_code == 0
            want = bytes(i % 256 for i in range(fixtures.PIPELINE_BYTES))
            assert k.read_file("/results/stdout") == want
        finally:
            k.shutdown()

    def test_exit_mirrors_child_failure(self):
        # Replace the child program with one that exits 1 immediately:
        # the parent's pipe write sees EPIPE and reports failure.
        from test_kernel import exiting_module
        rep, k = run_fixture(
            "pipeline", image={"/bin/cat": exiting_module(1)}, timeout=120)
        try:
            assert rep.exit_code == 1
        finally:
            k.shutdown()


class TestAppendStress:
    def test_content_and_growth(self):
        n = 3000
        rep, k = run_fixture("append_stress", ["/bin/append_stress", str(n)])
        try:
            assert rep.exit_code == 0
            assert k.read_file(fixtures.APPEND_OUT) == bytes(
                i % 256 for i in range(n))
            assert rep.syscall_counts[abi.SYS_WRITE] == n
            node = k._call(lambda: k.vfs.lookup(fixtures.APPEND_OUT))
            assert node.realloc_count <= math.ceil(n / 4096) + 1
        finally:
            k.shutdown()

    def test_appends_to_existing_content(self):
        rep, k = run_fixture(
            "append_stress", ["/bin/append_stress", "4"],
            image={fixtures.APPEND_OUT: b"pre"})
        try:
            assert rep.exit_code == 0
            assert k.read_file(fixtures.APPEND_OUT) == b"pre\x00\x01\x02\x03"
        finally:
            k.shutdown()


class TestMatmul:
    @staticmethod
    def unpack(raw, rows, cols):
        vals = struct.unpack(f"<{rows * cols}d", raw)
        return [list(vals[r * cols:(r + 1) * cols]) for r in range(rows)]

    def test_default_4x4_identity(self):
        rep, k = run_fixture("matmul")
        try:
            assert rep.exit_code == 0
            got = self.unpack(k.read_file(fixtures.MATMUL_OUT), 4, 4)
            want = [[1.0 if r == c else 0.0 for c in range(4)]
                    for r in range(4)]
            assert got == want
        finally:
            k.shutdown()

    def test_rectangular_dims_from_argv(self):
        # identity(5x7) @ identity(7x3) keeps the leading identity block.
        rep, k = run_fixture("matmul", ["/bin/matmul", "5", "3", "7"])
        try:
            assert rep.exit_code == 0
            got = self.unpack(k.read_file(fixtures.MATMUL_OUT), 5, 3)
            want = [[1.0 if r == c else 0.0 for c in range(3)]
                    for r in range(5)]
            assert got == want
        finally:
            k.shutdown()

    def test_numpy_oracle_on_larger_square(self):
        np = pytest.importorskip("numpy")
        dim = 16
        rep, k = run_fixture(
            "matmul", ["/bin/matmul", str(dim), str(dim), str(dim)])
        try:
            assert rep.exit_code == 0
            raw = k.read_file(fixtures.MATMUL_OUT)
            got = np.frombuffer(raw, dtype="<f8").reshape(dim, dim)
            eye = np.eye(dim)
            assert (got == eye @ eye).all()
        finally:
            k.shutdown()

    def test_oversized_dims_rejected(self):
        rep, k = run_fixture(
            "matmul", ["/bin/matmul", "2000", "2000", "2000"])
        try:
            assert rep.exit_code == 1
            assert k.read_file(fixtures.MATMUL_OUT) is None
        finally:
            k.shutdown()
