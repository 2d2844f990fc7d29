"""Command-line interface: subcommands, outputs, exit codes."""

import json
import tarfile

import pytest

from procwasm.cli import main
from procwasm.fixtures import fixture_names


@pytest.fixture
def workspace(tmp_path):
    fsimage = tmp_path / "fsimage"
    (fsimage / "data").mkdir(parents=True)
    (fsimage / "data" / "in.bin").write_bytes(b"hello cli payload")
    cmdfile = tmp_path / "cmd.txt"
    cmdfile.write_text(
        "out=/results/cat.out err=/results/cat.err /bin/cat /data/in.bin\n")
    return tmp_path, fsimage, cmdfile


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestRun:
    def test_successful_run_writes_records(self, workspace, capsys):
        tmp, fsimage, cmdfile = workspace
        out = tmp / "out"
        code = run_cli("run", "--cmdfile", cmdfile, "--fsimage", fsimage,
                       "--iterations", 2, "--counters", "software",
                       "--out", out)
        assert code == 0
        payload = json.loads((out / "records.json").read_text())
        assert payload["meta"]["iterations"] == 2
        assert payload["meta"]["counters"] == "software"
        assert len(payload["records"]) == 2
        assert all(r["status"] == "exited" and r["exit_code"] == 0
                   for r in payload["records"])
        assert (out / "iter-0" / "cat.out").read_bytes() == \
            b"hello cli payload"
        stdout = capsys.readouterr().out
        assert "cat: 2/2 ok" in stdout
        assert "kernel overhead" in stdout

    def test_archive_flag_writes_tar(self, workspace):
        tmp, fsimage, cmdfile = workspace
        out = tmp / "runout"
        code = run_cli("run", "--cmdfile", cmdfile, "--fsimage", fsimage,
                       "--iterations", 1, "--out", out, "--archive")
        assert code == 0
        tar_path = tmp / "runout.tar"
        with tarfile.open(tar_path) as tf:
            names = tf.getnames()
        assert "records.json" in names
        assert "iter-0/cat.out" in names

    def test_small_aux_capacity_still_copies(self, workspace):
        tmp, fsimage, cmdfile = workspace
        (fsimage / "data" / "in.bin").write_bytes(bytes(range(256)) * 100)
        out = tmp / "out"
        code = run_cli("run", "--cmdfile", cmdfile, "--fsimage", fsimage,
                       "--iterations", 1, "--aux-capacity", 8192,
                       "--out", out)
        assert code == 0
        assert (out / "iter-0" / "cat.out").read_bytes() == \
            bytes(range(256)) * 100

    def test_failed_benchmark_exits_one(self, workspace, capsys):
        tmp, fsimage, cmdfile = workspace
        cmdfile.write_text("out=/results/o err=/results/e /bin/missing\n")
        code = run_cli("run", "--cmdfile", cmdfile, "--iterations", 1,
                       "--out", tmp / "out")
        assert code == 1
        assert "0/1 ok" in capsys.readouterr().out

    def test_malformed_cmdfile_exits_two(self, workspace, capsys):
        tmp, _, cmdfile = workspace
        cmdfile.write_text("not a valid entry\n")
        code = run_cli("run", "--cmdfile", cmdfile, "--out", tmp / "out")
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_cmdfile_exits_two(self, tmp_path, capsys):
        code = run_cli("run", "--cmdfile", tmp_path / "absent.txt",
                       "--out", tmp_path / "out")
        assert code == 2


class TestValidate:
    def fill(self, root, files):
        for rel, data in files.items():
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)

    def test_matching_trees_exit_zero(self, tmp_path, capsys):
        self.fill(tmp_path / "exp", {"a": b"same"})
        self.fill(tmp_path / "act", {"a": b"same"})
        assert run_cli("validate", tmp_path / "exp", tmp_path / "act") == 0
        assert "1/1 files match" in capsys.readouterr().out

    def test_flipped_byte_exit_one_with_offset(self, tmp_path, capsys):
        self.fill(tmp_path / "exp", {"a": b"abcdef"})
        self.fill(tmp_path / "act", {"a": b"abcDef"})
        assert run_cli("validate", tmp_path / "exp", tmp_path / "act") == 1
        assert "first difference at byte 3" in capsys.readouterr().out

    def test_missing_expected_dir_exit_two(self, tmp_path, capsys):
        assert run_cli("validate", tmp_path / "nope", tmp_path) == 2
        assert "error:" in capsys.readouterr().err


class TestReport:
    def run_first(self, workspace):
        tmp, fsimage, cmdfile = workspace
        out = tmp / "out"
        assert run_cli("run", "--cmdfile", cmdfile, "--fsimage", fsimage,
                       "--iterations", 2, "--counters", "software",
                       "--out", out) == 0
        return out

    def test_markdown_report(self, workspace, capsys):
        out = self.run_first(workspace)
        capsys.readouterr()
        assert run_cli("report", out, "--format", "md") == 0
        text = capsys.readouterr().out
        assert text.startswith("| Benchmark | wall (ms) |")
        assert "| cat |" in text
        assert "Kernel overhead:" in text
        assert "instructions-analog" in text

    def test_csv_report(self, workspace, capsys):
        out = self.run_first(workspace)
        capsys.readouterr()
        assert run_cli("report", out, "--format", "csv") == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == ("benchmark,runs,failures,mean_wall_ms,"
                            "stderr_wall_ms,mean_kernel_ms,stderr_kernel_ms")
        bench, runs, failures = lines[1].split(",")[:3]
        assert (bench, runs, failures) == ("cat", "2", "0")

    def test_missing_run_dir_exits_two(self, tmp_path, capsys):
        assert run_cli("report", tmp_path / "absent") == 2
        assert "error:" in capsys.readouterr().err


class TestFixtures:
    def test_list_names_every_fixture(self, capsys):
        assert run_cli("fixtures", "list") == 0
        text = capsys.readouterr().out
        for name in fixture_names():
            assert name in text
        assert "sha256" in text
