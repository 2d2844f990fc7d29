"""Benchmark execution: command files, repeated runs, counter sessions,
and kernel-overhead accounting."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .. import fixtures
from ..errors import (
    HarnessAbort,
    InvalidModule,
    KernelGone,
    ProviderUnavailable,
    SpawnError,
    ZeroDuration,
)
from ..guest_exec import ShimConfig
from ..kernel import Kernel, boot
from .cmdfile import CommandFile
from .counters import CounterSet, NullProvider, get_provider
from .validate import MISSING, PASS, FileResult, compare_bytes

EXITED = "exited"
TRAPPED = "trapped"
SPAWN_FAILED = "spawn-failed"


@dataclass
class RunRecord:
    """One process execution: identity, timings, status, measurements."""

    benchmark: str
    iteration: int
    wall_ms: float
    kernel_ms: float
    status: str  # EXITED, TRAPPED, or SPAWN_FAILED
    exit_code: int | None
    counters: CounterSet = field(default_factory=CounterSet)
    validation: FileResult | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == EXITED and self.exit_code == 0

    def to_dict(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "iteration": self.iteration,
            "wall_ms": self.wall_ms,
            "kernel_ms": self.kernel_ms,
            "status": self.status,
            "exit_code": self.exit_code,
            "counters": dict(self.counters.values),
            "counter_provider": self.counters.provider,
            "validation": (None if self.validation is None
                           else [self.validation.status,
                                 self.validation.offset]),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        validation = d.get("validation")
        return cls(
            benchmark=d["benchmark"],
            iteration=d["iteration"],
            wall_ms=d["wall_ms"],
            kernel_ms=d["kernel_ms"],
            status=d["status"],
            exit_code=d["exit_code"],
            counters=CounterSet(dict(d.get("counters", {})),
                                d.get("counter_provider", "null")),
            validation=(None if validation is None
                        else FileResult(validation[0], validation[1])),
            error=d.get("error"),
        )


def stage_image(fs_image=None, include_fixtures: bool = True) -> dict:
    """Materialize a boot image mapping; fixtures land under /bin.

    Accepts None, a mapping of vfs paths to bytes/str, or a host
    directory to mirror. Caller entries win over fixture paths.
    """
    staged: dict[str, bytes] = {}
    if include_fixtures:
        staged.update(fixtures.fixture_image())
    if fs_image is None:
        return staged
    if isinstance(fs_image, dict):
        staged.update(fs_image)
        return staged
    root = Path(fs_image)
    for path in sorted(root.rglob("*")):
        if path.is_file():
            staged["/" + path.relative_to(root).as_posix()] = \
                path.read_bytes()
    return staged


def _wait_checked(kernel: Kernel, pid: int):
    """kernel.wait, but turn a dead kernel into HarnessAbort."""
    while True:
        try:
            return kernel.wait(pid, timeout=0.25)
        except TimeoutError:
            if kernel.failure is not None:
                raise HarnessAbort(
                    f"kernel died mid-run: {kernel.failure!r}") from None


def run_command_file(kernel: Kernel, cf: CommandFile, provider=None,
                     iteration: int = 0,
                     expected: dict[str, bytes] | None = None
                     ) -> list[RunRecord]:
    """Execute each entry sequentially, one counter session per process.

    Sessions begin on the guest thread before its entry call and end at
    process exit. A failed launch is recorded as SPAWN_FAILED and the
    remaining entries still run; a dead kernel raises HarnessAbort.
    """
    provider = provider if provider is not None else NullProvider()
    records = []
    for entry in cf.entries:
        name = entry.program.rsplit("/", 1)[-1]
        session_box: list = [None]
        counters_box: list = [CounterSet()]

        def pre_entry(instance, box=session_box):
            nonlocal provider
            try:
                box[0] = provider.begin(instance)
            except ProviderUnavailable as exc:
                warnings.warn(
                    f"counter provider {provider.name!r} unavailable "
                    f"({exc}); falling back to null", RuntimeWarning,
                    stacklevel=2)
                provider = NullProvider()
                box[0] = provider.begin(instance)

        def post_exit(instance, sbox=session_box, cbox=counters_box):
            if sbox[0] is not None:
                cbox[0] = sbox[0].end()

        try:
            pid = kernel.spawn_process(
                entry.program, entry.argv,
                stdout_path=entry.stdout_path,
                stderr_path=entry.stderr_path,
                pre_entry=[pre_entry], post_exit=[post_exit])
        except KernelGone as exc:
            raise HarnessAbort(f"kernel gone: {exc}") from exc
        except (SpawnError, InvalidModule) as exc:
            records.append(RunRecord(
                benchmark=name, iteration=iteration,
                wall_ms=0.0, kernel_ms=0.0, status=SPAWN_FAILED,
                exit_code=None, error=str(exc)))
            continue

        report = _wait_checked(kernel, pid)
        record = RunRecord(
            benchmark=name, iteration=iteration,
            wall_ms=report.wall_ms or 0.0,
            kernel_ms=report.kernel_ms,
            status=report.kind,
            exit_code=report.exit_code,
            counters=counters_box[0],
            error=report.trap_reason)
        if expected is not None:
            record.validation = _validate_entry(kernel, entry, expected)
        records.append(record)
    return records


def _validate_entry(kernel: Kernel, entry, expected) -> FileResult:
    for path in (entry.stdout_path, entry.stderr_path):
        if path not in expected:
            continue
        result = compare_bytes(expected[path], kernel.read_file(path))
        if not result.ok:
            return result
    if entry.stdout_path not in expected and entry.stderr_path not in expected:
        return FileResult(MISSING)
    return FileResult(PASS)


def repeat_benchmark(cf: CommandFile, fs_image=None, n: int = 5,
                     provider=None, shim_config: ShimConfig | None = None,
                     expected: dict[str, bytes] | None = None,
                     export_to=None) -> list[RunRecord]:
    """Run a command file n times, a fresh kernel and process each time.

    Booting from the staged image anew resets every output between
    iterations while re-mirroring the inputs. With export_to set, each
    iteration's /results tree lands in export_to/iter-<k>.
    """
    if n < 1:
        raise ValueError(f"iterations must be >= 1, got {n}")
    image = stage_image(fs_image)
    if isinstance(provider, str):
        provider = get_provider(provider)
    records: list[RunRecord] = []
    for k in range(n):
        kernel = boot(image, shim_config)
        try:
            records.extend(run_command_file(
                kernel, cf, provider, iteration=k, expected=expected))
            if export_to is not None:
                out = Path(export_to) / f"iter-{k}"
                out.mkdir(parents=True, exist_ok=True)
                kernel.export_results(out)
        finally:
            kernel.shutdown()
    return records


def overhead_percent(records) -> float:
    """Kernel handling time as a share of wall time, in percent."""
    total_wall = sum(r.wall_ms for r in records)
    total_kernel = sum(r.kernel_ms for r in records)
    if total_wall == 0:
        raise ZeroDuration("total wall time is zero")
    return 100.0 * total_kernel / total_wall
