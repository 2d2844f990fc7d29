"""Benchmark harness: command files, counter sessions, repeated runs,
output validation, overhead accounting, and result archiving."""

from .archive import USTAR_MAX_FILE_SIZE, archive_results
from .cmdfile import CommandEntry, CommandFile, parse_command_file
from .counters import (
    DEFAULT_EVENTS,
    CounterSet,
    CounterSpec,
    HardwareProvider,
    NullProvider,
    SoftwareProvider,
    get_provider,
)
from .runner import (
    EXITED,
    SPAWN_FAILED,
    TRAPPED,
    RunRecord,
    overhead_percent,
    repeat_benchmark,
    run_command_file,
    stage_image,
)
from .validate import (
    DIFFER,
    MISSING,
    PASS,
    FileResult,
    ValidationReport,
    compare_bytes,
    first_difference,
    validate_outputs,
)

__all__ = [
    "CommandEntry",
    "CommandFile",
    "parse_command_file",
    "CounterSpec",
    "CounterSet",
    "DEFAULT_EVENTS",
    "NullProvider",
    "SoftwareProvider",
    "HardwareProvider",
    "get_provider",
    "RunRecord",
    "run_command_file",
    "repeat_benchmark",
    "overhead_percent",
    "stage_image",
    "EXITED",
    "TRAPPED",
    "SPAWN_FAILED",
    "FileResult",
    "ValidationReport",
    "validate_outputs",
    "compare_bytes",
    "first_difference",
    "PASS",
    "DIFFER",
    "MISSING",
    "archive_results",
    "USTAR_MAX_FILE_SIZE",
]
