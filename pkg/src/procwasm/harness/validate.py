"""Output validation with byte-exact compare semantics: the first
differing 0-based offset is reported, and a length mismatch with equal
prefixes differs at the shorter file's length."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

PASS = "pass"
DIFFER = "differ"
MISSING = "missing"


@dataclass(frozen=True)
class FileResult:
    status: str  # PASS, DIFFER, or MISSING
    offset: int | None = None  # first differing byte for DIFFER

    @property
    def ok(self) -> bool:
        return self.status == PASS


@dataclass
class ValidationReport:
    results: dict[str, FileResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.results.values())

    def failures(self) -> list[tuple[str, FileResult]]:
        return [(p, r) for p, r in sorted(self.results.items()) if not r.ok]


def first_difference(a: bytes, b: bytes) -> int | None:
    """Offset of the first differing byte, or None for identical data."""
    if a == b:
        return None
    n = min(len(a), len(b))
    for i in range(n):
        if a[i] != b[i]:
            return i
    return n  # one is a proper prefix of the other


def compare_bytes(expected: bytes, actual: bytes | None) -> FileResult:
    if actual is None:
        return FileResult(MISSING)
    offset = first_difference(expected, actual)
    if offset is None:
        return FileResult(PASS)
    return FileResult(DIFFER, offset)


def validate_outputs(expected_dir, actual_dir) -> ValidationReport:
    """Compare every file under expected_dir against actual_dir."""
    expected_dir = Path(expected_dir)
    actual_dir = Path(actual_dir)
    report = ValidationReport()
    for path in sorted(p for p in expected_dir.rglob("*") if p.is_file()):
        rel = path.relative_to(expected_dir).as_posix()
        candidate = actual_dir / rel
        actual = candidate.read_bytes() if candidate.is_file() else None
        report.results[rel] = compare_bytes(path.read_bytes(), actual)
    return report
