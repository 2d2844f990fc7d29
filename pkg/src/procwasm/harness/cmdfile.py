"""Command-file parsing.

Line format, bit-exact: `out=<vfs-path> err=<vfs-path> <program> <arg>*`,
tokens separated by single spaces, no quoting. `#` starts a comment and
blank lines are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import CommandFileError
from ..kernel import normalize_path


@dataclass(frozen=True)
class CommandEntry:
    """One program launch: stdio destinations, program, full argv."""

    stdout_path: str
    stderr_path: str
    program: str
    argv: tuple[str, ...]


@dataclass
class CommandFile:
    entries: list[CommandEntry] = field(default_factory=list)


def _vfs_path(token: str, what: str, lineno: int) -> str:
    path = normalize_path(token)
    if path is None:
        raise CommandFileError(
            f"line {lineno}: {what} {token!r} is not an absolute vfs path")
    return path


def parse_command_file(text: str) -> CommandFile:
    cf = CommandFile()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split(" ")
        if "" in tokens:
            raise CommandFileError(
                f"line {lineno}: tokens must be separated by single spaces")
        if len(tokens) < 3:
            raise CommandFileError(
                f"line {lineno}: expected `out=... err=... program [args]`")
        if not tokens[0].startswith("out=") or not tokens[1].startswith("err="):
            raise CommandFileError(
                f"line {lineno}: first two tokens must be out= and err=")
        out_path = _vfs_path(tokens[0][4:], "out path", lineno)
        err_path = _vfs_path(tokens[1][4:], "err path", lineno)
        program = _vfs_path(tokens[2], "program path", lineno)
        cf.entries.append(CommandEntry(
            out_path, err_path, program, (program, *tokens[3:])))
    return cf
