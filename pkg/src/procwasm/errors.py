"""Exception types shared across the package.

Guest-visible failures travel as negative errno return values, never as
Python exceptions; the classes here are host-side errors for callers of
the library API.
"""

from __future__ import annotations


class ProcwasmError(Exception):
    """Base class for all errors raised by this package."""


# --- guest_exec ---

class InvalidModule(ProcwasmError):
    """Module bytes failed validation (bad magic, missing export, ...)."""


class UnsupportedImport(ProcwasmError):
    """Module imports a symbol outside the host ABI namespace."""


class OutOfBounds(ProcwasmError):
    """Linear-memory access outside [0, memory_size)."""


class Trap(ProcwasmError):
    """Guest execution fault (unreachable, bad memory access, ...)."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# --- transport ---

class ProtocolState(ProcwasmError):
    """Codec operation attempted while the buffer is in the wrong status."""


class Overflow(ProcwasmError):
    """Payloads do not fit in the buffer's data region."""


class KernelGone(ProcwasmError):
    """The kernel side of an auxiliary buffer closed while a call waited."""


# --- kernel ---

class BadImage(ProcwasmError):
    """Filesystem image is malformed (conflicting or duplicate paths)."""


class SpawnError(ProcwasmError):
    """spawn() failed before a process was created; carries an errno."""

    def __init__(self, errno: int, message: str):
        super().__init__(message)
        self.errno = errno


# --- harness ---

class SpawnFailure(ProcwasmError):
    """A command-file entry could not be launched (recorded, not fatal)."""


class HarnessAbort(ProcwasmError):
    """The kernel died mid-run; the harness cannot continue."""


class ProviderUnavailable(ProcwasmError):
    """Requested counter provider cannot run on this platform."""


class IoFailure(ProcwasmError):
    """Archiving failed (unsupported entry or I/O error)."""


class ZeroDuration(ProcwasmError):
    """Overhead is undefined because total wall time is zero."""


class CommandFileError(ProcwasmError):
    """Command file text is malformed."""


# --- stats_report ---

class EmptyInput(ProcwasmError):
    """Statistic requested over an empty sample."""


class NonPositive(ProcwasmError):
    """Geometric mean requested over non-positive values."""


class NoOverlap(ProcwasmError):
    """Counter report inputs share no event names."""
