"""Counter providers: hardware performance counters, interpreter-backed
software analogs, and a null provider.

A provider hands out one session per process run. Sessions begin on the
guest's own thread before the entry call and end right after it, so the
measurement window covers exactly guest execution (plus the shim work
performed on that thread) and none of the load phase.
"""

from __future__ import annotations

import ctypes
import os
import platform
import struct
from dataclasses import dataclass, field

from ..errors import ProviderUnavailable
from ..guest_exec.interp import (
    BRANCH_OPS,
    COND_BRANCH_OPS,
    LOAD_OPS,
    STORE_OPS,
)

PERF_TYPE_HARDWARE = 0
PERF_TYPE_HW_CACHE = 3
PERF_TYPE_RAW = 4

PERF_COUNT_HW_CPU_CYCLES = 0

# L1I cache, read op, miss result.
_L1I_READ_MISS = 1 | (0 << 8) | (1 << 16)


@dataclass(frozen=True)
class CounterSpec:
    """One measurable event: display name plus its platform encoding."""

    name: str
    perf_type: int
    config: int


# The default event set; raw descriptors follow the rNNNN convention
# (umask and event-select byte pairs).
DEFAULT_EVENTS = (
    CounterSpec("all-loads-retired", PERF_TYPE_RAW, 0x81D0),
    CounterSpec("all-stores-retired", PERF_TYPE_RAW, 0x82D0),
    CounterSpec("branches-retired", PERF_TYPE_RAW, 0x00C4),
    CounterSpec("conditional-branches", PERF_TYPE_RAW, 0x01C4),
    CounterSpec("instructions-retired", PERF_TYPE_RAW, 0x1C0),
    CounterSpec("cpu-cycles", PERF_TYPE_HARDWARE, PERF_COUNT_HW_CPU_CYCLES),
    CounterSpec("L1-icache-load-misses", PERF_TYPE_HW_CACHE, _L1I_READ_MISS),
)


@dataclass
class CounterSet:
    """Event name -> count for one session; missing events stay absent."""

    values: dict[str, int] = field(default_factory=dict)
    provider: str = "null"

    def get(self, name: str, default: int = 0) -> int:
        return self.values.get(name, default)


class NullSession:
    def end(self) -> CounterSet:
        return CounterSet({}, "null")


class NullProvider:
    """Records nothing; timings still flow through the harness."""

    name = "null"

    def begin(self, instance) -> NullSession:
        return NullSession()


class SoftwareSession:
    def __init__(self, interp):
        self.interp = interp
        self.base = interp.snapshot_counts()

    def end(self) -> CounterSet:
        now = self.interp.snapshot_counts()
        self.interp.counting = False
        delta = [b - a for a, b in zip(self.base, now)]
        values = {
            "instructions-analog": sum(delta),
            "all-loads-analog": sum(delta[i] for i in LOAD_OPS),
            "all-stores-analog": sum(delta[i] for i in STORE_OPS),
            "branches-analog": sum(delta[i] for i in BRANCH_OPS),
            "conditional-branches-analog": sum(
                delta[i] for i in COND_BRANCH_OPS),
        }
        return CounterSet(values, "software")


class SoftwareProvider:
    """Deterministic analogs from the interpreter's per-op counters."""

    name = "software"

    def begin(self, instance) -> SoftwareSession:
        if instance is None or getattr(instance, "interp", None) is None:
            raise ProviderUnavailable(
                "software counters need an interpreter-backed guest")
        instance.interp.counting = True
        return SoftwareSession(instance.interp)


# -- hardware ---------------------------------------------------------------

_PERF_EVENT_IOC_ENABLE = 0x2400
_PERF_EVENT_IOC_DISABLE = 0x2401
_PERF_EVENT_IOC_RESET = 0x2403

# read_format: value, time_enabled, time_running (for multiplex scaling).
_READ_FORMAT = 0x1 | 0x2

# flag bits: disabled, exclude_kernel, exclude_hv.
_ATTR_FLAGS = (1 << 0) | (1 << 5) | (1 << 6)

_SYSCALL_NR = {"x86_64": 298, "aarch64": 241}


def _pack_attr(spec: CounterSpec) -> bytes:
    # struct perf_event_attr, 64-byte VER0 layout: type, size, config,
    # sample_period, sample_type, read_format, flags, wakeup_events,
    # bp_type, bp_addr.
    return struct.pack(
        "<IIQQQQQIIQ",
        spec.perf_type, 64, spec.config,
        0, 0, _READ_FORMAT, _ATTR_FLAGS, 0, 0, 0)


def _perf_open(spec: CounterSpec) -> int:
    nr = _SYSCALL_NR.get(platform.machine())
    if nr is None:
        raise ProviderUnavailable(
            f"no perf syscall number for {platform.machine()}")
    libc = ctypes.CDLL(None, use_errno=True)
    attr = ctypes.create_string_buffer(_pack_attr(spec), 64)
    # pid=0, cpu=-1: measure the calling thread wherever it runs.
    fd = libc.syscall(nr, ctypes.byref(attr), 0, -1, -1, 0)
    if fd < 0:
        raise OSError(ctypes.get_errno(), os.strerror(ctypes.get_errno()))
    return fd


class HardwareSession:
    def __init__(self, fds: dict[str, int]):
        self.fds = fds
        import fcntl
        for fd in fds.values():
            fcntl.ioctl(fd, _PERF_EVENT_IOC_RESET, 0)
        for fd in fds.values():
            fcntl.ioctl(fd, _PERF_EVENT_IOC_ENABLE, 0)

    def end(self) -> CounterSet:
        import fcntl
        values: dict[str, int] = {}
        for name, fd in self.fds.items():
            try:
                fcntl.ioctl(fd, _PERF_EVENT_IOC_DISABLE, 0)
                raw = os.read(fd, 24)
                value, enabled, running = struct.unpack("<QQQ", raw)
                if running == 0:
                    continue  # never scheduled: absent, not zero
                if running < enabled:
                    value = int(round(value * enabled / running))
                values[name] = value
            except OSError:
                continue
            finally:
                os.close(fd)
        return CounterSet(values, "hardware")


class HardwareProvider:
    """Per-thread sessions over the platform performance counters.

    Events that cannot be opened are simply absent from the results; if
    no event opens at all the session raises ProviderUnavailable.
    """

    name = "hardware"

    def __init__(self, events=DEFAULT_EVENTS):
        self.events = tuple(events)

    def begin(self, instance) -> HardwareSession:
        fds: dict[str, int] = {}
        last_error: Exception | None = None
        for spec in self.events:
            try:
                fds[spec.name] = _perf_open(spec)
            except (OSError, ProviderUnavailable) as exc:
                last_error = exc
        if not fds:
            raise ProviderUnavailable(
                f"no performance counter event opened: {last_error}")
        return HardwareSession(fds)


PROVIDERS = {
    "null": NullProvider,
    "software": SoftwareProvider,
    "hardware": HardwareProvider,
}


def get_provider(name: str):
    try:
        return PROVIDERS[name]()
    except KeyError:
        raise ValueError(f"unknown counter provider {name!r}") from None
