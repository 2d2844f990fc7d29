"""Auxiliary-buffer syscall transport.

One AuxBuffer connects exactly two parties: a process shim and the
kernel. The first 4096 bytes are the message header; the rest is the
data region through which all payload bytes are copied. A single status
word drives the exchange:

    IDLE -> REQUEST   (shim publishes a request; status written last)
    REQUEST -> DONE   (kernel publishes the response; status written last)
    DONE -> IDLE      (shim consumes the response)

Transfers larger than the data region are split by the caller into
chunks planned by plan_chunks; no atomicity is guaranteed across
chunks. The byte-exact header layout is documented in docs/abi.md and
frozen by golden-bytes tests.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from .abi import AUX_ALIGN, HEADER_SIZE, MIN_AUX_CAPACITY
from .errors import KernelGone, Overflow, ProtocolState

ST_IDLE = 0
ST_REQUEST = 1
ST_DONE = 2

STATUS_NAMES = {ST_IDLE: "IDLE", ST_REQUEST: "REQUEST", ST_DONE: "DONE"}

# Header field offsets (all little-endian).
OFF_STATUS = 0
OFF_SYSCALL_NO = 4
OFF_ARG_COUNT = 8
OFF_ERRNO = 12
OFF_RETURN = 16
OFF_ARGS = 32
MAX_ARGS = 8
OFF_PAYLOAD_COUNT = 96
OFF_PAYLOADS = 100
# Descriptors are (offset: u32, length: u32) pairs packed back to back.
MAX_PAYLOADS = (HEADER_SIZE - OFF_PAYLOADS) // 8

_U32 = struct.Struct("<I")
_I64 = struct.Struct("<q")
_DESC = struct.Struct("<II")

I64_MIN = -(1 << 63)
I64_MAX = (1 << 63) - 1


class AuxBuffer:
    """The shared request/response region for one process.

    Holds plain bytes plus the synchronization needed to emulate the
    atomic status word: every status mutation happens under one lock and
    notifies waiters, giving release/acquire visibility for the header
    and data writes that preceded it.
    """

    def __init__(self, capacity: int = None,
                 trace: Optional[Callable[[int, int], None]] = None):
        if capacity is None:
            from .abi import DEFAULT_AUX_CAPACITY
            capacity = DEFAULT_AUX_CAPACITY
        if capacity < MIN_AUX_CAPACITY or capacity % AUX_ALIGN != 0:
            raise ValueError(
                f"capacity must be >= {MIN_AUX_CAPACITY} and a multiple "
                f"of {AUX_ALIGN}, got {capacity}")
        self.capacity = capacity
        self.data_capacity = capacity - HEADER_SIZE
        self._mem = bytearray(capacity)
        self._cond = threading.Condition()
        self._trace = trace
        self.closed = False
        # Invoked (outside the lock) after a request becomes visible;
        # set by the serving side to hook its event queue.
        self.on_request: Optional[Callable[[], None]] = None

    # -- raw access ---------------------------------------------------

    def read(self, offset: int, length: int) -> bytes:
        if offset < 0 or length < 0 or offset + length > self.capacity:
            raise ValueError(f"read [{offset}, {offset + length}) outside buffer")
        return bytes(self._mem[offset:offset + length])

    def write(self, offset: int, data: bytes) -> None:
        if offset < 0 or offset + len(data) > self.capacity:
            raise ValueError(f"write [{offset}, {offset + len(data)}) outside buffer")
        self._mem[offset:offset + len(data)] = data

    # -- status word --------------------------------------------------

    def status(self) -> int:
        with self._cond:
            return _U32.unpack_from(self._mem, OFF_STATUS)[0]

    def set_status(self, value: int) -> None:
        with self._cond:
            old = _U32.unpack_from(self._mem, OFF_STATUS)[0]
            _U32.pack_into(self._mem, OFF_STATUS, value)
            if self._trace is not None:
                self._trace(old, value)
            self._cond.notify_all()

    def wait_status(self, value: int, timeout: Optional[float] = None,
                    raise_closed: bool = False) -> bool:
        """Block until the status word equals `value`.

        Returns False on timeout. With raise_closed, a buffer closed
        while waiting (or already closed) raises KernelGone instead of
        waiting forever.
        """
        with self._cond:
            ok = self._cond.wait_for(
                lambda: (self._status_locked() == value
                         or (raise_closed and self.closed)),
                timeout)
            if raise_closed and self.closed and self._status_locked() != value:
                raise KernelGone("peer closed the buffer")
            return ok

    def _status_locked(self) -> int:
        return _U32.unpack_from(self._mem, OFF_STATUS)[0]

    def close(self) -> None:
        """Mark the serving side gone and wake all waiters."""
        with self._cond:
            self.closed = True
            self._cond.notify_all()


@dataclass
class SyscallRequest:
    """One syscall as it crosses the buffer, shim to kernel.

    `payloads` lists (buffer offset, length) descriptors for bytes the
    shim already copied into the data region; the codec moves only the
    descriptors, never the bytes.
    """

    syscall_no: int
    args: list[int] = field(default_factory=list)
    payloads: list[tuple[int, int]] = field(default_factory=list)

    @property
    def arg_count(self) -> int:
        return len(self.args)


@dataclass
class SyscallResponse:
    """One syscall result, kernel to shim.

    A nonzero errno implies a negative return_value; out_payloads
    describe result bytes the kernel placed in the data region.
    """

    return_value: int
    errno: int = 0
    out_payloads: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class ChunkPlan:
    """Lengths of the per-call slices of one oversized transfer."""

    lengths: list[int]

    def __iter__(self):
        return iter(self.lengths)

    def __len__(self):
        return len(self.lengths)


def _check_payloads(aux: AuxBuffer, payloads: list[tuple[int, int]]) -> None:
    if len(payloads) > MAX_PAYLOADS:
        raise Overflow(f"{len(payloads)} payloads exceed descriptor space")
    total = 0
    spans = []
    for off, length in payloads:
        if length < 0:
            raise Overflow(f"negative payload length {length}")
        if off < HEADER_SIZE or off + length > aux.capacity:
            raise Overflow(
                f"payload [{off}, {off + length}) outside data region "
                f"[{HEADER_SIZE}, {aux.capacity})")
        total += length
        spans.append((off, off + length))
    if total > aux.data_capacity:
        raise Overflow(
            f"payload total {total} exceeds data capacity {aux.data_capacity}")
    spans.sort()
    for (_, end), (start, _) in zip(spans, spans[1:]):
        if start < end:
            raise Overflow("payload regions overlap")


def _check_args(args: list[int]) -> None:
    if len(args) > MAX_ARGS:
        raise ProtocolState(f"arg count {len(args)} exceeds {MAX_ARGS}")
    for a in args:
        if not (I64_MIN <= a <= I64_MAX):
            raise ProtocolState(f"argument {a} outside signed 64-bit range")


def _require_status(aux: AuxBuffer, expected: int, op: str) -> None:
    got = aux.status()
    if got != expected:
        raise ProtocolState(
            f"{op} requires status {STATUS_NAMES[expected]}, "
            f"buffer is {STATUS_NAMES.get(got, got)}")


def _write_descriptors(aux: AuxBuffer, payloads: list[tuple[int, int]]) -> None:
    aux.write(OFF_PAYLOAD_COUNT, _U32.pack(len(payloads)))
    buf = bytearray()
    for off, length in payloads:
        buf += _DESC.pack(off, length)
    aux.write(OFF_PAYLOADS, bytes(buf))


def _read_descriptors(aux: AuxBuffer) -> list[tuple[int, int]]:
    count = _U32.unpack(aux.read(OFF_PAYLOAD_COUNT, 4))[0]
    if count > MAX_PAYLOADS:
        raise ProtocolState(f"descriptor count {count} exceeds {MAX_PAYLOADS}")
    raw = aux.read(OFF_PAYLOADS, count * 8)
    return [_DESC.unpack_from(raw, i * 8) for i in range(count)]


def encode_request(aux: AuxBuffer, req: SyscallRequest) -> None:
    """Publish a request; the status word is written last."""
    if aux.closed:
        raise KernelGone("buffer closed")
    _require_status(aux, ST_IDLE, "encode_request")
    _check_args(req.args)
    _check_payloads(aux, req.payloads)
    if not (0 <= req.syscall_no < 1 << 32):
        raise ProtocolState(f"syscall_no {req.syscall_no} outside u32 range")
    aux.write(OFF_SYSCALL_NO, _U32.pack(req.syscall_no))
    aux.write(OFF_ARG_COUNT, _U32.pack(len(req.args)))
    aux.write(OFF_ERRNO, _U32.pack(0))
    aux.write(OFF_RETURN, _I64.pack(0))
    for i in range(MAX_ARGS):
        aux.write(OFF_ARGS + 8 * i,
                  _I64.pack(req.args[i] if i < len(req.args) else 0))
    _write_descriptors(aux, req.payloads)
    aux.set_status(ST_REQUEST)


def decode_request(aux: AuxBuffer) -> SyscallRequest:
    _require_status(aux, ST_REQUEST, "decode_request")
    syscall_no = _U32.unpack(aux.read(OFF_SYSCALL_NO, 4))[0]
    arg_count = _U32.unpack(aux.read(OFF_ARG_COUNT, 4))[0]
    if arg_count > MAX_ARGS:
        raise ProtocolState(f"arg count {arg_count} exceeds {MAX_ARGS}")
    args = [_I64.unpack(aux.read(OFF_ARGS + 8 * i, 8))[0]
            for i in range(arg_count)]
    payloads = _read_descriptors(aux)
    _check_payloads(aux, payloads)
    return SyscallRequest(syscall_no, args, payloads)


def encode_response(aux: AuxBuffer, resp: SyscallResponse) -> None:
    """Publish a response to the pending request; status written last."""
    _require_status(aux, ST_REQUEST, "encode_response")
    if resp.errno != 0 and resp.return_value >= 0:
        raise ProtocolState(
            f"errno {resp.errno} requires a negative return value")
    if not (0 <= resp.errno < 1 << 32):
        raise ProtocolState(f"errno {resp.errno} outside u32 range")
    if not (I64_MIN <= resp.return_value <= I64_MAX):
        raise ProtocolState("return value outside signed 64-bit range")
    _check_payloads(aux, resp.out_payloads)
    aux.write(OFF_RETURN, _I64.pack(resp.return_value))
    aux.write(OFF_ERRNO, _U32.pack(resp.errno))
    _write_descriptors(aux, resp.out_payloads)
    aux.set_status(ST_DONE)


def decode_response(aux: AuxBuffer) -> SyscallResponse:
    _require_status(aux, ST_DONE, "decode_response")
    rv = _I64.unpack(aux.read(OFF_RETURN, 8))[0]
    errno = _U32.unpack(aux.read(OFF_ERRNO, 4))[0]
    payloads = _read_descriptors(aux)
    _check_payloads(aux, payloads)
    return SyscallResponse(rv, errno, payloads)


def plan_chunks(total: int, data_capacity: int) -> ChunkPlan:
    """Split a transfer of `total` bytes into maximal per-call slices.

    Every chunk except possibly the last equals data_capacity; the list
    is empty for a zero-byte transfer.
    """
    if data_capacity <= 0:
        raise ValueError(f"data_capacity must be positive, got {data_capacity}")
    if total < 0:
        raise ValueError(f"total must be non-negative, got {total}")
    full, rem = divmod(total, data_capacity)
    lengths = [data_capacity] * full
    if rem:
        lengths.append(rem)
    return ChunkPlan(lengths)


def post_and_wait(aux: AuxBuffer, req: SyscallRequest) -> SyscallResponse:
    """Publish a request and block until the kernel's response arrives.

    Returns the decoded response with the buffer back in IDLE. Raises
    KernelGone if the serving side closes before replying.
    """
    encode_request(aux, req)
    if aux.on_request is not None:
        aux.on_request()
    aux.wait_status(ST_DONE, raise_closed=True)
    resp = decode_response(aux)
    aux.set_status(ST_IDLE)
    return resp


class StatusTraceChecker:
    """Validates that a stream of status transitions follows the protocol.

    Wire one instance's record() in as an AuxBuffer trace hook; any
    transition other than IDLE->REQUEST->DONE->IDLE is collected as a
    violation.
    """

    _ALLOWED = {(ST_IDLE, ST_REQUEST), (ST_REQUEST, ST_DONE), (ST_DONE, ST_IDLE)}

    def __init__(self):
        self.transitions = 0
        self.violations: list[tuple[int, int]] = []

    def record(self, old: int, new: int) -> None:
        self.transitions += 1
        if (old, new) not in self._ALLOWED:
            self.violations.append((old, new))

    @property
    def ok(self) -> bool:
        return not self.violations
