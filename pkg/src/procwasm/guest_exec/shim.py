"""Per-process userspace runtime: the host side of the syscall import.

The shim owns all traffic between guest linear memory and the process's
auxiliary buffer. Transfers larger than the buffer's data region are
split into multiple requests (each at most data_capacity bytes); bad
guest pointers surface as EFAULT, never as host exceptions. args_sizes
and args_get are answered locally; exit is forwarded to the kernel when
one is attached and then unwinds the guest.

Time spent copying and encoding here is charged to the process's
syscall clock; time spent blocked waiting on the kernel is not.
"""

from __future__ import annotations

import threading
import time

from .. import abi
from ..errors import KernelGone, OutOfBounds, Trap
from ..transport import (
    ST_DONE,
    ST_IDLE,
    SyscallRequest,
    decode_response,
    encode_request,
    plan_chunks,
)

MAX_IOV = 512


class GuestExit(Exception):
    """Unwinds the interpreter when the guest calls exit."""

    def __init__(self, code: int):
        super().__init__(f"guest exit with code {code}")
        self.code = code


class SyscallClock:
    """Thread-safe nanosecond accumulator for syscall handling time."""

    def __init__(self):
        self._ns = 0
        self._lock = threading.Lock()

    def add(self, ns: int) -> None:
        if ns <= 0:
            return
        with self._lock:
            self._ns += ns

    @property
    def ns(self) -> int:
        with self._lock:
            return self._ns

    @property
    def ms(self) -> float:
        return self.ns / 1e6


def _signed64(v: int) -> int:
    return v - 0x10000000000000000 if v >= 0x8000000000000000 else v


class ProcessShim:
    """Marshals one guest's syscalls through its auxiliary buffer."""

    def __init__(self, instance):
        self.instance = instance
        self.aux = instance.aux
        self.argv: list[str] = []
        self.clock = SyscallClock()
        # Requests actually sent to the kernel, per syscall number.
        self.sent_counts: dict[int, int] = {}
        self._wait_ns = 0

    # -- plumbing -------------------------------------------------------

    def _roundtrip(self, no: int, args: list[int],
                   payloads: list[tuple[int, int]] = ()):
        req = SyscallRequest(no, list(args), list(payloads))
        encode_request(self.aux, req)
        self.sent_counts[no] = self.sent_counts.get(no, 0) + 1
        if self.aux.on_request is not None:
            self.aux.on_request()
        w0 = time.perf_counter_ns()
        self.aux.wait_status(ST_DONE, raise_closed=True)
        self._wait_ns += time.perf_counter_ns() - w0
        resp = decode_response(self.aux)
        self.aux.set_status(ST_IDLE)
        return resp

    def _attached(self) -> bool:
        return self.aux.on_request is not None

    def _read_guest(self, ptr: int, length: int) -> bytes:
        from . import guest_read
        return guest_read(self.instance, ptr, length)

    def _write_guest(self, ptr: int, data: bytes) -> None:
        from . import guest_write
        guest_write(self.instance, ptr, data)

    def _args_blob(self) -> bytes:
        return b"".join(a.encode() + b"\x00" for a in self.argv)

    # -- the host import ------------------------------------------------

    def syscall(self, no: int, a0: int = 0, a1: int = 0, a2: int = 0,
                a3: int = 0, a4: int = 0, a5: int = 0) -> int:
        """Entry point bound to the guest's `kernel.syscall` import."""
        args = [_signed64(a) for a in (a0, a1, a2, a3, a4, a5)]
        t0 = time.perf_counter_ns()
        self._wait_ns = 0
        try:
            return self._dispatch(no, args)
        except OutOfBounds:
            return -abi.EFAULT
        except KernelGone:
            raise Trap("kernel connection lost") from None
        finally:
            self.clock.add(time.perf_counter_ns() - t0 - self._wait_ns)

    def _dispatch(self, no: int, a: list[int]) -> int:
        if no == abi.SYS_ARGS_SIZES:
            blob = self._args_blob()
            return (len(self.argv) << 32) | len(blob)
        if no == abi.SYS_ARGS_GET:
            return self._args_get(a[0], a[1])
        if no == abi.SYS_EXIT:
            if self._attached():
                self._roundtrip(abi.SYS_EXIT, [a[0]])
            raise GuestExit(a[0])
        if not self._attached():
            # No kernel behind this buffer; only shim-local calls work.
            return -abi.ENOSYS
        if no == abi.SYS_READ:
            return self._read(a[0], a[1], a[2])
        if no == abi.SYS_WRITE:
            return self._write(a[0], a[1], a[2])
        if no == abi.SYS_WRITEV:
            return self._writev(a[0], a[1], a[2])
        if no == abi.SYS_OPEN:
            return self._open(a[0], a[1], a[2])
        if no == abi.SYS_STAT:
            return self._stat(a[0], a[1], a[2])
        if no == abi.SYS_SPAWN:
            return self._spawn(a[0], a[1], a[2], a[3], a[4])
        # Fixed-arity pass-through calls (close, seek, pipe, waitpid, and
        # anything unknown, which the kernel answers with ENOSYS).
        resp = self._roundtrip(no, a)
        return resp.return_value

    # -- handlers ---------------------------------------------------------

    def _args_get(self, ptr: int, buf_len: int) -> int:
        blob = self._args_blob()
        if buf_len < len(blob):
            return -abi.EINVAL
        self._write_guest(ptr, blob)
        return 0

    def _read(self, fd: int, ptr: int, length: int) -> int:
        if length < 0:
            return -abi.EINVAL
        self._read_guest(ptr, length)  # fault before touching the kernel
        if length == 0:
            resp = self._roundtrip(abi.SYS_READ, [fd, 0])
            return min(resp.return_value, 0) if resp.return_value < 0 else 0
        cap = self.aux.data_capacity
        done = 0
        for chunk in plan_chunks(length, cap):
            resp = self._roundtrip(abi.SYS_READ, [fd, chunk])
            n = resp.return_value
            if n < 0:
                return done if done else n
            if n > 0:
                off, avail = resp.out_payloads[0]
                self._write_guest(ptr + done, self.aux.read(off, n))
                done += n
            if n < chunk:
                break
        return done

    def _write(self, fd: int, ptr: int, length: int) -> int:
        if length < 0:
            return -abi.EINVAL
        self._read_guest(ptr, length)
        if length == 0:
            resp = self._roundtrip(abi.SYS_WRITE, [fd, abi.HEADER_SIZE, 0])
            return resp.return_value if resp.return_value < 0 else 0
        cap = self.aux.data_capacity
        done = 0
        for chunk in plan_chunks(length, cap):
            data = self._read_guest(ptr + done, chunk)
            self.aux.write(abi.HEADER_SIZE, data)
            resp = self._roundtrip(
                abi.SYS_WRITE, [fd, abi.HEADER_SIZE, chunk],
                [(abi.HEADER_SIZE, chunk)])
            n = resp.return_value
            if n < 0:
                return done if done else n
            done += n
            if n < chunk:
                break
        return done

    def _writev(self, fd: int, iov_ptr: int, iov_cnt: int) -> int:
        if iov_cnt < 0 or iov_cnt > MAX_IOV:
            return -abi.EINVAL
        raw = self._read_guest(iov_ptr, iov_cnt * 8)
        segments = []
        for i in range(iov_cnt):
            seg_ptr = int.from_bytes(raw[i * 8:i * 8 + 4], "little")
            seg_len = int.from_bytes(raw[i * 8 + 4:i * 8 + 8], "little")
            if seg_len:
                segments.append(self._read_guest(seg_ptr, seg_len))
        if not segments:
            resp = self._roundtrip(abi.SYS_WRITEV, [fd])
            return resp.return_value if resp.return_value < 0 else 0
        cap = self.aux.data_capacity
        done = 0
        batch: list[tuple[int, int]] = []
        used = 0

        def flush() -> int:
            nonlocal batch, used
            resp = self._roundtrip(abi.SYS_WRITEV, [fd], batch)
            batch = []
            used = 0
            return resp.return_value

        sent_short = False
        for seg in segments:
            pos = 0
            while pos < len(seg):
                if used == cap:
                    n = flush()
                    if n < 0:
                        return done if done else n
                    done += n
                    if sent_short:
                        return done
                take = min(len(seg) - pos, cap - used)
                self.aux.write(abi.HEADER_SIZE + used, seg[pos:pos + take])
                batch.append((abi.HEADER_SIZE + used, take))
                used += take
                pos += take
        if batch:
            n = flush()
            if n < 0:
                return done if done else n
            done += n
        return done

    def _path_payload(self, ptr: int, length: int) -> tuple[int, int] | None:
        if length < 0 or length > self.aux.data_capacity:
            return None
        data = self._read_guest(ptr, length)
        self.aux.write(abi.HEADER_SIZE, data)
        return (abi.HEADER_SIZE, length)

    def _open(self, path_ptr: int, path_len: int, flags: int) -> int:
        payload = self._path_payload(path_ptr, path_len)
        if payload is None:
            return -abi.EINVAL
        resp = self._roundtrip(abi.SYS_OPEN, [flags], [payload])
        return resp.return_value

    def _stat(self, path_ptr: int, path_len: int, out_ptr: int) -> int:
        self._read_guest(out_ptr, abi.STAT_RECORD_SIZE)  # fault early
        payload = self._path_payload(path_ptr, path_len)
        if payload is None:
            return -abi.EINVAL
        resp = self._roundtrip(abi.SYS_STAT, [], [payload])
        if resp.return_value < 0:
            return resp.return_value
        off, length = resp.out_payloads[0]
        self._write_guest(out_ptr, self.aux.read(off, length))
        return 0

    def _spawn(self, path_ptr: int, path_len: int,
               fd_in: int, fd_out: int, fd_err: int) -> int:
        payload = self._path_payload(path_ptr, path_len)
        if payload is None:
            return -abi.EINVAL
        resp = self._roundtrip(
            abi.SYS_SPAWN, [fd_in, fd_out, fd_err], [payload])
        return resp.return_value
