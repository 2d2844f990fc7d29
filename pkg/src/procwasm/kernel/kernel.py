"""The host-side kernel: processes, descriptors, and syscall handlers.

One event-loop thread serializes everything: decoded requests, process
completions, and host calls all arrive on a single queue. Handlers that
cannot finish (reading an empty pipe, writing a full one, waiting on a
live child) park the request and the loop re-examines parked entries
after every event, so a pipe write by one process wakes the parked read
of another.

The syscall layer sees only auxiliary-buffer payload descriptors and
integer arguments; it has no access to any guest instance or linear
memory. Guest lifecycles are driven by per-process runner threads that
report back through the queue.
"""

from __future__ import annotations

import itertools
import queue
import threading
import time
from dataclasses import dataclass, field

from .. import abi
from ..errors import InvalidModule, KernelGone, Overflow, ProtocolState, SpawnError
from ..guest_exec import ExitStatus, GuestModule, ShimConfig, instantiate_guest, run_guest
from ..transport import (
    AuxBuffer,
    SyscallResponse,
    decode_request,
    encode_response,
)
from .pipe import Pipe
from .vfs import KIND_DIR, KIND_FILE, FsNode, Vfs, export_tree, vfs_from_image

PARKED = object()
TRAP_EXIT_CODE = 128
RESULTS_ROOT = "/results"

_OPEN_FLAGS = abi.O_ACCMODE | abi.O_CREAT | abi.O_TRUNC | abi.O_APPEND


def _ok(rv: int = 0, payloads=()) -> SyscallResponse:
    return SyscallResponse(rv, 0, list(payloads))


def _err(errno: int) -> SyscallResponse:
    return SyscallResponse(-errno, errno)


class NullInput:
    """EOF-only stream bound to fd 0 of a root process."""

    kind = "null"

    def retain(self) -> None:
        pass

    def release(self) -> None:
        pass


class OpenFile:
    """An open-file description: node, cursor, and access mode."""

    kind = "file"

    def __init__(self, node: FsNode, readable: bool, writable: bool,
                 append: bool = False):
        self.node = node
        self.pos = 0
        self.readable = readable
        self.writable = writable
        self.append = append

    def retain(self) -> None:
        pass

    def release(self) -> None:
        pass


class PipeEnd:
    """One half of a pipe; retain/release maintain the peer counts."""

    kind = "pipe"

    def __init__(self, pipe: Pipe, end: str):
        self.pipe = pipe
        self.end = end  # "r" or "w"

    def retain(self) -> None:
        if self.end == "r":
            self.pipe.readers += 1
        else:
            self.pipe.writers += 1

    def release(self) -> None:
        if self.end == "r":
            self.pipe.readers -= 1
        else:
            self.pipe.writers -= 1


class Descriptor:
    """A table slot: the open object plus a unique generation tag."""

    __slots__ = ("obj", "gen")

    def __init__(self, obj, gen: int):
        self.obj = obj
        self.gen = gen


class Process:
    """Kernel-side process state."""

    def __init__(self, pid: int, instance, argv: list[str], aux: AuxBuffer):
        self.pid = pid
        self.instance = instance
        self.argv = argv
        self.aux = aux
        self.fds: dict[int, Descriptor] = {}
        self.exit_status: int | None = None
        self.status: ExitStatus | None = None
        self.syscall_counts: dict[int, int] = {}
        self.kernel_ns = 0
        self.wall_ms: float | None = None
        self.done_event = threading.Event()
        self.thread: threading.Thread | None = None

    @property
    def alive(self) -> bool:
        return self.exit_status is None


@dataclass
class ProcessReport:
    """Snapshot of a finished process, safe to read off-thread."""

    pid: int
    exit_code: int | None
    kind: str
    trap_reason: str | None
    wall_ms: float | None
    kernel_ms: float
    syscall_counts: dict[int, int] = field(default_factory=dict)
    requests_sent: dict[int, int] = field(default_factory=dict)


class _Parked:
    """A blocked request: completion test plus the work to finish it."""

    __slots__ = ("proc", "ready", "step")

    def __init__(self, proc: Process, ready, step):
        self.proc = proc
        self.ready = ready
        self.step = step


class Kernel:
    """Single event-loop kernel over an in-memory filesystem."""

    def __init__(self, vfs: Vfs, shim_config: ShimConfig | None = None):
        self.vfs = vfs
        self.config = shim_config if shim_config is not None else ShimConfig()
        self.procs: dict[int, Process] = {}
        self.parked: list[_Parked] = []
        self._next_pid = itertools.count(1)
        self._next_gen = itertools.count(1)
        self._queue: queue.Queue = queue.Queue()
        self._alive = True
        self.failure: BaseException | None = None
        self._thread = threading.Thread(
            target=self._loop, name="kernel-loop", daemon=True)
        self._thread.start()

    # -- event loop ------------------------------------------------------

    def _loop(self) -> None:
        while True:
            event = self._queue.get()
            kind = event[0]
            if kind == "shutdown":
                return
            try:
                if kind == "request":
                    self._handle_request(event[1])
                elif kind == "done":
                    self._handle_done(event[1], event[2])
                elif kind == "call":
                    _, fn, box, ready = event
                    try:
                        box.append((fn(), None))
                    except BaseException as exc:
                        box.append((None, exc))
                    ready.set()
                self._sweep()
            except BaseException as exc:
                # A handler bug would otherwise hang every blocked shim;
                # cut them loose, then surface the bug loudly.
                self.failure = exc
                self._alive = False
                for proc in self.procs.values():
                    proc.aux.close()
                raise

    def _post(self, event) -> None:
        self._queue.put(event)

    def _call(self, fn):
        """Run fn on the kernel loop and return its result."""
        if threading.current_thread() is self._thread:
            return fn()
        if not self._alive:
            raise KernelGone("kernel is shut down")
        box: list = []
        ready = threading.Event()
        self._post(("call", fn, box, ready))
        ready.wait()
        result, exc = box[0]
        if exc is not None:
            raise exc
        return result

    def _charge(self, proc: Process, t0: int) -> None:
        proc.kernel_ns += time.perf_counter_ns() - t0

    def _handle_request(self, pid: int) -> None:
        proc = self.procs.get(pid)
        if proc is None or not proc.alive:
            return
        t0 = time.perf_counter_ns()
        try:
            req = decode_request(proc.aux)
        except (ProtocolState, Overflow):
            try:
                encode_response(proc.aux, _err(abi.EINVAL))
            except ProtocolState:
                pass
            self._charge(proc, t0)
            return
        proc.syscall_counts[req.syscall_no] = (
            proc.syscall_counts.get(req.syscall_no, 0) + 1)
        result = self._dispatch(proc, req)
        if result is not PARKED:
            encode_response(proc.aux, result)
        self._charge(proc, t0)

    def _sweep(self) -> None:
        """Retry parked requests until no further progress is made."""
        progress = True
        while progress:
            progress = False
            for entry in list(self.parked):
                if not entry.proc.alive or not entry.ready():
                    continue
                t0 = time.perf_counter_ns()
                resp = entry.step()
                if resp is not None:
                    self.parked.remove(entry)
                    encode_response(entry.proc.aux, resp)
                self._charge(entry.proc, t0)
                progress = True

    def _block_or_run(self, proc: Process, ready, step):
        if ready():
            resp = step()
            if resp is not None:
                return resp
        self.parked.append(_Parked(proc, ready, step))
        return PARKED

    def _handle_done(self, pid: int, status: ExitStatus) -> None:
        proc = self.procs.get(pid)
        if proc is None or not proc.alive:
            return
        proc.status = status
        proc.exit_status = (status.code if status.exited
                            else TRAP_EXIT_CODE)
        if proc.instance is not None:
            proc.wall_ms = proc.instance.wall_ms
        for desc in proc.fds.values():
            desc.obj.release()
        proc.fds.clear()
        self.parked = [e for e in self.parked if e.proc is not proc]
        proc.done_event.set()

    # -- process management -----------------------------------------------

    def _install(self, proc: Process, obj, fd: int | None = None) -> int:
        if fd is None:
            fd = 0
            while fd in proc.fds:
                fd += 1
        obj.retain()
        proc.fds[fd] = Descriptor(obj, next(self._next_gen))
        return fd

    def _spawn_internal(self, program: str, argv: list[str],
                        bindings: dict, pre_entry=(), post_exit=()) -> Process:
        node = self.vfs.lookup(program)
        if node is None or node.kind != KIND_FILE:
            raise SpawnError(abi.ENOENT, f"no program at {program!r}")
        instance = instantiate_guest(GuestModule(node.content()), self.config)
        pid = next(self._next_pid)
        proc = Process(pid, instance, [str(a) for a in argv], instance.aux)
        for fd, obj in sorted(bindings.items()):
            self._install(proc, obj, fd=fd)
        instance.pid = pid
        instance.pre_entry_hooks.extend(pre_entry)
        instance.post_exit_hooks.extend(post_exit)
        instance.aux.on_request = lambda p=pid: self._post(("request", p))
        self.procs[pid] = proc
        proc.thread = threading.Thread(
            target=self._runner, args=(proc,), name=f"guest-{pid}",
            daemon=True)
        proc.thread.start()
        return proc

    def _runner(self, proc: Process) -> None:
        try:
            status = run_guest(proc.instance, argv=proc.argv)
        except BaseException as exc:  # defensive: report, never vanish
            status = ExitStatus("trapped", reason=f"host error: {exc}")
        self._post(("done", proc.pid, status))

    # -- host API ---------------------------------------------------------

    def spawn_process(self, program: str, argv=None,
                      stdout_path: str | None = None,
                      stderr_path: str | None = None,
                      pre_entry=(), post_exit=()) -> int:
        """Start a root process with stdio bound to vfs files.

        pre_entry/post_exit hooks run on the guest's own thread, either
        side of the entry call; counter sessions attach through them.
        """
        argv = [str(a) for a in argv] if argv is not None else [program]

        def do() -> int:
            bindings: dict[int, object] = {0: NullInput()}
            for fd, path in ((1, stdout_path), (2, stderr_path)):
                if path is None:
                    node = FsNode(KIND_FILE)  # detached: output discarded
                else:
                    node = self.vfs.create_file(path)
                    if node is None:
                        raise SpawnError(
                            abi.ENOENT, f"cannot create {path!r}")
                bindings[fd] = OpenFile(node, False, True)
            return self._spawn_internal(
                program, argv, bindings, pre_entry, post_exit).pid

        return self._call(do)

    def register_external(self, aux: AuxBuffer) -> int:
        """Attach a bare aux buffer as a process with no guest behind it."""

        def do() -> int:
            pid = next(self._next_pid)
            proc = Process(pid, None, [], aux)
            self.procs[pid] = proc
            aux.on_request = lambda p=pid: self._post(("request", p))
            return pid

        return self._call(do)

    def wait(self, pid: int, timeout: float | None = None) -> ProcessReport:
        proc = self._call(lambda: self.procs.get(pid))
        if proc is None:
            raise KeyError(f"unknown pid {pid}")
        if not proc.done_event.wait(timeout):
            raise TimeoutError(f"pid {pid} still running")
        return self.report(pid)

    def report(self, pid: int) -> ProcessReport:
        def do() -> ProcessReport:
            proc = self.procs[pid]
            shim = proc.instance.shim if proc.instance is not None else None
            kernel_ns = proc.kernel_ns + (shim.clock.ns if shim else 0)
            status = proc.status
            return ProcessReport(
                pid=pid,
                exit_code=proc.exit_status,
                kind=status.kind if status else "running",
                trap_reason=status.reason if status else None,
                wall_ms=proc.wall_ms,
                kernel_ms=kernel_ns / 1e6,
                syscall_counts=dict(proc.syscall_counts),
                requests_sent=dict(shim.sent_counts) if shim else {},
            )

        return self._call(do)

    def read_file(self, path: str) -> bytes | None:
        def do():
            node = self.vfs.lookup(path)
            if node is None or node.kind != KIND_FILE:
                return None
            return node.content()

        return self._call(do)

    def write_file(self, path: str, data: bytes) -> None:
        def do():
            if self.vfs.create_file(path, data) is None:
                raise ValueError(f"cannot create {path!r}")

        self._call(do)

    def export_results(self, host_dir) -> list[str]:
        return self._call(
            lambda: export_tree(self.vfs, RESULTS_ROOT, host_dir))

    def shutdown(self, export_dir=None, timeout: float = 10.0) -> None:
        """Stop the loop; optionally export /results first."""
        if not self._alive:
            return
        live = self._call(
            lambda: [p for p in self.procs.values() if p.alive])
        for proc in live:
            proc.aux.close()
        for proc in live:
            if proc.thread is not None:  # externals never report done
                proc.done_event.wait(timeout)
        if export_dir is not None:
            self.export_results(export_dir)
        self._alive = False
        self._post(("shutdown",))
        self._thread.join(timeout)

    # -- syscall dispatch ---------------------------------------------------

    def _dispatch(self, proc: Process, req):
        no = req.syscall_no
        a = req.args + [0] * (6 - len(req.args))
        if no == abi.SYS_READ:
            return self._sys_read(proc, a[0], a[1])
        if no in (abi.SYS_WRITE, abi.SYS_WRITEV):
            data = self._gather(proc.aux, req.payloads)
            return self._sys_write(proc, a[0], data)
        if no == abi.SYS_OPEN:
            return self._sys_open(proc, a[0], req.payloads)
        if no == abi.SYS_CLOSE:
            return self._sys_close(proc, a[0])
        if no == abi.SYS_SEEK:
            return self._sys_seek(proc, a[0], a[1], a[2])
        if no == abi.SYS_STAT:
            return self._sys_stat(proc, req.payloads)
        if no == abi.SYS_PIPE:
            return self._sys_pipe(proc)
        if no == abi.SYS_SPAWN:
            return self._sys_spawn(proc, a[0], a[1], a[2], req.payloads)
        if no == abi.SYS_WAITPID:
            return self._sys_waitpid(proc, a[0])
        if no == abi.SYS_EXIT:
            return _ok(0)
        return _err(abi.ENOSYS)

    def _gather(self, aux: AuxBuffer, payloads) -> bytes:
        return b"".join(aux.read(off, length) for off, length in payloads)

    def _path_arg(self, aux: AuxBuffer, payloads) -> str | None:
        if len(payloads) != 1:
            return None
        try:
            return self._gather(aux, payloads).decode()
        except UnicodeDecodeError:
            return None

    # -- handlers -----------------------------------------------------------

    def _sys_read(self, proc: Process, fd: int, length: int):
        desc = proc.fds.get(fd)
        if desc is None:
            return _err(abi.EBADF)
        if length < 0:
            return _err(abi.EINVAL)
        length = min(length, proc.aux.data_capacity)
        obj = desc.obj
        if obj.kind == "null":
            return _ok(0)
        if obj.kind == "file":
            if not obj.readable:
                return _err(abi.EBADF)
            data = obj.node.read_at(obj.pos, length)
            obj.pos += len(data)
            if not data:
                return _ok(0)
            proc.aux.write(abi.HEADER_SIZE, data)
            return _ok(len(data), [(abi.HEADER_SIZE, len(data))])
        if obj.kind == "pipe" and obj.end == "r":
            if length == 0:
                return _ok(0)
            pipe = obj.pipe

            def ready():
                return pipe.count > 0 or pipe.writers == 0

            def step():
                if proc.fds.get(fd) is not desc:
                    return _err(abi.EBADF)
                data = pipe.read(length)
                if not data:
                    return _ok(0)  # EOF
                proc.aux.write(abi.HEADER_SIZE, data)
                return _ok(len(data), [(abi.HEADER_SIZE, len(data))])

            return self._block_or_run(proc, ready, step)
        return _err(abi.EBADF)

    def _sys_write(self, proc: Process, fd: int, data: bytes):
        desc = proc.fds.get(fd)
        if desc is None:
            return _err(abi.EBADF)
        obj = desc.obj
        if obj.kind == "file":
            if not obj.writable:
                return _err(abi.EBADF)
            if obj.append:
                obj.pos = obj.node.size
            obj.node.write_at(obj.pos, data)
            obj.pos += len(data)
            return _ok(len(data))
        if obj.kind == "pipe" and obj.end == "w":
            pipe = obj.pipe
            if pipe.readers == 0:
                return _err(abi.EPIPE)
            if not data:
                return _ok(0)
            done = [0]

            def ready():
                return pipe.space > 0 or pipe.readers == 0

            def step():
                if proc.fds.get(fd) is not desc:
                    return _err(abi.EBADF)
                if pipe.readers == 0:
                    return _ok(done[0]) if done[0] else _err(abi.EPIPE)
                done[0] += pipe.write(data[done[0]:])
                if done[0] >= len(data):
                    return _ok(done[0])
                return None  # stay parked for the remainder

            return self._block_or_run(proc, ready, step)
        return _err(abi.EBADF)

    def _sys_open(self, proc: Process, flags: int, payloads):
        path = self._path_arg(proc.aux, payloads)
        if path is None:
            return _err(abi.EINVAL)
        if flags & ~_OPEN_FLAGS or (flags & abi.O_ACCMODE) == abi.O_ACCMODE:
            return _err(abi.EINVAL)
        accmode = flags & abi.O_ACCMODE
        readable = accmode in (abi.O_RDONLY, abi.O_RDWR)
        writable = accmode in (abi.O_WRONLY, abi.O_RDWR)
        node = self.vfs.lookup(path)
        if node is None:
            if not flags & abi.O_CREAT:
                return _err(abi.ENOENT)
            node = self.vfs.create_file(path)
            if node is None:
                return _err(abi.ENOENT)
        elif node.kind == KIND_DIR:
            return _err(abi.EINVAL)
        if flags & abi.O_TRUNC and writable:
            node.truncate()
        obj = OpenFile(node, readable, writable,
                       append=bool(flags & abi.O_APPEND))
        return _ok(self._install(proc, obj))

    def _sys_close(self, proc: Process, fd: int):
        desc = proc.fds.pop(fd, None)
        if desc is None:
            return _err(abi.EBADF)
        desc.obj.release()
        return _ok(0)

    def _sys_seek(self, proc: Process, fd: int, offset: int, whence: int):
        desc = proc.fds.get(fd)
        if desc is None:
            return _err(abi.EBADF)
        obj = desc.obj
        if obj.kind != "file":
            return _err(abi.EINVAL)
        if whence == abi.SEEK_SET:
            base = 0
        elif whence == abi.SEEK_CUR:
            base = obj.pos
        elif whence == abi.SEEK_END:
            base = obj.node.size
        else:
            return _err(abi.EINVAL)
        pos = base + offset
        if pos < 0:
            return _err(abi.EINVAL)
        obj.pos = pos
        return _ok(pos)

    def _sys_stat(self, proc: Process, payloads):
        path = self._path_arg(proc.aux, payloads)
        if path is None:
            return _err(abi.EINVAL)
        node = self.vfs.lookup(path)
        if node is None:
            return _err(abi.ENOENT)
        if node.kind == KIND_FILE:
            record = abi.pack_stat(abi.STAT_KIND_FILE, node.size)
        else:
            record = abi.pack_stat(abi.STAT_KIND_DIR, 0)
        proc.aux.write(abi.HEADER_SIZE, record)
        return _ok(0, [(abi.HEADER_SIZE, len(record))])

    def _sys_pipe(self, proc: Process):
        pipe = Pipe()
        rfd = self._install(proc, PipeEnd(pipe, "r"))
        wfd = self._install(proc, PipeEnd(pipe, "w"))
        return _ok(abi.pack_pipe_fds(rfd, wfd))

    def _sys_spawn(self, proc: Process, in_fd: int, out_fd: int,
                   err_fd: int, payloads):
        path = self._path_arg(proc.aux, payloads)
        if path is None:
            return _err(abi.EINVAL)
        bindings = {}
        for child_fd, parent_fd in ((0, in_fd), (1, out_fd), (2, err_fd)):
            desc = proc.fds.get(parent_fd)
            if desc is None:
                return _err(abi.EBADF)
            bindings[child_fd] = desc.obj
        try:
            child = self._spawn_internal(path, [path], bindings)
        except SpawnError as exc:
            return _err(exc.errno)
        except InvalidModule:
            return _err(abi.EINVAL)
        return _ok(child.pid)

    def _sys_waitpid(self, proc: Process, pid: int):
        target = self.procs.get(pid)
        if target is None:
            return _err(abi.ENOENT)
        if target is proc:
            return _err(abi.EINVAL)

        def ready():
            return target.exit_status is not None

        def step():
            return _ok(target.exit_status)

        return self._block_or_run(proc, ready, step)


def boot(fs_image=None, shim_config: ShimConfig | None = None) -> Kernel:
    """Build a kernel over a filesystem image (host dir or mapping)."""
    return Kernel(vfs_from_image(fs_image), shim_config)
