"""Guest-facing ABI constants.

Everything here is part of the frozen wire contract described in
docs/abi.md: syscall numbers, errno values, open flags, seek whence
codes, and the stat result record. Changing any value breaks the
checked-in fixtures and the golden-bytes tests.
"""

from __future__ import annotations

import struct

# Host import namespace. Guests may import only "kernel.syscall".
ABI_NAMESPACE = "kernel"
SYSCALL_IMPORT = "syscall"

ENTRY_EXPORT = "_start"
MEMORY_EXPORT = "memory"

WASM_PAGE = 65536

# Auxiliary buffer geometry.
HEADER_SIZE = 4096
DEFAULT_AUX_CAPACITY = 64 * 1024 * 1024
MIN_AUX_CAPACITY = 8192
AUX_ALIGN = 4096

# Syscall numbers. ARGS_SIZES/ARGS_GET are served by the shim and never
# reach the kernel; EXIT is forwarded to the kernel (when attached) and
# then unwinds the guest.
SYS_OPEN = 1
SYS_CLOSE = 2
SYS_READ = 3
SYS_WRITE = 4
SYS_WRITEV = 5
SYS_SEEK = 6
SYS_STAT = 7
SYS_PIPE = 8
SYS_SPAWN = 9
SYS_WAITPID = 10
SYS_EXIT = 11
SYS_ARGS_SIZES = 12
SYS_ARGS_GET = 13

SYSCALL_NAMES = {
    SYS_OPEN: "open",
    SYS_CLOSE: "close",
    SYS_READ: "read",
    SYS_WRITE: "write",
    SYS_WRITEV: "writev",
    SYS_SEEK: "seek",
    SYS_STAT: "stat",
    SYS_PIPE: "pipe",
    SYS_SPAWN: "spawn",
    SYS_WAITPID: "waitpid",
    SYS_EXIT: "exit",
    SYS_ARGS_SIZES: "args_sizes",
    SYS_ARGS_GET: "args_get",
}

# Errno values returned to guests as negative syscall results.
ENOENT = 2
EBADF = 8
EFAULT = 14
EINVAL = 22
EPIPE = 32
ENOSYS = 38

ERRNO_NAMES = {
    ENOENT: "ENOENT",
    EBADF: "EBADF",
    EFAULT: "EFAULT",
    EINVAL: "EINVAL",
    EPIPE: "EPIPE",
    ENOSYS: "ENOSYS",
}

# open() flags. Low two bits select the access mode.
O_RDONLY = 0
O_WRONLY = 1
O_RDWR = 2
O_ACCMODE = 3
O_CREAT = 0x40
O_TRUNC = 0x200
O_APPEND = 0x400

# seek() whence.
SEEK_SET = 0
SEEK_CUR = 1
SEEK_END = 2

# stat() result record: kind (u32), pad (u32), size (u64), little-endian.
STAT_KIND_FILE = 1
STAT_KIND_DIR = 2
STAT_RECORD = struct.Struct("<IIQ")
STAT_RECORD_SIZE = STAT_RECORD.size


def pack_stat(kind: int, size: int) -> bytes:
    """Encode a stat result for transfer to the guest."""
    return STAT_RECORD.pack(kind, 0, size)


def unpack_stat(data: bytes) -> tuple[int, int]:
    """Decode a stat record; returns (kind, size)."""
    kind, _, size = STAT_RECORD.unpack(data)
    return kind, size


def pack_pipe_fds(read_fd: int, write_fd: int) -> int:
    """Pack a pipe() result into one non-negative i64."""
    return (read_fd << 32) | write_fd


def unpack_pipe_fds(value: int) -> tuple[int, int]:
    """Split a packed pipe() result into (read_fd, write_fd)."""
    return (value >> 32) & 0xFFFFFFFF, value & 0xFFFFFFFF
