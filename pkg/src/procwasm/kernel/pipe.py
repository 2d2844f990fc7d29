"""Fixed-capacity byte ring for inter-process pipes.

64 KiB of buffering; a full pipe parks writers and an empty pipe parks
readers (the kernel event loop owns that bookkeeping). End-of-file is
an empty ring with no writers left. All access is serialized by the
kernel loop, so the ring itself carries no locks.
"""

from __future__ import annotations

PIPE_CAPACITY = 64 * 1024


class Pipe:
    """FIFO byte queue with reader/writer reference counts."""

    def __init__(self):
        self.buf = bytearray(PIPE_CAPACITY)
        self.rpos = 0
        self.count = 0
        self.readers = 0
        self.writers = 0

    @property
    def space(self) -> int:
        return PIPE_CAPACITY - self.count

    @property
    def at_eof(self) -> bool:
        return self.count == 0 and self.writers == 0

    def write(self, data: bytes) -> int:
        """Queue up to `space` bytes; returns how many were taken."""
        take = min(len(data), self.space)
        if take == 0:
            return 0
        wpos = (self.rpos + self.count) % PIPE_CAPACITY
        first = min(take, PIPE_CAPACITY - wpos)
        self.buf[wpos:wpos + first] = data[:first]
        if first < take:
            self.buf[:take - first] = data[first:take]
        self.count += take
        return take

    def read(self, limit: int) -> bytes:
        """Dequeue up to `limit` bytes."""
        take = min(limit, self.count)
        if take == 0:
            return b""
        first = min(take, PIPE_CAPACITY - self.rpos)
        out = bytes(self.buf[self.rpos:self.rpos + first])
        if first < take:
            out += bytes(self.buf[:take - first])
        self.rpos = (self.rpos + take) % PIPE_CAPACITY
        self.count -= take
        return out
