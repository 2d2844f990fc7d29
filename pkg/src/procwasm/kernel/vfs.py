"""In-memory filesystem with amortized append growth.

Files keep their bytes in a growable backing buffer; the content is the
first `size` bytes. Whenever a write outgrows the backing, capacity is
rounded up to the smallest 4 KiB multiple that fits, so a long run of
small appends costs at most one reallocation per 4 KiB of new data
instead of one per call.

Paths are absolute, '/'-separated, case-sensitive; no links, no dot
segments.
"""

from __future__ import annotations

import os

from ..errors import BadImage

GROW_QUANTUM = 4096

KIND_FILE = "file"
KIND_DIR = "dir"


class FsNode:
    """One file or directory."""

    __slots__ = ("kind", "buf", "size", "realloc_count")

    def __init__(self, kind: str, content: bytes = b""):
        self.kind = kind
        self.buf = bytearray(content)
        self.size = len(content)
        self.realloc_count = 0

    @property
    def capacity(self) -> int:
        return len(self.buf)

    def content(self) -> bytes:
        return bytes(self.buf[:self.size])

    def ensure_capacity(self, needed: int) -> None:
        """Grow to the smallest 4 KiB multiple covering `needed`."""
        if needed <= self.capacity:
            return
        new_cap = -(-needed // GROW_QUANTUM) * GROW_QUANTUM
        grown = bytearray(new_cap)
        grown[:self.size] = self.buf[:self.size]
        self.buf = grown
        self.realloc_count += 1

    def write_at(self, pos: int, data: bytes) -> int:
        """Write bytes at pos, zero-filling any gap past current size."""
        end = pos + len(data)
        self.ensure_capacity(end)
        if pos > self.size:
            self.buf[self.size:pos] = bytes(pos - self.size)
        self.buf[pos:end] = data
        if end > self.size:
            self.size = end
        return len(data)

    def truncate(self) -> None:
        self.size = 0

    def read_at(self, pos: int, length: int) -> bytes:
        if pos >= self.size:
            return b""
        return bytes(self.buf[pos:min(pos + length, self.size)])


def fs_append(node: FsNode, data: bytes) -> None:
    """Append bytes to a file, growing the backing at most once."""
    node.write_at(node.size, data)


def normalize_path(path: str) -> str | None:
    """Canonical absolute path, or None if the path is malformed."""
    if not path.startswith("/"):
        return None
    parts = [p for p in path.split("/") if p]
    if any(p in (".", "..") for p in parts):
        return None
    return "/" + "/".join(parts)


class Vfs:
    """Flat path-keyed tree of FsNodes rooted at '/'."""

    def __init__(self):
        self.nodes: dict[str, FsNode] = {"/": FsNode(KIND_DIR)}

    def lookup(self, path: str) -> FsNode | None:
        norm = normalize_path(path)
        if norm is None:
            return None
        return self.nodes.get(norm)

    def _ensure_dirs(self, path: str) -> bool:
        """Create missing parent directories. False on a file conflict."""
        parts = [p for p in path.split("/") if p]
        cur = ""
        for part in parts:
            cur += "/" + part
            node = self.nodes.get(cur)
            if node is None:
                self.nodes[cur] = FsNode(KIND_DIR)
            elif node.kind != KIND_DIR:
                return False
        return True

    def create_file(self, path: str, content: bytes = b"") -> FsNode | None:
        """Create (or replace) a file, making parent directories."""
        norm = normalize_path(path)
        if norm is None or norm == "/":
            return None
        parent = norm.rsplit("/", 1)[0] or "/"
        if parent != "/" and not self._ensure_dirs(parent):
            return None
        existing = self.nodes.get(norm)
        if existing is not None and existing.kind == KIND_DIR:
            return None
        node = FsNode(KIND_FILE, content)
        self.nodes[norm] = node
        return node

    def add_dir(self, path: str) -> bool:
        norm = normalize_path(path)
        if norm is None:
            return False
        return self._ensure_dirs(norm)

    def files_under(self, prefix: str) -> list[tuple[str, FsNode]]:
        norm = normalize_path(prefix)
        if norm is None:
            return []
        root = norm if norm != "/" else ""
        out = []
        for path, node in sorted(self.nodes.items()):
            if node.kind != KIND_FILE:
                continue
            if path == norm or path.startswith(root + "/"):
                out.append((path, node))
        return out


def vfs_from_image(image) -> Vfs:
    """Build a Vfs from a host directory path or a path→bytes mapping."""
    vfs = Vfs()
    if image is None:
        return vfs
    if isinstance(image, dict):
        seen = set()
        for path, content in image.items():
            norm = normalize_path(path)
            if norm is None:
                raise BadImage(f"bad image path {path!r}")
            if norm in seen:
                raise BadImage(f"duplicate image path {path!r}")
            seen.add(norm)
            if isinstance(content, str):
                content = content.encode()
            if vfs.create_file(norm, content) is None:
                raise BadImage(f"conflicting image path {path!r}")
        return vfs
    root = os.fspath(image)
    if not os.path.isdir(root):
        raise BadImage(f"image root {root!r} is not a directory")
    for dirpath, dirnames, filenames in os.walk(root):
        rel = os.path.relpath(dirpath, root)
        base = "/" if rel == "." else "/" + rel.replace(os.sep, "/")
        if base != "/" and not vfs.add_dir(base):
            raise BadImage(f"conflicting image directory {base!r}")
        dirnames.sort()
        for name in sorted(filenames):
            with open(os.path.join(dirpath, name), "rb") as fh:
                content = fh.read()
            vpath = (base.rstrip("/") + "/" + name)
            if vfs.create_file(vpath, content) is None:
                raise BadImage(f"conflicting image path {vpath!r}")
    return vfs


def export_tree(vfs: Vfs, subtree: str, host_dir) -> list[str]:
    """Mirror every file under `subtree` into a host directory."""
    host_root = os.fspath(host_dir)
    os.makedirs(host_root, exist_ok=True)
    written = []
    norm = normalize_path(subtree) or "/"
    for path, node in vfs.files_under(norm):
        rel = path[len(norm):].lstrip("/") if norm != "/" else path.lstrip("/")
        if not rel:
            rel = os.path.basename(path)
        dest = os.path.join(host_root, *rel.split("/"))
        os.makedirs(os.path.dirname(dest) or host_root, exist_ok=True)
        with open(dest, "wb") as fh:
            fh.write(node.content())
        written.append(dest)
    return written
