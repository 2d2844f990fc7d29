"""Process, descriptor, filesystem, and pipe services behind the shim."""

from .kernel import (
    Descriptor,
    Kernel,
    NullInput,
    OpenFile,
    PipeEnd,
    Process,
    ProcessReport,
    TRAP_EXIT_CODE,
    boot,
)
from .pipe import PIPE_CAPACITY, Pipe
from .vfs import (
    FsNode,
    KIND_DIR,
    KIND_FILE,
    Vfs,
    export_tree,
    fs_append,
    normalize_path,
    vfs_from_image,
)

__all__ = [
    "Kernel",
    "Process",
    "ProcessReport",
    "Descriptor",
    "OpenFile",
    "PipeEnd",
    "NullInput",
    "TRAP_EXIT_CODE",
    "boot",
    "Pipe",
    "PIPE_CAPACITY",
    "FsNode",
    "Vfs",
    "KIND_FILE",
    "KIND_DIR",
    "fs_append",
    "normalize_path",
    "vfs_from_image",
    "export_tree",
]
