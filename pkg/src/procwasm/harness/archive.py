"""Result archiving as POSIX ustar bytes."""

from __future__ import annotations

import io
import tarfile
from pathlib import Path

from ..errors import IoFailure

# The ustar size field is 11 octal digits.
USTAR_MAX_FILE_SIZE = 8 * 1024 ** 3 - 1


def archive_results(directory) -> bytes:
    """Pack a directory tree into an in-memory ustar archive.

    Entries are added in sorted order so identical trees archive
    identically; unpacking reproduces the tree byte for byte.
    """
    root = Path(directory)
    if not root.is_dir():
        raise IoFailure(f"not a directory: {root}")
    buf = io.BytesIO()
    try:
        with tarfile.open(fileobj=buf, mode="w",
                          format=tarfile.USTAR_FORMAT) as tar:
            for path in sorted(root.rglob("*")):
                if path.is_file() and path.stat().st_size > USTAR_MAX_FILE_SIZE:
                    raise IoFailure(
                        f"{path.name}: larger than the ustar size limit")
                tar.add(path, arcname=path.relative_to(root).as_posix(),
                        recursive=False)
    except (OSError, ValueError) as exc:
        raise IoFailure(str(exc)) from exc
    return buf.getvalue()
