"""Instrumented access to data files.

Every read or write of a CSV data file goes through ``open_data_file``. The
module keeps a process-wide open counter and supports zero-scan regions:
inside ``zero_scan()`` any data-file open raises ``ScanForbidden``. The
metadata paths (rule evaluation, constraint checks, observability ingestion)
run inside such regions, so a regression that sneaks in a scan fails loudly.
"""

from __future__ import annotations

import contextlib
import threading
from collections import Counter
from pathlib import Path
from typing import IO, Iterator

from .errors import ScanForbidden

_lock = threading.Lock()
_opens: Counter = Counter()
_local = threading.local()


def _depth() -> int:
    return getattr(_local, "zero_scan_depth", 0)


def open_data_file(path: str | Path, mode: str = "r") -> IO:
    kind = "write" if any(c in mode for c in "wax") else "read"
    if _depth() > 0:
        raise ScanForbidden(f"data file {path} opened for {kind} inside a zero-scan region")
    with _lock:
        _opens[kind] += 1
    return open(path, mode, newline="", encoding="utf-8")


def data_file_opens(kind: str | None = None) -> int:
    with _lock:
        return sum(_opens.values()) if kind is None else _opens[kind]


@contextlib.contextmanager
def zero_scan() -> Iterator[None]:
    """Forbid data-file opens on this thread for the duration of the block."""
    _local.zero_scan_depth = _depth() + 1
    try:
        yield
    finally:
        _local.zero_scan_depth -= 1


class OpenCounter:
    """Counts data-file opens that happen while the context is active."""

    def __init__(self) -> None:
        self.reads = 0
        self.writes = 0

    def __enter__(self) -> "OpenCounter":
        self._r0 = data_file_opens("read")
        self._w0 = data_file_opens("write")
        return self

    def __exit__(self, *exc) -> None:
        self.reads = data_file_opens("read") - self._r0
        self.writes = data_file_opens("write") - self._w0

    @property
    def total(self) -> int:
        return self.reads + self.writes
