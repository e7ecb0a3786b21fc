from __future__ import annotations

import hashlib
import os
import re
import sys
from pathlib import Path

import pytest

from zeroscan import fileio
from zeroscan.model import Table, build_schema
from zeroscan.workload import StepClock, counter_ids

# -- independent instrumentation of data-file opens --------------------------
#
# fileio counts opens that go through open_data_file. The audit hook below
# sees every open() in the process, so it also catches code that bypasses
# the instrumented layer. Opens that happen while a zero-scan region is
# active are recorded as violations.

_DATA_FILE = re.compile(r"[/\\]data[/\\][^/\\]+\.csv$")


class OpenLog:
    def __init__(self) -> None:
        self.total = 0
        self.in_zero_scan: list[str] = []

    def snapshot(self) -> tuple[int, int]:
        return self.total, len(self.in_zero_scan)


OPEN_LOG = OpenLog()


def _audit(event: str, args: tuple) -> None:
    if event != "open" or not args:
        return
    path = args[0]
    if isinstance(path, bytes):
        path = path.decode(errors="replace")
    if not isinstance(path, (str, os.PathLike)):
        return
    path = os.fspath(path)
    if not _DATA_FILE.search(path):
        return
    OPEN_LOG.total += 1
    if fileio._depth() > 0:
        OPEN_LOG.in_zero_scan.append(path)


sys.addaudithook(_audit)


@pytest.fixture(autouse=True)
def _no_opens_in_zero_scan_regions():
    before = len(OPEN_LOG.in_zero_scan)
    yield
    leaked = OPEN_LOG.in_zero_scan[before:]
    assert not leaked, f"data files opened inside a zero-scan region: {leaked[:5]}"


class AuditCounter:
    """Data-file opens seen by the audit hook while the context is active."""

    def __enter__(self) -> "AuditCounter":
        self._start = OPEN_LOG.total
        return self

    def __exit__(self, *exc) -> None:
        self.opens = OPEN_LOG.total - self._start


@pytest.fixture
def audit_opens():
    return AuditCounter


# -- table helpers -------------------------------------------------------------


PEOPLE_SCHEMA = [("id", "int64", False), ("age", "int64"), ("name", "string"), ("score", "float64"), ("active", "bool")]


def make_table(path: Path, columns=PEOPLE_SCHEMA, name: str | None = None, **kwargs) -> Table:
    return Table.create(
        path,
        build_schema(columns),
        name=name,
        clock=kwargs.pop("clock", StepClock()),
        id_factory=kwargs.pop("id_factory", counter_ids("t")),
        **kwargs,
    )


@pytest.fixture
def people(tmp_path: Path) -> Table:
    return make_table(tmp_path / "people")


def dir_hash(path: Path) -> str:
    """Digest of every file name and byte under ``path``."""
    h = hashlib.sha256()
    for p in sorted(Path(path).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(path)).encode())
            h.update(b"\0")
            h.update(p.read_bytes())
            h.update(b"\0")
    return h.hexdigest()


REPORT_LINES: list[str] = []


def report(label: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else "")
    REPORT_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter) -> None:
    leaked = OPEN_LOG.in_zero_scan
    terminalreporter.section("acceptance report")
    for line in REPORT_LINES:
        terminalreporter.write_line(line)
    terminalreporter.write_line(
        f"[{'FAIL' if leaked else 'PASS'}] criterion 5 (whole session): {len(leaked)} of {OPEN_LOG.total} "
        "data-file opens seen by the audit hook happened inside zero-scan regions"
    )
