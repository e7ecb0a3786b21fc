"""CSV data files: header row plus one canonical cell per column.

Reading goes through the same ``values.parser`` functions the writer's
encoders invert, and every open goes through ``fileio.open_data_file``.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterator, Sequence

from .errors import CorruptDataFile
from .fileio import open_data_file
from .model import ColumnSchema
from .values import parser


def write_csv(path: str | Path, schema: Sequence[ColumnSchema], encoded_rows) -> None:
    with open_data_file(path, "w") as f:
        # the default \r\n terminator makes the writer quote cells holding \r or \n
        w = csv.writer(f)
        w.writerow([c.name for c in schema])
        w.writerows(encoded_rows)


def iter_rows(path: str | Path, schema: Sequence[ColumnSchema]) -> Iterator[tuple]:
    """Yield typed rows in file order (row position = index)."""
    parsers = [parser(c.kind) for c in schema]
    width = len(schema)
    with open_data_file(path, "r") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise CorruptDataFile(f"{path}: missing header row") from None
        if header != [c.name for c in schema]:
            raise CorruptDataFile(f"{path}: header {header} does not match schema")
        for lineno, cells in enumerate(reader, start=2):
            if len(cells) != width:
                raise CorruptDataFile(f"{path}:{lineno}: expected {width} cells, found {len(cells)}")
            try:
                yield tuple(p(c) for p, c in zip(parsers, cells))
            except ValueError as exc:
                raise CorruptDataFile(f"{path}:{lineno}: {exc}") from None


def read_rows(path: str | Path, schema: Sequence[ColumnSchema]) -> list[tuple]:
    return list(iter_rows(path, schema))


def read_raw_columns(path: str | Path, schema: Sequence[ColumnSchema]) -> list[list[str]]:
    """Cell text per column, header excluded (used for column size checks)."""
    with open_data_file(path, "r") as f:
        reader = csv.reader(f)
        next(reader, None)
        rows = list(reader)
    return [list(col) for col in zip(*rows)] if rows else [[] for _ in schema]
