"""Write path: data files with statistics and sketches, and the commit protocol.

``write_files`` makes one pass over the incoming rows. Each chunk of at most
``max_rows_per_file`` rows becomes a CSV data file, a manifest entry carrying
every ``ColumnStats`` field, and a ``.zsb`` sidecar with Theta/KLL sketches.

``commit`` publishes a new snapshot: it checks the optimistic snapshot
pointer, evaluates registered constraints against manifest aggregates (no
data file is opened), then writes the manifest, appends the snapshot record
and atomically swaps the ``table.json`` pointer. A rejected commit writes
nothing under ``metadata/``.
"""

from __future__ import annotations

import contextlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from itertools import islice
from typing import Any, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from . import dsl
from .datafile import read_rows, write_csv
from .errors import (
    ConstraintViolation,
    DuplicateDelete,
    InvalidConstraint,
    NullInNonNullable,
    PositionOutOfRange,
    StaleTable,
    TableLocked,
    TypeMismatch,
    UnknownColumn,
)
from .fileio import zero_scan
from .model import (
    MAINTENANCE_WRITER,
    ColumnSchema,
    ColumnStats,
    Constraint,
    DataFileEntry,
    DeleteFileEntry,
    Operation,
    Snapshot,
    Table,
    aggregate_stats,
    append_snapshot,
    corrected_record_count,
    live_files,
    read_table_metadata,
    write_manifest,
)
from .sketches.hashing import hash_int64_array, hash_string_array
from .sketches.kll import KllSketch
from .sketches.sidecar import SketchSidecar, load_theta, sidecar_write
from .sketches.theta import ThetaSketch, theta_union
from .values import NULL_CELL, Kind, encoder, truncate_lower, truncate_upper

log = logging.getLogger(__name__)

DEFAULT_MAX_ROWS_PER_FILE = 100_000
USER_WRITER = "user"
THETA_KINDS = (Kind.INT64, Kind.STRING, Kind.TIMESTAMP)
KLL_KINDS = (Kind.INT64, Kind.FLOAT64)

_ALLOWED_TYPES = {
    Kind.INT64: {int},
    Kind.TIMESTAMP: {int},
    Kind.FLOAT64: {float, int},
    Kind.STRING: {str},
    Kind.BOOL: {bool},
}


@dataclass
class WriteBatch:
    partition_key: str
    rows: Iterable[Sequence[Any]]
    writer_identity: str = USER_WRITER


# -- statistics for one column of one file ---------------------------------


def _first_bad(col: list, allowed: set) -> int:
    for i, v in enumerate(col):
        if v is not None and type(v) not in allowed:
            return i
    return -1


def _validate_column(col: list, c: ColumnSchema, row_offset: int) -> list:
    types = set(map(type, col))
    has_null = type(None) in types
    types.discard(type(None))
    if has_null and not c.nullable:
        raise NullInNonNullable(row_offset + col.index(None), c.name)
    allowed = _ALLOWED_TYPES[c.kind]
    if not types <= allowed:
        i = _first_bad(col, allowed)
        raise TypeMismatch(row_offset + i, c.name, col[i])
    if c.kind is Kind.FLOAT64 and int in types:
        col = [float(v) if type(v) is int else v for v in col]
    if c.kind.integral and col:
        nn = [v for v in col if v is not None] if has_null else col
        if nn and (min(nn) < -(1 << 63) or max(nn) > (1 << 63) - 1):
            bad = next(i for i, v in enumerate(col) if v is not None and not -(1 << 63) <= v < (1 << 63))
            raise TypeMismatch(row_offset + bad, c.name, col[bad])
    return col


def column_stats(
    c: ColumnSchema, col: list, encoded: list[str], with_sketches: bool = True
) -> tuple[ColumnStats, Optional[ThetaSketch], Optional[KllSketch]]:
    """Statistics (and sketches) for one column's values in one file."""
    n = len(col)
    nn = [v for v in col if v is not None]
    stats = ColumnStats(c.column_id, value_count=n, null_count=n - len(nn))
    stats.column_size_bytes = len("\x00".join(encoded).encode("utf-8")) - max(n - 1, 0)
    theta = ThetaSketch() if with_sketches and c.kind in THETA_KINDS else None
    kll = KllSketch() if with_sketches and c.kind in KLL_KINDS else None

    if c.kind.integral:
        arr = np.array(nn, dtype=np.int64)
        if arr.size:
            stats.lower_bound = int(arr.min())
            stats.upper_bound = int(arr.max())
        if c.kind is Kind.INT64:
            stats.sum = float(sum(nn))
            stats.zero_count = int(np.count_nonzero(arr == 0))
        if theta is not None:
            theta.update_hashes(hash_int64_array(arr))
        if kll is not None:
            kll.update_many(arr.astype(np.float64))
    elif c.kind is Kind.FLOAT64:
        arr = np.array(nn, dtype=np.float64)
        nan = np.isnan(arr)
        stats.nan_count = int(nan.sum())
        vals = arr[~nan]
        if vals.size:
            stats.lower_bound = float(vals.min())
            stats.upper_bound = float(vals.max())
        finite = np.isfinite(vals)
        if finite.all():
            stats.sum = math.fsum(vals.tolist())
        else:
            s = float(vals.sum())
            stats.sum = s if not math.isnan(s) else None
        stats.zero_count = int(np.count_nonzero(vals == 0.0))
        if kll is not None:
            kll.update_many(vals[finite])
    elif c.kind is Kind.STRING:
        if nn:
            stats.lower_bound = truncate_lower(min(nn))
            stats.upper_bound = truncate_upper(max(nn))
        if theta is not None:
            theta.update_hashes(hash_string_array(nn))
    elif c.kind is Kind.BOOL:
        trues = nn.count(True)
        stats.true_count = trues
        if nn:
            stats.lower_bound = trues == len(nn)
            stats.upper_bound = trues > 0
    return stats, theta, kll


class RowCounter:
    """Iterator wrapper recording how many rows were pulled from the source."""

    def __init__(self, rows: Iterable[Sequence[Any]]) -> None:
        self._it = iter(rows)
        self.count = 0

    def __iter__(self) -> Iterator[Sequence[Any]]:
        return self

    def __next__(self) -> Sequence[Any]:
        row = next(self._it)
        self.count += 1
        return row


def write_files(
    table: Table, batch: WriteBatch, max_rows_per_file: int = DEFAULT_MAX_ROWS_PER_FILE
) -> list[tuple[DataFileEntry, SketchSidecar]]:
    """Write ``batch`` as data files + sidecars; returns uncommitted manifest entries."""
    if max_rows_per_file < 1:
        raise ValueError("max_rows_per_file must be positive")
    schema = table.schema
    width = len(schema)
    stats_ids = set(table.metadata.stats_priority)
    encoders = [encoder(c.kind) for c in schema]
    out = []
    it = iter(batch.rows)
    offset = 0
    while True:
        chunk = list(islice(it, max_rows_per_file))
        if not chunk:
            break
        for i, row in enumerate(chunk):
            if len(row) != width:
                raise TypeMismatch(offset + i, f"<arity {len(row)} != {width}>", row)
        columns = [list(col) for col in zip(*chunk)]
        columns = [_validate_column(col, c, offset) for col, c in zip(columns, schema)]
        out.append(_write_one(table, batch.partition_key, columns, encoders, stats_ids))
        offset += len(chunk)
    return out


def _write_one(
    table: Table, partition_key: str, columns: list[list], encoders, stats_ids: set[int]
) -> tuple[DataFileEntry, SketchSidecar]:
    schema = table.schema
    file_id = table.id_factory()
    rel_data = f"data/{file_id}.csv"
    rel_sidecar = f"sketches/{file_id}.zsb"
    encoded = [[NULL_CELL if v is None else enc(v) for v in col] for col, enc in zip(columns, encoders)]
    data_path = table.resolve(rel_data)
    write_csv(data_path, schema, zip(*encoded))

    sidecar = SketchSidecar()
    stats_list = []
    for c, col, enc in zip(schema, columns, encoded):
        if c.column_id not in stats_ids:
            continue
        stats, theta, kll = column_stats(c, col, enc)
        stats_list.append(stats)
        if theta is not None:
            sidecar.add_theta(c.column_id, theta)
        if kll is not None:
            sidecar.add_kll(c.column_id, kll)
    # manifest order follows stats priority
    order = {cid: i for i, cid in enumerate(table.metadata.stats_priority)}
    stats_list.sort(key=lambda s: order[s.column_id])

    sidecar_path = None
    if sidecar.blobs:
        sidecar_write(table.resolve(rel_sidecar), sidecar)
        sidecar_path = rel_sidecar
    entry = DataFileEntry(
        file_path=rel_data,
        partition_key=partition_key,
        record_count=len(columns[0]) if columns else 0,
        file_size_bytes=os.path.getsize(data_path),
        column_stats=stats_list,
        sketch_sidecar_path=sidecar_path,
    )
    entry.check()
    return entry, sidecar


# -- constraints ------------------------------------------------------------

ALLOWED_CONSTRAINT_TIERS = {"BASE_MANIFEST", "COUNTER_EXT", "FRESHNESS"}


def parse_constraint(table: Table, expression: str) -> dsl.Compare:
    try:
        node = dsl.parse_expression(expression)
    except Exception as exc:
        raise InvalidConstraint(str(exc)) from exc
    if not isinstance(node, dsl.Compare):
        raise InvalidConstraint(f"constraint must be a comparison: {expression!r}")
    for term in dsl.terms_of(node):
        tier = dsl.TERMS[term.name][1]
        if tier not in ALLOWED_CONSTRAINT_TIERS:
            raise InvalidConstraint(
                f"{term} needs {tier.lower()} data; constraints may only use manifest statistics"
            )
        if term.column is not None:
            try:
                col = table.metadata.column(term.column)
            except UnknownColumn as exc:
                raise InvalidConstraint(str(exc)) from exc
            if col.column_id not in table.metadata.stats_priority:
                raise InvalidConstraint(f"column {term.column!r} has no manifest statistics")
    return node


def add_constraint(table: Table, expression: str, constraint_id: Optional[str] = None, scope: str = "table") -> Constraint:
    """Register a constraint in table metadata (validated up front)."""
    if scope not in ("table", "delta"):
        raise InvalidConstraint(f"scope must be 'table' or 'delta', got {scope!r}")
    parse_constraint(table, expression)
    with table_lock(table):
        _check_pointer(table)
        meta = table.metadata
        cid = constraint_id or f"c{len(meta.constraints) + 1}"
        if any(c.constraint_id == cid for c in meta.constraints):
            raise InvalidConstraint(f"duplicate constraint id {cid!r}")
        constraint = Constraint(cid, expression, scope)
        meta.constraints.append(constraint)
        table.write_table_json(meta)
    return constraint


def remove_constraint(table: Table, constraint_id: str) -> None:
    with table_lock(table):
        _check_pointer(table)
        meta = table.metadata
        meta.constraints = [c for c in meta.constraints if c.constraint_id != constraint_id]
        table.write_table_json(meta)


class _AggregateResolver:
    """Maps constraint terms to manifest aggregates of one file set."""

    def __init__(self, table: Table, data: Sequence[DataFileEntry], deletes: Sequence[DeleteFileEntry], commit_ts: int):
        self.table = table
        self.data = data
        self.deletes = deletes
        self.commit_ts = commit_ts
        self._cache: dict[int, Any] = {}

    def agg(self, column: str):
        cid = self.table.metadata.column(column).column_id
        if cid not in self._cache:
            self._cache[cid] = aggregate_stats(self.data, cid)
        return self._cache[cid]

    def __call__(self, term: dsl.Term) -> Any:
        name = term.name
        if name == "record_count":
            return corrected_record_count(self.data, self.deletes)
        if name in ("commit_ts", "now"):
            return self.commit_ts
        a = self.agg(term.column)
        if name == "min":
            return a.lower_bound
        if name == "max":
            return a.upper_bound
        if name == "mean":
            denom = a.non_null - a.nan_count
            if a.sum is None:
                return None
            if denom == 0:
                raise ZeroDivisionError(str(term))
            return a.sum / denom
        return getattr(a, name)


def evaluate_constraint(
    table: Table,
    constraint: Constraint,
    data: Sequence[DataFileEntry],
    deletes: Sequence[DeleteFileEntry],
    commit_ts: int,
) -> None:
    """Raise ConstraintViolation unless the constraint holds on the given file set."""
    node = parse_constraint(table, constraint.expression)
    resolve = _AggregateResolver(table, data, deletes, commit_ts)
    observed = bound = None
    try:
        with zero_scan():
            observed = dsl.evaluate(node.left, resolve)
            bound = dsl.evaluate(node.right, resolve)
            ok = dsl.COMPARATORS[node.op](observed, bound)
    except ZeroDivisionError:
        raise ConstraintViolation(constraint.constraint_id, observed, bound, "EmptyAggregate") from None
    except dsl.MissingValue as exc:
        raise ConstraintViolation(constraint.constraint_id, observed, bound, f"NoValue: {exc}") from None
    except TypeError as exc:
        raise ConstraintViolation(constraint.constraint_id, observed, bound, f"TypeError: {exc}") from None
    if not ok:
        raise ConstraintViolation(
            constraint.constraint_id,
            observed,
            bound,
            f"{dsl.render(node.left)} {node.op} {dsl.render(node.right)} is false",
        )


# -- commit -----------------------------------------------------------------


@contextlib.contextmanager
def table_lock(table: Table) -> Iterator[None]:
    path = table.metadata_dir / ".lock"
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise TableLocked(f"{table.path} is locked by another writer ({path})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(path)


def _check_pointer(table: Table) -> None:
    on_disk = json.loads((table.metadata_dir / "table.json").read_text(encoding="utf-8")).get("current_snapshot_id")
    if on_disk != table.metadata.current_snapshot_id:
        raise StaleTable(table.metadata.current_snapshot_id, on_disk)


def _next_snapshot_id(table: Table) -> int:
    best = 0
    with open(table.metadata_dir / "snapshots.jsonl", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                best = max(best, json.loads(line)["snapshot_id"])
    return best + 1


@dataclass
class PartitionDelta:
    added_files: int = 0
    added_records: int = 0
    removed_files: int = 0
    removed_records: int = 0
    deleted_positions: int = 0
    file_sizes: list[int] = field(default_factory=list)
    columns: dict[int, dict] = field(default_factory=dict)

    @property
    def record_count(self) -> int:
        """Rows that arrived with this commit (new rows minus new positional deletes)."""
        return self.added_records - self.deleted_positions

    def to_dict(self) -> dict:
        return {
            "added_files": self.added_files,
            "added_records": self.added_records,
            "removed_files": self.removed_files,
            "removed_records": self.removed_records,
            "deleted_positions": self.deleted_positions,
            "file_sizes": list(self.file_sizes),
            "columns": {str(k): v for k, v in self.columns.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionDelta":
        return cls(
            d["added_files"],
            d["added_records"],
            d["removed_files"],
            d["removed_records"],
            d["deleted_positions"],
            list(d.get("file_sizes", [])),
            {int(k): v for k, v in d.get("columns", {}).items()},
        )


@dataclass
class CommitEvent:
    table: str
    snapshot_id: int
    commit_ts: int
    writer_identity: str
    operation: Operation
    partitions: dict[str, PartitionDelta] = field(default_factory=dict)

    @property
    def maintenance(self) -> bool:
        return Operation(self.operation).maintenance

    def to_dict(self) -> dict:
        return {
            "table": self.table,
            "snapshot_id": self.snapshot_id,
            "commit_ts": self.commit_ts,
            "writer_identity": self.writer_identity,
            "operation": Operation(self.operation).value,
            "partition_keys": sorted(self.partitions),
            "partitions": {k: v.to_dict() for k, v in sorted(self.partitions.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CommitEvent":
        return cls(
            d["table"],
            d["snapshot_id"],
            d["commit_ts"],
            d["writer_identity"],
            Operation(d["operation"]),
            {k: PartitionDelta.from_dict(v) for k, v in d["partitions"].items()},
        )


def _column_summary(table: Table, entries: Sequence[DataFileEntry], column: ColumnSchema) -> dict:
    a = aggregate_stats(entries, column.column_id)
    summary = {
        "value_count": a.value_count,
        "null_count": a.null_count,
        "nan_count": a.nan_count,
        "min": a.lower_bound,
        "max": a.upper_bound,
        "sum": a.sum,
        "zero_count": a.zero_count,
        "true_count": a.true_count,
        "distinct_estimate": None,
    }
    if column.kind in THETA_KINDS and entries and all(e.sketch_sidecar_path for e in entries):
        sketches = [load_theta(table.resolve(e.sketch_sidecar_path), column.column_id) for e in entries]
        if all(s is not None for s in sketches):
            summary["distinct_estimate"] = theta_union(sketches).estimate()
    return summary


def _build_event(
    table: Table,
    snapshot: Snapshot,
    new_entries: Sequence[DataFileEntry],
    removed: Sequence[DataFileEntry],
    delete_entries: Sequence[DeleteFileEntry],
) -> CommitEvent:
    parts: dict[str, PartitionDelta] = {}
    for e in new_entries:
        p = parts.setdefault(e.partition_key, PartitionDelta())
        p.added_files += 1
        p.added_records += e.record_count
        p.file_sizes.append(e.file_size_bytes)
    for e in removed:
        p = parts.setdefault(e.partition_key, PartitionDelta())
        p.removed_files += 1
        p.removed_records += e.record_count
    for d in delete_entries:
        parts.setdefault(d.partition_key, PartitionDelta()).deleted_positions += d.delete_count
    stats_columns = table.metadata.stats_columns()
    for key, p in parts.items():
        entries = [e for e in new_entries if e.partition_key == key]
        if not entries:
            continue
        for c in stats_columns:
            p.columns[c.column_id] = _column_summary(table, entries, c)
    return CommitEvent(
        table.name, snapshot.snapshot_id, snapshot.commit_ts, snapshot.writer_identity, snapshot.operation, parts
    )


def commit(
    table: Table,
    new_entries: Sequence[DataFileEntry] = (),
    removed_paths: Iterable[str] = (),
    delete_entries: Sequence[DeleteFileEntry] = (),
    operation: Operation | str = Operation.APPEND,
    writer_identity: str = USER_WRITER,
) -> Snapshot:
    """Publish a snapshot, or raise ConstraintViolation / StaleTable without touching metadata."""
    operation = Operation(operation)
    removed_paths = set(removed_paths)
    with table_lock(table):
        _check_pointer(table)
        meta = table.metadata
        parent = table.current_snapshot()
        base_data, base_deletes = live_files(table)
        live_paths = {e.file_path for e in base_data}
        unknown = removed_paths - live_paths
        if unknown:
            raise ValueError(f"cannot remove files that are not live: {sorted(unknown)}")
        for e in new_entries:
            if not table.resolve(e.file_path).exists():
                raise FileNotFoundError(f"data file {e.file_path} does not exist")
            if e.file_path in live_paths:
                raise ValueError(f"data file {e.file_path} is already live")
        removed = [e for e in base_data if e.file_path in removed_paths]
        data = [e for e in base_data if e.file_path not in removed_paths] + list(new_entries)
        data_paths = {e.file_path: e for e in data}
        deletes = [r for d in base_deletes if (r := d.restricted_to(set(data_paths))) is not None]
        _validate_deletes(deletes, delete_entries, data_paths)
        deletes += list(delete_entries)

        commit_ts = table.clock()
        if parent is not None:
            commit_ts = max(commit_ts, parent.commit_ts)

        if not operation.maintenance:
            for c in meta.constraints:
                if c.scope == "delta":
                    if not new_entries:
                        continue
                    evaluate_constraint(table, c, list(new_entries), list(delete_entries), commit_ts)
                else:
                    evaluate_constraint(table, c, data, deletes, commit_ts)

        snapshot_id = _next_snapshot_id(table)
        manifest_rel = f"metadata/manifest-{snapshot_id}.jsonl"
        total = corrected_record_count(data, deletes)
        touched = {e.partition_key for e in (*new_entries, *removed)}
        touched |= {d.partition_key for d in delete_entries}
        summary = {
            "added-data-files": str(len(new_entries)),
            "added-records": str(sum(e.record_count for e in new_entries)),
            "removed-data-files": str(len(removed)),
            "removed-records": str(sum(e.record_count for e in removed)),
            "added-position-deletes": str(sum(d.delete_count for d in delete_entries)),
            "total-data-files": str(len(data)),
            "total-delete-files": str(len(deletes)),
            "total-records": str(total),
            "changed-partitions": json.dumps(sorted(touched)),
        }
        snapshot = Snapshot(
            snapshot_id,
            parent.snapshot_id if parent else None,
            commit_ts,
            writer_identity,
            operation,
            manifest_rel,
            summary,
        )
        write_manifest(table.resolve(manifest_rel), data, deletes)
        append_snapshot(table.metadata_dir / "snapshots.jsonl", snapshot)
        meta.current_snapshot_id = snapshot_id
        table.write_table_json(meta)
        meta.snapshot_log.append(snapshot)

    event = _build_event(table, snapshot, new_entries, removed, delete_entries)
    with open(table.metadata_dir / "events.jsonl", "a", encoding="utf-8") as f:
        f.write(json.dumps(event.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")
    for listener in table.listeners:
        listener(event)
    log.debug("committed snapshot %s (%s) on %s", snapshot_id, operation.value, table.name)
    return snapshot


def _validate_deletes(
    existing: Sequence[DeleteFileEntry], new: Sequence[DeleteFileEntry], data: Mapping[str, DataFileEntry]
) -> None:
    seen = {pair for d in existing for pair in d.pairs()}
    for d in new:
        count = 0
        for path, pos in d.pairs():
            count += 1
            entry = data.get(path)
            if entry is None:
                raise ValueError(f"delete file {d.file_path} targets non-live data file {path}")
            if not 0 <= pos < entry.record_count:
                raise PositionOutOfRange(path, pos, entry.record_count)
            if (path, pos) in seen:
                raise DuplicateDelete(path, pos)
            seen.add((path, pos))
        if count != d.delete_count:
            raise ValueError(f"delete file {d.file_path}: delete_count {d.delete_count} != {count} positions")


# -- higher-level operations -----------------------------------------------


def append(table: Table, batch: WriteBatch, max_rows_per_file: int = DEFAULT_MAX_ROWS_PER_FILE) -> Snapshot:
    entries = [e for e, _ in write_files(table, batch, max_rows_per_file)]
    return commit(table, entries, operation=Operation.APPEND, writer_identity=batch.writer_identity)


def overwrite(table: Table, batch: WriteBatch, max_rows_per_file: int = DEFAULT_MAX_ROWS_PER_FILE) -> Snapshot:
    """Replace every live file of the batch's partition."""
    entries = [e for e, _ in write_files(table, batch, max_rows_per_file)]
    current, _ = live_files(table, partition_filter=batch.partition_key)
    return commit(
        table,
        entries,
        removed_paths=[e.file_path for e in current],
        operation=Operation.OVERWRITE,
        writer_identity=batch.writer_identity,
    )


def resolve_positions(
    table: Table, partition_key: str, positions: Mapping[str, Iterable[int]] | Iterable[int]
) -> dict[str, list[int]]:
    """Normalize positions to ``{file_path: sorted positions}``.

    A plain sequence of ints is read as row ordinals across the partition's
    live files in manifest order.
    """
    data, _ = live_files(table, partition_filter=partition_key)
    if isinstance(positions, Mapping):
        by_file = {path: sorted(int(p) for p in pos) for path, pos in positions.items()}
        live = {e.file_path: e for e in data}
        for path, pos in by_file.items():
            if path not in live:
                raise ValueError(f"{path} is not a live file of partition {partition_key!r}")
        return {p: v for p, v in by_file.items() if v}
    ordinals = sorted(int(p) for p in positions)
    starts = []
    total = 0
    for e in data:
        starts.append(total)
        total += e.record_count
    by_file: dict[str, list[int]] = {}
    idx = 0
    for o in ordinals:
        if not 0 <= o < total:
            raise PositionOutOfRange(f"partition {partition_key}", o, total)
        while idx + 1 < len(data) and starts[idx + 1] <= o:
            idx += 1
        by_file.setdefault(data[idx].file_path, []).append(o - starts[idx])
    return by_file


def delete_rows(
    table: Table,
    partition_key: str,
    positions: Mapping[str, Iterable[int]] | Iterable[int],
    writer_identity: str = USER_WRITER,
) -> Snapshot:
    """Merge-on-read delete: record positions in a delete file, leave base files untouched."""
    by_file = resolve_positions(table, partition_key, positions)
    entries = []
    if by_file:
        rel = f"deletes/{table.id_factory()}.jsonl"
        targets = [(path, by_file[path]) for path in sorted(by_file)]
        entry = DeleteFileEntry(rel, partition_key, sum(len(p) for _, p in targets), targets)
        # validate before anything lands on disk
        data, deletes = live_files(table)
        _validate_deletes(deletes, [entry], {e.file_path: e for e in data})
        with open(table.resolve(rel), "w", encoding="utf-8") as f:
            for path, pos in entry.pairs():
                f.write(json.dumps({"file_path": path, "pos": pos}) + "\n")
        entries.append(entry)
    return commit(table, delete_entries=entries, operation=Operation.DELETE, writer_identity=writer_identity)


def read_live_rows(table: Table, data: Sequence[DataFileEntry], deletes: Sequence[DeleteFileEntry]) -> list[tuple]:
    """Rows of ``data`` in manifest order with positional deletes applied."""
    dead: dict[str, set[int]] = {}
    for d in deletes:
        for path, pos in d.pairs():
            dead.setdefault(path, set()).add(pos)
    rows: list[tuple] = []
    for e in data:
        file_rows = read_rows(table.resolve(e.file_path), table.schema)
        gone = dead.get(e.file_path)
        if gone:
            rows.extend(r for i, r in enumerate(file_rows) if i not in gone)
        else:
            rows.extend(file_rows)
    return rows


def _rewrite_partition(
    table: Table,
    partition_key: str,
    operation: Operation,
    sort_column: Optional[str],
    max_rows_per_file: int,
    writer_identity: str,
) -> Snapshot:
    data, deletes = live_files(table, partition_filter=partition_key)
    if not data:
        raise ValueError(f"partition {partition_key!r} has no live files")
    rows = read_live_rows(table, data, deletes)
    if sort_column is not None:
        idx = [c.name for c in table.schema].index(sort_column)
        # nulls last; mixed types never occur within a column
        rows.sort(key=lambda r: (r[idx] is None, r[idx] if r[idx] is not None else 0))
    entries = [
        e for e, _ in write_files(table, WriteBatch(partition_key, rows, writer_identity), max_rows_per_file)
    ]
    return commit(
        table,
        entries,
        removed_paths=[e.file_path for e in data],
        operation=operation,
        writer_identity=writer_identity,
    )


def compact(
    table: Table,
    partition_key: str,
    max_rows_per_file: int = DEFAULT_MAX_ROWS_PER_FILE,
    writer_identity: str = MAINTENANCE_WRITER,
) -> Snapshot:
    """Materialize base files minus deletes into fresh files with exact statistics."""
    return _rewrite_partition(table, partition_key, Operation.COMPACTION, None, max_rows_per_file, writer_identity)


def sort_partition(
    table: Table,
    partition_key: str,
    column: str,
    max_rows_per_file: int = DEFAULT_MAX_ROWS_PER_FILE,
    writer_identity: str = MAINTENANCE_WRITER,
) -> Snapshot:
    table.metadata.column(column)
    return _rewrite_partition(table, partition_key, Operation.SORT, column, max_rows_per_file, writer_identity)


def reload(table: Table) -> Table:
    table.metadata = read_table_metadata(table.path)
    return table
