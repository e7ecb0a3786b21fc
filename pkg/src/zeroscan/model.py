"""Table metadata: schema, per-file statistics, manifests and snapshots.

On-disk layout of a table directory::

    <table>/metadata/table.json               schema, stats priority, constraints, current pointer
    <table>/metadata/snapshots.jsonl          one Snapshot per line
    <table>/metadata/manifest-<id>.jsonl      live data + delete files of snapshot <id>
    <table>/data/<uuid>.csv                   data files
    <table>/deletes/<uuid>.jsonl              positional delete files
    <table>/sketches/<stem>.zsb               sketch sidecars

Each manifest lists the complete live set of its snapshot, so time travel is
a single manifest read.
"""

from __future__ import annotations

import json
import math
import os
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

from .errors import MissingStats, SchemaError, UnknownColumn, UnknownSnapshot
from .values import Kind

STATS_COLUMN_CAP = 200
MAINTENANCE_WRITER = "system:maintenance"


class Operation(str, Enum):
    APPEND = "append"
    OVERWRITE = "overwrite"
    DELETE = "delete"
    COMPACTION = "compaction"
    SORT = "sort"
    PURGE = "purge"

    @property
    def maintenance(self) -> bool:
        return self in (Operation.COMPACTION, Operation.SORT, Operation.PURGE)


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# -- schema -----------------------------------------------------------------


@dataclass(frozen=True)
class ColumnSchema:
    column_id: int
    name: str
    kind: Kind
    nullable: bool = True

    def to_dict(self) -> dict:
        return {"column_id": self.column_id, "name": self.name, "kind": self.kind.value, "nullable": self.nullable}

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnSchema":
        return cls(int(d["column_id"]), d["name"], Kind(d["kind"]), bool(d.get("nullable", True)))


def validate_schema(schema: Sequence[ColumnSchema]) -> None:
    ids = [c.column_id for c in schema]
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise SchemaError("column ids must be unique and strictly increasing")
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaError("column names must be unique")


def build_schema(columns: Iterable[tuple[str, str | Kind] | tuple[str, str | Kind, bool]]) -> list[ColumnSchema]:
    """Assign ids 1..n to ``(name, kind[, nullable])`` tuples."""
    out = []
    for i, spec in enumerate(columns, start=1):
        name, kind, *rest = spec
        out.append(ColumnSchema(i, name, Kind(kind), bool(rest[0]) if rest else True))
    validate_schema(out)
    return out


# -- statistics -------------------------------------------------------------


@dataclass
class ColumnStats:
    column_id: int
    value_count: int
    null_count: int
    nan_count: int = 0
    lower_bound: Any = None
    upper_bound: Any = None
    column_size_bytes: int = 0
    sum: Optional[float] = None
    zero_count: Optional[int] = None
    true_count: Optional[int] = None

    @property
    def non_null(self) -> int:
        return self.value_count - self.null_count

    def check(self) -> None:
        """Raise ValueError if an invariant does not hold."""
        if not 0 <= self.null_count <= self.value_count:
            raise ValueError(f"column {self.column_id}: null_count out of range")
        if not 0 <= self.nan_count <= self.non_null:
            raise ValueError(f"column {self.column_id}: nan_count out of range")
        for name in ("zero_count", "true_count"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= self.non_null:
                raise ValueError(f"column {self.column_id}: {name} out of range")
        if self.lower_bound is not None and self.upper_bound is not None and self.lower_bound > self.upper_bound:
            raise ValueError(f"column {self.column_id}: lower bound above upper bound")
        if self.non_null == 0 and (self.lower_bound is not None or self.upper_bound is not None):
            raise ValueError(f"column {self.column_id}: bounds present on an all-null column")

    def to_dict(self) -> dict:
        d = {
            "column_id": self.column_id,
            "value_count": self.value_count,
            "null_count": self.null_count,
            "nan_count": self.nan_count,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "column_size_bytes": self.column_size_bytes,
        }
        for name in ("sum", "zero_count", "true_count"):
            v = getattr(self, name)
            if v is not None:
                d[name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnStats":
        return cls(
            column_id=d["column_id"],
            value_count=d["value_count"],
            null_count=d["null_count"],
            nan_count=d.get("nan_count", 0),
            lower_bound=d.get("lower_bound"),
            upper_bound=d.get("upper_bound"),
            column_size_bytes=d.get("column_size_bytes", 0),
            sum=d.get("sum"),
            zero_count=d.get("zero_count"),
            true_count=d.get("true_count"),
        )


@dataclass
class DataFileEntry:
    file_path: str
    partition_key: str
    record_count: int
    file_size_bytes: int
    column_stats: list[ColumnStats] = field(default_factory=list)
    sketch_sidecar_path: Optional[str] = None

    def __post_init__(self) -> None:
        self._by_id = {s.column_id: s for s in self.column_stats}

    def stats_for(self, column_id: int) -> Optional[ColumnStats]:
        return self._by_id.get(column_id)

    def check(self, cap: int = STATS_COLUMN_CAP) -> None:
        if len(self.column_stats) > cap:
            raise ValueError(f"{self.file_path}: {len(self.column_stats)} stats columns exceeds cap {cap}")
        for s in self.column_stats:
            if s.value_count != self.record_count:
                raise ValueError(f"{self.file_path}: value_count of column {s.column_id} != record_count")
            s.check()

    def to_dict(self) -> dict:
        return {
            "content": "data",
            "file_path": self.file_path,
            "partition_key": self.partition_key,
            "record_count": self.record_count,
            "file_size_bytes": self.file_size_bytes,
            "column_stats": [s.to_dict() for s in self.column_stats],
            "sketch_sidecar_path": self.sketch_sidecar_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DataFileEntry":
        return cls(
            file_path=d["file_path"],
            partition_key=d["partition_key"],
            record_count=d["record_count"],
            file_size_bytes=d["file_size_bytes"],
            column_stats=[ColumnStats.from_dict(s) for s in d["column_stats"]],
            sketch_sidecar_path=d.get("sketch_sidecar_path"),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DataFileEntry):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass
class DeleteFileEntry:
    file_path: str
    partition_key: str
    delete_count: int
    target_files: list[tuple[str, list[int]]] = field(default_factory=list)

    def pairs(self) -> Iterable[tuple[str, int]]:
        for path, positions in self.target_files:
            for p in positions:
                yield path, p

    def restricted_to(self, live_paths: set[str]) -> Optional["DeleteFileEntry"]:
        """Drop targets no longer live; None when nothing remains."""
        targets = [(p, pos) for p, pos in self.target_files if p in live_paths]
        if not targets:
            return None
        if len(targets) == len(self.target_files):
            return self
        return DeleteFileEntry(self.file_path, self.partition_key, sum(len(p) for _, p in targets), targets)

    def to_dict(self) -> dict:
        return {
            "content": "position_deletes",
            "file_path": self.file_path,
            "partition_key": self.partition_key,
            "delete_count": self.delete_count,
            "target_files": [[p, list(pos)] for p, pos in self.target_files],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeleteFileEntry":
        return cls(
            d["file_path"], d["partition_key"], d["delete_count"], [(p, list(pos)) for p, pos in d["target_files"]]
        )


@dataclass
class Snapshot:
    snapshot_id: int
    parent_id: Optional[int]
    commit_ts: int
    writer_identity: str
    operation: Operation
    manifest_path: str
    summary: dict[str, str] = field(default_factory=dict)

    @property
    def maintenance(self) -> bool:
        return Operation(self.operation).maintenance

    def to_dict(self) -> dict:
        return {
            "snapshot_id": self.snapshot_id,
            "parent_id": self.parent_id,
            "commit_ts": self.commit_ts,
            "writer_identity": self.writer_identity,
            "operation": Operation(self.operation).value,
            "manifest_path": self.manifest_path,
            "summary": dict(self.summary),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Snapshot":
        return cls(
            d["snapshot_id"],
            d.get("parent_id"),
            d["commit_ts"],
            d["writer_identity"],
            Operation(d["operation"]),
            d["manifest_path"],
            {str(k): str(v) for k, v in d.get("summary", {}).items()},
        )


@dataclass
class Constraint:
    constraint_id: str
    expression: str
    scope: str = "table"  # "table" (whole live set) or "delta" (this commit's files)

    def to_dict(self) -> dict:
        return {"constraint_id": self.constraint_id, "expression": self.expression, "scope": self.scope}

    @classmethod
    def from_dict(cls, d: dict) -> "Constraint":
        return cls(d["constraint_id"], d["expression"], d.get("scope", "table"))


@dataclass
class TableMetadata:
    table_name: str
    schema: list[ColumnSchema]
    stats_priority: list[int] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    current_snapshot_id: Optional[int] = None
    snapshot_log: list[Snapshot] = field(default_factory=list)

    def __post_init__(self) -> None:
        validate_schema(self.schema)
        if not self.stats_priority:
            self.stats_priority = [c.column_id for c in self.schema[:STATS_COLUMN_CAP]]
        ids = {c.column_id for c in self.schema}
        if not set(self.stats_priority) <= ids:
            raise SchemaError("stats_priority references unknown columns")
        if len(self.stats_priority) > STATS_COLUMN_CAP:
            raise SchemaError(f"stats_priority longer than {STATS_COLUMN_CAP}")

    def column(self, name: str) -> ColumnSchema:
        for c in self.schema:
            if c.name == name:
                return c
        raise UnknownColumn(name)

    def column_by_id(self, column_id: int) -> ColumnSchema:
        for c in self.schema:
            if c.column_id == column_id:
                return c
        raise KeyError(column_id)

    def stats_columns(self) -> list[ColumnSchema]:
        by_id = {c.column_id: c for c in self.schema}
        return [by_id[i] for i in self.stats_priority]

    def snapshot(self, snapshot_id: int) -> Snapshot:
        for s in self.snapshot_log:
            if s.snapshot_id == snapshot_id:
                return s
        raise UnknownSnapshot(snapshot_id)

    def to_dict(self) -> dict:
        return {
            "table_name": self.table_name,
            "schema": [c.to_dict() for c in self.schema],
            "stats_priority": list(self.stats_priority),
            "constraints": [c.to_dict() for c in self.constraints],
            "current_snapshot_id": self.current_snapshot_id,
        }


# -- aggregation ------------------------------------------------------------


@dataclass
class AggregatedColumnStats:
    column_id: int
    file_count: int = 0
    record_count: int = 0
    value_count: int = 0
    null_count: int = 0
    nan_count: int = 0
    lower_bound: Any = None
    upper_bound: Any = None
    # a file had values but no representable upper bound (string truncation overflow)
    upper_unbounded: bool = False
    column_size_bytes: int = 0
    sum: Optional[float] = None
    zero_count: Optional[int] = None
    true_count: Optional[int] = None

    @property
    def non_null(self) -> int:
        return self.value_count - self.null_count


def aggregate_stats(entries: Sequence[DataFileEntry], column_id: int) -> AggregatedColumnStats:
    """Combine per-file statistics of one column. Result is independent of entry order."""
    agg = AggregatedColumnStats(column_id)
    stats = []
    for e in entries:
        s = e.stats_for(column_id)
        if s is None:
            raise MissingStats(column_id, e.file_path)
        stats.append(s)
        agg.record_count += e.record_count
    agg.file_count = len(stats)
    agg.value_count = sum(s.value_count for s in stats)
    agg.null_count = sum(s.null_count for s in stats)
    agg.nan_count = sum(s.nan_count for s in stats)
    agg.column_size_bytes = sum(s.column_size_bytes for s in stats)
    lowers = [s.lower_bound for s in stats if s.lower_bound is not None]
    uppers = [s.upper_bound for s in stats if s.upper_bound is not None]
    agg.lower_bound = min(lowers) if lowers else None
    agg.upper_bound = max(uppers) if uppers else None
    agg.upper_unbounded = any(
        s.upper_bound is None and s.lower_bound is not None for s in stats
    )
    if agg.upper_unbounded:
        agg.upper_bound = None
    if stats and all(s.sum is not None for s in stats):
        agg.sum = math.fsum(s.sum for s in stats)
    if stats and all(s.zero_count is not None for s in stats):
        agg.zero_count = sum(s.zero_count for s in stats)
    if stats and all(s.true_count is not None for s in stats):
        agg.true_count = sum(s.true_count for s in stats)
    return agg


def corrected_record_count(entries: Sequence[DataFileEntry], deletes: Sequence[DeleteFileEntry]) -> int:
    """Live row count under merge-on-read: base rows minus positional deletes."""
    return sum(e.record_count for e in entries) - sum(d.delete_count for d in deletes)


# -- table directory --------------------------------------------------------


def _now_micros() -> int:
    return time.time_ns() // 1000


@lru_cache(maxsize=256)
def _read_manifest_cached(path: str, mtime_ns: int) -> tuple[tuple[DataFileEntry, ...], tuple[DeleteFileEntry, ...]]:
    data: list[DataFileEntry] = []
    deletes: list[DeleteFileEntry] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            d = json.loads(line)
            if d.get("content") == "position_deletes":
                deletes.append(DeleteFileEntry.from_dict(d))
            else:
                data.append(DataFileEntry.from_dict(d))
    return tuple(data), tuple(deletes)


class Table:
    """A table directory plus its loaded metadata.

    ``clock`` returns the commit time in microseconds and ``id_factory``
    names new files; both are injectable so generated tables are
    reproducible byte for byte.
    """

    def __init__(
        self,
        path: str | Path,
        metadata: TableMetadata,
        clock: Callable[[], int] = _now_micros,
        id_factory: Callable[[], str] = lambda: uuid.uuid4().hex,
    ) -> None:
        self.path = Path(path)
        self.metadata = metadata
        self.clock = clock
        self.id_factory = id_factory
        self.listeners: list[Callable[[Any], None]] = []

    # paths
    @property
    def metadata_dir(self) -> Path:
        return self.path / "metadata"

    @property
    def data_dir(self) -> Path:
        return self.path / "data"

    @property
    def deletes_dir(self) -> Path:
        return self.path / "deletes"

    @property
    def sketches_dir(self) -> Path:
        return self.path / "sketches"

    def resolve(self, relative: str) -> Path:
        return self.path / relative

    @property
    def name(self) -> str:
        return self.metadata.table_name

    @property
    def schema(self) -> list[ColumnSchema]:
        return self.metadata.schema

    # lifecycle
    @classmethod
    def create(
        cls,
        path: str | Path,
        schema: Sequence[ColumnSchema],
        name: Optional[str] = None,
        stats_priority: Optional[Sequence[int]] = None,
        **kwargs: Any,
    ) -> "Table":
        path = Path(path)
        if (path / "metadata" / "table.json").exists():
            raise FileExistsError(f"table already exists at {path}")
        meta = TableMetadata(name or path.name, list(schema), list(stats_priority or []))
        for sub in ("metadata", "data", "deletes", "sketches"):
            (path / sub).mkdir(parents=True, exist_ok=True)
        (path / "metadata" / "snapshots.jsonl").touch()
        table = cls(path, meta, **kwargs)
        table.write_table_json(meta)
        return table

    @classmethod
    def load(cls, path: str | Path, **kwargs: Any) -> "Table":
        path = Path(path)
        meta = read_table_metadata(path)
        return cls(path, meta, **kwargs)

    def refresh(self) -> None:
        self.metadata = read_table_metadata(self.path)

    def write_table_json(self, meta: TableMetadata) -> None:
        """Atomically replace table.json (the current-snapshot pointer)."""
        target = self.metadata_dir / "table.json"
        tmp = self.metadata_dir / f".table.json.{os.getpid()}.tmp"
        tmp.write_text(json.dumps(meta.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")
        os.replace(tmp, target)

    # snapshots / manifests
    def current_snapshot(self) -> Optional[Snapshot]:
        sid = self.metadata.current_snapshot_id
        return None if sid is None else self.metadata.snapshot(sid)

    def manifest(self, snapshot_id: Optional[int]) -> tuple[tuple[DataFileEntry, ...], tuple[DeleteFileEntry, ...]]:
        if snapshot_id is None:
            return (), ()
        snap = self.metadata.snapshot(snapshot_id)
        path = self.resolve(snap.manifest_path)
        return _read_manifest_cached(str(path), path.stat().st_mtime_ns)

    def partitions(self, snapshot_id: Optional[int] = None) -> list[str]:
        data, _ = live_files(self, snapshot_id)
        return sorted({e.partition_key for e in data})


def read_table_metadata(path: Path) -> TableMetadata:
    meta_dir = path / "metadata"
    d = json.loads((meta_dir / "table.json").read_text(encoding="utf-8"))
    snapshots: dict[int, Snapshot] = {}
    log_path = meta_dir / "snapshots.jsonl"
    if log_path.exists():
        with open(log_path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    s = Snapshot.from_dict(json.loads(line))
                    snapshots[s.snapshot_id] = s
    # Walk the parent chain from the pointer; records of failed publishes are ignored.
    chain: list[Snapshot] = []
    sid = d.get("current_snapshot_id")
    while sid is not None:
        s = snapshots[sid]
        chain.append(s)
        sid = s.parent_id
    chain.reverse()
    return TableMetadata(
        table_name=d["table_name"],
        schema=[ColumnSchema.from_dict(c) for c in d["schema"]],
        stats_priority=list(d.get("stats_priority", [])),
        constraints=[Constraint.from_dict(c) for c in d.get("constraints", [])],
        current_snapshot_id=d.get("current_snapshot_id"),
        snapshot_log=chain,
    )


def live_files(
    table: Table, snapshot_id: Optional[int] = None, partition_filter: Optional[str] = None
) -> tuple[list[DataFileEntry], list[DeleteFileEntry]]:
    """Data and delete files visible at ``snapshot_id`` (default: current)."""
    if snapshot_id is None:
        snapshot_id = table.metadata.current_snapshot_id
    data, deletes = table.manifest(snapshot_id)
    if partition_filter is None:
        return list(data), list(deletes)
    return (
        [e for e in data if e.partition_key == partition_filter],
        [d for d in deletes if d.partition_key == partition_filter],
    )


def write_manifest(path: Path, data: Sequence[DataFileEntry], deletes: Sequence[DeleteFileEntry]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for e in data:
            f.write(_dumps(e.to_dict()) + "\n")
        for d in deletes:
            f.write(_dumps(d.to_dict()) + "\n")
    os.replace(tmp, path)


def append_snapshot(path: Path, snapshot: Snapshot) -> None:
    with open(path, "a", encoding="utf-8") as f:
        f.write(_dumps(snapshot.to_dict()) + "\n")
