"""Commit-event consumers: per-partition time series and anomaly detectors.

Every commit produces a ``CommitEvent`` carrying per-partition deltas that
the writer derived from manifest entries and sketch sidecars. ``Observer``
turns those into two kinds of series:

* arrival series, one point per user commit (record count, gap since the
  previous commit, readiness), and
* column series, one point per stats column (null fraction, min, max, sum,
  distinct estimate).

Series exist per partition and as a table-level rollup (partition ``*``).
Maintenance commits never enter arrival series; they do enter column series
but flagged, and flagged points are ignored by the detectors.
"""

from __future__ import annotations

import bisect
import configparser
import json
import logging
import statistics
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .fileio import zero_scan
from .writer import CommitEvent

log = logging.getLogger(__name__)

ROLLUP = "*"
MICROS_PER_SECOND = 1_000_000
DAY_MICROS = 86_400 * MICROS_PER_SECOND


class AlertKind(str, Enum):
    ROW_COUNT_ANOMALY = "ROW_COUNT_ANOMALY"
    NULL_DRIFT = "NULL_DRIFT"
    RANGE_VIOLATION = "RANGE_VIOLATION"
    ARRIVAL_DEVIATION = "ARRIVAL_DEVIATION"
    FRESHNESS_GAP = "FRESHNESS_GAP"
    OVER_PARTITIONING = "OVER_PARTITIONING"


@dataclass
class DetectorConfig:
    min_history: int = 8
    window: int = 28
    z_threshold: float = 3.0
    epsilon: float = 1e-9
    gap_multiplier: float = 2.0
    readiness_window_seconds: float = 3600.0
    partitions_per_day: int = 1000
    small_file_bytes: int = 8 * 1024 * 1024
    # column name -> (low, high); either end may be None
    ranges: dict[str, tuple[Optional[float], Optional[float]]] = field(default_factory=dict)
    enabled: frozenset = frozenset(AlertKind)

    def is_on(self, kind: AlertKind) -> bool:
        return kind in self.enabled

    @classmethod
    def disabled(cls) -> "DetectorConfig":
        return cls(enabled=frozenset())


def load_config(path: str | Path | None = None, overrides: Optional[dict] = None) -> DetectorConfig:
    """Read an INI file with a ``[detectors]`` and optional ``[ranges]`` section."""
    cfg = DetectorConfig()
    values: dict[str, Any] = {}
    if path is not None:
        parser = configparser.ConfigParser()
        if not parser.read(path, encoding="utf-8"):
            raise FileNotFoundError(path)
        if parser.has_section("detectors"):
            values.update(parser["detectors"])
        if parser.has_section("ranges"):
            for col, raw in parser["ranges"].items():
                lo, _, hi = raw.partition(",")
                cfg.ranges[col] = (_opt_float(lo), _opt_float(hi))
    values.update(overrides or {})
    for key, raw in values.items():
        key = key.replace("-", "_")
        if key == "enabled":
            names = [s.strip().upper() for s in str(raw).split(",") if s.strip()]
            cfg.enabled = frozenset() if names == ["NONE"] else frozenset(AlertKind(n) for n in names)
        elif key in ("min_history", "window", "partitions_per_day", "small_file_bytes"):
            setattr(cfg, key, int(raw))
        elif key in ("z_threshold", "epsilon", "gap_multiplier", "readiness_window_seconds"):
            setattr(cfg, key, float(raw))
        else:
            raise ValueError(f"unknown detector setting {key!r}")
    return cfg


def _opt_float(text: str) -> Optional[float]:
    text = text.strip()
    return float(text) if text else None


@dataclass
class SeriesPoint:
    table: str
    partition_key: str
    column_id: Optional[int]
    snapshot_id: int
    commit_ts: int
    metrics: dict[str, Any]
    maintenance: bool = False
    out_of_order: bool = False
    ready: bool = True

    @property
    def is_arrival(self) -> bool:
        return self.column_id is None

    def to_dict(self) -> dict:
        return {
            "table": self.table,
            "partition_key": self.partition_key,
            "column_id": self.column_id,
            "snapshot_id": self.snapshot_id,
            "commit_ts": self.commit_ts,
            "metrics": dict(self.metrics),
            "maintenance": self.maintenance,
            "out_of_order": self.out_of_order,
            "ready": self.ready,
        }


@dataclass
class Alert:
    kind: AlertKind
    table: str
    partition: str
    column: Optional[str]
    snapshot_id: Optional[int]
    score: float
    threshold: float
    details: str
    commit_ts: Optional[int] = None

    @property
    def key(self) -> tuple:
        return (AlertKind(self.kind).value, self.table, self.partition, self.column, self.snapshot_id)

    def to_dict(self) -> dict:
        return {
            "kind": AlertKind(self.kind).value,
            "table": self.table,
            "partition": self.partition,
            "column": self.column,
            "snapshot_id": self.snapshot_id,
            "commit_ts": self.commit_ts,
            "score": self.score,
            "threshold": self.threshold,
            "details": self.details,
        }


# -- detectors --------------------------------------------------------------


def robust_z(x: float, history: Sequence[float], epsilon: float = 1e-9) -> float:
    med = statistics.median(history)
    mad = statistics.median(abs(h - med) for h in history)
    return (x - med) / (1.4826 * mad + epsilon)


_STAT_METRIC = {AlertKind.ROW_COUNT_ANOMALY: "record_count", AlertKind.NULL_DRIFT: "null_fraction"}


def detect(
    series: Sequence[SeriesPoint],
    config: DetectorConfig,
    column: Optional[str] = None,
    last_only: bool = False,
    skipped: Optional[list] = None,
) -> list[Alert]:
    """Alerts for the points of one series (every point, or only the newest).

    Arrival series are checked for row-count anomalies and arrival
    deviations, column series for null drift and range violations.
    """
    usable = [p for p in series if not p.maintenance]
    if not usable:
        return []
    arrival = usable[0].is_arrival
    alerts: list[Alert] = []
    start = len(usable) - 1 if last_only else 0
    for i in range(start, len(usable)):
        point, history = usable[i], usable[max(0, i - config.window) : i]
        if arrival:
            alerts += _check_z(AlertKind.ROW_COUNT_ANOMALY, point, history, config, column, skipped)
            alerts += _check_arrival(point, history, config, skipped)
        else:
            alerts += _check_z(AlertKind.NULL_DRIFT, point, history, config, column, skipped)
            alerts += _check_range(point, config, column)
    return alerts


def _check_z(kind, point, history, config, column, skipped) -> list[Alert]:
    if not config.is_on(kind):
        return []
    metric = _STAT_METRIC[kind]
    x = point.metrics.get(metric)
    values = [h.metrics.get(metric) for h in history]
    values = [v for v in values if v is not None]
    if x is None:
        return []
    if len(values) < config.min_history:
        if skipped is not None:
            skipped.append(("InsufficientHistory", kind.value, point.partition_key, column, point.snapshot_id))
        return []
    z = robust_z(x, values, config.epsilon)
    if abs(z) <= config.z_threshold:
        return []
    med = statistics.median(values)
    return [
        Alert(
            kind,
            point.table,
            point.partition_key,
            column,
            point.snapshot_id,
            float(z),
            config.z_threshold,
            f"{metric}={x:.6g} vs trailing median {med:.6g} over {len(values)} points (|z|={abs(z):.3g} > {config.z_threshold:g})",
            point.commit_ts,
        )
    ]


def _gaps(points: Sequence[SeriesPoint]) -> list[float]:
    return [p.metrics["inter_commit_gap_seconds"] for p in points if p.metrics.get("inter_commit_gap_seconds") is not None]


def _check_arrival(point, history, config, skipped) -> list[Alert]:
    kind = AlertKind.ARRIVAL_DEVIATION
    if not config.is_on(kind):
        return []
    gap = point.metrics.get("inter_commit_gap_seconds")
    gaps = _gaps(history)
    if gap is None:
        return []
    if len(gaps) < config.min_history:
        if skipped is not None:
            skipped.append(("InsufficientHistory", kind.value, point.partition_key, None, point.snapshot_id))
        return []
    limit = config.gap_multiplier * statistics.median(gaps)
    if gap <= limit:
        return []
    return [
        Alert(
            kind,
            point.table,
            point.partition_key,
            None,
            point.snapshot_id,
            gap / limit if limit else float("inf"),
            config.gap_multiplier,
            f"gap {gap:.0f}s exceeds {config.gap_multiplier:g} x trailing median gap ({limit:.0f}s)",
            point.commit_ts,
        )
    ]


def _check_range(point, config, column) -> list[Alert]:
    kind = AlertKind.RANGE_VIOLATION
    if not config.is_on(kind) or column not in config.ranges:
        return []
    lo, hi = config.ranges[column]
    mn, mx = point.metrics.get("min"), point.metrics.get("max")
    breaches = []
    if lo is not None and isinstance(mn, (int, float)) and mn < lo:
        breaches.append((lo - mn, f"min {mn!r} < {lo!r}"))
    if hi is not None and isinstance(mx, (int, float)) and mx > hi:
        breaches.append((mx - hi, f"max {mx!r} > {hi!r}"))
    if not breaches:
        return []
    return [
        Alert(
            kind,
            point.table,
            point.partition_key,
            column,
            point.snapshot_id,
            float(max(b for b, _ in breaches)),
            0.0,
            "; ".join(d for _, d in breaches) + f" (range [{lo}, {hi}])",
            point.commit_ts,
        )
    ]


def freshness_alert(
    arrival: Sequence[SeriesPoint], now: int, config: DetectorConfig, table: str, partition: str = ROLLUP
) -> Optional[Alert]:
    """FRESHNESS_GAP when time since the last user commit exceeds the arrival bound."""
    if not config.is_on(AlertKind.FRESHNESS_GAP):
        return None
    usable = [p for p in arrival if not p.maintenance]
    if not usable:
        return None
    gaps = _gaps(usable[-config.window :])
    if len(gaps) < config.min_history:
        return None
    last = usable[-1]
    elapsed = (now - last.commit_ts) / MICROS_PER_SECOND
    limit = config.gap_multiplier * statistics.median(gaps)
    if elapsed <= limit:
        return None
    return Alert(
        AlertKind.FRESHNESS_GAP,
        table,
        partition,
        None,
        last.snapshot_id,
        elapsed / limit if limit else float("inf"),
        config.gap_multiplier,
        f"no user commit for {elapsed:.0f}s; bound is {config.gap_multiplier:g} x median gap ({limit:.0f}s)",
        last.commit_ts,
    )


# -- the observer -------------------------------------------------------------


def _insert(series: list[SeriesPoint], point: SeriesPoint) -> None:
    if series and point.commit_ts < series[-1].commit_ts:
        point.out_of_order = True
        keys = [p.commit_ts for p in series]
        series.insert(bisect.bisect_right(keys, point.commit_ts), point)
    else:
        series.append(point)


class Observer:
    """Consumes commit events of one table and keeps series plus raised alerts."""

    def __init__(self, table_name: str, config: Optional[DetectorConfig] = None, column_names: Optional[dict] = None):
        self.table = table_name
        self.config = config or DetectorConfig()
        self.column_names: dict[int, str] = dict(column_names or {})
        self.series: dict[tuple[str, Optional[int]], list[SeriesPoint]] = {}
        self.alerts: list[Alert] = []
        self.skipped: list[tuple] = []
        self._last_write: dict[str, int] = {}
        self._partition_first_seen: dict[str, int] = {}
        self._file_sizes: list[tuple[int, int]] = []
        self._overpartition_days: set[int] = set()

    @classmethod
    def for_table(cls, table, config: Optional[DetectorConfig] = None) -> "Observer":
        names = {c.column_id: c.name for c in table.schema}
        return cls(table.name, config, names)

    def arrival(self, partition: str = ROLLUP) -> list[SeriesPoint]:
        return self.series.get((partition, None), [])

    def column_series(self, column_id: int, partition: str = ROLLUP) -> list[SeriesPoint]:
        return self.series.get((partition, column_id), [])

    @property
    def multi_partition(self) -> bool:
        return len(self._partition_first_seen) > 1

    def ingest_event(self, event: CommitEvent | dict) -> list[SeriesPoint]:
        """Add the event's points and run detectors on them; returns per-partition points."""
        if isinstance(event, dict):
            event = CommitEvent.from_dict(event)
        with zero_scan():
            return self._ingest(event)

    def _ingest(self, event: CommitEvent) -> list[SeriesPoint]:
        maintenance = event.maintenance
        out: list[SeriesPoint] = []
        new_alerts: list[Alert] = []
        touched_series: list[tuple[str, Optional[int]]] = []
        total_rows = 0
        for key in sorted(event.partitions):
            delta = event.partitions[key]
            self._partition_first_seen.setdefault(key, event.commit_ts)
            if not maintenance:
                point = self._arrival_point(event, key, delta.record_count)
                _insert(self.series.setdefault((key, None), []), point)
                out.append(point)
                touched_series.append((key, None))
                total_rows += delta.record_count
                self._file_sizes += [(event.commit_ts, s) for s in delta.file_sizes]
            for cid in sorted(delta.columns):
                point = self._column_point(event, key, cid, delta.columns[cid], maintenance)
                _insert(self.series.setdefault((key, cid), []), point)
                out.append(point)
                touched_series.append((key, cid))
        if not maintenance and event.partitions:
            _insert(self.series.setdefault((ROLLUP, None), []), self._arrival_point(event, ROLLUP, total_rows))
            touched_series.append((ROLLUP, None))
        for cid, summary in self._rollup_columns(event).items():
            _insert(self.series.setdefault((ROLLUP, cid), []), self._column_point(event, ROLLUP, cid, summary, maintenance))
            touched_series.append((ROLLUP, cid))

        if not maintenance:
            for partition, cid in touched_series:
                new_alerts += self._detect_latest(partition, cid)
            new_alerts += self._check_over_partitioning(event.commit_ts)
        self.alerts += new_alerts
        return out

    def _detect_latest(self, partition: str, cid: Optional[int]) -> list[Alert]:
        series = self.series[(partition, cid)]
        column = self.column_names.get(cid, str(cid)) if cid is not None else None
        if cid is None and partition != ROLLUP:
            # per-partition arrival: count anomalies only; timing lives on the rollup
            cfg = _without(self.config, AlertKind.ARRIVAL_DEVIATION)
        elif partition == ROLLUP and cid is None and not self.multi_partition:
            # a single-partition rollup duplicates the partition's count series
            cfg = _only(self.config, AlertKind.ARRIVAL_DEVIATION)
        else:
            cfg = self.config
        if not series or series[-1].maintenance:
            return []
        return detect(series, cfg, column, last_only=True, skipped=self.skipped)

    def _arrival_point(self, event: CommitEvent, key: str, rows: int) -> SeriesPoint:
        prev = [p for p in self.series.get((key, None), []) if p.commit_ts <= event.commit_ts]
        gap = (event.commit_ts - prev[-1].commit_ts) / MICROS_PER_SECOND if prev else None
        ready = True
        if key != ROLLUP:
            last = self._last_write.get(key)
            if last is not None and event.commit_ts - last < self.config.readiness_window_seconds * MICROS_PER_SECOND:
                ready = False
            self._last_write[key] = event.commit_ts
        metrics = {"record_count": rows, "inter_commit_gap_seconds": gap, "ready": ready}
        return SeriesPoint(self.table, key, None, event.snapshot_id, event.commit_ts, metrics, False, False, ready)

    def _column_point(self, event: CommitEvent, key: str, cid: int, s: dict, maintenance: bool) -> SeriesPoint:
        vc = s.get("value_count") or 0
        metrics = {
            "record_count": vc,
            "null_fraction": (s["null_count"] / vc) if vc else None,
            "min": s.get("min"),
            "max": s.get("max"),
            "sum": s.get("sum"),
            "distinct_estimate": s.get("distinct_estimate"),
        }
        return SeriesPoint(self.table, key, cid, event.snapshot_id, event.commit_ts, metrics, maintenance)

    def _rollup_columns(self, event: CommitEvent) -> dict[int, dict]:
        if not self.multi_partition:
            return {}
        merged: dict[int, dict] = {}
        for delta in event.partitions.values():
            for cid, s in delta.columns.items():
                m = merged.setdefault(cid, {"value_count": 0, "null_count": 0, "min": None, "max": None, "sum": 0.0})
                m["value_count"] += s.get("value_count") or 0
                m["null_count"] += s.get("null_count") or 0
                for k, pick in (("min", min), ("max", max)):
                    if s.get(k) is not None:
                        m[k] = s[k] if m[k] is None else pick(m[k], s[k])
                m["sum"] = None if m["sum"] is None or s.get("sum") is None else m["sum"] + s["sum"]
        return merged

    def _check_over_partitioning(self, now: int) -> list[Alert]:
        kind = AlertKind.OVER_PARTITIONING
        if not self.config.is_on(kind):
            return []
        day = now // DAY_MICROS
        if day in self._overpartition_days:
            return []
        recent = [k for k, ts in self._partition_first_seen.items() if now - ts < DAY_MICROS]
        if len(recent) <= self.config.partitions_per_day:
            return []
        sizes = [s for ts, s in self._file_sizes if now - ts < DAY_MICROS]
        median_size = statistics.median(sizes) if sizes else 0
        if median_size >= self.config.small_file_bytes:
            return []
        self._overpartition_days.add(day)
        return [
            Alert(
                kind,
                self.table,
                ROLLUP,
                None,
                None,
                len(recent) / self.config.partitions_per_day,
                float(self.config.partitions_per_day),
                f"{len(recent)} new partitions in 24h with median file size {median_size:.0f} bytes",
                now,
            )
        ]

    def sweep(self, now: int) -> list[Alert]:
        """Clock-driven freshness check; returns alerts currently firing (new ones are recorded)."""
        firing = []
        alert = freshness_alert(self.arrival(ROLLUP), now, self.config, self.table)
        if alert is not None:
            firing.append(alert)
            if alert.key not in {a.key for a in self.alerts}:
                self.alerts.append(alert)
        return firing


def _only(config: DetectorConfig, *kinds: AlertKind) -> DetectorConfig:
    return _replace_enabled(config, config.enabled & set(kinds))


def _without(config: DetectorConfig, *kinds: AlertKind) -> DetectorConfig:
    return _replace_enabled(config, config.enabled - set(kinds))


def _replace_enabled(config: DetectorConfig, enabled) -> DetectorConfig:
    return replace(config, enabled=frozenset(enabled))


# -- table-level helpers ----------------------------------------------------


def read_events(table) -> list[CommitEvent]:
    path = table.metadata_dir / "events.jsonl"
    if not path.exists():
        return []
    with open(path, encoding="utf-8") as f:
        return [CommitEvent.from_dict(json.loads(line)) for line in f if line.strip()]


def observe_table(table, config: Optional[DetectorConfig] = None, now: Optional[int] = None, sweep: bool = False):
    """Replay the table's event log through a fresh observer.

    Returns ``(observer, new_alerts)`` where ``new_alerts`` are alerts not
    yet present in ``metadata/alerts.jsonl``; those are appended to it.
    """
    obs = Observer.for_table(table, config)
    for event in read_events(table):
        obs.ingest_event(event)
    if sweep:
        obs.sweep(table.clock() if now is None else now)
    path = table.metadata_dir / "alerts.jsonl"
    known = set()
    if path.exists():
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    d = json.loads(line)
                    known.add((d["kind"], d["table"], d["partition"], d["column"], d["snapshot_id"]))
    new = [a for a in obs.alerts if a.key not in known]
    if new:
        with open(path, "a", encoding="utf-8") as f:
            for a in new:
                f.write(json.dumps(a.to_dict(), sort_keys=True) + "\n")
    return obs, new


def alert_kinds(alerts: Iterable[Alert]) -> list[str]:
    return [AlertKind(a.kind).value for a in alerts]
