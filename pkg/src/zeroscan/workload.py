"""Deterministic workloads: generated tables, rule corpora and incident replays.

Everything is driven by a seeded ``numpy.random.Generator``; file names and
commit timestamps come from counters, so the same seed produces the same
table directory byte for byte.
"""

from __future__ import annotations

import configparser
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import dsl
from .errors import UnknownScenario
from .model import ColumnSchema, Operation, Table, build_schema, live_files
from .observe import DetectorConfig, Observer
from .rules import Evaluator, Indeterminate, Rule, parse_rule
from .values import Kind
from .writer import WriteBatch, append, commit, delete_rows, overwrite

EPOCH_2024 = 1_704_067_200_000_000  # 2024-01-01T00:00:00Z in microseconds
HOUR = 3_600_000_000
DAY = 24 * HOUR


class StepClock:
    """Deterministic clock: each call advances by ``step`` unless ``now`` is set explicitly."""

    def __init__(self, start: int = EPOCH_2024, step: int = 60_000_000) -> None:
        self.now = start
        self.step = step

    def __call__(self) -> int:
        self.now += self.step
        return self.now

    def set(self, ts: int) -> None:
        # the next call returns exactly ts
        self.now = ts - self.step


def counter_ids(prefix: str) -> Callable[[], str]:
    n = 0

    def next_id() -> str:
        nonlocal n
        n += 1
        return f"{prefix}-{n:06d}"

    return next_id


# -- column profiles --------------------------------------------------------

_WORDS = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
          "kilo", "lima", "mike", "november", "oscar"]
_COUNTRIES = ["US", "IN", "BR", "GB", "DE", "FR", "CA", "MX", "JP", "NG", "AU", "ES"]


@dataclass(frozen=True)
class ColumnProfile:
    name: str
    kind: Kind
    cardinality: str  # "high", "low" or "measure"
    null_rate: float = 0.0
    make: Callable[[np.random.Generator, int, int], list] = None  # (rng, n, row_offset) -> values

    @property
    def nullable(self) -> bool:
        return self.null_rate > 0


def _ints(a: np.ndarray) -> list:
    return a.astype(np.int64).tolist()


def _floats(a: np.ndarray) -> list:
    return a.astype(np.float64).tolist()


def _pick(options: Sequence[str]) -> Callable:
    return lambda rng, n, off: [options[i] for i in rng.integers(0, len(options), n)]


def _comment(rng: np.random.Generator, n: int, off: int) -> list:
    # mixes short words with long phrases so string bounds get truncated
    base = rng.integers(0, len(_WORDS), n)
    long = rng.random(n) < 0.2
    return [
        (_WORDS[b] + " " + " ".join(_WORDS[(b + j) % len(_WORDS)] for j in range(1, 5))) if lg else _WORDS[b]
        for b, lg in zip(base.tolist(), long.tolist())
    ]


DEFAULT_PROFILE: list[ColumnProfile] = [
    ColumnProfile("id", Kind.INT64, "high", 0.0, lambda rng, n, off: list(range(off + 1, off + n + 1))),
    ColumnProfile("user_id", Kind.INT64, "high", 0.0, lambda rng, n, off: _ints(rng.integers(1, 400_000, n))),
    ColumnProfile("session", Kind.STRING, "high", 0.0,
                  lambda rng, n, off: [f"s{v:08x}" for v in rng.integers(0, 1 << 40, n).tolist()]),
    ColumnProfile("country", Kind.STRING, "low", 0.0, _pick(_COUNTRIES)),
    ColumnProfile("device", Kind.STRING, "low", 0.01, _pick(["ios", "android", "web", "tv", "other"])),
    ColumnProfile("event_ts", Kind.TIMESTAMP, "high", 0.0,
                  lambda rng, n, off: _ints(EPOCH_2024 + rng.integers(0, 30 * DAY, n))),
    ColumnProfile("amount", Kind.FLOAT64, "measure", 0.02, lambda rng, n, off: _floats(np.round(rng.lognormal(3, 1, n), 2))),
    ColumnProfile("latency", Kind.FLOAT64, "measure", 0.0, lambda rng, n, off: _floats(rng.exponential(120.0, n))),
    ColumnProfile("score", Kind.FLOAT64, "measure", 0.0, lambda rng, n, off: _floats(rng.uniform(0, 1000, n))),
    ColumnProfile("quantity", Kind.INT64, "low", 0.05, lambda rng, n, off: _ints(rng.integers(0, 15, n))),
    ColumnProfile("is_active", Kind.BOOL, "low", 0.0, lambda rng, n, off: (rng.random(n) < 0.9).tolist()),
    ColumnProfile("is_test", Kind.BOOL, "low", 0.1, lambda rng, n, off: (rng.random(n) < 0.02).tolist()),
    ColumnProfile("page_id", Kind.INT64, "measure", 0.0, lambda rng, n, off: _ints(rng.zipf(1.3, n) % 50_000)),
    ColumnProfile("item_id", Kind.INT64, "high", 0.0, lambda rng, n, off: _ints(rng.integers(0, 2_000_000, n))),
    ColumnProfile("category", Kind.STRING, "low", 0.0, _pick(_WORDS)),
    ColumnProfile("region_code", Kind.INT64, "low", 0.0, lambda rng, n, off: _ints(rng.integers(0, 10, n))),
    ColumnProfile("ratio", Kind.FLOAT64, "measure", 0.0, lambda rng, n, off: _floats(rng.normal(0.0, 1.0, n))),
    ColumnProfile("comment", Kind.STRING, "low", 0.3, _comment),
    ColumnProfile("created_ts", Kind.TIMESTAMP, "measure", 0.0,
                  lambda rng, n, off: _ints(EPOCH_2024 - rng.integers(0, 365, n) * DAY)),
    ColumnProfile("balance", Kind.INT64, "measure", 0.01, lambda rng, n, off: _ints(rng.integers(-5_000, 100_000, n))),
]


def _extra_profile(i: int) -> ColumnProfile:
    return ColumnProfile(f"m{i}", Kind.FLOAT64, "measure", 0.01, lambda rng, n, off: _floats(rng.normal(50, 10, n)))


@dataclass
class TableSpec:
    rows: int = 10_000
    files: int = 10
    columns: int = 20
    partitions: int = 1
    commits_per_partition: int = 1
    null_scale: float = 1.0  # multiplies every profile's null rate
    name: str = "generated"

    def profiles(self) -> list[ColumnProfile]:
        out = list(DEFAULT_PROFILE[: self.columns])
        out += [_extra_profile(i) for i in range(len(out), self.columns)]
        return out

    def check(self) -> None:
        if self.files < 1 or self.rows < 0 or self.partitions < 1 or self.columns < 1 or self.commits_per_partition < 1:
            raise ValueError(f"bad table spec {self}")

    @classmethod
    def from_ini(cls, path: str | Path, section: str = "table") -> "TableSpec":
        parser = configparser.ConfigParser()
        if not parser.read(path, encoding="utf-8"):
            raise FileNotFoundError(path)
        s = parser[section]
        return cls(
            rows=s.getint("rows", cls.rows),
            files=s.getint("files", cls.files),
            columns=s.getint("columns", cls.columns),
            partitions=s.getint("partitions", cls.partitions),
            commits_per_partition=s.getint("commits_per_partition", cls.commits_per_partition),
            null_scale=s.getfloat("null_scale", cls.null_scale),
            name=s.get("name", cls.name),
        )


def profile_schema(profiles: Sequence[ColumnProfile]) -> list[ColumnSchema]:
    return build_schema([(p.name, p.kind, p.nullable) for p in profiles])


def generate_rows(
    rng: np.random.Generator, profiles: Sequence[ColumnProfile], n: int, row_offset: int = 0, null_scale: float = 1.0
) -> list[tuple]:
    cols = []
    for p in profiles:
        values = p.make(rng, n, row_offset)
        rate = min(1.0, p.null_rate * null_scale)
        if rate > 0 and n:
            mask = (rng.random(n) < rate).tolist()
            values = [None if m else v for v, m in zip(values, mask)]
        cols.append(values)
    return list(zip(*cols)) if n else []


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def partition_key(i: int) -> str:
    return f"2024-01-{i + 1:02d}" if i < 31 else f"p{i:04d}"


def generate_table(path: str | Path, spec: TableSpec, seed: int = 0) -> Table:
    """Write a table whose bytes depend only on ``spec`` and ``seed``."""
    spec.check()
    rng = np.random.default_rng(seed)
    profiles = spec.profiles()
    table = Table.create(
        path,
        profile_schema(profiles),
        name=spec.name,
        clock=StepClock(),
        id_factory=counter_ids(f"{seed:x}"),
    )
    commits = spec.partitions * spec.commits_per_partition
    rows_per_commit = _split(spec.rows, commits)
    files_per_commit = _split(spec.files, commits)
    offset = 0
    c = 0
    for p in range(spec.partitions):
        for _ in range(spec.commits_per_partition):
            n, f = rows_per_commit[c], max(1, files_per_commit[c])
            c += 1
            rows = generate_rows(rng, profiles, n, offset, spec.null_scale)
            offset += n
            if not rows:
                if c == 1 and spec.rows == 0:
                    commit(table, [], operation=Operation.APPEND)
                continue
            append(table, WriteBatch(partition_key(p), rows), max_rows_per_file=math.ceil(n / f))
    return table


def random_deletes(table: Table, rng: np.random.Generator, fraction: float, partition: Optional[str] = None) -> int:
    """Delete a random ``fraction`` of each partition's live rows (merge-on-read); returns rows deleted."""
    total = 0
    for key in table.partitions() if partition is None else [partition]:
        data, deletes = live_files(table, partition_filter=key)
        dead = {(p, i) for d in deletes for p, i in d.pairs()}
        candidates = [(e.file_path, i) for e in data for i in range(e.record_count) if (e.file_path, i) not in dead]
        k = int(len(candidates) * fraction)
        if k == 0:
            continue
        chosen = rng.choice(len(candidates), size=k, replace=False)
        positions: dict[str, list[int]] = {}
        for j in sorted(chosen.tolist()):
            path, pos = candidates[j]
            positions.setdefault(path, []).append(pos)
        delete_rows(table, key, positions)
        total += k
    return total


# -- rule corpora -----------------------------------------------------------

# consumer shares per rule category (row count, null, range, compare, counters, distinct, quantiles, scan)
CONSUMER_PROPORTIONS = {
    "row_count": 15,
    "null": 28,
    "range": 8,
    "compare": 11,
    "counter": 17,
    "distinct": 8,
    "quantile": 1,
    "scan": 12,
}
PRODUCER_PROPORTIONS = {
    "row_count": 15,
    "null": 26,
    "range": 11,
    "compare": 14,
    "counter": 8,
    "distinct": 15,
    "quantile": 1,
    "scan": 10,
}

# the example rules of the coverage table, completed where the original elides arguments
COVERAGE_EXAMPLES = [
    ("count>1000", "BASE_MANIFEST"),
    ("notNull(c,<5%)", "BASE_MANIFEST"),
    ("min(age)>=0", "BASE_MANIFEST"),
    ("compare(cnt, prev_snapshot, 10%)", "MANIFEST_COMPARE"),
    ("sum(col)>0", "COUNTER_EXT"),
    ("distinct(id)>=1000", "THETA"),
    ("median(c)<500", "KLL"),
    ("expr(a<b*1.15)", "SCAN_REQUIRED"),
]


def sample_corpus(n: int, seed: int = 0, proportions: Optional[dict[str, int]] = None) -> list[Rule]:
    """Schema-free rule texts drawn with the given category shares."""
    proportions = proportions or CONSUMER_PROPORTIONS
    rng = np.random.default_rng(seed)
    cats = list(proportions)
    weights = np.array([proportions[c] for c in cats], dtype=float)
    draws = rng.choice(len(cats), size=n, p=weights / weights.sum())
    rules = []
    for i, ci in enumerate(draws.tolist()):
        c = f"c{rng.integers(0, 20)}"
        v = int(rng.integers(1, 10_000))
        text = {
            "row_count": f"count > {v}",
            "null": f"notNull({c}, <{rng.integers(1, 20)}%)",
            "range": f"{rng.choice(['min', 'max'])}({c}) >= {v}",
            "compare": f"compare(count, {rng.choice(['prev_snapshot', 'prev_partition'])}, {rng.integers(1, 30)}%)",
            "counter": f"{rng.choice(['sum', 'mean', 'zeroCount', 'trueCount'])}({c}) > {v}",
            "distinct": f"distinct({c}) >= {v}",
            "quantile": f"{rng.choice(['median', 'iqr'])}({c}) < {v}",
            "scan": f"expr({c} < c{rng.integers(0, 20)} * 1.15)",
        }[cats[ci]]
        rules.append(parse_rule(text, rule_id=f"s{i + 1}"))
    return rules


_FACTORS = [0.5, 0.8, 0.95, 0.99, 1.01, 1.05, 1.25, 2.0]
_CMPS = [">", ">=", "<", "<="]


def _fmt(v: float) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def generate_rule_corpus(table: Table, n: int = 200, seed: int = 0, now: Optional[int] = None) -> list[Rule]:
    """Rules over ``table``'s schema with thresholds scaled from current metadata.

    Thresholds are the metadata value times a factor from ``_FACTORS`` (never
    exactly 1), so most rules are decisive; factors near 1 put sketch-tier
    thresholds inside the estimate's error band on purpose.
    """
    rng = np.random.default_rng(seed)
    ev = Evaluator(table, now=now)
    schema = table.schema
    partitions = table.partitions()
    numeric = [c for c in schema if c.kind in (Kind.INT64, Kind.FLOAT64)]
    theta_cols = [c for c in schema if c.kind in (Kind.INT64, Kind.STRING, Kind.TIMESTAMP)]
    bools = [c for c in schema if c.kind is Kind.BOOL]
    stamps = [c for c in schema if c.kind is Kind.TIMESTAMP]
    nullable = [c for c in schema if c.nullable] or list(schema)
    rules: list[Rule] = []
    attempts = 0
    while len(rules) < n and attempts < n * 20:
        attempts += 1
        partition = str(rng.choice(partitions)) if partitions and rng.random() < 0.4 else None
        form = rng.choice(
            ["count", "notnull", "range", "compare", "counter", "bool", "distinct", "quantile", "freshness", "ts", "expr"],
            p=[0.1, 0.15, 0.1, 0.1, 0.12, 0.05, 0.12, 0.12, 0.04, 0.04, 0.06],
        )
        f = float(rng.choice(_FACTORS))
        op = str(rng.choice(_CMPS))
        try:
            text = _rule_text(form, rng, ev, partition, f, op, numeric, theta_cols, bools, stamps, nullable, schema)
        except Indeterminate:
            continue
        if text is None:
            continue
        rules.append(parse_rule(text, schema, f"g{len(rules) + 1}", partition))
    return rules


def _rule_text(form, rng, ev, partition, f, op, numeric, theta_cols, bools, stamps, nullable, schema) -> Optional[str]:
    scope = ev.scope(ev.table.metadata.current_snapshot_id, partition)

    def value(term: dsl.Term) -> Any:
        v = scope.resolve(term)
        return getattr(v, "value", v)

    def pick(cols):
        return cols[int(rng.integers(0, len(cols)))] if cols else None

    if form == "count":
        return f"count {op} {_fmt(value(dsl.Term('record_count')) * f)}"
    if form == "notnull":
        c = pick(nullable)
        rows = value(dsl.Term("record_count"))
        nulls = value(dsl.Term("null_count", c.name))
        frac = nulls / rows if rows else 0.0
        return f"notNull({c.name}, <{max(frac * f, 0.001) * 100:.4g}%)"
    if form == "range":
        c = pick(numeric)
        term = str(rng.choice(["min", "max"]))
        v = value(dsl.Term(term, c.name))
        bound = v * f if v != 0 else float(rng.choice([-1.0, 1.0]))
        return f"{term}({c.name}) {op} {_fmt(bound)}"
    if form == "compare":
        metric = str(rng.choice(["count", "nullCount", "sum", "max"]))
        c = pick(numeric)
        m = "count" if metric == "count" else f"{metric}({c.name})"
        ref = str(rng.choice(["prev_snapshot", "prev_partition"]))
        tol = float(rng.choice([0.01, 0.05, 0.1, 0.25, 0.5, 1.0]))
        return f"compare({m}, {ref}, {tol * 100:g}%)"
    if form == "counter":
        c = pick(numeric)
        term = str(rng.choice(["sum", "mean", "zeroCount"]))
        canon = {"zeroCount": "zero_count"}.get(term, term)
        v = value(dsl.Term(canon, c.name))
        bound = v * f if v != 0 else 1.0
        return f"{term}({c.name}) {op} {_fmt(bound)}"
    if form == "bool":
        c = pick(bools)
        if c is None:
            return None
        v = value(dsl.Term("true_count", c.name))
        return f"trueCount({c.name}) {op} {_fmt(max(v, 1) * f)}"
    if form == "distinct":
        c = pick(theta_cols)
        v = value(dsl.Term("distinct", c.name))
        return f"distinct({c.name}) {op} {_fmt(round(v * f))}"
    if form == "quantile":
        c = pick(numeric)
        kind = str(rng.choice(["median", "percentile", "iqr"]))
        if kind == "percentile":
            p = int(rng.choice([10, 25, 75, 90, 99]))
            v = value(dsl.Term("percentile", c.name, p / 100))
            head = f"percentile({c.name}, {p})"
        else:
            v = value(dsl.Term(kind, c.name))
            head = f"{kind}({c.name})"
        bound = v * f if v != 0 else 1.0
        return f"{head} {op} {_fmt(bound)}"
    if form == "freshness":
        age = ev.now - value(dsl.Term("commit_ts"))
        return f"freshness({max(1, int(age * f / 1_000_000))}s)"
    if form == "ts":
        c = pick(stamps)
        if c is None:
            return None
        lag = int(rng.choice([1, 24, 24 * 30, 24 * 400]))
        return f"max({c.name}) >= commit_ts - {lag}h"
    if form == "expr":
        a, b = pick(numeric), pick(numeric)
        return f"expr({a.name} < {b.name} * {f * 1.15:.3g})"
    return None


# -- incident replays -------------------------------------------------------


@dataclass
class ExpectedAlert:
    kind: str
    commit_index: Optional[int]  # 0-based index into the scenario's commits; None for sweeps
    column: Optional[str] = None


@dataclass
class IncidentReplay:
    name: str
    table: Table
    observer: Observer
    snapshots: list[int]
    alerts: list  # every Alert raised, including sweeps
    expected: list[ExpectedAlert]
    forbidden: list[ExpectedAlert]
    sweep_times: list[int]
    fixture: dict = field(default_factory=dict)

    def found(self, kind: str, commit_index: Optional[int] = None, column: Optional[str] = None) -> list:
        out = []
        for a in self.alerts:
            if a.kind.value != kind or (column is not None and a.column != column):
                continue
            if commit_index is not None and a.snapshot_id != self.snapshots[commit_index]:
                continue
            out.append(a)
        return out

    def matches_expectation(self) -> bool:
        return all(self.found(e.kind, e.commit_index, e.column) for e in self.expected) and not any(
            self.found(e.kind, e.commit_index, e.column) for e in self.forbidden
        )


def _spread(rng: np.random.Generator, count: int, width: float) -> list[float]:
    """Evenly spaced offsets in [-width, width], shuffled; keeps jitter's spread fixed."""
    if count == 1:
        return [0.0]
    return rng.permutation(np.linspace(-width, width, count)).tolist()


def _replay_freshness_gap(root: Path, seed: int, config: DetectorConfig) -> IncidentReplay:
    rng = np.random.default_rng(seed)
    schema = build_schema([("member_id", "int64", False), ("is_active", "bool"), ("tier", "string"), ("updated_ts", "timestamp-micros")])
    clock = StepClock()
    table = Table.create(root / "members", schema, name="members", clock=clock, id_factory=counter_ids("fg"))
    obs = Observer.for_table(table, config)
    table.listeners.append(obs.ingest_event)
    base_rows = 20_000
    daily = 14
    rows_jitter = _spread(rng, daily, 0.001)  # ±0.1% day-to-day
    time_jitter = _spread(rng, daily + 1, 0.5 * HOUR)
    snapshots = []

    def day_rows(n: int, corrupted: bool) -> list[tuple]:
        ids = np.arange(1, n + 1)
        active = rng.random(n) < 0.95
        tiers = rng.integers(0, 3, n)
        out = []
        for i, a, t in zip(ids.tolist(), active.tolist(), tiers.tolist()):
            out.append((i, False if corrupted else a, ("free", "pro", "team")[t], EPOCH_2024))
        return out

    t0 = EPOCH_2024 + 2 * HOUR
    for d in range(daily + 1):
        corrupted = d == daily
        n = int(round(base_rows * (1 + rows_jitter[d]))) if not corrupted else int(round(base_rows * 0.97))
        clock.set(t0 + d * DAY + int(time_jitter[d]))
        snapshots.append(overwrite(table, WriteBatch("all", day_rows(n, corrupted), "etl:members")).snapshot_id)
    last = table.current_snapshot().commit_ts
    sweep_times = [last + DAY, last + int(1.9 * DAY), last + 3 * DAY, last + 5 * DAY]
    fired = []
    for t in sweep_times:
        fired.append(bool(obs.sweep(t)))
    return IncidentReplay(
        "freshness_gap",
        table,
        obs,
        snapshots,
        list(obs.alerts),
        expected=[ExpectedAlert("ROW_COUNT_ANOMALY", daily), ExpectedAlert("FRESHNESS_GAP", None)],
        forbidden=[ExpectedAlert("ROW_COUNT_ANOMALY", i) for i in range(daily)],
        sweep_times=sweep_times,
        fixture={
            "daily_commits": daily,
            "rows_per_commit": base_rows,
            "row_jitter": "±0.1% (invented)",
            "corruption": "3% of rows dropped and is_active set false for every row (observed incident magnitude)",
            "silence_sweeps": sweep_times,
            "sweep_fired": fired,
        },
    )


def _replay_null_spike(root: Path, seed: int, config: DetectorConfig) -> IncidentReplay:
    rng = np.random.default_rng(seed)
    schema = build_schema([("member_id", "int64", False), ("feature_a", "float64"), ("feature_b", "float64")])
    clock = StepClock()
    table = Table.create(root / "features", schema, name="features", clock=clock, id_factory=counter_ids("ns"))
    obs = Observer.for_table(table, config)
    table.listeners.append(obs.ingest_event)
    normal = 10
    ramp = [0.08, 0.15, 0.25]
    null_rates = [0.01 + j for j in _spread(rng, normal, 0.0005)] + ramp
    row_jitter = _spread(rng, len(null_rates), 0.01)
    snapshots = []
    for d, rate in enumerate(null_rates):
        n = int(round(5_000 * (1 + row_jitter[d])))
        k = int(round(n * rate))
        nulls = set(rng.choice(n, size=k, replace=False).tolist())
        a = rng.normal(0.5, 0.1, n).tolist()
        b = rng.normal(10, 2, n).tolist()
        rows = [(d * 10_000 + i, None if i in nulls else a[i], b[i]) for i in range(n)]
        clock.set(EPOCH_2024 + d * DAY + 3 * HOUR)
        snapshots.append(append(table, WriteBatch(partition_key(d), rows, "pipeline:features")).snapshot_id)
    return IncidentReplay(
        "null_spike",
        table,
        obs,
        snapshots,
        list(obs.alerts),
        expected=[ExpectedAlert("NULL_DRIFT", normal, "feature_a")],
        forbidden=[ExpectedAlert("NULL_DRIFT", i, None) for i in range(normal)],
        sweep_times=[],
        fixture={
            "normal_commits": normal,
            "normal_null_rate": "~1% (observed incident baseline)",
            "ramp": "8% / 15% / 25% (invented ramp values)",
            "null_rates": null_rates,
        },
    )


SCENARIOS = {"freshness_gap": _replay_freshness_gap, "null_spike": _replay_null_spike}


def replay_incident(
    name: str, root: str | Path | None = None, seed: int = 7, config: Optional[DetectorConfig] = None
) -> IncidentReplay:
    """Script the named incident into fresh tables under ``root`` (a temp dir by default)."""
    if name not in SCENARIOS:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    root = Path(root) if root is not None else Path(tempfile.mkdtemp(prefix=f"zeroscan-{name}-"))
    root.mkdir(parents=True, exist_ok=True)
    return SCENARIOS[name](root, seed, config or DetectorConfig())
