from __future__ import annotations

import pytest
from conftest import make_table
from hypothesis import given, settings
from hypothesis import strategies as st

from zeroscan.fileio import OpenCounter
from zeroscan.model import Operation
from zeroscan.observe import (
    ROLLUP,
    AlertKind,
    DetectorConfig,
    Observer,
    SeriesPoint,
    detect,
    load_config,
    observe_table,
    robust_z,
)
from zeroscan.workload import DAY, EPOCH_2024, HOUR
from zeroscan.writer import CommitEvent, PartitionDelta, WriteBatch, append, compact, delete_rows


def _col(nulls: int, rows: int, lo=0, hi=10) -> dict:
    return {"value_count": rows, "null_count": nulls, "nan_count": 0, "min": lo, "max": hi, "sum": 1.0,
            "zero_count": 0, "true_count": None, "distinct_estimate": None}


def _event(sid: int, ts: int, parts: dict[str, int], op=Operation.APPEND, nulls: float = 0.01, ncols: int = 1) -> CommitEvent:
    deltas = {}
    for key, rows in parts.items():
        cols = {cid: _col(int(rows * nulls), rows) for cid in range(1, ncols + 1)}
        deltas[key] = PartitionDelta(1, rows, 0, 0, 0, [64 << 20], cols)
    return CommitEvent("t", sid, ts, "maint" if op in (Operation.COMPACTION, Operation.SORT) else "user", op, deltas)


def _points(values, metric="record_count", column=False) -> list[SeriesPoint]:
    return [
        SeriesPoint("t", "p", 1 if column else None, i + 1, EPOCH_2024 + i * DAY, {metric: v, "inter_commit_gap_seconds": 86400.0})
        for i, v in enumerate(values)
    ]


# -- series construction ---------------------------------------------------------------


def test_append_gives_one_arrival_and_column_points():
    obs = Observer("t")
    out = obs.ingest_event(_event(1, EPOCH_2024, {"p": 100}, ncols=3))
    assert sum(p.is_arrival for p in out) == 1
    assert sum(not p.is_arrival for p in out) == 3


def test_compaction_gives_no_arrival_points():
    obs = Observer("t")
    obs.ingest_event(_event(1, EPOCH_2024, {"p": 100}, ncols=3))
    out = obs.ingest_event(_event(2, EPOCH_2024 + HOUR, {"p": 100}, Operation.COMPACTION, ncols=3))
    assert not any(p.is_arrival for p in out)
    assert len(out) == 3 and all(p.maintenance for p in out)


def test_replayed_history_series_lengths():
    obs = Observer("t")
    expected = {("a", None): 0, ("b", None): 0, (ROLLUP, None): 0, ("a", 1): 0, ("b", 1): 0, (ROLLUP, 1): 0}
    seen = set()
    for i in range(30):
        key = "ab"[i % 2]
        ts = EPOCH_2024 + i * HOUR
        if i % 10 == 9:
            ev = _event(i + 1, ts, {key: 100}, Operation.COMPACTION)
        elif i % 7 == 6:
            ev = CommitEvent("t", i + 1, ts, "user", Operation.DELETE, {key: PartitionDelta(deleted_positions=5)})
        else:
            ev = _event(i + 1, ts, {key: 100})
        seen.add(key)
        user = ev.operation not in (Operation.COMPACTION,)
        has_cols = bool(ev.partitions[key].columns)
        if user:
            expected[(key, None)] += 1
            expected[(ROLLUP, None)] += 1
        if has_cols:
            expected[(key, 1)] += 1
            if len(seen) > 1:
                expected[(ROLLUP, 1)] += 1
        obs.ingest_event(ev)
    got = {k: len(obs.series.get(k, [])) for k in expected}
    assert got == expected
    assert got == {("a", None): 15, ("b", None): 12, (ROLLUP, None): 27, ("a", 1): 13, ("b", 1): 13, (ROLLUP, 1): 25}


def test_out_of_order_points_are_sorted_and_flagged():
    obs = Observer("t")
    for sid, ts in [(1, 10 * HOUR), (2, 30 * HOUR), (3, 20 * HOUR)]:
        obs.ingest_event(_event(sid, EPOCH_2024 + ts, {"p": 100}))
    series = obs.arrival("p")
    assert [p.snapshot_id for p in series] == [1, 3, 2]
    assert [p.out_of_order for p in series] == [False, True, False]


def test_rewrite_within_readiness_window_is_not_ready():
    obs = Observer("t")
    obs.ingest_event(_event(1, EPOCH_2024, {"p": 100}))
    obs.ingest_event(_event(2, EPOCH_2024 + HOUR // 2, {"p": 100}))
    obs.ingest_event(_event(3, EPOCH_2024 + 3 * HOUR, {"p": 100}))
    assert [p.ready for p in obs.arrival("p")] == [True, False, True]


# -- detectors ----------------------------------------------------------------------


def test_robust_z():
    assert robust_z(5, [5, 5, 5]) == 0
    assert robust_z(3, [1, 2, 3, 4, 5]) == 0
    assert robust_z(5, [1, 2, 3, 4, 5]) == pytest.approx(2 / 1.4826, rel=1e-6)


def test_spike_in_constant_series():
    alerts = detect(_points([1000] * 20 + [10_000]), DetectorConfig(), last_only=True)
    assert [a.kind for a in alerts] == [AlertKind.ROW_COUNT_ANOMALY]
    assert alerts[0].snapshot_id == 21


def test_constant_series_has_no_alert():
    assert detect(_points([1000] * 30), DetectorConfig()) == []


def test_null_fraction_jump():
    series = _points([0.01] * 12 + [0.20, 0.21], "null_fraction", column=True)
    alerts = detect(series, DetectorConfig(), column="c")
    assert [(a.kind, a.snapshot_id) for a in alerts][0] == (AlertKind.NULL_DRIFT, 13)


def test_insufficient_history_is_recorded_not_alerted():
    skipped = []
    assert detect(_points([1, 1000]), DetectorConfig(), skipped=skipped) == []
    assert skipped and skipped[0][0] == "InsufficientHistory"


def test_range_violation():
    cfg = DetectorConfig(ranges={"c": (0.0, 5.0)})
    series = [SeriesPoint("t", "p", 1, 1, EPOCH_2024, {"min": -1, "max": 3, "null_fraction": 0.0})]
    assert [a.kind for a in detect(series, cfg, column="c")] == [AlertKind.RANGE_VIOLATION]


def test_freshness_after_silence():
    obs = Observer("t")
    for d in range(10):
        obs.ingest_event(_event(d + 1, EPOCH_2024 + d * DAY, {"p": 100}))
    last = EPOCH_2024 + 9 * DAY
    assert obs.sweep(last + DAY) == []
    assert obs.sweep(last + int(1.9 * DAY)) == []
    fired = obs.sweep(last + int(2.1 * DAY))
    assert [a.kind for a in fired] == [AlertKind.FRESHNESS_GAP]
    obs.sweep(last + 3 * DAY)
    assert sum(a.kind is AlertKind.FRESHNESS_GAP for a in obs.alerts) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100 * DAY), st.integers(0, 100 * DAY))
def test_freshness_is_monotone(a, b):
    obs = Observer("t")
    for d in range(10):
        obs.ingest_event(_event(d + 1, EPOCH_2024 + d * DAY, {"p": 100}))
    t1, t2 = sorted((a, b))
    base = EPOCH_2024 + 9 * DAY
    if obs.sweep(base + t1):
        assert obs.sweep(base + t2)


def test_over_partitioning():
    cfg = DetectorConfig(partitions_per_day=10)
    obs = Observer("t", cfg)
    for i in range(12):
        ev = _event(i + 1, EPOCH_2024 + i * 60_000_000, {f"p{i}": 10})
        ev.partitions[f"p{i}"].file_sizes = [4096]
        obs.ingest_event(ev)
    assert [a.kind for a in obs.alerts if a.kind is AlertKind.OVER_PARTITIONING] == [AlertKind.OVER_PARTITIONING]


def test_big_files_are_not_over_partitioning():
    obs = Observer("t", DetectorConfig(partitions_per_day=10))
    for i in range(12):
        obs.ingest_event(_event(i + 1, EPOCH_2024 + i * 60_000_000, {f"p{i}": 10}))
    assert not any(a.kind is AlertKind.OVER_PARTITIONING for a in obs.alerts)


# -- properties ------------------------------------------------------------------------


def _alert_set(obs: Observer) -> set:
    return {(a.kind, a.partition, a.column, a.commit_ts) for a in obs.alerts}


history = st.lists(st.tuples(st.integers(50, 5000), st.floats(0.0, 0.5), st.integers(1, 48)), min_size=1, max_size=40)


@settings(max_examples=40, deadline=None)
@given(history, st.lists(st.integers(0, 39), max_size=10))
def test_maintenance_commits_change_no_alerts(commits, maint_at):
    plain, mixed = Observer("t"), Observer("t")
    ts = EPOCH_2024
    sid = 0
    for i, (rows, nulls, gap_h) in enumerate(commits):
        ts += gap_h * HOUR
        sid += 1
        plain.ingest_event(_event(sid, ts, {"p": rows}, nulls=nulls))
        mixed.ingest_event(_event(sid, ts, {"p": rows}, nulls=nulls))
        for _ in range(maint_at.count(i)):
            sid += 1
            mixed.ingest_event(_event(sid, ts + 60_000_000, {"p": rows}, Operation.COMPACTION, nulls=0.9))
    assert _alert_set(plain) == _alert_set(mixed)
    now = ts + 10 * DAY
    assert {a.kind for a in plain.sweep(now)} == {a.kind for a in mixed.sweep(now)}


@settings(max_examples=20, deadline=None)
@given(history)
def test_detectors_are_deterministic(commits):
    runs = []
    for _ in range(2):
        obs = Observer("t")
        ts = EPOCH_2024
        for i, (rows, nulls, gap_h) in enumerate(commits):
            ts += gap_h * HOUR
            obs.ingest_event(_event(i + 1, ts, {"p": rows}, nulls=nulls))
        runs.append([a.to_dict() for a in obs.alerts])
    assert runs[0] == runs[1]


def test_disabled_config_raises_nothing():
    obs = Observer("t", DetectorConfig.disabled())
    for i in range(20):
        obs.ingest_event(_event(i + 1, EPOCH_2024 + i * DAY, {"p": 100 if i < 19 else 100_000}))
    assert obs.alerts == [] and obs.sweep(EPOCH_2024 + 100 * DAY) == []


# -- configuration and table replay -------------------------------------------------------


def test_load_config(tmp_path):
    path = tmp_path / "d.ini"
    path.write_text("[detectors]\nz_threshold = 4\nwindow = 10\nenabled = NULL_DRIFT, FRESHNESS_GAP\n[ranges]\nage = 0, 130\nscore = , 1\n")
    cfg = load_config(path, {"min-history": "5"})
    assert (cfg.z_threshold, cfg.window, cfg.min_history) == (4.0, 10, 5)
    assert cfg.enabled == {AlertKind.NULL_DRIFT, AlertKind.FRESHNESS_GAP}
    assert cfg.ranges == {"age": (0.0, 130.0), "score": (None, 1.0)}
    assert load_config(overrides={"enabled": "none"}).enabled == frozenset()
    with pytest.raises(ValueError):
        load_config(overrides={"bogus": "1"})


def test_observe_table_reads_no_data_files(tmp_path, audit_opens):
    t = make_table(tmp_path / "t", [("c", "int64")])
    for d in range(12):
        t.clock.set(EPOCH_2024 + d * DAY)
        append(t, WriteBatch("p", [(i,) for i in range(100 if d < 11 else 5000)]))
    delete_rows(t, "p", [0])
    compact(t, "p")
    with OpenCounter() as c, audit_opens() as a:
        obs, new = observe_table(t, now=EPOCH_2024 + 30 * DAY, sweep=True)
    assert c.total == 0 and a.opens == 0
    kinds = {x.kind for x in new}
    assert AlertKind.ROW_COUNT_ANOMALY in kinds and AlertKind.FRESHNESS_GAP in kinds
    # a second pass appends nothing new
    assert observe_table(t, now=EPOCH_2024 + 30 * DAY, sweep=True)[1] == []
