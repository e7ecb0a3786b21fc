"""Full-scan ground truth.

Everything here reads the live data files row by row, applies positional
deletes, and recomputes statistics, distinct counts, quantiles and rule
verdicts from the rows themselves. It exists to check the metadata path and
is deliberately simple rather than fast.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import dsl
from .datafile import iter_rows
from .model import Table, aggregate_stats, live_files
from .rules import Rule, RuleResult, Tier, Verdict
from .sketches import RANK_EPSILON, THETA_RELATIVE_ERROR, load_kll, load_theta, kll_merge_all, theta_union
from .values import Kind


@dataclass
class ExactColumn:
    name: str
    kind: Kind
    value_count: int = 0
    null_count: int = 0
    nan_count: int = 0
    values: list = field(default_factory=list)  # non-null, non-NaN values

    @property
    def min(self) -> Any:
        return min(self.values) if self.values else None

    @property
    def max(self) -> Any:
        return max(self.values) if self.values else None

    @property
    def sum(self) -> Optional[float]:
        if self.kind is Kind.INT64:
            return sum(self.values)
        if self.kind is Kind.FLOAT64:
            try:
                return math.fsum(self.values)
            except ValueError:  # inf + -inf
                return None
        return None

    @property
    def zero_count(self) -> Optional[int]:
        if self.kind in (Kind.INT64, Kind.FLOAT64):
            return sum(1 for v in self.values if v == 0)
        return None

    @property
    def true_count(self) -> Optional[int]:
        if self.kind is Kind.BOOL:
            return sum(1 for v in self.values if v is True)
        return None

    @property
    def distinct(self) -> int:
        return len(set(self.values))

    def sorted_finite(self) -> list:
        if not hasattr(self, "_sorted"):
            vals = self.values
            if self.kind is Kind.FLOAT64:
                vals = [v for v in vals if math.isfinite(v)]
            self._sorted = sorted(vals)
        return self._sorted

    def quantile(self, q: float) -> Any:
        """Lower-interpolation quantile: element ceil(q*(n-1)) of the sorted values."""
        s = self.sorted_finite()
        if not s:
            return None
        q = min(1.0, max(0.0, q))
        return s[math.ceil(q * (len(s) - 1))]


@dataclass
class ExactStats:
    record_count: int
    columns: dict[str, ExactColumn]
    rows: list[tuple]


def read_live(table: Table, snapshot_id: Optional[int] = None, partition_filter: Optional[str] = None) -> list[tuple]:
    """All live rows (deletes applied) of a snapshot, in manifest order."""
    data, deletes = live_files(table, snapshot_id, partition_filter)
    dead: dict[str, set[int]] = {}
    for d in deletes:
        for path, pos in d.pairs():
            dead.setdefault(path, set()).add(pos)
    rows = []
    for e in data:
        gone = dead.get(e.file_path, ())
        for i, row in enumerate(iter_rows(table.resolve(e.file_path), table.schema)):
            if i not in gone:
                rows.append(row)
    return rows


def oracle_stats(
    table: Table, snapshot_id: Optional[int] = None, partition_filter: Optional[str] = None
) -> ExactStats:
    rows = read_live(table, snapshot_id, partition_filter)
    cols = {}
    for idx, c in enumerate(table.schema):
        ec = ExactColumn(c.name, c.kind)
        for row in rows:
            v = row[idx]
            ec.value_count += 1
            if v is None:
                ec.null_count += 1
            elif c.kind is Kind.FLOAT64 and math.isnan(v):
                ec.nan_count += 1
            else:
                ec.values.append(v)
        cols[c.name] = ec
    return ExactStats(len(rows), cols, rows)


# -- rule semantics on exact values ----------------------------------------


class _Undefined(Exception):
    pass


def _snapshot_chain(table: Table) -> dict[int, dict]:
    out = {}
    with open(table.metadata_dir / "snapshots.jsonl", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                d = json.loads(line)
                out[d["snapshot_id"]] = d
    return out


_MAINTENANCE_OPS = {"compaction", "sort", "purge"}


def _partition_files(table: Table, snapshot_id: Optional[int], partition: str) -> set[str]:
    data, deletes = live_files(table, snapshot_id, partition)
    return {e.file_path for e in data} | {d.file_path for d in deletes}


class OracleScope:
    def __init__(self, table: Table, snapshot_id: Optional[int], partition: Optional[str]) -> None:
        self.table = table
        self.snapshot_id = snapshot_id
        self.partition = partition
        self.stats = oracle_stats(table, snapshot_id, partition)


class Oracle:
    """Rule verdicts from exact, scanned values (caches one scan per scope)."""

    def __init__(self, table: Table, now: Optional[int] = None) -> None:
        self.table = table
        self.now = table.clock() if now is None else now
        self._scopes: dict[tuple, OracleScope] = {}
        self._chain = _snapshot_chain(table)

    def scope(self, snapshot_id: Optional[int], partition: Optional[str]) -> OracleScope:
        key = (snapshot_id, partition)
        if key not in self._scopes:
            self._scopes[key] = OracleScope(self.table, snapshot_id, partition)
        return self._scopes[key]

    # terms -> (value, band_lo, band_hi)
    def term(self, scope: OracleScope, t: dsl.Term) -> tuple[Any, Any, Any]:
        st = scope.stats
        if t.name == "record_count":
            v = st.record_count
            return v, v, v
        if t.name == "commit_ts":
            if scope.snapshot_id is None:
                raise _Undefined("no snapshot")
            v = self._chain[scope.snapshot_id]["commit_ts"]
            return v, v, v
        if t.name == "now":
            return self.now, self.now, self.now
        c = st.columns[t.column]
        if t.name == "distinct":
            d = c.distinct
            return d, d * (1 - THETA_RELATIVE_ERROR), d * (1 + THETA_RELATIVE_ERROR)
        if t.name in ("median", "percentile", "iqr"):
            if not c.sorted_finite():
                raise _Undefined("no values")
            q = c.quantile
            eps = RANK_EPSILON
            if t.name == "iqr":
                return q(0.75) - q(0.25), q(0.75 - eps) - q(0.25 + eps), q(0.75 + eps) - q(0.25 - eps)
            p = 0.5 if t.name == "median" else t.arg
            return q(p), q(p - eps), q(p + eps)
        if t.name == "mean":
            if not c.values or c.sum is None:
                raise _Undefined("no values")
            v = c.sum / len(c.values)
        elif t.name == "value_count":
            v = c.value_count
        else:
            v = getattr(c, t.name)
        if v is None:
            raise _Undefined(f"{t} undefined")
        return v, v, v

    def evaluate(self, rule: Rule, snapshot_id: Optional[int] = None) -> RuleResult:
        if snapshot_id is None:
            snapshot_id = self.table.metadata.current_snapshot_id
        result = RuleResult(rule.rule_id, Verdict.INDETERMINATE, None, None, "scan", snapshot_id, rule.tier)
        try:
            getattr(self, f"_rule_{rule.kind}")(rule, snapshot_id, result)
        except _Undefined as exc:
            result.verdict = Verdict.INDETERMINATE
            result.reason = str(exc)
        except ZeroDivisionError:
            result.verdict = Verdict.INDETERMINATE
            result.reason = "EmptyAggregate: division by zero"
        return result

    def _rule_aggregate(self, rule: Rule, snapshot_id, result: RuleResult) -> None:
        scope = self.scope(snapshot_id, rule.partition)
        values = {t: self.term(scope, t) for t in dsl.terms_of(rule.body)}

        def at(i: int):
            return lambda t: values[t][i]

        node = rule.body
        result.observed = dsl.evaluate(node.left, at(0))
        result.bound = dsl.evaluate(node.right, at(0))
        ok = dsl.COMPARATORS[node.op](result.observed, result.bound)
        result.verdict = Verdict.PASS if ok else Verdict.FAIL
        if rule.tier in (Tier.THETA, Tier.KLL):
            outcomes = {ok}
            for i in (1, 2):
                outcomes.add(bool(dsl.evaluate(node, at(i))))
            result.within_error_band = len(outcomes) > 1

    def _rule_not_null(self, rule: Rule, snapshot_id, result: RuleResult) -> None:
        st = self.scope(snapshot_id, rule.partition).stats
        nulls = st.columns[rule.column].null_count
        threshold = rule.params["threshold"]
        if threshold is None:
            result.observed, result.bound = nulls, 0
            result.verdict = Verdict.PASS if nulls == 0 else Verdict.FAIL
            return
        if st.record_count == 0:
            raise _Undefined("EmptyAggregate: no rows")
        frac = nulls / st.record_count
        result.observed, result.bound = frac, threshold
        ok = frac < threshold if rule.params["op"] == "<" else frac <= threshold
        result.verdict = Verdict.PASS if ok else Verdict.FAIL

    def _previous_user(self, snapshot_id: int) -> Optional[int]:
        sid = self._chain[snapshot_id]["parent_id"]
        while sid is not None and self._chain[sid]["operation"] in _MAINTENANCE_OPS:
            sid = self._chain[sid]["parent_id"]
        return sid

    def _rule_compare(self, rule: Rule, snapshot_id, result: RuleResult) -> None:
        if snapshot_id is None:
            raise _Undefined("no snapshot")
        partition = rule.partition
        if rule.params["ref"] == "prev_snapshot":
            prev = self._previous_user(snapshot_id)
            if prev is None:
                raise _Undefined("no previous user snapshot")
            cur_scope, ref_scope = self.scope(snapshot_id, partition), self.scope(prev, partition)
        else:
            keys = sorted({r for r in self._partition_keys(snapshot_id)})
            if partition is None:
                if len(keys) < 2:
                    raise _Undefined("no previous partition")
                cur_key, ref_key = keys[-1], keys[-2]
            else:
                earlier = [k for k in keys if k < partition]
                if not earlier:
                    raise _Undefined("no previous partition")
                cur_key, ref_key = partition, earlier[-1]
            cur_scope, ref_scope = self.scope(snapshot_id, cur_key), self.scope(snapshot_id, ref_key)
        cur = self.term(cur_scope, rule.body)[0]
        ref = self.term(ref_scope, rule.body)[0]
        if any(isinstance(v, (str, bool)) for v in (cur, ref)):
            raise _Undefined("non-numeric metric")
        tol = rule.params["tol"]
        if rule.params["absolute"]:
            dev = abs(cur - ref)
            ok = dev <= tol
        elif ref == 0:
            dev = 0.0 if cur == 0 else math.inf
            ok = cur == 0
        else:
            dev = abs(cur - ref) / abs(ref)
            ok = dev <= tol
        result.observed, result.bound = dev, tol
        result.verdict = Verdict.PASS if ok else Verdict.FAIL

    def _partition_keys(self, snapshot_id: int) -> set[str]:
        data, _ = live_files(self.table, snapshot_id)
        return {e.partition_key for e in data}

    def _touched(self, snapshot_id: int, partition: str) -> bool:
        parent = self._chain[snapshot_id]["parent_id"]
        before = _partition_files(self.table, parent, partition) if parent is not None else set()
        return before != _partition_files(self.table, snapshot_id, partition)

    def _rule_freshness(self, rule: Rule, snapshot_id, result: RuleResult) -> None:
        sid = snapshot_id
        last = None
        while sid is not None:
            snap = self._chain[sid]
            if snap["operation"] not in _MAINTENANCE_OPS and (
                rule.partition is None or self._touched(sid, rule.partition)
            ):
                last = snap["commit_ts"]
                break
            sid = snap["parent_id"]
        if last is None:
            raise _Undefined("no user commit")
        age = self.now - last
        result.observed, result.bound = age, rule.params["max_age"]
        result.verdict = Verdict.PASS if age <= rule.params["max_age"] else Verdict.FAIL

    def _rule_expr(self, rule: Rule, snapshot_id, result: RuleResult) -> None:
        st = self.scope(snapshot_id, rule.partition).stats
        violations = count_row_violations(rule.body, [c.name for c in self.table.schema], st.rows)
        result.observed, result.bound = violations, 0
        result.verdict = Verdict.PASS if violations == 0 else Verdict.FAIL


def count_row_violations(node: dsl.Node, names: list[str], rows: list[tuple]) -> int:
    """Rows failing a row predicate; rows where it is unknown (null, x/0) are skipped."""
    index = {n: i for i, n in enumerate(names)}
    bad = 0
    for row in rows:

        def resolve(ref: dsl.ColumnRef, row=row) -> Any:
            return row[index[ref.name]]

        try:
            if not dsl.evaluate(node, resolve):
                bad += 1
        except (dsl.MissingValue, ZeroDivisionError):
            continue
    return bad


def oracle_rule(rule: Rule, table: Table, snapshot_id: Optional[int] = None, now: Optional[int] = None) -> RuleResult:
    return Oracle(table, now=now).evaluate(rule, snapshot_id)


# -- validation report ------------------------------------------------------


def _rank_errors(sketch, exact_sorted: list) -> float:
    arr = np.asarray(exact_sorted, dtype=np.float64)
    n = arr.size
    worst = 0.0
    for q in np.linspace(0.1, 0.9, 9):
        est = sketch.quantile(float(q))
        lo = np.searchsorted(arr, est, side="left") / n
        hi = np.searchsorted(arr, est, side="right") / n
        # distance from q to the exact rank interval of the estimate
        err = 0.0 if lo <= q <= hi else min(abs(q - lo), abs(q - hi))
        worst = max(worst, float(err))
    return worst


def validate_table(table: Table, snapshot_id: Optional[int] = None) -> dict:
    """Per-partition, per-column deltas between manifest aggregates and the scan.

    On copy-on-write partitions every numeric delta must be zero. On
    merge-on-read partitions only the corrected record count is exact.
    """
    if snapshot_id is None:
        snapshot_id = table.metadata.current_snapshot_id
    report: dict = {"table": table.name, "snapshot_id": snapshot_id, "partitions": {}, "ok": True}
    for key in table.partitions(snapshot_id):
        data, deletes = live_files(table, snapshot_id, key)
        exact = oracle_stats(table, snapshot_id, key)
        mor = bool(deletes)
        corrected = sum(e.record_count for e in data) - sum(d.delete_count for d in deletes)
        part = {"mor": mor, "record_count_delta": corrected - exact.record_count, "columns": {}}
        ok = part["record_count_delta"] == 0
        for c in table.metadata.stats_columns():
            agg = aggregate_stats(data, c.column_id)
            ex = exact.columns[c.name]
            deltas: dict[str, Any] = {
                "value_count": agg.value_count - ex.value_count,
                "null_count": agg.null_count - ex.null_count,
                "nan_count": agg.nan_count - ex.nan_count,
            }
            if c.kind is Kind.INT64:
                deltas["sum"] = agg.sum - ex.sum if agg.sum is not None else None
                deltas["zero_count"] = agg.zero_count - ex.zero_count
            elif c.kind is Kind.FLOAT64:
                if agg.sum is not None and ex.sum is not None:
                    # each per-file sum is correctly rounded, and so is their combination
                    partials = [e.stats_for(c.column_id).sum for e in data]
                    slack = sum(math.ulp(p) for p in partials) + math.ulp(agg.sum)
                    deltas["sum"] = 0.0 if abs(agg.sum - ex.sum) <= slack else agg.sum - ex.sum
                deltas["zero_count"] = agg.zero_count - ex.zero_count
            elif c.kind is Kind.BOOL:
                deltas["true_count"] = agg.true_count - ex.true_count
            if c.kind is Kind.STRING:
                lo_ok = ex.min is None or (agg.lower_bound is not None and agg.lower_bound <= ex.min)
                hi_ok = ex.max is None or agg.upper_unbounded or (
                    agg.upper_bound is not None and agg.upper_bound >= ex.max
                )
                deltas["bounds_contain"] = 0 if lo_ok and hi_ok else 1
            else:
                deltas["min"] = 0 if agg.lower_bound == ex.min else 1
                deltas["max"] = 0 if agg.upper_bound == ex.max else 1
            if not mor:
                ok = ok and all(v in (0, 0.0, None) for v in deltas.values())
            sketch_report = _sketch_report(table, data, c, ex) if not mor else {}
            part["columns"][c.name] = {"deltas": deltas, **sketch_report}
        part["ok"] = ok
        report["ok"] = report["ok"] and ok
        report["partitions"][key] = part
    return report


def _sketch_report(table: Table, data, c, ex: ExactColumn) -> dict:
    out: dict = {}
    if not data or not all(e.sketch_sidecar_path for e in data):
        return out
    paths = [table.resolve(e.sketch_sidecar_path) for e in data]
    if c.kind in (Kind.INT64, Kind.STRING, Kind.TIMESTAMP):
        sketches = [load_theta(p, c.column_id) for p in paths]
        if all(s is not None for s in sketches):
            est = theta_union(sketches).estimate()
            d = ex.distinct
            out["distinct_exact"] = d
            out["distinct_estimate"] = est
            out["distinct_rel_error"] = abs(est - d) / d if d else 0.0
    if c.kind in (Kind.INT64, Kind.FLOAT64) and ex.sorted_finite():
        sketches = [load_kll(p, c.column_id) for p in paths]
        if all(s is not None for s in sketches):
            out["kll_max_decile_rank_error"] = _rank_errors(kll_merge_all(sketches), ex.sorted_finite())
    return out
