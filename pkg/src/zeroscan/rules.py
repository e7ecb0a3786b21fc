"""Data-quality rules: parsing, tier classification and zero-scan evaluation.

Rule forms::

    count > 1000                         aggregate comparison (any term mix)
    notNull(c, <5%)                      null fraction bound (notNull(c) = no nulls)
    compare(count, prev_snapshot, 10%)   relative change vs a reference (add ", abs" for absolute)
    freshness(2h)                        time since last user commit
    expr(a < b * 1.15)                   row predicate, needs a scan

Evaluation reads manifests and sketch sidecars only. Every evaluation runs
inside ``fileio.zero_scan()`` except ``expr`` rules with scan fallback on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from . import dsl
from .errors import RuleSyntaxError, UnknownColumn, UnknownSnapshot
from .fileio import zero_scan
from .model import ColumnSchema, DataFileEntry, Table, aggregate_stats, corrected_record_count, live_files
from .sketches import RANK_EPSILON, THETA_RELATIVE_ERROR, KllSketch, ThetaSketch, kll_merge_all, theta_union
from .sketches.sidecar import load_kll, load_theta
from .values import Kind, bound_maybe_truncated, predecessor_prefix, successor_prefix

__all__ = [
    "Tier",
    "Verdict",
    "Rule",
    "RuleResult",
    "parse_rule",
    "classify",
    "evaluate",
    "evaluate_all",
    "coverage_report",
    "corrected_record_count",
    "load_rules",
    "save_rules",
    "add_rule",
]


class Tier(str, Enum):
    BASE_MANIFEST = "BASE_MANIFEST"
    MANIFEST_COMPARE = "MANIFEST_COMPARE"
    COUNTER_EXT = "COUNTER_EXT"
    THETA = "THETA"
    KLL = "KLL"
    FRESHNESS = "FRESHNESS"
    SCAN_REQUIRED = "SCAN_REQUIRED"

    @property
    def zero_scan(self) -> bool:
        return self is not Tier.SCAN_REQUIRED

    @property
    def from_sketch(self) -> bool:
        return self in (Tier.THETA, Tier.KLL)


# when an aggregate rule mixes terms, the most demanding source decides the tier
_TIER_RANK = [Tier.BASE_MANIFEST, Tier.COUNTER_EXT, Tier.FRESHNESS, Tier.THETA, Tier.KLL]


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INDETERMINATE = "INDETERMINATE"


COMPARE_METRICS = {
    "record_count",
    "null_count",
    "nan_count",
    "value_count",
    "min",
    "max",
    "sum",
    "mean",
    "zero_count",
    "true_count",
}
REFERENCES = ("prev_snapshot", "prev_partition")

# column kinds each term applies to (None = any kind)
_TERM_KINDS: dict[str, Optional[tuple[Kind, ...]]] = {
    "null_count": None,
    "value_count": None,
    "nan_count": None,
    "min": None,
    "max": None,
    "sum": (Kind.INT64, Kind.FLOAT64),
    "mean": (Kind.INT64, Kind.FLOAT64),
    "zero_count": (Kind.INT64, Kind.FLOAT64),
    "true_count": (Kind.BOOL,),
    "distinct": (Kind.INT64, Kind.STRING, Kind.TIMESTAMP),
    "median": (Kind.INT64, Kind.FLOAT64),
    "percentile": (Kind.INT64, Kind.FLOAT64),
    "iqr": (Kind.INT64, Kind.FLOAT64),
}


@dataclass(frozen=True)
class Rule:
    rule_id: str
    text: str
    kind: str  # aggregate | not_null | compare | freshness | expr
    body: Any  # dsl node (aggregate/expr) or the metric Term (compare)
    tier: Tier
    partition: Optional[str] = None
    column: Optional[str] = None
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def to_line(self) -> str:
        target = f" @{self.partition}" if self.partition is not None else ""
        return f"{self.rule_id}{target}: {self.text}"


@dataclass
class RuleResult:
    rule_id: str
    verdict: Verdict
    observed: Any = None
    bound: Any = None
    evaluated_from: str = "metadata"  # metadata | sketch | scan
    snapshot_id: Optional[int] = None
    tier: Optional[Tier] = None
    reason: str = ""
    within_error_band: bool = False

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "verdict": Verdict(self.verdict).value,
            "observed": _jsonable(self.observed),
            "bound": _jsonable(self.bound),
            "evaluated_from": self.evaluated_from,
            "snapshot_id": self.snapshot_id,
            "tier": Tier(self.tier).value if self.tier else None,
            "reason": self.reason,
            "within_error_band": self.within_error_band,
        }


def _jsonable(v: Any) -> Any:
    if isinstance(v, Interval):
        return [_jsonable(v.lo), _jsonable(v.hi)]
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


# -- parsing ----------------------------------------------------------------


def classify(rule_or_kind: Rule | str, body: Any = None) -> Tier:
    """Tier of a rule; a pure function of its form and terms."""
    if isinstance(rule_or_kind, Rule):
        kind, body = rule_or_kind.kind, rule_or_kind.body
    else:
        kind = rule_or_kind
    if kind == "not_null":
        return Tier.BASE_MANIFEST
    if kind == "compare":
        return Tier.MANIFEST_COMPARE
    if kind == "freshness":
        return Tier.FRESHNESS
    if kind == "expr":
        return Tier.SCAN_REQUIRED
    tiers = {Tier(dsl.TERMS[t.name][1]) for t in dsl.terms_of(body)}
    return max(tiers, key=_TIER_RANK.index)


def _split_paren(p: dsl.Parser) -> str:
    """Consume ``( ... )`` and return the raw text between the parentheses."""
    open_tok = p.expect("(")
    depth = 1
    while True:
        t = p.advance()
        if t.kind == "end":
            raise p.error("unbalanced parentheses", open_tok)
        if t.text == "(":
            depth += 1
        elif t.text == ")":
            depth -= 1
            if depth == 0:
                return p.text[open_tok.pos + 1 : t.pos]


def _parse_not_null(p: dsl.Parser) -> tuple[str, dict]:
    p.expect("(")
    column = p.ident()
    params: dict = {"op": "==", "threshold": None}
    if p.accept(","):
        if not (p.tok.kind == "op" and p.tok.text in ("<", "<=")):
            raise p.error("notNull threshold must be written as <X% or <=X%")
        params["op"] = p.advance().text
        params["threshold"] = float(p.number())
    p.expect(")")
    return column, params


def _parse_compare(p: dsl.Parser) -> tuple[dsl.Term, dict]:
    p.expect("(")
    node = p.primary()
    if not isinstance(node, dsl.Term) or node.name not in COMPARE_METRICS:
        raise p.error("compare() takes a manifest metric such as count, min(c), nullCount(c)")
    p.expect(",")
    ref_tok = p.tok
    ref = p.ident()
    if ref not in REFERENCES:
        raise p.error(f"reference must be one of {', '.join(REFERENCES)}", ref_tok)
    p.expect(",")
    tol = float(p.number())
    if tol < 0:
        raise p.error("tolerance must be non-negative")
    mode = "rel"
    if p.accept(","):
        mode_tok = p.tok
        mode = p.ident()
        if mode not in ("rel", "abs"):
            raise p.error("tolerance mode must be rel or abs", mode_tok)
    p.expect(")")
    return node, {"ref": ref, "tol": tol, "absolute": mode == "abs"}


def _parse_freshness(p: dsl.Parser) -> dict:
    p.expect("(")
    tok = p.tok
    if tok.kind == "string":
        p.advance()
        try:
            max_age = dsl.parse_interval(tok.text[1:-1])
        except ValueError as exc:
            raise p.error(str(exc), tok) from None
    else:
        if tok.kind != "number" or tok.text[-1] not in "smhdw":
            raise p.error("freshness() takes a duration such as 2h, 30m or '1 day'")
        max_age = int(p.number())
    p.expect(")")
    return {"max_age": max_age}


def _check_columns(node_terms: Iterable[dsl.Term], schema: Sequence[ColumnSchema], text: str) -> None:
    by_name = {c.name: c for c in schema}
    for t in node_terms:
        if t.column is None:
            continue
        col = by_name.get(t.column)
        if col is None:
            raise UnknownColumn(t.column)
        kinds = _TERM_KINDS.get(t.name)
        if kinds is not None and col.kind not in kinds:
            raise RuleSyntaxError(f"{t.name}() does not apply to {col.kind.value} column {t.column!r}", text, 0)


def parse_rule(
    text: str,
    schema: Optional[Sequence[ColumnSchema]] = None,
    rule_id: str = "r1",
    partition: Optional[str] = None,
) -> Rule:
    """Parse one rule; with ``schema`` given, column references are checked."""
    p = dsl.Parser(text)
    head = p.tok.text if p.tok.kind == "ident" else None
    nxt = p.tokens[1].text if len(p.tokens) > 1 else ""
    column = None
    params: dict = {}
    if head == "notNull" and nxt == "(":
        p.advance()
        kind = "not_null"
        column, params = _parse_not_null(p)
        body: Any = dsl.Term("null_count", column)
    elif head in ("compare", "compare_count") and nxt == "(":
        p.advance()
        kind = "compare"
        body, params = _parse_compare(p)
        column = body.column
    elif head == "freshness" and nxt == "(":
        p.advance()
        kind = "freshness"
        params = _parse_freshness(p)
        body = None
    elif head == "expr" and nxt == "(":
        p.advance()
        kind = "expr"
        inner = _split_paren(p)
        try:
            body = dsl.parse_expression(inner, row_mode=True)
        except RuleSyntaxError as exc:
            offset = text.index(inner)
            raise RuleSyntaxError(exc.message, text, offset + exc.position) from None
        if not isinstance(body, dsl.Compare):
            raise RuleSyntaxError("expr() needs a comparison", text, 0)
    else:
        kind = "aggregate"
        body = p.expression()
        if not isinstance(body, dsl.Compare):
            raise p.error("a rule must be a comparison, e.g. count > 1000")
        terms = dsl.terms_of(body)
        if not terms:
            raise RuleSyntaxError("rule references no metric", text, 0)
        cols = {t.column for t in terms if t.column}
        column = cols.pop() if len(cols) == 1 else None
    p.expect_end()

    if schema is not None:
        by_name = {c.name for c in schema}
        if kind == "expr":
            for name in dsl.columns_of(body):
                if name not in by_name:
                    raise UnknownColumn(name)
        elif kind == "not_null":
            _check_columns([dsl.Term("null_count", column)], schema, text)
        elif kind == "compare":
            _check_columns([body], schema, text)
        elif kind == "aggregate":
            _check_columns(dsl.terms_of(body), schema, text)
    rule = Rule(rule_id, text.strip(), kind, body, Tier.BASE_MANIFEST, partition, column, params)
    return Rule(rule_id, rule.text, kind, body, classify(rule), partition, column, params)


# -- metadata view of one scope --------------------------------------------


class Indeterminate(Exception):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class _Top:
    """Greater than every value (open upper end of a string interval)."""

    def __lt__(self, other: Any) -> bool:
        return False

    def __le__(self, other: Any) -> bool:
        return isinstance(other, _Top)

    def __gt__(self, other: Any) -> bool:
        return not isinstance(other, _Top)

    def __ge__(self, other: Any) -> bool:
        return True

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, _Top)

    def __hash__(self) -> int:
        return 0

    def __repr__(self) -> str:
        return "+inf"


TOP = _Top()


@dataclass(frozen=True)
class Interval:
    """The true value lies in [lo, hi]; used for possibly-truncated string bounds."""

    lo: Any
    hi: Any


@dataclass(frozen=True)
class Banded:
    """A sketch estimate plus the interval the true value is expected in."""

    value: Any
    lo: Any
    hi: Any


class MetadataScope:
    """Manifest aggregates and merged sketches of one (snapshot, partition)."""

    def __init__(self, table: Table, snapshot_id: Optional[int], partition: Optional[str], now: int) -> None:
        self.table = table
        self.snapshot_id = snapshot_id
        self.partition = partition
        self.now = now
        self.data, self.deletes = live_files(table, snapshot_id, partition)
        self.mor = bool(self.deletes)
        self._aggs: dict[int, Any] = {}
        self._theta: dict[int, ThetaSketch] = {}
        self._kll: dict[int, KllSketch] = {}

    def column(self, name: str) -> ColumnSchema:
        return self.table.metadata.column(name)

    def agg(self, name: str):
        c = self.column(name)
        if c.column_id not in self._aggs:
            try:
                self._aggs[c.column_id] = aggregate_stats(self.data, c.column_id)
            except Exception as exc:  # MissingStats
                raise Indeterminate(f"MissingStats: {exc}") from None
        return self._aggs[c.column_id]

    def _sidecar_paths(self, column_id: int) -> list[tuple[DataFileEntry, Path]]:
        out = []
        for e in self.data:
            if not e.sketch_sidecar_path:
                raise Indeterminate(f"MissingSidecar: {e.file_path}")
            out.append((e, self.table.resolve(e.sketch_sidecar_path)))
        return out

    def theta(self, name: str) -> ThetaSketch:
        c = self.column(name)
        if c.column_id not in self._theta:
            sketches = []
            for e, path in self._sidecar_paths(c.column_id):
                s = load_theta(path, c.column_id) if path.exists() else None
                if s is None:
                    raise Indeterminate(f"MissingSidecar: no theta blob for {name} in {e.file_path}")
                sketches.append(s)
            self._theta[c.column_id] = theta_union(sketches) if sketches else ThetaSketch()
        return self._theta[c.column_id]

    def kll(self, name: str) -> KllSketch:
        c = self.column(name)
        if c.column_id not in self._kll:
            sketches = []
            for e, path in self._sidecar_paths(c.column_id):
                s = load_kll(path, c.column_id) if path.exists() else None
                if s is None:
                    raise Indeterminate(f"MissingSidecar: no kll blob for {name} in {e.file_path}")
                sketches.append(s)
            self._kll[c.column_id] = kll_merge_all(sketches)
        return self._kll[c.column_id]

    def commit_ts(self) -> int:
        if self.snapshot_id is None:
            raise Indeterminate("no snapshot")
        return self.table.metadata.snapshot(self.snapshot_id).commit_ts

    def _no_mor(self, term: dsl.Term) -> None:
        if self.mor:
            raise Indeterminate(f"MOR-uncorrected metric {term}: partition has positional deletes, compact first")

    def resolve(self, term: dsl.Term) -> Any:
        name = term.name
        if name == "record_count":
            return corrected_record_count(self.data, self.deletes)
        if name == "commit_ts":
            return self.commit_ts()
        if name == "now":
            return self.now
        self._no_mor(term)
        if name == "distinct":
            s = self.theta(term.column)
            est = s.estimate()
            if s.exact:
                return Banded(est, est, est)
            return Banded(est, est * (1 - THETA_RELATIVE_ERROR), est * (1 + THETA_RELATIVE_ERROR))
        if name in ("median", "percentile", "iqr"):
            s = self.kll(term.column)
            if s.is_empty():
                raise Indeterminate(f"EmptyAggregate: no values for {term}")
            return _kll_banded(s, name, term.arg)
        a = self.agg(term.column)
        if name == "min":
            if a.lower_bound is None:
                raise Indeterminate(f"no lower bound for {term.column}")
            lo = a.lower_bound
            if isinstance(lo, str) and bound_maybe_truncated(lo):
                return Interval(lo, successor_prefix(lo) or TOP)
            return lo
        if name == "max":
            if a.upper_unbounded:
                raise Indeterminate(f"upper bound of {term.column} not representable after truncation")
            if a.upper_bound is None:
                raise Indeterminate(f"no upper bound for {term.column}")
            hi = a.upper_bound
            if isinstance(hi, str) and bound_maybe_truncated(hi):
                return Interval(predecessor_prefix(hi), hi)
            return hi
        if name == "mean":
            denom = a.non_null - a.nan_count
            if denom == 0:
                raise Indeterminate(f"EmptyAggregate: mean({term.column}) over no values")
            if a.sum is None:
                raise Indeterminate(f"no sum for {term.column}")
            return a.sum / denom
        value = getattr(a, name)
        if value is None and a.file_count == 0 and self.column(term.column).kind in (_TERM_KINDS.get(name) or ()):
            return 0  # an empty file set sums and counts to zero
        if value is None:
            raise Indeterminate(f"no {name} counter for {term.column}")
        return value


def _kll_banded(s: KllSketch, name: str, arg: Optional[float]) -> Banded:
    eps = RANK_EPSILON

    def q(p: float) -> float:
        return s.quantile(min(1.0, max(0.0, p)))

    if name == "iqr":
        v = q(0.75) - q(0.25)
        return Banded(v, q(0.75 - eps) - q(0.25 + eps), q(0.75 + eps) - q(0.25 - eps))
    p = 0.5 if name == "median" else arg
    return Banded(q(p), q(p - eps), q(p + eps))


# -- evaluation -------------------------------------------------------------


def _point(v: Any, which: str = "value") -> Any:
    if isinstance(v, Banded):
        return getattr(v, which)
    return v


def _eval_compare(node: dsl.Compare, values: dict[dsl.Term, Any]) -> tuple[Verdict, Any, Any, bool, str]:
    """Verdict, observed, bound, within-band flag and reason for an aggregate comparison."""
    intervals = {t: v for t, v in values.items() if isinstance(v, Interval)}
    if intervals:
        return _eval_interval(node, values, intervals)

    def at(which: str):
        def resolve(t: Any) -> Any:
            return _point(values[t], which)

        return resolve

    try:
        observed = dsl.evaluate(node.left, at("value"))
        bound = dsl.evaluate(node.right, at("value"))
        ok = dsl.COMPARATORS[node.op](observed, bound)
    except ZeroDivisionError:
        return Verdict.INDETERMINATE, None, None, False, "EmptyAggregate: division by zero"
    except TypeError as exc:
        return Verdict.INDETERMINATE, None, None, False, f"type error: {exc}"
    band = False
    if any(isinstance(v, Banded) for v in values.values()):
        flips = set()
        for which in ("lo", "hi"):
            try:
                flips.add(bool(dsl.evaluate(node, at(which))))
            except ZeroDivisionError:
                flips.add(None)
        band = flips != {ok}
    return (Verdict.PASS if ok else Verdict.FAIL), observed, bound, band, ""


def _eval_interval(node: dsl.Compare, values: dict, intervals: dict) -> tuple[Verdict, Any, Any, bool, str]:
    # only ``term op literal`` (either side) is decidable on an interval
    if len(intervals) != 1:
        return Verdict.INDETERMINATE, None, None, False, "truncated bounds inconclusive"
    [(term, iv)] = intervals.items()
    if node.left == term and not dsl.terms_of(node.right):
        other, op, flipped = dsl.evaluate(node.right, lambda t: None), node.op, False
    elif node.right == term and not dsl.terms_of(node.left):
        other, op, flipped = dsl.evaluate(node.left, lambda t: None), node.op, True
    else:
        return Verdict.INDETERMINATE, iv, None, False, "truncated bounds inconclusive"
    cmp = dsl.COMPARATORS[op]
    try:
        if op in ("=", "==", "!=", "<>"):
            inside = iv.lo <= other <= iv.hi
            outcomes = {None} if inside else {op in ("!=", "<>")}
        else:
            outcomes = {cmp(other, x) if flipped else cmp(x, other) for x in (iv.lo, iv.hi)}
    except TypeError as exc:
        return Verdict.INDETERMINATE, iv, other, False, f"type error: {exc}"
    if len(outcomes) == 1 and None not in outcomes:
        ok = outcomes.pop()
        return (Verdict.PASS if ok else Verdict.FAIL), iv, other, False, "decided from truncated bounds"
    return Verdict.INDETERMINATE, iv, other, False, "truncated bounds inconclusive"


def _previous_user_snapshot(table: Table, snapshot_id: int) -> Optional[int]:
    chain = {s.snapshot_id: s for s in table.metadata.snapshot_log}
    sid = chain[snapshot_id].parent_id
    while sid is not None:
        s = chain[sid]
        if not s.maintenance:
            return sid
        sid = s.parent_id
    return None


def _touched(snapshot, partition: Optional[str]) -> bool:
    if partition is None:
        return True
    raw = snapshot.summary.get("changed-partitions")
    return raw is None or partition in json.loads(raw)


def last_user_commit_ts(table: Table, snapshot_id: Optional[int], partition: Optional[str] = None) -> Optional[int]:
    """commit_ts of the newest non-maintenance snapshot at or before ``snapshot_id``."""
    if snapshot_id is None:
        return None
    chain = {s.snapshot_id: s for s in table.metadata.snapshot_log}
    sid: Optional[int] = snapshot_id
    while sid is not None:
        s = chain[sid]
        if not s.maintenance and _touched(s, partition):
            return s.commit_ts
        sid = s.parent_id
    return None


class Evaluator:
    """Evaluates rules against one table, caching per-scope aggregates and merged sketches."""

    def __init__(self, table: Table, now: Optional[int] = None, allow_scan: bool = False) -> None:
        self.table = table
        self.now = table.clock() if now is None else now
        self.allow_scan = allow_scan
        self._scopes: dict[tuple, MetadataScope] = {}

    def scope(self, snapshot_id: Optional[int], partition: Optional[str]) -> MetadataScope:
        key = (snapshot_id, partition)
        if key not in self._scopes:
            self._scopes[key] = MetadataScope(self.table, snapshot_id, partition, self.now)
        return self._scopes[key]

    def evaluate(self, rule: Rule, snapshot_id: Optional[int] = None) -> RuleResult:
        if snapshot_id is None:
            snapshot_id = self.table.metadata.current_snapshot_id
        elif snapshot_id not in {s.snapshot_id for s in self.table.metadata.snapshot_log}:
            raise UnknownSnapshot(snapshot_id)
        source = "sketch" if rule.tier.from_sketch else "metadata"
        result = RuleResult(rule.rule_id, Verdict.INDETERMINATE, None, None, source, snapshot_id, rule.tier)
        if rule.kind == "expr":
            if not self.allow_scan:
                result.reason = "scan required; enable scan fallback to evaluate"
                return result
            from .oracle import oracle_rule

            return oracle_rule(rule, self.table, snapshot_id, now=self.now)
        with zero_scan():
            try:
                self._evaluate_zero_scan(rule, snapshot_id, result)
            except Indeterminate as exc:
                result.verdict = Verdict.INDETERMINATE
                result.reason = exc.reason
            except UnknownColumn as exc:
                result.reason = str(exc)
        return result

    def _evaluate_zero_scan(self, rule: Rule, snapshot_id: Optional[int], result: RuleResult) -> None:
        scope = self.scope(snapshot_id, rule.partition)
        if rule.kind == "aggregate":
            values = {t: scope.resolve(t) for t in dsl.terms_of(rule.body)}
            verdict, observed, bound, band, reason = _eval_compare(rule.body, values)
            result.verdict, result.observed, result.bound = verdict, observed, bound
            result.within_error_band, result.reason = band, reason
        elif rule.kind == "not_null":
            nulls = scope.resolve(dsl.Term("null_count", rule.column))
            threshold = rule.params["threshold"]
            if threshold is None:
                result.observed, result.bound = nulls, 0
                result.verdict = Verdict.PASS if nulls == 0 else Verdict.FAIL
                return
            rows = scope.resolve(dsl.Term("record_count"))
            if rows == 0:
                raise Indeterminate("EmptyAggregate: no rows")
            frac = nulls / rows
            ok = dsl.COMPARATORS[rule.params["op"]](frac, threshold)
            result.observed, result.bound = frac, threshold
            result.verdict = Verdict.PASS if ok else Verdict.FAIL
        elif rule.kind == "compare":
            self._evaluate_compare_rule(rule, scope, result)
        elif rule.kind == "freshness":
            last = last_user_commit_ts(self.table, snapshot_id, rule.partition)
            if last is None:
                raise Indeterminate("no user commit to measure freshness from")
            age = self.now - last
            result.observed, result.bound = age, rule.params["max_age"]
            result.verdict = Verdict.PASS if age <= rule.params["max_age"] else Verdict.FAIL

    def _evaluate_compare_rule(self, rule: Rule, scope: MetadataScope, result: RuleResult) -> None:
        cur_scope, ref_scope = self._compare_scopes(rule, scope)
        cur = cur_scope.resolve(rule.body)
        ref = ref_scope.resolve(rule.body)
        result.observed, result.bound, result.verdict = compare_values(cur, ref, rule.params["tol"], rule.params["absolute"])

    def _compare_scopes(self, rule: Rule, scope: MetadataScope) -> tuple[MetadataScope, MetadataScope]:
        """(current, reference) scopes of a compare() rule."""
        if scope.snapshot_id is None:
            raise Indeterminate("no snapshot")
        if rule.params["ref"] == "prev_snapshot":
            prev = _previous_user_snapshot(self.table, scope.snapshot_id)
            if prev is None:
                raise Indeterminate("no previous user snapshot to compare against")
            return scope, self.scope(prev, rule.partition)
        keys = self.table.partitions(scope.snapshot_id)
        if rule.partition is None:
            # table-level rule: newest partition against the one before it
            if len(keys) < 2:
                raise Indeterminate("no previous partition to compare against")
            return self.scope(scope.snapshot_id, keys[-1]), self.scope(scope.snapshot_id, keys[-2])
        earlier = [k for k in keys if k < rule.partition]
        if not earlier:
            raise Indeterminate("no previous partition to compare against")
        return scope, self.scope(scope.snapshot_id, earlier[-1])


def compare_values(cur: Any, ref: Any, tol: float, absolute: bool) -> tuple[Any, float, Verdict]:
    """(deviation, tol, verdict) for a compare rule; reference 0 passes only when current is 0."""
    for v in (cur, ref):
        if isinstance(v, (Interval, Banded, str, bool)):
            raise Indeterminate("compare() needs numeric metric values")
    if absolute:
        dev = abs(cur - ref)
    elif ref == 0:
        return (0.0 if cur == 0 else math.inf), tol, (Verdict.PASS if cur == 0 else Verdict.FAIL)
    else:
        dev = abs(cur - ref) / abs(ref)
    return dev, tol, Verdict.PASS if dev <= tol else Verdict.FAIL


def evaluate(
    rule: Rule,
    table: Table,
    snapshot_id: Optional[int] = None,
    now: Optional[int] = None,
    allow_scan: bool = False,
) -> RuleResult:
    return Evaluator(table, now=now, allow_scan=allow_scan).evaluate(rule, snapshot_id)


def evaluate_all(
    rules: Sequence[Rule],
    table: Table,
    snapshot_id: Optional[int] = None,
    now: Optional[int] = None,
    allow_scan: bool = False,
) -> list[RuleResult]:
    ev = Evaluator(table, now=now, allow_scan=allow_scan)
    return [ev.evaluate(r, snapshot_id) for r in rules]


# -- coverage ---------------------------------------------------------------


def coverage_report(rules: Iterable[Rule]) -> dict:
    counts = {t.value: 0 for t in Tier}
    total = 0
    for r in rules:
        counts[r.tier.value] += 1
        total += 1
    scan = counts[Tier.SCAN_REQUIRED.value]
    return {
        "total": total,
        "tiers": counts,
        "zero_scan": total - scan,
        "zero_scan_fraction": (total - scan) / total if total else 0.0,
    }


# -- persistence ------------------------------------------------------------


def rules_path(table: Table) -> Path:
    return table.metadata_dir / "rules.dq"


def parse_rule_line(line: str, schema: Optional[Sequence[ColumnSchema]] = None) -> Optional[Rule]:
    """``<id> [@<partition>]: <rule text>``; blank and ``#`` lines give None."""
    line = line.strip()
    if not line or line.startswith("#"):
        return None
    head, sep, text = line.partition(": ")
    if not sep:
        raise RuleSyntaxError("rule line must look like '<id>: <rule>'", line, 0)
    rule_id, _, partition = head.partition(" @")
    return parse_rule(text, schema, rule_id.strip(), partition.strip() or None)


def load_rules(table: Table) -> list[Rule]:
    path = rules_path(table)
    if not path.exists():
        return []
    rules = []
    for line in path.read_text(encoding="utf-8").splitlines():
        r = parse_rule_line(line, table.schema)
        if r is not None:
            rules.append(r)
    return rules


def save_rules(table: Table, rules: Sequence[Rule]) -> None:
    path = rules_path(table)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("".join(r.to_line() + "\n" for r in rules), encoding="utf-8")
    tmp.replace(path)


def add_rule(table: Table, text: str, rule_id: Optional[str] = None, partition: Optional[str] = None) -> Rule:
    rules = load_rules(table)
    rule_id = rule_id or f"r{len(rules) + 1}"
    if any(r.rule_id == rule_id for r in rules):
        raise ValueError(f"duplicate rule id {rule_id!r}")
    rule = parse_rule(text, table.schema, rule_id, partition)
    save_rules(table, rules + [rule])
    return rule
