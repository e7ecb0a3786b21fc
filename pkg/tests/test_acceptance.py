"""One test per acceptance criterion; each prints a [PASS]/[FAIL] line with the observed values."""

from __future__ import annotations

import time

import numpy as np
import pytest
from conftest import OPEN_LOG, dir_hash, make_table, report

from zeroscan.errors import ConstraintViolation
from zeroscan.fileio import OpenCounter
from zeroscan.model import corrected_record_count, live_files
from zeroscan.observe import observe_table
from zeroscan.oracle import Oracle, oracle_stats, validate_table
from zeroscan.rules import Verdict, coverage_report, evaluate, evaluate_all, parse_rule
from zeroscan.sketches import KllSketch, ThetaSketch, kll_merge_all, theta_union
from zeroscan.sketches.hashing import hash_int64_array, hash_string_array
from zeroscan.sketches.sidecar import BlobType, sidecar_read
from zeroscan.values import Kind
from zeroscan.workload import (
    COVERAGE_EXAMPLES,
    HOUR,
    TableSpec,
    generate_rows,
    generate_rule_corpus,
    generate_table,
    random_deletes,
    replay_incident,
    sample_corpus,
)
from zeroscan.writer import WriteBatch, add_constraint, append, commit, delete_rows, overwrite, write_files

THETA_TOLERANCE = 0.03
RANK_TOLERANCE = 0.0165
RUNTIME_BUDGET_S = 300
THETA_BLOB_MAX = 33_000
LOW_CARD_PAYLOAD_MAX = 200
KLL_BLOB_RANGE = (2_000, 10_000)
THETA_K = 4096
ZERO_SCAN_TARGET, ZERO_SCAN_TOLERANCE = 0.88, 0.01

EXACT_TIERS = {"BASE_MANIFEST", "MANIFEST_COMPARE", "COUNTER_EXT", "FRESHNESS"}


@pytest.fixture(scope="module")
def million(tmp_path_factory):
    """The 1M-row, 20-column, 100-file table plus its validation report and pipeline runtime."""
    t0 = time.perf_counter()
    table = generate_table(tmp_path_factory.mktemp("million") / "t", TableSpec(rows=1_000_000, files=100, columns=20), seed=2024)
    report_ = validate_table(table)
    return table, report_, time.perf_counter() - t0


def _columns(report_: dict) -> dict:
    [part] = report_["partitions"].values()
    return part["columns"]


def test_criterion_1_sketch_accuracy(million):
    table, rep, runtime = million
    cols = _columns(rep)
    kinds = {c.name: c.kind for c in table.schema}
    theta = {n: c for n, c in cols.items() if "distinct_rel_error" in c}
    high = {n: c for n, c in theta.items() if c["distinct_exact"] > THETA_K}
    numeric = [n for n, k in kinds.items() if k in (Kind.INT64, Kind.FLOAT64)]
    kll = {n: cols[n].get("kll_max_decile_rank_error") for n in numeric}

    worst_theta = max(c["distinct_rel_error"] for c in high.values())
    worst_rank = max(v for v in kll.values() if v is not None)
    ok_theta = bool(high) and worst_theta < THETA_TOLERANCE
    ok_kll = all(v is not None for v in kll.values()) and worst_rank <= RANK_TOLERANCE
    ok_time = runtime < RUNTIME_BUDGET_S
    for n, c in sorted(high.items()):
        print(f"  theta {n}: exact {c['distinct_exact']} estimate {c['distinct_estimate']:.0f} error {c['distinct_rel_error']:.4%}")
    for n, v in sorted(kll.items()):
        print(f"  kll {n}: max decile rank error {v}")
    report("criterion 1a theta NDV error (high-cardinality columns)", ok_theta,
           f"{len(high)} columns, worst {worst_theta:.3%} < {THETA_TOLERANCE:.0%}")
    report("criterion 1b KLL decile rank error (numeric columns)", ok_kll,
           f"{len(kll)} columns, worst {worst_rank:.3%} <= {RANK_TOLERANCE:.2%}")
    report("criterion 1c pipeline runtime", ok_time, f"{runtime:.1f}s < {RUNTIME_BUDGET_S}s (generate + validate)")
    assert ok_theta and ok_kll and ok_time


def test_criterion_2_lossless_theta_union():
    mismatches = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        files, per_file = 100, int(rng.integers(200, 3000))
        universe = int(rng.choice([2_000, 50_000, 10_000_000]))
        chunks = [rng.integers(0, universe, per_file) for _ in range(files)]
        if seed % 2:
            hashes = [hash_string_array([f"u{v}" for v in c.tolist()]) for c in chunks]
        else:
            hashes = [hash_int64_array(c) for c in chunks]
        single = ThetaSketch().update_hashes(np.concatenate(hashes)).to_bytes()
        parts = [ThetaSketch().update_hashes(h) for h in hashes]
        union = theta_union(parts).to_bytes()
        reordered = theta_union([parts[i] for i in rng.permutation(files)]).to_bytes()
        if not (union == single == reordered):
            mismatches.append(seed)
    report("criterion 2 theta union byte-identical to single pass", not mismatches,
           f"20 seeds x 100 files, mismatching seeds {mismatches}")
    assert not mismatches


def test_criterion_3_storage_bounds(million):
    table, rep, _ = million
    data, _ = live_files(table)
    cols = _columns(rep)
    by_id = {c.column_id: c for c in table.schema}
    low_card = {n for n, c in cols.items() if "distinct_exact" in c and c["distinct_exact"] <= 15}
    theta_max, low_max, kll_sizes, total = 0, 0, [], 0
    per_column_theta: dict[int, list[ThetaSketch]] = {}
    per_column_kll: dict[int, list[KllSketch]] = {}
    for e in data:
        for blob in sidecar_read(table.resolve(e.sketch_sidecar_path)).blobs:
            size = len(blob.payload)
            total += size
            if blob.blob_type is BlobType.THETA:
                theta_max = max(theta_max, size)
                if by_id[blob.column_id].name in low_card:
                    low_max = max(low_max, size)
                per_column_theta.setdefault(blob.column_id, []).append(ThetaSketch.from_bytes(blob.payload))
            else:
                kll_sizes.append(size)
                per_column_kll.setdefault(blob.column_id, []).append(KllSketch.from_bytes(blob.payload))
    merged_theta = max(len(theta_union(s).to_bytes()) for s in per_column_theta.values())
    merged_kll = [len(kll_merge_all(s).to_bytes()) for s in per_column_kll.values()]
    theta_max = max(theta_max, merged_theta)
    kll_sizes += merged_kll
    lo, hi = KLL_BLOB_RANGE
    ok_theta = theta_max <= THETA_BLOB_MAX
    ok_low = bool(low_card) and low_max <= LOW_CARD_PAYLOAD_MAX
    ok_kll = all(lo <= s <= hi for s in kll_sizes)
    report("criterion 3a theta blob size", ok_theta,
           f"largest {theta_max} B <= {THETA_BLOB_MAX} B (per file and merged); all sketch payloads {total / 1e6:.1f} MB")
    report("criterion 3b low-cardinality theta payload", ok_low,
           f"{len(low_card)} columns with <= 15 distinct, largest {low_max} B <= {LOW_CARD_PAYLOAD_MAX} B")
    report("criterion 3c KLL blob size", ok_kll,
           f"per-file {min(kll_sizes)}..{max(kll_sizes)} B, merged {min(merged_kll)}..{max(merged_kll)} B, accepted {lo}..{hi} B")
    assert ok_theta and ok_low and ok_kll


def test_criterion_4_mor_correction(tmp_path):
    bad = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        spec = TableSpec(rows=int(rng.integers(100, 3000)), files=int(rng.integers(1, 6)), columns=4,
                         partitions=int(rng.integers(1, 4)), commits_per_partition=int(rng.integers(1, 3)))
        t = generate_table(tmp_path / f"w{seed}", spec, seed=seed)
        for _ in range(int(rng.integers(1, 4))):
            part = t.partitions()[int(rng.integers(0, len(t.partitions())))] if rng.random() < 0.5 else None
            random_deletes(t, rng, float(rng.uniform(0.01, 0.3)), part)
        for key in [None, *t.partitions()]:
            data, deletes = live_files(t, partition_filter=key)
            if corrected_record_count(data, deletes) != oracle_stats(t, partition_filter=key).record_count:
                bad.append((seed, key))

    t = make_table(tmp_path / "million", [("id", "int64", False)])
    append(t, WriteBatch("p", [(i,) for i in range(1_000_000)]), max_rows_per_file=100_000)
    delete_rows(t, "p", range(0, 1_000_000, 20))
    data, deletes = live_files(t)
    with OpenCounter() as c:
        r = evaluate(parse_rule("count > 500K"), t)
    exact = oracle_stats(t).record_count
    worked = (
        sum(e.record_count for e in data) == 1_000_000
        and sum(d.delete_count for d in deletes) == 50_000
        and corrected_record_count(data, deletes) == 950_000 == exact
        and (r.verdict, r.observed, r.evaluated_from, c.total) == (Verdict.PASS, 950_000, "metadata", 0)
    )
    report("criterion 4a corrected count equals oracle", not bad, f"50 random workloads, mismatches {bad}")
    report("criterion 4b 1,000,000 - 50,000 worked example", worked,
           f"corrected {corrected_record_count(data, deletes)}, oracle {exact}, 'count > 500K' {r.verdict.value} "
           f"observed {r.observed} from {r.evaluated_from} with {c.total} data-file opens")
    assert not bad and worked


def test_criterion_5_zero_scan(tmp_path, audit_opens):
    t = generate_table(tmp_path / "t", TableSpec(rows=4000, files=4, columns=20, partitions=2, commits_per_partition=3), seed=5)
    now = t.current_snapshot().commit_ts + HOUR
    rules = [r for r in generate_rule_corpus(t, n=200, seed=5, now=now) if r.tier.value != "SCAN_REQUIRED"]
    add_constraint(t, "record_count > 0")
    add_constraint(t, "null_count(id) / record_count < 0.05")
    batch = WriteBatch(t.partitions()[0], generate_rows(np.random.default_rng(5), TableSpec(columns=20).profiles(), 50))
    entries = [e for e, _ in write_files(t, batch)]
    counts = {}
    with OpenCounter() as c, audit_opens() as a:
        evaluate_all(rules, t, now=now)
    counts["rules"] = (c.total, a.opens)
    with OpenCounter() as c, audit_opens() as a:
        commit(t, entries)
    counts["constraints"] = (c.total, a.opens)
    with OpenCounter() as c, audit_opens() as a:
        observe_table(t, now=now, sweep=True)
    counts["observability"] = (c.total, a.opens)
    leaked = list(OPEN_LOG.in_zero_scan)
    ok = all(v == (0, 0) for v in counts.values()) and not leaked
    report("criterion 5 zero data-file opens", ok,
           f"{len(rules)} non-scan rules, constraint commit, observer ingestion: "
           + ", ".join(f"{k} {v[0]} instrumented / {v[1]} audited" for k, v in counts.items())
           + f"; {len(leaked)} opens inside zero-scan regions so far this session")
    assert ok


def test_criterion_6_oracle_equivalence(tmp_path):
    exact_disagree, sketch_out_of_band, band_hits, band_flips, indeterminate, compared = [], [], 0, 0, {}, 0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        spec = TableSpec(rows=int(rng.integers(2000, 8000)), files=int(rng.integers(2, 8)), columns=20,
                         partitions=int(rng.integers(1, 4)), commits_per_partition=int(rng.integers(1, 4)))
        t = generate_table(tmp_path / f"t{seed}", spec, seed=seed)
        now = t.current_snapshot().commit_ts + int(rng.integers(1, 48)) * HOUR
        rules = generate_rule_corpus(t, n=200, seed=seed, now=now)
        oracle = Oracle(t, now)
        for rule, got in zip(rules, evaluate_all(rules, t, now=now)):
            tier = rule.tier.value
            if tier == "SCAN_REQUIRED":
                continue
            want = oracle.evaluate(rule)
            compared += 1
            if got.verdict is Verdict.INDETERMINATE:
                indeterminate[tier] = indeterminate.get(tier, 0) + 1
            band_hits += got.within_error_band
            if got.verdict is want.verdict:
                continue
            if tier in EXACT_TIERS:
                exact_disagree.append((seed, rule.to_line(), got.verdict.value, want.verdict.value))
            elif got.within_error_band:
                band_flips += 1
            else:
                sketch_out_of_band.append((seed, rule.to_line(), got.verdict.value, want.verdict.value))
    for d in exact_disagree[:10] + sketch_out_of_band[:10]:
        print("  disagreement:", d)
    ok_exact, ok_sketch = not exact_disagree, not sketch_out_of_band
    report("criterion 6a exact tiers agree with the oracle", ok_exact,
           f"{compared} non-scan rule evaluations over 50 tables, {len(exact_disagree)} disagreements; "
           f"INDETERMINATE by tier (oracle agreed) {indeterminate}")
    report("criterion 6b sketch tiers disagree only inside the error band", ok_sketch,
           f"{band_hits} band hits, {band_flips} in-band verdict flips, {len(sketch_out_of_band)} out-of-band disagreements")
    assert ok_exact and ok_sketch


def _rejects(t, action) -> tuple[bool, str]:
    before = dir_hash(t.metadata_dir)
    try:
        action()
    except ConstraintViolation as exc:
        msg = str(exc)
        named = exc.constraint_id in msg and repr(exc.observed) in msg and repr(exc.bound) in msg
        return dir_hash(t.metadata_dir) == before and named, msg
    return False, "commit was accepted"


def test_criterion_7_constraints(tmp_path):
    results = {}
    schema = [("user_id", "int64"), ("event_ts", "timestamp-micros")]

    t = make_table(tmp_path / "nulls", schema)
    add_constraint(t, "null_count(user_id) / record_count < 0.05", "null_ratio")
    append(t, WriteBatch("p", [(None if i < 40 else i, 0) for i in range(1000)]))
    u = make_table(tmp_path / "nulls2", schema)
    add_constraint(u, "null_count(user_id) / record_count < 0.05", "null_ratio")
    results["null ratio"] = _rejects(u, lambda: append(u, WriteBatch("p", [(None if i < 60 else i, 0) for i in range(1000)])))

    t = make_table(tmp_path / "count", schema)
    add_constraint(t, "record_count > 1000", "min_rows")
    append(t, WriteBatch("p", [(i, 0) for i in range(2000)]))
    delete_rows(t, "p", range(0, 2000, 20))  # 1,900 rows remain
    # positions are physical, so skip the ones already deleted; 950 more would leave 950 rows
    results["record count (deletes below the floor)"] = _rejects(t, lambda: delete_rows(t, "p", [i for i in range(1000) if i % 20]))
    results["record count (small overwrite)"] = _rejects(t, lambda: overwrite(t, WriteBatch("p", [(1, 0)] * 500)))

    t = make_table(tmp_path / "fresh", schema)
    start = 1_800_000_000_000_000
    t.clock.set(start)
    add_constraint(t, "max(event_ts) >= commit_ts - interval '2 hours'", "fresh")
    append(t, WriteBatch("p", [(1, start - HOUR)]))
    t.clock.set(start + 6 * HOUR)
    results["freshness"] = _rejects(t, lambda: overwrite(t, WriteBatch("p", [(2, start - HOUR)])))

    ok = all(v[0] for v in results.values())
    for name, (passed, msg) in results.items():
        print(f"  {name}: {'rejected, metadata unchanged' if passed else 'NOT ENFORCED'}: {msg}")
    report("criterion 7 constraint enforcement", ok,
           f"{sum(v[0] for v in results.values())}/{len(results)} violating commits rejected with unchanged metadata hash "
           "and a message naming constraint, observed value and bound")
    assert ok


def test_criterion_8_incidents(tmp_path):
    gap = replay_incident("freshness_gap", tmp_path / "gap")
    [corrupt] = [e.commit_index for e in gap.expected if e.kind == "ROW_COUNT_ANOMALY"]
    anomaly_at = sorted({gap.snapshots.index(a.snapshot_id) for a in gap.found("ROW_COUNT_ANOMALY")})
    fresh = gap.found("FRESHNESS_GAP")
    ok_gap = gap.matches_expectation() and anomaly_at == [corrupt] and bool(fresh) and gap.fixture["sweep_fired"] == [False, False, True, True]

    spike = replay_incident("null_spike", tmp_path / "spike")
    [first] = [e.commit_index for e in spike.expected if e.kind == "NULL_DRIFT"]
    drift_at = sorted({spike.snapshots.index(a.snapshot_id) for a in spike.found("NULL_DRIFT")})
    ok_spike = spike.matches_expectation() and bool(drift_at) and drift_at[0] == first

    report("criterion 8a freshness_gap", ok_gap,
           f"ROW_COUNT_ANOMALY at commit indices {anomaly_at} (corrupted commit {corrupt}); "
           f"FRESHNESS_GAP alerts {len(fresh)}, sweeps fired {gap.fixture['sweep_fired']}")
    report("criterion 8b null_spike", ok_spike,
           f"NULL_DRIFT at commit indices {drift_at}, first elevated commit {first}, null rates "
           + ", ".join(f"{r:.3f}" for r in spike.fixture["null_rates"]))
    assert ok_gap and ok_spike


def test_criterion_9_coverage():
    wrong = [(text, parse_rule(text).tier.value, tier) for text, tier in COVERAGE_EXAMPLES if parse_rule(text).tier.value != tier]
    cov = coverage_report(sample_corpus(10_000, seed=2024))
    frac = cov["zero_scan_fraction"]
    ok_examples = not wrong
    ok_frac = abs(frac - ZERO_SCAN_TARGET) <= ZERO_SCAN_TOLERANCE
    report("criterion 9a example rules classify into their tiers", ok_examples,
           f"{len(COVERAGE_EXAMPLES) - len(wrong)}/{len(COVERAGE_EXAMPLES)} correct {wrong}")
    report("criterion 9b zero-scan fraction of a 10,000-rule consumer corpus", ok_frac,
           f"{frac:.2%} (target {ZERO_SCAN_TARGET:.0%} +/- {ZERO_SCAN_TOLERANCE:.0%}); tiers {cov['tiers']}")
    assert ok_examples and ok_frac


def test_criterion_10_scan_count_asymmetry(tmp_path, audit_opens):
    print("  not reproducible here: production compute and storage-read savings, fleet size and "
          "alerting latency percentiles depend on a production deployment; criteria 1-9 and the "
          "scan-count asymmetry below stand in for them")
    t = generate_table(tmp_path / "t", TableSpec(rows=20_000, files=20, columns=20, commits_per_partition=2), seed=10)
    data, _ = live_files(t)
    now = t.current_snapshot().commit_ts + HOUR
    rules = [r for r in generate_rule_corpus(t, n=200, seed=10, now=now) if r.tier.value != "SCAN_REQUIRED"]
    with OpenCounter() as meta, audit_opens() as meta_audit:
        evaluate_all(rules, t, now=now)
    oracle = Oracle(t, now)
    with OpenCounter() as scan, audit_opens() as scan_audit:
        for r in rules:
            oracle.evaluate(r)
    ok = meta.total == 0 and meta_audit.opens == 0 and scan.reads >= len(data) and scan_audit.opens >= len(data)
    report("criterion 10 scan-count asymmetry", ok,
           f"{len(rules)} rules over {len(data)} data files: metadata path {meta.total} opens "
           f"({meta_audit.opens} audited), oracle path {scan.reads} opens ({scan_audit.opens} audited)")
    assert ok
