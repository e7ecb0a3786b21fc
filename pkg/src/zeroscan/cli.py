"""Command-line interface: ``zeroscan <command> ...``.

Machine output goes to stdout as JSON lines; human-readable tables go to
stderr. Exit codes are meant for CI gates:

    0  success / every rule passed
    1  usage or runtime error
    2  at least one rule FAILED
    3  commit rejected by a constraint
    4  at least one rule INDETERMINATE (suppressed by --lenient)
    5  validation found manifest/oracle disagreements
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Optional, Sequence

from .errors import ConstraintViolation, ZeroScanError
from .model import ColumnSchema, Table, build_schema, live_files
from .values import Kind, parser

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAIL = 2
EXIT_CONSTRAINT = 3
EXIT_INDETERMINATE = 4
EXIT_VALIDATION = 5

log = logging.getLogger("zeroscan")


def _emit(obj: Any) -> None:
    print(json.dumps(obj, sort_keys=True, default=str))


def _table_out(rows: Sequence[Sequence[Any]], header: Sequence[str]) -> None:
    """Aligned plain-text table on stderr."""
    cells = [[str(h) for h in header]] + [[("" if v is None else str(v)) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip(), file=sys.stderr)


def _load(path: str) -> Table:
    return Table.load(path)


# -- schema / input parsing -------------------------------------------------


def read_schema_file(path: str | Path) -> list[ColumnSchema]:
    """JSON list of ``{"name", "kind", "nullable"}`` objects or ``name:kind[:not null]`` lines."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        cols = json.loads(text)
        return build_schema([(c["name"], c["kind"], c.get("nullable", True)) for c in cols])
    specs = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(":")]
        nullable = not (len(parts) > 2 and parts[2].lower().replace("_", " ") in ("not null", "required"))
        specs.append((parts[0], parts[1], nullable))
    return build_schema(specs)


def _input_parser(kind: Kind):
    p = parser(kind)
    if kind is Kind.STRING:
        return p
    return lambda text: None if text == "" else p(text)


def read_input_csv(path: str | Path, schema: Sequence[ColumnSchema]):
    """Rows of a user CSV whose header names the schema columns (any order).

    An empty cell is null except in string columns, where it is the empty string (write \\N for null).
    """
    parsers = {c.name: _input_parser(c.kind) for c in schema}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        unknown = set(header) - set(parsers)
        if unknown:
            raise ZeroScanError(f"input columns not in schema: {sorted(unknown)}")
        index = {name: i for i, name in enumerate(header)}
        for line_no, cells in enumerate(reader, start=2):
            try:
                yield tuple(
                    parsers[c.name](cells[index[c.name]]) if c.name in index else None for c in schema
                )
            except (ValueError, IndexError) as exc:
                raise ZeroScanError(f"{path}:{line_no}: {exc}") from None


def read_positions(path: str | Path) -> Any:
    """JSON ``{file: [pos, ...]}`` / ``[ordinal, ...]``, or one ordinal per line."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("{") or text.startswith("["):
        return json.loads(text)
    return [int(t) for t in text.split()]


# -- commands ---------------------------------------------------------------


def cmd_init(args) -> int:
    schema = read_schema_file(args.schema)
    priority = [int(x) for x in args.stats_priority.split(",")] if args.stats_priority else None
    table = Table.create(args.table, schema, name=args.name, stats_priority=priority)
    _emit({"table": table.name, "path": str(table.path), "columns": len(schema)})
    return EXIT_OK


def cmd_write(args) -> int:
    from .writer import WriteBatch, append, overwrite

    table = _load(args.table)
    batch = WriteBatch(args.partition, read_input_csv(args.input, table.schema), args.writer)
    op = overwrite if args.mode == "overwrite" else append
    snap = op(table, batch, max_rows_per_file=args.max_rows_per_file)
    _emit(snap.to_dict())
    return EXIT_OK


def cmd_delete(args) -> int:
    from .writer import delete_rows

    table = _load(args.table)
    snap = delete_rows(table, args.partition, read_positions(args.positions), args.writer)
    _emit(snap.to_dict())
    return EXIT_OK


def cmd_compact(args) -> int:
    from .writer import compact, sort_partition

    table = _load(args.table)
    if args.sort_by:
        snap = sort_partition(table, args.partition, args.sort_by, max_rows_per_file=args.max_rows_per_file)
    else:
        snap = compact(table, args.partition, max_rows_per_file=args.max_rows_per_file)
    _emit(snap.to_dict())
    return EXIT_OK


def cmd_constraint(args) -> int:
    from .writer import add_constraint, remove_constraint

    table = _load(args.table)
    if args.action == "add":
        c = add_constraint(table, args.expression, args.id, args.scope)
        _emit(c.to_dict())
    elif args.action == "remove":
        remove_constraint(table, args.expression)
    else:
        for c in table.metadata.constraints:
            _emit(c.to_dict())
        _table_out([(c.constraint_id, c.scope, c.expression) for c in table.metadata.constraints], ["id", "scope", "expression"])
    return EXIT_OK


def _exit_for(results, lenient: bool) -> int:
    verdicts = {r.verdict.value for r in results}
    if "FAIL" in verdicts:
        return EXIT_FAIL
    if "INDETERMINATE" in verdicts and not lenient:
        return EXIT_INDETERMINATE
    return EXIT_OK


def cmd_rules(args) -> int:
    from .rules import add_rule, evaluate_all, load_rules

    table = _load(args.table)
    if args.action == "add":
        if not args.text:
            raise ZeroScanError("rules add needs the rule text")
        rule = add_rule(table, args.text, args.id, args.partition)
        _emit({"rule_id": rule.rule_id, "tier": rule.tier.value, "line": rule.to_line()})
        return EXIT_OK
    rules = load_rules(table)
    if args.action == "list":
        for r in rules:
            _emit({"rule_id": r.rule_id, "tier": r.tier.value, "partition": r.partition, "text": r.text})
        _table_out([(r.rule_id, r.tier.value, r.partition or "", r.text) for r in rules], ["id", "tier", "partition", "rule"])
        return EXIT_OK
    results = evaluate_all(rules, table, snapshot_id=args.snapshot, now=args.now, allow_scan=args.allow_scan)
    out = open(args.out, "w", encoding="utf-8") if args.out else None
    try:
        for r in results:
            line = json.dumps(r.to_dict(), sort_keys=True, default=str)
            print(line, file=out) if out else print(line)
    finally:
        if out:
            out.close()
    _table_out(
        [(r.rule_id, r.verdict.value, r.tier.value, r.evaluated_from, r.observed, r.bound, r.reason) for r in results],
        ["id", "verdict", "tier", "from", "observed", "bound", "reason"],
    )
    return _exit_for(results, args.lenient)


def cmd_observe(args) -> int:
    from .observe import load_config, observe_table

    table = _load(args.table)
    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    config = load_config(args.config, overrides)
    obs, new = observe_table(table, config, now=args.now, sweep=args.sweep)
    for a in new:
        _emit(a.to_dict())
    _table_out([(a.kind.value, a.partition, a.column or "", a.snapshot_id, f"{a.score:.3g}", a.details) for a in new],
               ["kind", "partition", "column", "snapshot", "score", "details"])
    print(f"{len(obs.series)} series, {len(obs.alerts)} alerts total, {len(new)} new", file=sys.stderr)
    return EXIT_OK


def _rules_from_file(path: Path):
    from .rules import parse_rule, parse_rule_line

    rules = []
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        head = s.split(": ", 1)[0]
        if ": " in s and " " not in head.replace(" @", "@"):
            rules.append(parse_rule_line(s))
        else:
            rules.append(parse_rule(s, rule_id=f"l{i}"))
    return rules


def cmd_coverage(args) -> int:
    from .rules import coverage_report, load_rules

    target = Path(args.target)
    if (target / "metadata" / "table.json").exists():
        rules = load_rules(Table.load(target))
    else:
        rules = _rules_from_file(target)
    report = coverage_report(rules)
    _emit(report)
    _table_out([(t, n) for t, n in report["tiers"].items()], ["tier", "rules"])
    print(f"zero-scan fraction {report['zero_scan_fraction']:.2%} of {report['total']} rules", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    from .oracle import validate_table

    report = validate_table(_load(args.table), args.snapshot)
    _emit(report)
    return EXIT_OK if report["ok"] else EXIT_VALIDATION


def cmd_gen(args) -> int:
    from .workload import TableSpec, generate_rule_corpus, generate_table, replay_incident, sample_corpus

    if args.what == "table":
        spec = TableSpec.from_ini(args.spec) if args.spec else TableSpec(
            rows=args.rows, files=args.files, columns=args.columns, partitions=args.partitions,
            commits_per_partition=args.commits, name=Path(args.target).name,
        )
        t0 = time.perf_counter()
        table = generate_table(args.target, spec, seed=args.seed)
        data, _ = live_files(table)
        _emit({"table": table.name, "path": str(table.path), "files": len(data),
               "rows": sum(e.record_count for e in data), "seconds": round(time.perf_counter() - t0, 3)})
        return EXIT_OK
    if args.what == "incident":
        replay = replay_incident(args.target, args.root, seed=args.seed)
        for a in replay.alerts:
            _emit(a.to_dict())
        ok = replay.matches_expectation()
        _emit({"scenario": replay.name, "table": str(replay.table.path), "matches_expectation": ok,
               "expected": [e.__dict__ for e in replay.expected], "fixture": replay.fixture})
        return EXIT_OK if ok else EXIT_FAIL
    if args.what == "corpus":
        target = Path(args.target)
        if (target / "metadata" / "table.json").exists():
            rules = generate_rule_corpus(Table.load(target), n=args.n, seed=args.seed)
        else:
            rules = sample_corpus(args.n, seed=args.seed)
        for r in rules:
            print(r.to_line())
        return EXIT_OK
    raise ZeroScanError(f"unknown gen target {args.what!r}")


def cmd_bench(args) -> int:
    import numpy as np

    from .sketches import KllSketch, ThetaSketch, kll_merge_all, theta_union
    from .sketches.hashing import hash_int64_array

    rng = np.random.default_rng(args.seed)
    thetas, klls = [], []
    t0 = time.perf_counter()
    for _ in range(args.files):
        values = rng.integers(0, args.files * args.rows_per_file, args.rows_per_file)
        thetas.append(ThetaSketch().update_hashes(hash_int64_array(values)).to_bytes())
        klls.append(KllSketch().update_many(values.astype(np.float64)).to_bytes())
    build = time.perf_counter() - t0
    t0 = time.perf_counter()
    merged_theta = theta_union([ThetaSketch.from_bytes(b) for b in thetas])
    merged_kll = kll_merge_all([KllSketch.from_bytes(b) for b in klls])
    merge = time.perf_counter() - t0
    _emit({
        "files": args.files,
        "rows_per_file": args.rows_per_file,
        "build_seconds": round(build, 4),
        "merge_seconds": round(merge, 4),
        "theta_estimate": merged_theta.estimate(),
        "kll_median": merged_kll.quantile(0.5),
    })
    print(f"merged {args.files} theta + kll sketches in {merge:.3f}s", file=sys.stderr)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zeroscan", description="Zero-scan data quality on a file-based table store.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init", help="create a table")
    s.add_argument("table")
    s.add_argument("--schema", required=True)
    s.add_argument("--name")
    s.add_argument("--stats-priority", help="comma-separated column ids that get statistics (max 200)")
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("write", help="append (or overwrite) a partition from a CSV file")
    s.add_argument("table")
    s.add_argument("--partition", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--mode", choices=["append", "overwrite"], default="append")
    s.add_argument("--writer", default="user")
    s.add_argument("--max-rows-per-file", type=int, default=100_000)
    s.set_defaults(func=cmd_write)

    s = sub.add_parser("delete", help="merge-on-read positional delete")
    s.add_argument("table")
    s.add_argument("--partition", required=True)
    s.add_argument("--positions", required=True)
    s.add_argument("--writer", default="user")
    s.set_defaults(func=cmd_delete)

    s = sub.add_parser("compact", help="rewrite a partition without its deletes")
    s.add_argument("table")
    s.add_argument("--partition", required=True)
    s.add_argument("--sort-by")
    s.add_argument("--max-rows-per-file", type=int, default=100_000)
    s.set_defaults(func=cmd_compact)

    s = sub.add_parser("constraint", help="manage commit-time constraints")
    s.add_argument("action", choices=["add", "list", "remove"])
    s.add_argument("table")
    s.add_argument("expression", nargs="?", help="constraint expression (add) or id (remove)")
    s.add_argument("--id")
    s.add_argument("--scope", choices=["table", "delta"], default="table")
    s.set_defaults(func=cmd_constraint)

    s = sub.add_parser("rules", help="manage and evaluate data-quality rules")
    s.add_argument("action", choices=["add", "list", "eval"])
    s.add_argument("table")
    s.add_argument("text", nargs="?")
    s.add_argument("--id")
    s.add_argument("--partition")
    s.add_argument("--snapshot", type=int)
    s.add_argument("--now", type=int, help="evaluation time in epoch microseconds")
    s.add_argument("--allow-scan", action="store_true")
    s.add_argument("--lenient", action="store_true", help="INDETERMINATE does not fail the run")
    s.add_argument("--out")
    s.set_defaults(func=cmd_rules)

    s = sub.add_parser("observe", help="replay commit events through the detectors")
    s.add_argument("table")
    s.add_argument("--sweep", action="store_true", help="also run the clock-driven freshness check")
    s.add_argument("--now", type=int)
    s.add_argument("--config")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.set_defaults(func=cmd_observe)

    s = sub.add_parser("coverage", help="tier histogram of a table's rules or a rule file")
    s.add_argument("target")
    s.set_defaults(func=cmd_coverage)

    s = sub.add_parser("validate", help="compare manifest aggregates with a full scan")
    s.add_argument("table")
    s.add_argument("--snapshot", type=int)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("gen", help="generate tables, incident replays or rule corpora")
    s.add_argument("what", choices=["table", "incident", "corpus"])
    s.add_argument("target", help="table path, scenario name, or table/corpus target")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rows", type=int, default=10_000)
    s.add_argument("--files", type=int, default=10)
    s.add_argument("--columns", type=int, default=20)
    s.add_argument("--partitions", type=int, default=1)
    s.add_argument("--commits", type=int, default=1)
    s.add_argument("--spec", help="INI file with a [table] section")
    s.add_argument("--root", help="directory for incident tables")
    s.add_argument("--n", type=int, default=200)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("bench", help="micro-benchmarks")
    s.add_argument("what", choices=["sketch-merge"])
    s.add_argument("--files", type=int, default=100)
    s.add_argument("--rows-per-file", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConstraintViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        _emit({"error": "ConstraintViolation", "constraint_id": exc.constraint_id,
               "observed": exc.observed, "bound": exc.bound, "message": str(exc)})
        return EXIT_CONSTRAINT
    except (ZeroScanError, FileNotFoundError, FileExistsError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
