"""zeroscan: a file-based table store whose data-quality checks read metadata, not rows."""

from .errors import ConstraintViolation, ZeroScanError
from .model import ColumnSchema, Table, build_schema, corrected_record_count, live_files
from .rules import RuleResult, Tier, Verdict, coverage_report, evaluate, parse_rule
from .values import Kind
from .writer import WriteBatch, add_constraint, append, commit, compact, delete_rows, overwrite, write_files

__version__ = "0.1.0"

__all__ = [
    "ColumnSchema",
    "ConstraintViolation",
    "Kind",
    "RuleResult",
    "Table",
    "Tier",
    "Verdict",
    "WriteBatch",
    "ZeroScanError",
    "add_constraint",
    "append",
    "build_schema",
    "commit",
    "compact",
    "corrected_record_count",
    "coverage_report",
    "delete_rows",
    "evaluate",
    "live_files",
    "overwrite",
    "parse_rule",
    "write_files",
]
