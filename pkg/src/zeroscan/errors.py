"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ZeroScanError(Exception):
    """Base class for every error raised by zeroscan."""


# -- metadata ---------------------------------------------------------------


class SchemaError(ZeroScanError):
    pass


class UnknownSnapshot(ZeroScanError):
    def __init__(self, snapshot_id):
        super().__init__(f"unknown snapshot {snapshot_id}")
        self.snapshot_id = snapshot_id


class MissingStats(ZeroScanError):
    """A live file has no statistics for the column; callers must fall back to a scan."""

    def __init__(self, column_id: int, file_path: str):
        super().__init__(f"no statistics for column {column_id} in {file_path}")
        self.column_id = column_id
        self.file_path = file_path


# -- write path -------------------------------------------------------------


class TypeMismatch(ZeroScanError):
    def __init__(self, row_index: int, column: str, value=None):
        super().__init__(f"row {row_index}: value {value!r} does not match type of column {column!r}")
        self.row_index = row_index
        self.column = column


class NullInNonNullable(TypeMismatch):
    def __init__(self, row_index: int, column: str):
        ZeroScanError.__init__(self, f"row {row_index}: null in non-nullable column {column!r}")
        self.row_index = row_index
        self.column = column


class ConstraintViolation(ZeroScanError):
    def __init__(self, constraint_id: str, observed, bound, reason: str = ""):
        msg = f"constraint {constraint_id!r} violated: observed {observed!r}, bound {bound!r}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)
        self.constraint_id = constraint_id
        self.observed = observed
        self.bound = bound
        self.reason = reason


class InvalidConstraint(ZeroScanError):
    pass


class StaleTable(ZeroScanError):
    def __init__(self, expected, actual):
        super().__init__(f"table changed since read: expected snapshot {expected}, found {actual}")
        self.expected = expected
        self.actual = actual


class TableLocked(ZeroScanError):
    pass


class PositionOutOfRange(ZeroScanError):
    def __init__(self, file_path: str, position: int, record_count: int):
        super().__init__(f"position {position} out of range for {file_path} ({record_count} rows)")
        self.file_path = file_path
        self.position = position


class DuplicateDelete(ZeroScanError):
    def __init__(self, file_path: str, position: int):
        super().__init__(f"position {position} of {file_path} is already deleted")
        self.file_path = file_path
        self.position = position


class CorruptDataFile(ZeroScanError):
    pass


class ScanForbidden(ZeroScanError):
    """A data file was opened inside a zero-scan region."""


# -- sketches ---------------------------------------------------------------


class MixedParameters(ZeroScanError):
    pass


class EmptySketch(ZeroScanError):
    pass


class NonFiniteValue(ZeroScanError, ValueError):
    pass


class SidecarError(ZeroScanError):
    pass


class BadMagic(SidecarError):
    pass


class TruncatedFile(SidecarError):
    pass


class DuplicateBlob(SidecarError):
    pass


# -- rules ------------------------------------------------------------------


class RuleSyntaxError(ZeroScanError):
    def __init__(self, message: str, text: str = "", position: int = 0):
        super().__init__(f"{message} at position {position}: {text!r}" if text else message)
        self.message = message
        self.text = text
        self.position = position


class UnknownColumn(ZeroScanError):
    def __init__(self, name: str):
        super().__init__(f"unknown column {name!r}")
        self.name = name


# -- observability / generation --------------------------------------------


class UnknownScenario(ZeroScanError):
    pass
