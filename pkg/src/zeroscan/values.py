"""Column kinds and the canonical value encodings shared by writer and oracle.

Three encodings live here:

* the CSV cell text used in data files (``encode_cell`` / ``parse_cell``),
* the canonical byte encoding fed to sketch hashes (``canonical_bytes``),
* truncated string bounds kept in manifests (``truncate_lower`` / ``truncate_upper``).

Both the write path and the scan oracle parse cells through ``parse_cell`` so a
parsing bug cannot show up as a statistics mismatch.
"""

from __future__ import annotations

import math
import re
import struct
from enum import Enum
from typing import Any, Callable, Optional

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

NULL_CELL = "\\N"
STRING_BOUND_BYTES = 16
# A truncated bound never drops below this many bytes (a code point is at most 4 bytes).
_MIN_TRUNCATED_BYTES = STRING_BOUND_BYTES - 3
_MAX_CODE_POINT = 0x10FFFF


class Kind(str, Enum):
    INT64 = "int64"
    FLOAT64 = "float64"
    STRING = "string"
    BOOL = "bool"
    TIMESTAMP = "timestamp-micros"

    @property
    def numeric(self) -> bool:
        return self in (Kind.INT64, Kind.FLOAT64)

    @property
    def integral(self) -> bool:
        return self in (Kind.INT64, Kind.TIMESTAMP)


# -- validation -------------------------------------------------------------


def _check_int(v: Any) -> Any:
    if isinstance(v, bool) or not isinstance(v, int) or not INT64_MIN <= v <= INT64_MAX:
        raise TypeError
    return v


def _check_float(v: Any) -> Any:
    if isinstance(v, float):
        return v
    if isinstance(v, int) and not isinstance(v, bool):
        return float(v)
    raise TypeError


def _check_str(v: Any) -> Any:
    if not isinstance(v, str):
        raise TypeError
    return v


def _check_bool(v: Any) -> Any:
    if not isinstance(v, bool):
        raise TypeError
    return v


_CHECKERS: dict[Kind, Callable[[Any], Any]] = {
    Kind.INT64: _check_int,
    Kind.TIMESTAMP: _check_int,
    Kind.FLOAT64: _check_float,
    Kind.STRING: _check_str,
    Kind.BOOL: _check_bool,
}


def checker(kind: Kind) -> Callable[[Any], Any]:
    """Return a function that validates (and normalizes) a non-null value, raising TypeError."""
    return _CHECKERS[kind]


# -- CSV cells --------------------------------------------------------------


def _enc_str(v: str) -> str:
    # backslashes are doubled so no string can collide with NULL_CELL; NUL cannot go into csv
    if "\\" not in v and "\x00" not in v:
        return v
    return v.replace("\\", "\\\\").replace("\x00", "\\0")


def _enc_bool(v: bool) -> str:
    return "true" if v else "false"


_ENCODERS: dict[Kind, Callable[[Any], str]] = {
    Kind.INT64: str,
    Kind.TIMESTAMP: str,
    Kind.FLOAT64: repr,
    Kind.STRING: _enc_str,
    Kind.BOOL: _enc_bool,
}


def encoder(kind: Kind) -> Callable[[Any], str]:
    return _ENCODERS[kind]


def encode_cell(kind: Kind, value: Any) -> str:
    if value is None:
        return NULL_CELL
    return _ENCODERS[kind](value)


_ESCAPE = re.compile(r"\\(.)", re.DOTALL)


def _parse_str(text: str) -> str:
    if "\\" not in text:
        return text
    return _ESCAPE.sub(lambda m: "\x00" if m.group(1) == "0" else m.group(1), text)


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"bad bool cell {text!r}")


_PARSERS: dict[Kind, Callable[[str], Any]] = {
    Kind.INT64: int,
    Kind.TIMESTAMP: int,
    Kind.FLOAT64: float,
    Kind.STRING: _parse_str,
    Kind.BOOL: _parse_bool,
}


def parse_cell(kind: Kind, text: str) -> Any:
    """Inverse of ``encode_cell``. Raises ValueError on malformed text."""
    if text == NULL_CELL:
        return None
    return _PARSERS[kind](text)


def parser(kind: Kind) -> Callable[[str], Any]:
    p = _PARSERS[kind]

    def parse(text: str) -> Any:
        if text == NULL_CELL:
            return None
        return p(text)

    return parse


# -- canonical bytes for hashing -------------------------------------------

_CANONICAL_NAN = struct.pack(">Q", 0x7FF8000000000000)


def canonical_bytes(value: Any) -> bytes:
    """Byte encoding hashed by sketches; stable across processes and languages."""
    if isinstance(value, bool):
        return b"\x01" if value else b"\x00"
    if isinstance(value, int):
        return value.to_bytes(8, "big", signed=True)
    if isinstance(value, float):
        if math.isnan(value):
            return _CANONICAL_NAN
        if value == 0.0:
            value = 0.0
        return struct.pack(">d", value)
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, (bytes, bytearray)):
        return bytes(value)
    raise TypeError(f"cannot hash value of type {type(value).__name__}")


# -- string bounds ----------------------------------------------------------


def _prefix(value: str) -> str:
    """Longest prefix of ``value`` fitting in STRING_BOUND_BYTES of UTF-8."""
    out = []
    size = 0
    for ch in value:
        n = len(ch.encode("utf-8"))
        if size + n > STRING_BOUND_BYTES:
            break
        out.append(ch)
        size += n
    return "".join(out)


def _needs_truncation(value: str) -> bool:
    return len(value) > STRING_BOUND_BYTES // 4 and len(value.encode("utf-8")) > STRING_BOUND_BYTES


def truncate_lower(value: str) -> str:
    return _prefix(value) if _needs_truncation(value) else value


def _increment_last(prefix: str) -> Optional[str]:
    if not prefix:
        return None
    cp = ord(prefix[-1])
    if cp >= _MAX_CODE_POINT:
        return None
    cp += 1
    if 0xD800 <= cp <= 0xDFFF:
        cp = 0xE000
    return prefix[:-1] + chr(cp)


def truncate_upper(value: str) -> Optional[str]:
    """Upper bound no wider than STRING_BOUND_BYTES(+1 char growth); None if no bound fits."""
    if not _needs_truncation(value):
        return value
    return _increment_last(_prefix(value))


def successor_prefix(value: str) -> Optional[str]:
    """Smallest string greater than every string that starts with ``value``."""
    return _increment_last(value)


def bound_maybe_truncated(value: str) -> bool:
    """Conservative check: could this stored string bound be a truncated one?"""
    return len(value.encode("utf-8")) >= _MIN_TRUNCATED_BYTES


def predecessor_prefix(upper: str) -> str:
    """Undo ``truncate_upper``'s increment: the prefix that every covered value starts with."""
    cp = ord(upper[-1]) - 1
    if cp == 0xDFFF:
        cp = 0xD7FF
    return upper[:-1] + chr(cp)
