from __future__ import annotations

import math

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from zeroscan.datafile import read_rows, write_csv
from zeroscan.model import build_schema
from zeroscan.values import (
    INT64_MAX,
    INT64_MIN,
    NULL_CELL,
    STRING_BOUND_BYTES,
    Kind,
    bound_maybe_truncated,
    canonical_bytes,
    checker,
    encode_cell,
    parse_cell,
    predecessor_prefix,
    successor_prefix,
    truncate_lower,
    truncate_upper,
)

ints = st.integers(INT64_MIN, INT64_MAX)
texts = st.text(st.characters(blacklist_categories=("Cs",)), max_size=40)


@given(ints)
def test_int_cells_round_trip(v):
    assert parse_cell(Kind.INT64, encode_cell(Kind.INT64, v)) == v


@given(st.floats(allow_nan=True, allow_infinity=True))
def test_float_cells_round_trip(v):
    back = parse_cell(Kind.FLOAT64, encode_cell(Kind.FLOAT64, v))
    assert (math.isnan(v) and math.isnan(back)) or back == v


@given(texts)
def test_string_cells_round_trip(v):
    assert parse_cell(Kind.STRING, encode_cell(Kind.STRING, v)) == v


def test_null_cell_is_distinct_from_the_string():
    assert encode_cell(Kind.STRING, None) == NULL_CELL
    assert encode_cell(Kind.STRING, NULL_CELL) != NULL_CELL
    assert parse_cell(Kind.STRING, encode_cell(Kind.STRING, NULL_CELL)) == NULL_CELL


def test_bool_cells():
    assert parse_cell(Kind.BOOL, encode_cell(Kind.BOOL, True)) is True
    with pytest.raises(ValueError):
        parse_cell(Kind.BOOL, "yes")


@pytest.mark.parametrize(
    "kind,bad",
    [(Kind.INT64, True), (Kind.INT64, 1.0), (Kind.INT64, 1 << 63), (Kind.STRING, 3), (Kind.BOOL, 1), (Kind.FLOAT64, "x")],
)
def test_checker_rejects(kind, bad):
    with pytest.raises(TypeError):
        checker(kind)(bad)


def test_canonical_bytes_normalizes_zero_and_nan():
    assert canonical_bytes(-0.0) == canonical_bytes(0.0)
    assert canonical_bytes(float("nan")) == canonical_bytes(-float("nan"))
    assert canonical_bytes(1) != canonical_bytes(True)


@given(texts)
def test_truncated_lower_bound_is_a_lower_bound(s):
    lo = truncate_lower(s)
    assert lo <= s
    assert len(lo.encode()) <= max(STRING_BOUND_BYTES, len(s.encode()) if lo == s else 0)


@given(texts)
def test_truncated_upper_bound_is_an_upper_bound(s):
    hi = truncate_upper(s)
    if hi is not None:
        assert hi >= s
        if hi != s:
            assert len(hi.encode()) <= STRING_BOUND_BYTES + 3


@given(texts)
def test_truncated_bounds_are_flagged(s):
    lo, hi = truncate_lower(s), truncate_upper(s)
    if lo != s:
        assert bound_maybe_truncated(lo)
    if hi is not None and hi != s:
        assert bound_maybe_truncated(hi)


@given(texts, texts)
def test_successor_prefix_exceeds_every_extension(prefix, tail):
    succ = successor_prefix(prefix)
    if succ is not None:
        assert prefix + tail < succ


@given(texts)
def test_predecessor_prefix_undoes_truncation(s):
    hi = truncate_upper(s)
    if hi is not None and hi != s:
        assert s.startswith(predecessor_prefix(hi))


def test_upper_bound_absent_when_no_increment_fits():
    s = chr(0x10FFFF) * 10
    assert truncate_upper(s) is None


@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.tuples(st.one_of(st.none(), texts), st.one_of(st.none(), st.floats()), st.one_of(st.none(), ints)), max_size=20))
def test_data_file_round_trip(tmp_path_factory, rows):
    schema = build_schema([("s", "string"), ("f", "float64"), ("i", "int64")])
    path = tmp_path_factory.mktemp("csv") / "f.csv"
    encoded = [tuple(encode_cell(c.kind, v) for c, v in zip(schema, row)) for row in rows]
    write_csv(path, schema, encoded)
    back = read_rows(path, schema)
    assert len(back) == len(rows)
    for got, want in zip(back, rows):
        assert got[0] == want[0] and got[2] == want[2]
        assert (got[1] is None and want[1] is None) or got[1] == want[1] or (math.isnan(got[1]) and math.isnan(want[1]))
