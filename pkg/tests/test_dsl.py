from __future__ import annotations

import pytest

from zeroscan import dsl
from zeroscan.errors import RuleSyntaxError


@pytest.mark.parametrize(
    "text,value",
    [("500K", 500_000), ("1.5M", 1_500_000), ("5%", 0.05), ("2h", 7_200_000_000), ("30m", 1_800_000_000), ("10", 10), ("2.5", 2.5), ("1e3", 1000.0)],
)
def test_numbers(text, value):
    assert dsl.parse_number(text) == value


def test_intervals():
    assert dsl.parse_interval("2 hours") == 7_200_000_000
    assert dsl.parse_interval("1 day 30 minutes") == 86_400_000_000 + 1_800_000_000
    with pytest.raises(ValueError):
        dsl.parse_interval("3 fortnights")


def test_terms_and_aliases():
    node = dsl.parse_expression("nullCount(user_id) / count < 5%")
    assert isinstance(node, dsl.Compare)
    assert [str(t) for t in dsl.terms_of(node)] == ["null_count(user_id)", "record_count"]


def test_interval_literal_in_expression():
    node = dsl.parse_expression("max(event_ts) >= commit_ts - interval '2 hours'")
    values = {"max": 10_000_000_000, "commit_ts": 12_000_000_000}
    assert dsl.evaluate(node, lambda t: values[t.name]) is True


def test_row_mode_columns():
    node = dsl.parse_expression("a < b * 1.15", row_mode=True)
    assert dsl.columns_of(node) == ["a", "b"]
    assert dsl.evaluate(node, lambda c: {"a": 1, "b": 1}[c.name]) is True


def test_division_by_zero_and_missing():
    node = dsl.parse_expression("null_count(x) / record_count < 1")
    with pytest.raises(ZeroDivisionError):
        dsl.evaluate(node, lambda t: 0)
    with pytest.raises(dsl.MissingValue):
        dsl.evaluate(node, lambda t: None)


@pytest.mark.parametrize("text,pos", [("count > ", 8), ("count >> 3", 7), ("median(x, ) < 1", 10), ("count $ 1", 6)])
def test_syntax_errors_carry_position(text, pos):
    with pytest.raises(RuleSyntaxError) as exc:
        dsl.parse_expression(text)
    assert exc.value.position == pos


def test_render_round_trips():
    text = "sum(amount) / count >= 2 * mean(amount)"
    node = dsl.parse_expression(text)
    assert dsl.parse_expression(dsl.render(node)) == node
