"""Tokenizer and expression parser shared by rules and commit constraints.

Aggregate expressions reference *terms* computed from metadata::

    null_count(user_id) / record_count < 0.05
    max(event_ts) >= commit_ts - interval '2 hours'
    median(latency) < 500

Row expressions (the body of ``expr(...)``) reference columns directly::

    a < b * 1.15

Numeric literals accept ``K``/``M``/``B`` multipliers (``500K``), percentages
(``5%`` -> 0.05) and duration units (``2h``, ``30m``, ``1d``), which evaluate
to microseconds, the unit of timestamp columns.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from typing import Any, Callable, Optional, Union

from .errors import RuleSyntaxError

MICROS = {
    "us": 1,
    "ms": 1_000,
    "s": 1_000_000,
    "m": 60_000_000,
    "h": 3_600_000_000,
    "d": 86_400_000_000,
    "w": 7 * 86_400_000_000,
}
_INTERVAL_UNITS = {
    "microsecond": "us",
    "millisecond": "ms",
    "second": "s",
    "minute": "m",
    "hour": "h",
    "day": "d",
    "week": "w",
}
_MULTIPLIERS = {"K": 1_000, "M": 1_000_000, "B": 1_000_000_000}

# canonical term name -> (arity, tier)
# arity: 0 = bare word, 1 = (col), 2 = (col, p) with p optional for percentile
TERMS: dict[str, tuple[int, str]] = {
    "record_count": (0, "BASE_MANIFEST"),
    "null_count": (1, "BASE_MANIFEST"),
    "nan_count": (1, "BASE_MANIFEST"),
    "value_count": (1, "BASE_MANIFEST"),
    "min": (1, "BASE_MANIFEST"),
    "max": (1, "BASE_MANIFEST"),
    "sum": (1, "COUNTER_EXT"),
    "mean": (1, "COUNTER_EXT"),
    "zero_count": (1, "COUNTER_EXT"),
    "true_count": (1, "COUNTER_EXT"),
    "distinct": (1, "THETA"),
    "median": (1, "KLL"),
    "percentile": (2, "KLL"),
    "iqr": (1, "KLL"),
    "commit_ts": (0, "FRESHNESS"),
    "now": (0, "FRESHNESS"),
}
ALIASES = {
    "count": "record_count",
    "cnt": "record_count",
    "nullCount": "null_count",
    "nanCount": "nan_count",
    "valueCount": "value_count",
    "zeroCount": "zero_count",
    "trueCount": "true_count",
    "avg": "mean",
    "pctl": "percentile",
    "quantile": "percentile",
    "ndv": "distinct",
}


def canonical_term(name: str) -> Optional[str]:
    name = ALIASES.get(name, name)
    return name if name in TERMS else None


# -- AST --------------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: Any


@dataclass(frozen=True)
class Term:
    name: str
    column: Optional[str] = None
    arg: Optional[float] = None

    def __str__(self) -> str:
        if self.column is None:
            return self.name
        if self.arg is not None:
            return f"{self.name}({self.column},{self.arg:g})"
        return f"{self.name}({self.column})"


@dataclass(frozen=True)
class ColumnRef:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Literal, Term, ColumnRef, BinOp, Neg, Compare]

COMPARATORS: dict[str, Callable[[Any, Any], bool]] = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "=": operator.eq,
    "==": operator.eq,
    "!=": operator.ne,
    "<>": operator.ne,
}
_ARITH: dict[str, Callable[[Any, Any], Any]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": operator.truediv,
}


def terms_of(node: Node) -> list[Term]:
    if isinstance(node, Term):
        return [node]
    if isinstance(node, (BinOp, Compare)):
        return terms_of(node.left) + terms_of(node.right)
    if isinstance(node, Neg):
        return terms_of(node.operand)
    return []


def columns_of(node: Node) -> list[str]:
    if isinstance(node, ColumnRef):
        return [node.name]
    if isinstance(node, Term):
        return [node.column] if node.column else []
    if isinstance(node, (BinOp, Compare)):
        return columns_of(node.left) + columns_of(node.right)
    if isinstance(node, Neg):
        return columns_of(node.operand)
    return []


# -- tokens -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?(?:us|ms|[smhdw%KMB](?![A-Za-z_0-9]))?)
  | (?P<string>'(?:[^'\\]|\\.)*'|"(?:[^"\\]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|!=|<>|[<>=+\-*/(),%])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), pos))
        pos = m.end()
    out.append(Token("end", "", len(text)))
    return out


def parse_number(text: str) -> float | int:
    suffix = ""
    for s in ("us", "ms"):
        if text.endswith(s):
            suffix = s
            break
    else:
        if text[-1] in "smhdw%KMB":
            suffix = text[-1]
    body = text[: len(text) - len(suffix)] if suffix else text
    value: float | int = float(body) if any(c in body for c in ".eE") else int(body)
    if suffix == "%":
        return value / 100.0
    if suffix in _MULTIPLIERS:
        value = value * _MULTIPLIERS[suffix]
        return int(value) if float(value).is_integer() else value
    if suffix in MICROS:
        value = value * MICROS[suffix]
        return int(value) if float(value).is_integer() else value
    return value


def parse_interval(text: str) -> int:
    """``'2 hours'`` -> microseconds."""
    parts = text.split()
    if len(parts) % 2:
        raise ValueError(f"bad interval {text!r}")
    total = 0.0
    for amount, unit in zip(parts[::2], parts[1::2]):
        unit = unit.lower().rstrip("s") if unit.lower() not in ("s", "ms", "us") else unit.lower()
        key = _INTERVAL_UNITS.get(unit, unit if unit in MICROS else None)
        if key is None:
            raise ValueError(f"unknown interval unit {unit!r}")
        total += float(amount) * MICROS[key]
    return int(total)


def _unquote(text: str) -> str:
    body = text[1:-1]
    return re.sub(r"\\(.)", r"\1", body)


# -- parser -----------------------------------------------------------------


class Parser:
    """Recursive-descent parser over a token list.

    ``row_mode`` makes bare identifiers column references; otherwise bare
    identifiers must be nullary terms (``count``, ``commit_ts`` ...).
    """

    def __init__(self, text: str, row_mode: bool = False) -> None:
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0
        self.row_mode = row_mode

    # helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Optional[Token] = None) -> RuleSyntaxError:
        tok = tok or self.tok
        return RuleSyntaxError(message, self.text, tok.pos)

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "ident"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if self.tok.text != text:
            raise self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def expect_end(self) -> None:
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")

    def ident(self) -> str:
        if self.tok.kind != "ident":
            raise self.error(f"expected a name, found {self.tok.text or 'end of input'!r}")
        return self.advance().text

    def number(self) -> float | int:
        neg = self.accept("-")
        if self.tok.kind != "number":
            raise self.error(f"expected a number, found {self.tok.text or 'end of input'!r}")
        v = parse_number(self.advance().text)
        return -v if neg else v

    # grammar
    def expression(self) -> Node:
        left = self.additive()
        if self.tok.kind == "op" and self.tok.text in COMPARATORS:
            op = self.advance().text
            right = self.additive()
            return Compare(op, left, right)
        return left

    def additive(self) -> Node:
        node = self.multiplicative()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.multiplicative())
        return node

    def multiplicative(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.accept("-"):
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Node:
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Literal(parse_number(tok.text))
        if tok.kind == "string":
            self.advance()
            return Literal(_unquote(tok.text))
        if tok.text == "(":
            self.advance()
            node = self.expression()
            self.expect(")")
            return node
        if tok.kind == "ident":
            return self.name_or_term()
        raise self.error(f"unexpected {tok.text or 'end of input'!r}")

    def name_or_term(self) -> Node:
        tok = self.advance()
        name = tok.text
        if name.lower() == "interval" and self.tok.kind == "string":
            raw = _unquote(self.advance().text)
            try:
                return Literal(parse_interval(raw))
            except ValueError as exc:
                raise self.error(str(exc), tok) from None
        if name in ("true", "false"):
            return Literal(name == "true")
        if self.tok.text == "(":
            term = canonical_term(name)
            if term is None or self.row_mode:
                raise self.error(f"unknown function {name!r}", tok)
            return self.term_call(term, tok)
        if self.row_mode:
            return ColumnRef(name)
        term = canonical_term(name)
        if term is None or TERMS[term][0] != 0:
            raise self.error(f"unknown term {name!r}", tok)
        return Term(term)

    def term_call(self, term: str, tok: Token) -> Term:
        arity = TERMS[term][0]
        if arity == 0:
            raise self.error(f"{term} takes no arguments", tok)
        self.expect("(")
        column = self.ident()
        arg = None
        if self.accept(","):
            if arity < 2:
                raise self.error(f"{term} takes a single column argument")
            arg = float(self.number())
            if arg > 1.0:
                arg /= 100.0
            if not 0.0 <= arg <= 1.0:
                raise self.error("percentile must be within [0, 1] or [0, 100]")
        elif arity == 2:
            raise self.error(f"{term} needs a percentile argument")
        self.expect(")")
        return Term(term, column, arg)


def parse_expression(text: str, row_mode: bool = False) -> Node:
    p = Parser(text, row_mode=row_mode)
    node = p.expression()
    p.expect_end()
    return node


# -- evaluation -------------------------------------------------------------


class MissingValue(Exception):
    """A term or column has no value (absent bound, null cell ...)."""

    def __init__(self, what: str, reason: str = "missing") -> None:
        super().__init__(f"{what}: {reason}")
        self.what = what
        self.reason = reason


def evaluate(node: Node, resolve: Callable[[Any], Any]) -> Any:
    """Evaluate ``node``; ``resolve`` maps Term/ColumnRef nodes to values.

    Raises ``ZeroDivisionError`` for division by zero and ``MissingValue``
    when ``resolve`` returns None.
    """
    if isinstance(node, Literal):
        return node.value
    if isinstance(node, (Term, ColumnRef)):
        v = resolve(node)
        if v is None:
            raise MissingValue(str(node) if isinstance(node, Term) else node.name)
        return v
    if isinstance(node, Neg):
        return -evaluate(node.operand, resolve)
    if isinstance(node, BinOp):
        left = evaluate(node.left, resolve)
        right = evaluate(node.right, resolve)
        if node.op == "/" and right == 0:
            raise ZeroDivisionError(str(node))
        return _ARITH[node.op](left, right)
    if isinstance(node, Compare):
        return COMPARATORS[node.op](evaluate(node.left, resolve), evaluate(node.right, resolve))
    raise TypeError(f"cannot evaluate {node!r}")


def render(node: Node) -> str:
    if isinstance(node, Literal):
        return repr(node.value) if isinstance(node.value, str) else f"{node.value}"
    if isinstance(node, Term):
        return str(node)
    if isinstance(node, ColumnRef):
        return node.name
    if isinstance(node, Neg):
        return f"-{render(node.operand)}"
    if isinstance(node, BinOp):
        return f"({render(node.left)} {node.op} {render(node.right)})"
    if isinstance(node, Compare):
        return f"{render(node.left)} {node.op} {render(node.right)}"
    raise TypeError(node)
