"""Expression tree nodes and the canonical printer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

from .values import ERROR, UNDEFINED, Value, is_number

SCOPES = ("MY", "TARGET", "Job", "Machine")
COMPARE_OPS = ("==", "=", "!=", "<", "<=", ">", ">=")
ARITH_OPS = ("+", "-", "*", "/")


@dataclass(frozen=True)
class Literal:
    value: Value


@dataclass(frozen=True)
class ListExpr:
    items: Tuple["Expression", ...]


@dataclass(frozen=True)
class AttrRef:
    name: str
    scope: Optional[str] = None  # one of SCOPES, canonical spelling


@dataclass(frozen=True)
class Not:
    operand: "Expression"


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class And:
    lhs: "Expression"
    rhs: "Expression"


@dataclass(frozen=True)
class Or:
    lhs: "Expression"
    rhs: "Expression"


@dataclass(frozen=True)
class Compare:
    op: str
    lhs: "Expression"
    rhs: "Expression"


@dataclass(frozen=True)
class Member:
    needle: "Expression"
    haystack: "Expression"


@dataclass(frozen=True)
class Arith:
    op: str
    lhs: "Expression"
    rhs: "Expression"


@dataclass(frozen=True)
class Paren:
    inner: "Expression"


Expression = Union[Literal, ListExpr, AttrRef, Not, Neg, And, Or, Compare,
                   Member, Arith, Paren]
NODE_TYPES = (Literal, ListExpr, AttrRef, Not, Neg, And, Or, Compare, Member,
              Arith, Paren)

# binding strength, loosest first
_OR, _AND, _NOT, _CMP, _ADD, _MUL, _UNARY, _ATOM = range(1, 9)


def _level(e: Expression) -> int:
    if isinstance(e, Or):
        return _OR
    if isinstance(e, And):
        return _AND
    if isinstance(e, Not):
        return _NOT
    if isinstance(e, (Compare, Member)):
        return _CMP
    if isinstance(e, Arith):
        return _ADD if e.op in "+-" else _MUL
    if isinstance(e, Neg):
        return _UNARY
    if isinstance(e, Literal) and is_number(e.value) and e.value < 0:
        return _UNARY
    return _ATOM


def _escape(s: str) -> str:
    out = []
    for ch in s:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def format_value(v: Value) -> str:
    """Render a value as expression source text."""
    if v is UNDEFINED:
        return "undefined"
    if v is ERROR:
        raise ValueError("ERROR has no source representation")
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ValueError(f"non-finite real {v!r} has no source representation")
        return repr(v)
    if isinstance(v, str):
        return _escape(v)
    if isinstance(v, tuple):
        return "{" + ", ".join(format_value(x) for x in v) + "}"
    raise TypeError(f"not an ad value: {v!r}")


def _wrap(e: Expression, min_level: int) -> str:
    s = to_source(e)
    return s if _level(e) >= min_level else f"({s})"


def to_source(e: Expression) -> str:
    """Print an expression so that re-parsing yields the same tree.

    Explicit ``Paren`` nodes are printed as written; any other grouping the
    precedence rules need is added on the fly.
    """
    if isinstance(e, Literal):
        return format_value(e.value)
    if isinstance(e, ListExpr):
        return "{" + ", ".join(to_source(x) for x in e.items) + "}"
    if isinstance(e, AttrRef):
        return f"{e.scope}.{e.name}" if e.scope else e.name
    if isinstance(e, Paren):
        return f"({to_source(e.inner)})"
    if isinstance(e, Not):
        return "!" + _wrap(e.operand, _NOT)
    if isinstance(e, Neg):
        # keep "- -x" apart, and never let "-3" fold back into a literal
        inner = _wrap(e.operand, _UNARY)
        if isinstance(e.operand, Literal) and is_number(e.operand.value):
            inner = f"({inner})"
        return "-" + (" " + inner if inner.startswith("-") else inner)
    if isinstance(e, Or):
        return f"{_wrap(e.lhs, _OR)} || {_wrap(e.rhs, _AND)}"
    if isinstance(e, And):
        return f"{_wrap(e.lhs, _AND)} && {_wrap(e.rhs, _NOT)}"
    if isinstance(e, Compare):
        return f"{_wrap(e.lhs, _ADD)} {e.op} {_wrap(e.rhs, _ADD)}"
    if isinstance(e, Member):
        return f"{_wrap(e.needle, _ADD)} in {_wrap(e.haystack, _ADD)}"
    if isinstance(e, Arith):
        lvl = _ADD if e.op in "+-" else _MUL
        return f"{_wrap(e.lhs, lvl)} {e.op} {_wrap(e.rhs, lvl + 1)}"
    raise TypeError(f"not an expression node: {e!r}")


def conjoin(*clauses: Expression) -> Expression:
    """Left-nested conjunction of the given clauses (``true`` when empty)."""
    out: Optional[Expression] = None
    for c in clauses:
        out = c if out is None else And(out, c)
    return out if out is not None else Literal(True)
