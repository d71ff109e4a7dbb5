"""Three-valued evaluation of expressions against a pair of ads."""

from __future__ import annotations

import operator
from typing import Optional

from .ast import (
    And, Arith, AttrRef, Compare, Expression, ListExpr, Literal, Member, Neg,
    Not, Or, Paren,
)
from .classad import JOB, MACHINE, ClassAd
from .values import ERROR, UNDEFINED, Value, is_number

MAX_DEPTH = 64

_ORDER = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


class _Ctx:
    __slots__ = ("my", "target", "depth")

    def __init__(self, my: Optional[ClassAd], target: Optional[ClassAd], depth: int = 0):
        self.my = my
        self.target = target
        self.depth = depth

    def swapped(self) -> "_Ctx":
        return _Ctx(self.target, self.my, self.depth + 1)

    def same(self) -> "_Ctx":
        return _Ctx(self.my, self.target, self.depth + 1)


def evaluate(expr: Expression, my: Optional[ClassAd] = None,
             target: Optional[ClassAd] = None) -> Value:
    """Evaluate ``expr`` with ``my`` as the home ad and ``target`` as the peer.

    Never raises for well-formed trees: type clashes, division by zero and
    runaway attribute recursion all come back as ``ERROR``.
    """
    try:
        return _eval(expr, _Ctx(my, target))
    except RecursionError:
        return ERROR


def _resolve(ref: AttrRef, ctx: _Ctx) -> Value:
    if ctx.depth > MAX_DEPTH:
        return ERROR
    scope = ref.scope
    if scope == "MY":
        candidates = [(ctx.my, ctx.same)]
    elif scope == "TARGET":
        candidates = [(ctx.target, ctx.swapped)]
    elif scope in ("Job", "Machine"):
        want = JOB if scope == "Job" else MACHINE
        if ctx.my is not None and ctx.my.kind == want:
            candidates = [(ctx.my, ctx.same)]
        elif ctx.target is not None and ctx.target.kind == want:
            candidates = [(ctx.target, ctx.swapped)]
        else:
            candidates = []
    else:
        candidates = [(ctx.my, ctx.same), (ctx.target, ctx.swapped)]
    for ad, next_ctx in candidates:
        if ad is None:
            continue
        expr = ad.lookup(ref.name)
        if expr is not None:
            return _eval(expr, next_ctx())
    return UNDEFINED


def _truth(v: Value) -> Value:
    """Map a value onto {True, False, UNDEFINED, ERROR}."""
    if v is True or v is False or v is UNDEFINED:
        return v
    return ERROR


def _text_eq(a: str, b: str) -> bool:
    return a.casefold() == b.casefold()


def _compare(op: str, a: Value, b: Value) -> Value:
    if a is ERROR or b is ERROR:
        return ERROR
    if a is UNDEFINED or b is UNDEFINED:
        return UNDEFINED
    if is_number(a) and is_number(b):
        # int/float comparisons in Python are exact, no promotion needed
        if op in ("==", "="):
            return a == b
        if op == "!=":
            return a != b
        return _ORDER[op](a, b)
    if isinstance(a, str) and isinstance(b, str):
        if op in ("==", "="):
            return _text_eq(a, b)
        if op == "!=":
            return not _text_eq(a, b)
        return _ORDER[op](a.casefold(), b.casefold())
    if isinstance(a, bool) and isinstance(b, bool) and op in ("==", "=", "!="):
        return (a == b) if op != "!=" else (a != b)
    return ERROR


def split_list(text: str) -> tuple:
    """Comma-separated text to its trimmed, non-empty items."""
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _member(needle: Value, haystack: Value) -> Value:
    if needle is ERROR or haystack is ERROR:
        return ERROR
    if needle is UNDEFINED or haystack is UNDEFINED:
        return UNDEFINED
    if not isinstance(needle, str):
        return ERROR
    if isinstance(haystack, str):
        items = split_list(haystack)
    elif isinstance(haystack, tuple):
        items = haystack
    else:
        return ERROR
    return any(isinstance(x, str) and _text_eq(needle, x) for x in items)


def _arith(op: str, a: Value, b: Value) -> Value:
    if a is ERROR or b is ERROR:
        return ERROR
    if a is UNDEFINED or b is UNDEFINED:
        return UNDEFINED
    if not (is_number(a) and is_number(b)):
        return ERROR
    try:
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if b == 0:
            return ERROR
        if isinstance(a, int) and isinstance(b, int):
            q = abs(a) // abs(b)  # truncate toward zero
            return q if (a >= 0) == (b >= 0) else -q
        return a / b
    except OverflowError:
        return ERROR


def _eval(e: Expression, ctx: _Ctx) -> Value:
    if isinstance(e, Literal):
        return e.value
    if isinstance(e, AttrRef):
        return _resolve(e, ctx)
    if isinstance(e, Paren):
        return _eval(e.inner, ctx)
    if isinstance(e, And):
        left = _truth(_eval(e.lhs, ctx))
        if left is ERROR:
            return ERROR
        if left is False:
            return False
        right = _truth(_eval(e.rhs, ctx))
        if right is ERROR:
            return ERROR
        if left is True:
            return right
        # left undefined
        return False if right is False else UNDEFINED
    if isinstance(e, Or):
        left = _truth(_eval(e.lhs, ctx))
        if left is ERROR:
            return ERROR
        if left is True:
            return True
        right = _truth(_eval(e.rhs, ctx))
        if right is ERROR:
            return ERROR
        if left is False:
            return right
        return True if right is True else UNDEFINED
    if isinstance(e, Not):
        v = _truth(_eval(e.operand, ctx))
        if v is True or v is False:
            return not v
        return v
    if isinstance(e, Compare):
        return _compare(e.op, _eval(e.lhs, ctx), _eval(e.rhs, ctx))
    if isinstance(e, Member):
        return _member(_eval(e.needle, ctx), _eval(e.haystack, ctx))
    if isinstance(e, Arith):
        return _arith(e.op, _eval(e.lhs, ctx), _eval(e.rhs, ctx))
    if isinstance(e, Neg):
        v = _eval(e.operand, ctx)
        if v is ERROR or v is UNDEFINED:
            return v
        return -v if is_number(v) else ERROR
    if isinstance(e, ListExpr):
        return tuple(_eval(x, ctx) for x in e.items)
    return ERROR


def symmetric_match(job_ad: ClassAd, machine_ad: ClassAd) -> bool:
    """Both sides' constraints must evaluate to exactly ``true``.

    A missing ``Requirements`` (job) or ``Start`` (machine) counts as true.
    """
    req = job_ad.lookup("Requirements")
    if req is not None and evaluate(req, job_ad, machine_ad) is not True:
        return False
    start = machine_ad.lookup("Start")
    if start is not None and evaluate(start, machine_ad, job_ad) is not True:
        return False
    return True
