"""Tokenizer and recursive-descent parser for ad expressions.

Precedence, loosest first: ``||``, ``&&``, ``!``, comparison and ``in``,
``+ -``, ``* /``, unary minus. Comparisons do not chain.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Optional

from .ast import (
    And, Arith, AttrRef, Compare, Expression, ListExpr, Literal, Member, Neg,
    Not, Or, Paren,
)
from .values import UNDEFINED


class AdSyntaxError(ValueError):
    """Raised for malformed expression text.

    ``offset`` is a byte offset into the UTF-8 encoded source; ``expected``
    is the set of token descriptions that would have been accepted there.
    """

    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected: FrozenSet[str] = frozenset(expected)
        detail = f" (expected one of: {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message} at byte {offset}{detail}")


@dataclass(frozen=True)
class Token:
    kind: str  # INT REAL STRING IDENT OP EOF
    text: str
    pos: int  # character offset
    value: object = None


_SCOPE_NAMES = {"my": "MY", "target": "TARGET", "job": "Job", "machine": "Machine"}
_KEYWORDS = {"true", "false", "undefined", "in"}
_CMP_OPS = ("==", "!=", "<=", ">=", "<", ">", "=")

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<real>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\|\||&&|==|!=|<=|>=|[!<>=+\-*/(){},.])
""", re.VERBOSE)

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    i, n = 0, len(text)
    while i < n:
        if text[i] == '"':
            start = i
            i += 1
            buf = []
            while True:
                if i >= n:
                    raise AdSyntaxError("unterminated string", _byte_offset(text, start), {'"'})
                ch = text[i]
                if ch == '"':
                    i += 1
                    break
                if ch == "\\":
                    if i + 1 >= n:
                        raise AdSyntaxError("dangling escape", _byte_offset(text, i), set(_ESCAPES))
                    esc = text[i + 1]
                    if esc not in _ESCAPES:
                        raise AdSyntaxError(f"unknown escape \\{esc}", _byte_offset(text, i), set(_ESCAPES))
                    buf.append(_ESCAPES[esc])
                    i += 2
                    continue
                buf.append(ch)
                i += 1
            tokens.append(Token("STRING", text[start:i], start, "".join(buf)))
            continue
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise AdSyntaxError(f"unexpected character {text[i]!r}", _byte_offset(text, i),
                                {"expression", "operator"})
        kind = m.lastgroup
        s = m.group()
        if kind == "real":
            tokens.append(Token("REAL", s, i, float(s)))
        elif kind == "int":
            tokens.append(Token("INT", s, i, int(s)))
        elif kind == "ident":
            tokens.append(Token("IDENT", s, i))
        elif kind == "op":
            tokens.append(Token("OP", s, i))
        i = m.end()
    tokens.append(Token("EOF", "", n))
    return tokens


_ATOM_START = {"integer", "real", "string", "attribute", "(", "{", "true", "false", "undefined", "!", "-"}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def fail(self, expected: Iterable[str], what: Optional[str] = None) -> AdSyntaxError:
        t = self.tok
        found = "end of input" if t.kind == "EOF" else repr(t.text)
        return AdSyntaxError(what or f"unexpected {found}", _byte_offset(self.text, t.pos), expected)

    def at_op(self, *ops: str) -> bool:
        return self.tok.kind == "OP" and self.tok.text in ops

    def at_keyword(self, word: str) -> bool:
        return self.tok.kind == "IDENT" and self.tok.text.lower() == word

    def expect_op(self, op: str) -> Token:
        if not self.at_op(op):
            raise self.fail({op})
        t = self.tok
        self.i += 1
        return t

    # expr := or
    def parse(self) -> Expression:
        e = self.or_()
        if self.tok.kind != "EOF":
            raise self.fail({"||", "&&", "end of input"} | set(_CMP_OPS) | {"in", "+", "-", "*", "/"})
        return e

    def or_(self) -> Expression:
        e = self.and_()
        while self.at_op("||"):
            self.i += 1
            e = Or(e, self.and_())
        return e

    def and_(self) -> Expression:
        e = self.not_()
        while self.at_op("&&"):
            self.i += 1
            e = And(e, self.not_())
        return e

    def not_(self) -> Expression:
        if self.at_op("!"):
            self.i += 1
            return Not(self.not_())
        return self.cmp()

    def cmp(self) -> Expression:
        lhs = self.add()
        if self.tok.kind == "OP" and self.tok.text in _CMP_OPS:
            op = self.tok.text
            self.i += 1
            return Compare(op, lhs, self.add())
        if self.at_keyword("in"):
            self.i += 1
            return Member(lhs, self.add())
        return lhs

    def add(self) -> Expression:
        e = self.mul()
        while self.at_op("+", "-"):
            op = self.tok.text
            self.i += 1
            e = Arith(op, e, self.mul())
        return e

    def mul(self) -> Expression:
        e = self.unary()
        while self.at_op("*", "/"):
            op = self.tok.text
            self.i += 1
            e = Arith(op, e, self.unary())
        return e

    def unary(self) -> Expression:
        if self.at_op("-"):
            self.i += 1
            operand = self.unary()
            # numeric literals absorb their sign
            if (isinstance(operand, Literal) and isinstance(operand.value, (int, float))
                    and not isinstance(operand.value, bool)):
                return Literal(-operand.value)
            return Neg(operand)
        return self.atom()

    def atom(self) -> Expression:
        t = self.tok
        if t.kind in ("INT", "REAL", "STRING"):
            self.i += 1
            return Literal(t.value)
        if t.kind == "IDENT":
            low = t.text.lower()
            if low == "true":
                self.i += 1
                return Literal(True)
            if low == "false":
                self.i += 1
                return Literal(False)
            if low == "undefined":
                self.i += 1
                return Literal(UNDEFINED)
            if low == "in":
                raise self.fail(_ATOM_START - {"!", "-"}, "keyword 'in' cannot start an operand")
            self.i += 1
            if low in _SCOPE_NAMES and self.at_op("."):
                self.i += 1
                name = self.tok
                if name.kind != "IDENT" or name.text.lower() in _KEYWORDS:
                    raise self.fail({"attribute name"})
                self.i += 1
                return AttrRef(name.text, _SCOPE_NAMES[low])
            return AttrRef(t.text)
        if self.at_op("("):
            self.i += 1
            inner = self.or_()
            self.expect_op(")")
            return Paren(inner)
        if self.at_op("{"):
            self.i += 1
            items: List[Expression] = []
            if not self.at_op("}"):
                items.append(self.or_())
                while self.at_op(","):
                    self.i += 1
                    items.append(self.or_())
            if not self.at_op("}"):
                raise self.fail({",", "}"})
            self.i += 1
            return ListExpr(tuple(items))
        raise self.fail(_ATOM_START - {"!"})


def parse_expression(text: str) -> Expression:
    """Parse expression source text into a tree; raises AdSyntaxError."""
    if not isinstance(text, str):
        raise TypeError("expression text must be str")
    p = _Parser(text)
    try:
        return p.parse()
    except RecursionError:
        raise AdSyntaxError("expression nested too deeply", _byte_offset(text, p.tok.pos)) from None
