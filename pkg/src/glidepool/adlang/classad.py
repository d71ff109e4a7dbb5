"""Attribute records (ads) with case-insensitive lookup."""

from __future__ import annotations

import json
from typing import Any, Dict, Iterable, Iterator, Mapping, Optional, Tuple, Union

from .ast import NODE_TYPES, Expression, ListExpr, Literal, to_source
from .parser import parse_expression
from .values import from_python

JOB = "job"
MACHINE = "machine"


def literal(v: Any) -> Expression:
    """Wrap a plain value as an expression node (lists become list nodes)."""
    v = from_python(v)
    if isinstance(v, tuple):
        return ListExpr(tuple(literal(x) for x in v))
    return Literal(v)


def _as_expr(v: Any) -> Expression:
    if isinstance(v, NODE_TYPES):
        return v
    return literal(v)


class ClassAd(Mapping[str, Expression]):
    """Ordered, immutable map from attribute name to expression.

    Names compare case-insensitively but keep their original spelling.
    ``kind`` tags the ad as the job side or machine side, which is how the
    ``Job.`` and ``Machine.`` scopes find it during evaluation.
    """

    __slots__ = ("_attrs", "kind", "_hash")

    def __init__(self, attrs: Union[Mapping[str, Any], Iterable[Tuple[str, Any]], None] = None,
                 kind: Optional[str] = None):
        if kind not in (None, JOB, MACHINE):
            raise ValueError(f"unknown ad kind {kind!r}")
        items = attrs.items() if isinstance(attrs, Mapping) else (attrs or ())
        table: Dict[str, Tuple[str, Expression]] = {}
        for name, value in items:
            key = name.lower()
            if key in table:
                raise ValueError(f"duplicate attribute {name!r} (case-insensitive)")
            table[key] = (name, _as_expr(value))
        object.__setattr__(self, "_attrs", table)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("ClassAd is immutable")

    def __getitem__(self, name: str) -> Expression:
        return self._attrs[name.lower()][1]

    def __contains__(self, name: object) -> bool:
        return isinstance(name, str) and name.lower() in self._attrs

    def __iter__(self) -> Iterator[str]:
        return (name for name, _ in self._attrs.values())

    def __len__(self) -> int:
        return len(self._attrs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClassAd):
            return NotImplemented
        return self.kind == other.kind and list(self._attrs.values()) == list(other._attrs.values())

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash((self.kind, tuple(self._attrs.values()))))
        return self._hash

    def __repr__(self) -> str:
        return f"ClassAd({self.to_text()!r}, kind={self.kind!r})"

    def lookup(self, name: str) -> Optional[Expression]:
        hit = self._attrs.get(name.lower())
        return hit[1] if hit else None

    def updated(self, changes: Mapping[str, Any] = (), **kw: Any) -> "ClassAd":
        """Copy with attributes replaced or appended; original spelling kept."""
        merged = dict(self._attrs)
        for name, value in list(dict(changes).items()) + list(kw.items()):
            key = name.lower()
            spelled = merged[key][0] if key in merged else name
            merged[key] = (spelled, _as_expr(value))
        return ClassAd(merged.values(), kind=self.kind)

    # -- serialisation -------------------------------------------------

    def to_text(self) -> str:
        return "\n".join(f"{name} = {to_source(expr)}" for name, expr in self._attrs.values())

    @classmethod
    def from_text(cls, text: str, kind: Optional[str] = None) -> "ClassAd":
        """Parse ``Name = expression`` lines; blank lines and ``#`` comments skipped."""
        pairs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, sep, rhs = line.partition("=")
            name = name.strip()
            if not sep or not name.isidentifier():
                raise ValueError(f"line {lineno}: expected 'Name = expression'")
            pairs.append((name, parse_expression(rhs)))
        return cls(pairs, kind=kind)

    def to_json(self) -> Dict[str, Any]:
        return {"kind": self.kind,
                "attributes": {name: to_source(expr) for name, expr in self._attrs.values()}}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ClassAd":
        attrs = data.get("attributes", {})
        return cls(((k, parse_expression(v)) for k, v in attrs.items()), kind=data.get("kind"))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, s: str) -> "ClassAd":
        return cls.from_json(json.loads(s))
