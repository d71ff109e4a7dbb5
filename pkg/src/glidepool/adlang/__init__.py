"""Classad-style expression language used by both matchmaking stages."""

from .ast import (
    And, Arith, AttrRef, Compare, Expression, ListExpr, Literal, Member, Neg,
    Not, Or, Paren, conjoin, format_value, to_source,
)
from .classad import JOB, MACHINE, ClassAd, literal
from .evaluate import evaluate, split_list, symmetric_match
from .parser import AdSyntaxError, parse_expression, tokenize
from .values import ERROR, UNDEFINED, Value, from_python, is_number

__all__ = [
    "And", "Arith", "AttrRef", "Compare", "Expression", "ListExpr", "Literal",
    "Member", "Neg", "Not", "Or", "Paren", "conjoin", "format_value",
    "to_source", "JOB", "MACHINE", "ClassAd", "literal", "evaluate",
    "split_list", "symmetric_match", "AdSyntaxError", "parse_expression",
    "tokenize", "ERROR", "UNDEFINED", "Value", "from_python", "is_number",
]
