"""Runtime values of the ad language.

Booleans, integers, reals and text map onto the Python builtins; lists are
tuples. ``UNDEFINED`` and ``ERROR`` are singletons.
"""

from __future__ import annotations

from typing import Any, Union


class _Singleton:
    _name = "?"

    def __repr__(self) -> str:
        return self._name

    def __reduce__(self):
        return self._name

    def __bool__(self) -> bool:
        raise TypeError(f"{self._name} has no truth value")


class _Undefined(_Singleton):
    _name = "UNDEFINED"


class _Error(_Singleton):
    _name = "ERROR"


UNDEFINED = _Undefined()
ERROR = _Error()

Value = Union[bool, int, float, str, tuple, _Undefined, _Error]


def is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def is_value(v: Any) -> bool:
    if v is UNDEFINED or v is ERROR:
        return True
    if isinstance(v, (bool, int, float, str)):
        return True
    if isinstance(v, tuple):
        return all(is_value(x) for x in v)
    return False


def from_python(v: Any) -> Value:
    """Coerce a plain Python/JSON value into a language value."""
    if v is None:
        return UNDEFINED
    if isinstance(v, (list, tuple)):
        return tuple(from_python(x) for x in v)
    if is_value(v):
        return v
    raise TypeError(f"cannot represent {v!r} as an ad value")
