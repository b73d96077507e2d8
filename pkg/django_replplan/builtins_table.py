"""
Builtin functions and methods available to MiniLang code.

Builtins delegate to the host implementations so results, rendering and
error messages read exactly like a Python REPL. Lazy iterators are
materialized into lists so every value stays copyable and printable.
"""

import logging
from typing import Any, Callable, Dict, List, Optional

from .values import type_name

logger = logging.getLogger(__name__)

# Upper bound on the size of any sequence a single operation may build.
MAX_SEQUENCE_LENGTH = 10_000_000


def _check_size(value: Any) -> Any:
    if isinstance(value, range) and len(value) > MAX_SEQUENCE_LENGTH:
        raise MemoryError(f"range of {len(value)} items is too large to materialize")
    return value


def _no_keywords(name: str, kwargs: Dict[str, Any], allowed: tuple = ()):
    for key in kwargs:
        if key not in allowed:
            raise TypeError(f"{name}() got an unexpected keyword argument '{key}'")


def _materialize(fn: Callable) -> Callable:
    def call(*args, **kwargs):
        return fn(*(_check_size(arg) for arg in args), **kwargs)

    return call


def _enumerate(*args, **kwargs):
    _no_keywords("enumerate", kwargs, ("start",))
    return list(enumerate(*(_check_size(a) for a in args), **kwargs))


def _zip(*args, **kwargs):
    _no_keywords("zip", kwargs)
    return list(zip(*(_check_size(a) for a in args)))


def _sorted(*args, **kwargs):
    _no_keywords("sorted", kwargs, ("reverse",))
    return sorted(*(_check_size(a) for a in args), **kwargs)


def _extremum(fn: Callable, name: str) -> Callable:
    def call(*args, **kwargs):
        _no_keywords(name, kwargs, ("default",))
        return fn(*(_check_size(a) for a in args), **kwargs)

    return call


def _plain(fn: Callable, name: str) -> Callable:
    def call(*args, **kwargs):
        _no_keywords(name, kwargs)
        return fn(*(_check_size(a) for a in args))

    return call


BUILTINS: Dict[str, Callable] = {
    "len": _plain(len, "len"),
    "range": _plain(range, "range"),
    "max": _extremum(max, "max"),
    "min": _extremum(min, "min"),
    "sorted": _sorted,
    "enumerate": _enumerate,
    "str": _plain(str, "str"),
    "int": _plain(int, "int"),
    "float": _plain(float, "float"),
    "abs": _plain(abs, "abs"),
    "list": _plain(list, "list"),
    "dict": _materialize(dict),
    "sum": _plain(sum, "sum"),
    "round": _plain(round, "round"),
    "zip": _zip,
    "bool": _plain(bool, "bool"),
    "tuple": _plain(tuple, "tuple"),
    "any": _plain(any, "any"),
    "all": _plain(all, "all"),
}

# Names the kernel resolves; calls to them are counted and cached.
PRIMITIVES = frozenset({"act", "answer", "get_args", "get_obs", "print", "print_page"})

METHODS: Dict[type, frozenset] = {
    list: frozenset(
        {"append", "extend", "pop", "insert", "index", "count", "remove", "sort", "copy", "reverse", "clear"}
    ),
    dict: frozenset(
        {"items", "keys", "values", "get", "pop", "update", "setdefault", "copy", "clear"}
    ),
    str: frozenset(
        {
            "lower", "upper", "strip", "lstrip", "rstrip", "split", "rsplit", "join",
            "replace", "startswith", "endswith", "find", "count", "title",
            "capitalize", "isdigit", "isalpha", "splitlines", "format",
        }
    ),
    tuple: frozenset({"index", "count"}),
}

# Views become lists so they render and copy like plain values.
_VIEW_METHODS = frozenset({"items", "keys", "values"})
_SORT_KEYWORDS = ("reverse",)


def is_builtin(name: str) -> bool:
    return name in BUILTINS or name in PRIMITIVES


def builtin_call(name: str, args: List[Any], kwargs: Optional[Dict[str, Any]] = None) -> Any:
    """
    Call a pure builtin by name.

    ``print`` and the other primitives are not handled here: they cross the
    interpreter boundary and go through the call ledger.

    Args:
        name: Builtin name, e.g. ``len``
        args: Positional argument values
        kwargs: Keyword argument values

    Returns:
        The builtin's result

    Raises:
        NameError: ``name`` is not a pure builtin
        TypeError, ValueError, ...: as the host builtin raises them
    """
    try:
        fn = BUILTINS[name]
    except KeyError:
        raise NameError(f"name '{name}' is not a builtin") from None
    return fn(*args, **(kwargs or {}))


def call_method(receiver: Any, attr: str, args: List[Any], kwargs: Dict[str, Any]) -> Any:
    """Call an allowed method on a list, mapping, text or tuple value."""
    allowed = METHODS.get(type(receiver), frozenset())
    if attr not in allowed:
        raise AttributeError(f"'{type_name(receiver)}' object has no attribute '{attr}'")

    if attr == "sort":
        _no_keywords("sort", kwargs, _SORT_KEYWORDS)
    elif attr == "format":
        # Attribute and index lookups inside replacement fields are not part of MiniLang.
        args = [str(a) if not isinstance(a, (int, float, str)) else a for a in args]
        for key, value in list(kwargs.items()):
            if not isinstance(value, (int, float, str)):
                kwargs[key] = str(value)
    elif kwargs:
        _no_keywords(attr, kwargs)

    result = getattr(receiver, attr)(*(_check_size(a) for a in args), **kwargs)
    if attr in _VIEW_METHODS and isinstance(receiver, dict):
        return list(result)
    if isinstance(result, str) and len(result) > MAX_SEQUENCE_LENGTH:
        raise MemoryError("string result is too large")
    return result
