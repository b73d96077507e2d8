"""
Runtime values, scopes and the call ledger used by replay-cache execution.

MiniLang values are plain Python objects (None, bool, int, float, str,
list, dict, tuple, range) plus two callable handles, ``BuiltinFn`` and
``ReplFn``. Keeping the host representation makes rendering and equality
match what an LLM trained on Python transcripts expects.
"""

import copy
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

# Effect kinds crossing the interpreter/kernel boundary
ACT = "act"
ANSWER = "answer"
SPAWN = "spawn"
GET_ARGS = "get_args"
GET_OBS = "get_obs"

# ExecOutcome kinds
COMPLETED = "completed"
SUSPENDED = "suspended"
FAILED = "failed"

ECHO = "repl-echo"
PRINT = "print"


class BuiltinFn:
    """Handle for a builtin or REPL primitive such as ``len`` or ``act``."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def __eq__(self, other):
        return isinstance(other, BuiltinFn) and other.name == self.name

    def __hash__(self):
        return hash(("builtin", self.name))

    def __repr__(self):
        return f"<built-in function {self.name}>"

    def __deepcopy__(self, memo):
        return self


class ReplFn:
    """Handle for a child LLM-REPL; calling it invokes that REPL."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def __eq__(self, other):
        return isinstance(other, ReplFn) and other.name == self.name

    def __hash__(self):
        return hash(("repl", self.name))

    def __repr__(self):
        return f"<LLMREPL {self.name}>"

    def __deepcopy__(self, memo):
        return self


def type_name(value: Any) -> str:
    if isinstance(value, ReplFn):
        return "LLMREPL"
    if isinstance(value, BuiltinFn):
        return "builtin_function_or_method"
    if value is None:
        return "NoneType"
    return type(value).__name__


def render_value(value: Any, context: str = ECHO) -> str:
    """
    Render a value for the REPL echo or for ``print``.

    Args:
        value: Any MiniLang value
        context: ``repl-echo`` (quoted texts, None suppressed) or ``print``

    Returns:
        Rendered text; empty for None in echo context
    """
    if context == ECHO:
        if value is None:
            return ""
        return repr(value)
    return str(value)


class Scope:
    """Variable bindings of one LLM-REPL; no parent chain."""

    def __init__(self, bindings: Optional[Dict[str, Any]] = None):
        self.bindings: Dict[str, Any] = bindings if bindings is not None else {}
        self.snapshot_id = 0

    def snapshot(self) -> Dict[str, Any]:
        return copy.deepcopy(self.bindings)

    def commit(self, bindings: Dict[str, Any]):
        self.bindings = bindings
        self.snapshot_id += 1

    def bind(self, name: str, value: Any):
        """Add a binding to the block-start state without starting a new snapshot."""
        self.bindings[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self.bindings

    def __eq__(self, other):
        return isinstance(other, Scope) and self.bindings == other.bindings


@dataclass
class LedgerEntry:
    value: Any = None
    printed: str = ""


class CallLedger:
    """Recorded results of context-sensitive calls within the current block."""

    def __init__(self):
        self.cache: Dict[Tuple[str, int], LedgerEntry] = {}
        self.counters: Dict[str, int] = {}

    def lookup(self, name: str, index: int) -> Optional[LedgerEntry]:
        entry = self.cache.get((name, index))
        if entry is None:
            return None
        return LedgerEntry(copy.deepcopy(entry.value), entry.printed)

    def record(self, name: str, index: int, value: Any = None, printed: str = ""):
        expected = self.counters.get(name, 0) + 1
        if index != expected:
            raise ValueError(
                f"ledger for '{name}' expects call index {expected}, got {index}"
            )
        self.cache[(name, index)] = LedgerEntry(copy.deepcopy(value), printed)
        self.counters[name] = index

    def recorded_count(self, name: str) -> int:
        return self.counters.get(name, 0)

    def reset(self):
        self.cache.clear()
        self.counters.clear()

    def __len__(self):
        return len(self.cache)


@dataclass(frozen=True)
class Effect:
    """Why evaluation stopped: a context-sensitive call the kernel must resolve."""

    kind: str
    name: str
    index: int
    payload: Any = None
    args: Tuple[Any, ...] = ()
    bound: bool = False

    @property
    def action(self) -> str:
        return render_value(self.payload, PRINT)

    def describe(self) -> str:
        if self.kind == ACT:
            return f"Act({self.action!r})"
        if self.kind == ANSWER:
            return f"Answer({self.payload!r})"
        if self.kind == SPAWN:
            return f"SpawnCall({self.name!r}, {self.args!r})"
        if self.kind == GET_OBS:
            return f"GetObs({self.name})"
        return "GetArgs"


@dataclass
class ExecOutcome:
    kind: str
    stdout: str = ""
    effect: Optional[Effect] = None
    diag: str = ""
    echo: str = ""
    steps: int = 0
    prints: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.kind == COMPLETED

    @property
    def suspended(self) -> bool:
        return self.kind == SUSPENDED

    @property
    def failed(self) -> bool:
        return self.kind == FAILED


@dataclass
class Invocation:
    """Arguments a parent passed to a REPL function call."""

    args: Tuple[Any, ...] = field(default_factory=tuple)

    def as_value(self) -> Any:
        if not self.args:
            return None
        if len(self.args) == 1:
            return self.args[0]
        return tuple(self.args)


def commit_prints(ledger: CallLedger, outcome: ExecOutcome):
    """Record the fresh ``print`` calls of a finished run so replays stay silent."""
    for index, text in outcome.prints:
        ledger.record(PRINT, index, None, text)
