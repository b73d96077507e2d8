"""
LLM-REPLs, their history and the global REPL pool.

A REPL's prompt context has two parts: a frozen demonstration segment
loaded from a demo file, and the live segment of the current episode,
which always starts with a task-boundary entry.
"""

import copy
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from .exceptions import DemoLoadError
from .nodes import SourceBlock, Stmt
from .parser import render_echo
from .serializers import load_bug_patches, load_demo_file
from .values import CallLedger, Invocation, Scope

logger = logging.getLogger(__name__)

MAIN = "_main"

# HistoryEntry kinds
CODE = "code-echo"
STDOUT = "stdout"
ECHO_VALUE = "repl-echo-value"
OBSERVATION = "env-observation"
ERROR = "error"
TASK = "task-boundary"

# REPL status
IDLE = "idle"
RUNNING = "running"
AWAITING_CHILD = "awaiting-child"
FINISHED_BLOCK = "finished-block"

DEMO_KIND_MAP = {
    "code": CODE,
    "output": STDOUT,
    "obs": OBSERVATION,
    "error": ERROR,
}

TASK_PREFIX = "Your task is to: "


@dataclass(frozen=True)
class HistoryEntry:
    kind: str
    text: str

    def lines(self) -> List[str]:
        """Transcript lines for this entry."""
        if self.kind == CODE:
            return render_echo(self.text)
        if self.kind == TASK:
            return [TASK_PREFIX + self.text]
        if self.kind == STDOUT:
            return self.text[:-1].split("\n") if self.text.endswith("\n") else self.text.split("\n")
        return self.text.split("\n")


@dataclass
class LlmRepl:
    name: str
    task: str
    demo_entries: Tuple[HistoryEntry, ...] = ()
    history: List[HistoryEntry] = field(default_factory=list)
    scope: Scope = field(default_factory=Scope)
    ledger: CallLedger = field(default_factory=CallLedger)
    suspended_block: Optional[Tuple[SourceBlock, Stmt]] = None
    invocation: Invocation = field(default_factory=Invocation)
    status: str = IDLE
    syntax_failures: int = 0

    def append(self, kind: str, text: str):
        self.history.append(HistoryEntry(kind, text))

    def begin_episode(self, task: Optional[str] = None):
        """Reset live state; demo entries stay untouched."""
        if task is not None:
            self.task = task
        self.history = [HistoryEntry(TASK, self.task)]
        self.scope = Scope()
        self.ledger = CallLedger()
        self.suspended_block = None
        self.invocation = Invocation()
        self.status = IDLE
        self.syntax_failures = 0

    def clear_block(self):
        self.suspended_block = None
        self.ledger.reset()


class ReplPool:
    """Name to LLM-REPL registry shared by the REPLs of one episode."""

    def __init__(self, repls: Optional[Iterable[LlmRepl]] = None):
        self.entries: Dict[str, LlmRepl] = {}
        self.demo_frozen: Dict[str, Tuple[HistoryEntry, ...]] = {}
        self.lock = threading.Lock()
        for repl in repls or ():
            self.register(repl, frozen=True)

    def register(self, repl: LlmRepl, frozen: bool = False):
        with self.lock:
            self.entries[repl.name] = repl
            if frozen:
                self.demo_frozen[repl.name] = repl.demo_entries

    def get(self, name: str) -> Optional[LlmRepl]:
        return self.entries.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> List[str]:
        return list(self.entries)

    def fresh_copy(self) -> "ReplPool":
        """A new pool holding only the frozen demo REPLs, ready for an episode."""
        pool = ReplPool()
        for name, entries in self.demo_frozen.items():
            source = self.entries[name]
            pool.register(LlmRepl(name=name, task=source.task, demo_entries=entries), frozen=True)
        return pool


def demo_repl(spec: dict) -> LlmRepl:
    entries = [HistoryEntry(TASK, spec["task"])]
    entries.extend(
        HistoryEntry(DEMO_KIND_MAP[entry["kind"]], entry["text"]) for entry in spec["entries"]
    )
    return LlmRepl(name=spec["name"], task=spec["task"], demo_entries=tuple(entries))


def load_demo_specs(path: Optional[Union[str, Path]]) -> List[dict]:
    if not path:
        return []
    return load_demo_file(path)


def drop_repls(specs: List[dict], names: Iterable[str]) -> List[dict]:
    """Remove named REPLs from demo specs; every name must be present."""
    names = list(names)
    present = {spec["name"] for spec in specs}
    missing = [name for name in names if name not in present]
    if missing:
        raise DemoLoadError(
            f"cannot drop REPLs missing from the demo file: {', '.join(missing)}",
            entry=missing[0],
        )
    kept = [spec for spec in specs if spec["name"] not in names]
    logger.info(f"Dropped demo REPLs: {', '.join(names)}")
    return kept


def inject_bugs(specs: List[dict], patches: List[dict]) -> List[dict]:
    """
    Replace demo entries with patched text.

    Args:
        specs: Demo REPL specs as loaded from a demo file
        patches: ``{"repl", "entry", "text"}`` records

    Returns:
        Patched copy of ``specs``

    Raises:
        DemoLoadError: a patch names an unknown REPL or entry index
    """
    patched = copy.deepcopy(specs)
    by_name = {spec["name"]: spec for spec in patched}
    for patch in patches:
        spec = by_name.get(patch["repl"])
        if spec is None:
            raise DemoLoadError(
                f"bug patch names unknown REPL '{patch['repl']}'", entry=patch["repl"]
            )
        if patch["entry"] >= len(spec["entries"]):
            raise DemoLoadError(
                f"bug patch entry {patch['entry']} out of range for '{patch['repl']}'",
                entry=f"{patch['repl']}[{patch['entry']}]",
            )
        spec["entries"][patch["entry"]] = dict(spec["entries"][patch["entry"]], text=patch["text"])
    return patched


def load_demos(
    path: Optional[Union[str, Path]],
    drop: Iterable[str] = (),
    bugs_path: Optional[Union[str, Path]] = None,
) -> ReplPool:
    """
    Build a REPL pool from a demo file.

    Args:
        path: Demo file; None or an empty document gives an empty pool
        drop: REPL names to leave out of the pool
        bugs_path: Optional bug patch file applied before freezing

    Returns:
        ReplPool with one frozen REPL per demo entry

    Raises:
        DemoLoadError: malformed file, unknown dropped name or bad patch
    """
    specs = load_demo_specs(path)
    if drop:
        specs = drop_repls(specs, drop)
    if bugs_path:
        specs = inject_bugs(specs, load_bug_patches(bugs_path))
    pool = ReplPool(demo_repl(spec) for spec in specs)
    logger.info(f"Loaded {len(pool)} demo REPLs from {path}")
    return pool
