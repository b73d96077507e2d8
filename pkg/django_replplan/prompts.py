"""
Prompt rendering for LLM-REPLs.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional

from .apps import ASSETS_DIR
from .parser import render_echo
from .repl import TASK_PREFIX, LlmRepl

logger = logging.getLogger(__name__)

NEXT_BLOCK = "next-block"
SUBTASK = "subtask-description"

PROMPT_MARK = ">>> "
CONTINUATION_MARK = "... "


@dataclass(frozen=True)
class Prompt:
    repl_name: str
    mode: str
    preamble: str
    transcript: str

    @property
    def text(self) -> str:
        return f"{self.preamble}\n\n{self.transcript}"

    def messages(self) -> List[Dict[str, str]]:
        return [
            {"role": "system", "content": self.preamble},
            {"role": "user", "content": self.transcript},
        ]


@lru_cache(maxsize=None)
def load_asset(name: str, version: str = "v1") -> str:
    path = ASSETS_DIR / f"{name}_{version}.txt"
    return path.read_text(encoding="utf-8").rstrip("\n")


def transcript_lines(repl: LlmRepl) -> List[str]:
    """Demo segment, a blank separator, then the live segment."""
    lines: List[str] = []
    for entry in repl.demo_entries:
        lines.extend(entry.lines())
    if repl.demo_entries and repl.history:
        lines.append("")
    for entry in repl.history:
        lines.extend(entry.lines())
    return lines


def render_prompt(
    repl: LlmRepl,
    mode: str = NEXT_BLOCK,
    fname: Optional[str] = None,
    partial: Optional[str] = None,
    version: str = "v1",
) -> Prompt:
    """
    Render the prompt for a REPL.

    Args:
        repl: REPL whose transcript is rendered; the parent in subtask mode
        mode: ``next-block`` or ``subtask-description``
        fname: Name of the function to describe (subtask mode)
        partial: Block text received so far when asking for a continuation
        version: Preamble asset version

    Returns:
        Prompt (pure function of the REPL history and the arguments)
    """
    lines = transcript_lines(repl)
    if not any(line.startswith(TASK_PREFIX) for line in lines):
        lines.insert(0, TASK_PREFIX + repl.task)

    if mode == SUBTASK:
        instruction = load_asset("subtask", version).format(fname=fname)
        lines.extend(["", instruction])
        return Prompt(
            repl_name=fname or repl.name,
            mode=SUBTASK,
            preamble=load_asset("preamble", version),
            transcript="\n".join(lines),
        )

    if partial:
        echo = render_echo(partial)
        if echo[-1] == "...":
            echo.pop()
        lines.extend(echo)
        lines.append(CONTINUATION_MARK)
    else:
        lines.append(PROMPT_MARK)
    return Prompt(
        repl_name=repl.name,
        mode=NEXT_BLOCK,
        preamble=load_asset("preamble", version),
        transcript="\n".join(lines),
    )


def parse_subtask_description(completion: str, fname: str) -> str:
    """Take the task from a subtask-description completion."""
    for line in completion.splitlines():
        stripped = line.strip()
        if stripped.startswith(TASK_PREFIX.strip()):
            task = stripped[len(TASK_PREFIX.strip()):].strip()
            if task:
                return task
    first = completion.strip().splitlines()[0].strip() if completion.strip() else ""
    if first:
        return first
    logger.warning(f"Empty subtask description for {fname}; using the function name")
    return f"Implement `{fname}`."
