"""
Episode traces: the human-readable REPL log and the JSONL event stream.

The human log uses the REPL switch markers

    ##### ENTER REPL `<name>` #####
    ##### EXITING REPL `<name>`#####

(the exit marker has no space before the closing hashes). Events carry
logical counters instead of wall-clock time so logs are reproducible.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

logger = logging.getLogger("django_replplan.trace")

# Event names
ENTER = "enter"
EXIT = "exit"
OBSERVATION = "observation"
CODE = "code"
STDOUT = "stdout"
ECHO = "echo"
ERROR = "error"
NAME_ERROR = "name_error"
ACTION = "action"
LLM_CALL = "llm_call"
SUBTASK_QUERY = "subtask_query"
ANSWER = "answer"
EPISODE_END = "episode_end"


def enter_marker(name: str) -> str:
    return f"##### ENTER REPL `{name}` #####"


def exit_marker(name: str) -> str:
    return f"##### EXITING REPL `{name}`#####"


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    event: str
    repl: str
    payload: Dict[str, Any]
    llm_calls: int
    env_steps: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "event": self.event,
                "repl": self.repl,
                "payload": self.payload,
                "llm_calls": self.llm_calls,
                "env_steps": self.env_steps,
            },
            sort_keys=True,
            ensure_ascii=False,
            default=repr,
        )


@dataclass
class TraceRecorder:
    """Collects the log lines and events of one episode."""

    lines: List[str] = field(default_factory=list)
    events: List[TraceEvent] = field(default_factory=list)
    llm_calls: int = 0
    env_steps: int = 0

    def emit(self, event: str, repl: str = "", **payload):
        record = TraceEvent(
            seq=len(self.events) + 1,
            event=event,
            repl=repl,
            payload=payload,
            llm_calls=self.llm_calls,
            env_steps=self.env_steps,
        )
        self.events.append(record)
        logger.debug(f"{event} {repl}", extra={"trace_event": record.to_json()})

    def write_lines(self, text: str):
        self.lines.extend(text.split("\n"))

    # Log + event helpers

    def observation(self, text: str):
        self.write_lines(text)
        self.emit(OBSERVATION, text=text)

    def enter(self, name: str):
        self.lines.append(enter_marker(name))
        self.emit(ENTER, name)

    def exit(self, name: str):
        self.lines.append(exit_marker(name))
        self.emit(EXIT, name)

    def code(self, name: str, echo: List[str], source: str):
        self.lines.extend(echo)
        self.emit(CODE, name, source=source)

    def stdout(self, name: str, text: str):
        self.write_lines(text[:-1] if text.endswith("\n") else text)
        self.lines.append("")
        self.emit(STDOUT, name, text=text)

    def echo_value(self, name: str, text: str):
        self.lines.append(text)
        self.emit(ECHO, name, text=text)

    def error(self, name: str, text: str):
        self.write_lines(text)
        self.emit(ERROR, name, text=text)

    def name_error(self, name: str, fname: str, cached: bool):
        if cached:
            self.lines.append(f"Name error: {fname}. injecting with cached LLM func.")
        else:
            self.lines.append(f"Name error: {fname}. querying LLM for a new func.")
        self.emit(NAME_ERROR, name, function=fname, cached=cached)

    def action(self, name: str, action: str, obs: str):
        self.lines.append(f"> {action}")
        if obs:
            self.lines.append("")
            self.write_lines(obs)
        self.emit(ACTION, name, action=action, obs=obs)

    # Events without log lines

    def llm_call(self, name: str, mode: str):
        self.emit(LLM_CALL, name, mode=mode)

    def subtask_query(self, name: str, fname: str, task: str):
        self.emit(SUBTASK_QUERY, name, function=fname, task=task)

    def answer(self, name: str, value: Any):
        self.emit(ANSWER, name, value=repr(value))

    def episode_end(self, result: Dict[str, Any]):
        self.emit(EPISODE_END, "", **result)

    # Output

    def human_log(self) -> str:
        return "\n".join(self.lines) + "\n"

    def jsonl(self) -> str:
        return "".join(event.to_json() + "\n" for event in self.events)

    def markers(self) -> List[str]:
        return [line for line in self.lines if line.startswith("##### ")]

    def write(self, out_dir: Union[str, Path], index: int, prefix: Optional[str] = "episode"):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{prefix}-{index}.log").write_text(self.human_log(), encoding="utf-8")
        (out_dir / f"{prefix}-{index}.jsonl").write_text(self.jsonl(), encoding="utf-8")


def compare_logs(actual: str, expected: str) -> Optional[str]:
    """
    Compare two human logs modulo trailing whitespace.

    Returns:
        None when equal, else a report of the first differing line
    """
    actual_lines = [line.rstrip() for line in actual.rstrip().split("\n")]
    expected_lines = [line.rstrip() for line in expected.rstrip().split("\n")]
    for number, (got, want) in enumerate(zip(actual_lines, expected_lines), 1):
        if got != want:
            return f"line {number}: expected {want!r}, got {got!r}"
    if len(actual_lines) != len(expected_lines):
        number = min(len(actual_lines), len(expected_lines)) + 1
        if len(actual_lines) > len(expected_lines):
            return f"line {number}: unexpected extra line {actual_lines[number - 1]!r}"
        return f"line {number}: missing line {expected_lines[number - 1]!r}"
    return None
