"""
Environment interface and the small environments: the counting toy and
the transcript replayer.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from .exceptions import EnvironmentStepError

logger = logging.getLogger(__name__)

INVALID_ACTION = "Invalid action"


@dataclass(frozen=True)
class EnvResult:
    obs: str
    reward: float = 0.0
    done: bool = False


class Environment:
    """
    Base class for text environments.

    Subclasses implement ``_reset`` and ``_step``; the base class enforces
    that a finished environment is never stepped and keeps the action log.
    """

    name = "environment"

    def __init__(self):
        self.done = False
        self.reward = 0.0
        self.actions: List[str] = []
        self.task_id: Any = None

    def task_text(self, task_id: Any = None) -> str:
        raise NotImplementedError

    def task_count(self) -> int:
        return 1

    def reset(self, task_id: Any = None) -> str:
        self.done = False
        self.reward = 0.0
        self.actions = []
        self.task_id = task_id
        return self._reset(task_id)

    def step(self, action: str) -> EnvResult:
        if self.done:
            raise EnvironmentStepError(
                f"{self.name} stepped after done with action {action!r}",
                context={"action": action, "task_id": self.task_id},
            )
        self.actions.append(action)
        result = self._step(action)
        if result.done:
            self.done = True
            self.reward = result.reward
        return result

    def score(self) -> float:
        return self.reward

    def _reset(self, task_id: Any) -> str:
        raise NotImplementedError

    def _step(self, action: str) -> EnvResult:
        raise NotImplementedError


class CounterEnv(Environment):
    """Receives integers; succeeds when they are exactly 1..target in order."""

    name = "counter"

    def __init__(self, target: int = 4):
        super().__init__()
        self.target = target
        self.received: List[int] = []

    def task_text(self, task_id: Any = None) -> str:
        return f"Count to {self.target}."

    def _reset(self, task_id: Any) -> str:
        self.received = []
        return self.task_text(task_id)

    def _step(self, action: str) -> EnvResult:
        try:
            value = int(action.strip())
        except ValueError:
            logger.info(f"Counter received non-integer action {action!r}")
            return EnvResult(obs=f"{INVALID_ACTION}: {action}", reward=0.0, done=True)

        self.received.append(value)
        if len(self.received) < self.target:
            return EnvResult(obs=f"Received {value}.")
        expected = list(range(1, self.target + 1))
        reward = 1.0 if self.received == expected else 0.0
        return EnvResult(obs=f"Received {value}.", reward=reward, done=True)


class TranscriptEnv(Environment):
    """
    Replays a recorded ``[{"obs", "action"}, ...]`` script.

    ``reset`` returns the first recorded observation. Each matching action
    yields the next observation; the first mismatch ends the episode with
    reward 0 and a divergence report. Matching the last recorded action
    ends it with reward 1.
    """

    name = "transcript"

    def __init__(self, steps: List[Dict[str, str]], task: Optional[str] = None):
        super().__init__()
        self.steps = list(steps)
        self.position = 0
        self.divergence: Optional[str] = None
        self._task = task

    def task_text(self, task_id: Any = None) -> str:
        if self._task:
            return self._task
        instruction = instruction_from_observation(self.steps[0]["obs"]) if self.steps else ""
        if instruction:
            return (
                "Navigate a shopping website to purchase an item matching the "
                f"following request: {instruction}"
            )
        return "Follow the recorded transcript."

    def _reset(self, task_id: Any) -> str:
        self.position = 0
        self.divergence = None
        return self.steps[0]["obs"] if self.steps else ""

    def _step(self, action: str) -> EnvResult:
        if self.position >= len(self.steps):
            self.divergence = f"expected end of transcript, got {action}"
            return EnvResult(obs=self.divergence, reward=0.0, done=True)

        expected = self.steps[self.position]["action"]
        if action != expected:
            self.divergence = f"expected {expected}, got {action}"
            logger.warning(f"Transcript diverged at step {self.position + 1}: {self.divergence}")
            return EnvResult(obs=self.divergence, reward=0.0, done=True)

        self.position += 1
        if self.position >= len(self.steps):
            return EnvResult(obs="", reward=1.0, done=True)
        return EnvResult(obs=self.steps[self.position]["obs"])


def instruction_from_observation(obs: str) -> str:
    """The line following ``Instruction:`` on a shop start page."""
    lines = [line.strip() for line in obs.split("\n")]
    for index, line in enumerate(lines):
        if line.startswith("Instruction:"):
            rest = line[len("Instruction:"):].strip()
            if rest:
                return rest
            if index + 1 < len(lines):
                return lines[index + 1]
    return ""
