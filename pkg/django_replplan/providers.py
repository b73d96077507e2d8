"""
Completion providers: a scripted playbook for offline runs and an HTTP
provider for OpenAI-compatible chat-completions endpoints.
"""

import json
import logging
import os
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import openai

from .exceptions import ConfigurationError, LLMTransportError, PlaybookExhaustedError, PromptMismatchError
from .prompts import Prompt

logger = logging.getLogger("django_replplan.llm")

PROMPT_STOP = "\n>>>"

RETRYABLE_ERRORS = (
    openai.RateLimitError,
    openai.APIConnectionError,
    openai.APITimeoutError,
    openai.InternalServerError,
)


@dataclass
class CompletionParams:
    model: str = "gpt-4o-mini"
    temperature: float = 0.0
    max_tokens: int = 512
    stop: List[str] = field(default_factory=lambda: [PROMPT_STOP])
    seed: Optional[int] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        if PROMPT_STOP not in self.stop:
            self.stop = list(self.stop) + [PROMPT_STOP]

    @classmethod
    def from_settings(cls, replplan_settings: Dict[str, Any], **overrides) -> "CompletionParams":
        values = {
            "model": replplan_settings["LLM_MODEL"],
            "temperature": replplan_settings["LLM_TEMPERATURE"],
            "max_tokens": replplan_settings["LLM_MAX_TOKENS"],
            "stop": list(replplan_settings["LLM_STOP"]),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class LlmProvider:
    """Base class for completion sources."""

    def complete(self, prompt: Prompt, params: CompletionParams) -> str:
        raise NotImplementedError


class ScriptedProvider(LlmProvider):
    """
    Replays authored completions, one queue per REPL name.

    Queue exhaustion raises instead of recycling, and a turn may assert the
    prompt transcript starts with an expected prefix.
    """

    def __init__(self, playbook: Dict[str, List[Any]]):
        self.queues: Dict[str, List[Dict[str, Any]]] = {}
        for name, turns in playbook.items():
            self.queues[name] = [
                {"expect_prefix": None, "completion": turn} if isinstance(turn, str) else dict(turn)
                for turn in turns
            ]
        self.served: Dict[str, int] = defaultdict(int)
        self.calls: List[Dict[str, Any]] = []
        self.locks: Dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._registry_lock = threading.Lock()

    def _lock_for(self, name: str) -> threading.Lock:
        with self._registry_lock:
            return self.locks[name]

    def complete(self, prompt: Prompt, params: CompletionParams) -> str:
        name = prompt.repl_name
        with self._lock_for(name):
            queue = self.queues.get(name, [])
            turn = self.served[name]
            if turn >= len(queue):
                raise PlaybookExhaustedError(
                    f"playbook for REPL '{name}' exhausted after {turn} completions",
                    repl=name,
                    turn=turn + 1,
                )
            entry = queue[turn]
            prefix = entry.get("expect_prefix")
            if prefix is not None and not prompt.transcript.startswith(prefix):
                raise PromptMismatchError(
                    f"prompt for REPL '{name}' turn {turn + 1} does not start with {prefix!r}",
                    repl=name,
                    turn=turn + 1,
                )
            self.served[name] = turn + 1
            self.calls.append({"repl": name, "mode": prompt.mode, "turn": turn + 1})

        logger.debug(f"Scripted completion for {name} turn {turn + 1}")
        return entry["completion"]

    def remaining(self) -> Dict[str, int]:
        return {name: len(queue) - self.served[name] for name, queue in self.queues.items()}


class HttpProvider(LlmProvider):
    """
    Chat-completions client with exponential backoff.

    The SDK's own retries are disabled so the attempt count, delays and
    logging follow the REPL_PLAN retry settings.
    """

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60,
        max_attempts: int = 5,
        base_delay: float = 1.0,
        backoff_factor: float = 2.0,
        debug_http: bool = False,
        sleep: Callable[[float], None] = time.sleep,
    ):
        api_key = os.environ.get(api_key_env)
        if not api_key:
            raise ConfigurationError(
                f"environment variable {api_key_env} is not set",
                context={"api_key_env": api_key_env},
            )
        self.base_url = base_url
        self.max_attempts = max_attempts
        self.base_delay = base_delay
        self.backoff_factor = backoff_factor
        self.debug_http = debug_http
        self.sleep = sleep
        self.client = openai.OpenAI(
            api_key=api_key, base_url=base_url, timeout=timeout, max_retries=0
        )

    @classmethod
    def from_settings(cls, replplan_settings: Dict[str, Any], base_url: Optional[str] = None):
        return cls(
            base_url=base_url or replplan_settings["LLM_BASE_URL"],
            api_key_env=replplan_settings["LLM_API_KEY_ENV"],
            timeout=replplan_settings["LLM_TIMEOUT"],
            max_attempts=replplan_settings["RETRY_MAX_ATTEMPTS"],
            base_delay=replplan_settings["RETRY_BASE_DELAY"],
            backoff_factor=replplan_settings["RETRY_BACKOFF_FACTOR"],
            debug_http=replplan_settings["DEBUG_HTTP"],
        )

    def request_body(self, prompt: Prompt, params: CompletionParams) -> Dict[str, Any]:
        body = {
            "model": params.model,
            "messages": prompt.messages(),
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "stop": params.stop,
        }
        if params.seed is not None:
            body["seed"] = params.seed
        return body

    def _dump(self, label: str, payload: Any):
        if not self.debug_http:
            return
        logger.debug(f"{label} {self.base_url}/chat/completions: {json.dumps(payload, default=str)}")

    def complete(self, prompt: Prompt, params: CompletionParams) -> str:
        body = self.request_body(prompt, params)
        self._dump("POST", {"headers": {"Authorization": "Bearer ***"}, "body": body})
        delay = self.base_delay
        last_error: Optional[Exception] = None

        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self.client.chat.completions.create(**body)
            except RETRYABLE_ERRORS as error:
                last_error = error
                if attempt == self.max_attempts:
                    break
                logger.warning(
                    f"LLM request for {prompt.repl_name} failed ({error.__class__.__name__}); "
                    f"retry {attempt}/{self.max_attempts - 1} in {delay:g}s",
                    extra={"repl": prompt.repl_name, "attempt": attempt},
                )
                self.sleep(delay)
                delay *= self.backoff_factor
                continue
            except openai.APIStatusError as error:
                raise LLMTransportError(
                    f"LLM request rejected with HTTP {error.status_code}",
                    retryable=False,
                    context={"status": error.status_code, "repl": prompt.repl_name},
                ) from error

            self._dump("RESPONSE", response.model_dump() if hasattr(response, "model_dump") else response)
            if not response.choices:
                return ""
            return response.choices[0].message.content or ""

        raise LLMTransportError(
            f"LLM request failed after {self.max_attempts} attempts: {last_error}",
            retryable=True,
            context={"repl": prompt.repl_name, "attempts": self.max_attempts},
        )


def build_provider(
    replplan_settings: Dict[str, Any],
    playbook: Optional[Dict[str, List[Any]]] = None,
    http_base: Optional[str] = None,
) -> LlmProvider:
    """Scripted provider when a playbook is given, otherwise the HTTP provider."""
    if playbook is not None:
        return ScriptedProvider(playbook)
    return HttpProvider.from_settings(replplan_settings, base_url=http_base)
