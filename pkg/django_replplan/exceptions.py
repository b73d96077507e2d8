"""
Exception classes for django-replplan.

Kernel, gateway and harness errors share one base so the batch runner and
the management commands can report them uniformly. Faults inside MiniLang
programs are never raised through this hierarchy: they are data the kernel
appends to REPL history.
"""

import logging
from typing import Any, Dict, Optional

from django.utils import timezone
from rest_framework.exceptions import APIException

logger = logging.getLogger("django_replplan.exceptions")


class ReplPlanError(APIException):
    """Base exception for REPL-Plan runtime errors."""

    status_code = 500
    default_detail = "REPL-Plan runtime error occurred"
    default_code = "replplan_error"

    def __init__(
        self, detail=None, code=None, context: Optional[Dict[str, Any]] = None
    ):
        """
        Initialize with optional context for better debugging.

        Args:
            detail: Error message
            code: Error code
            context: Additional context for debugging
        """
        super().__init__(detail, code)
        self.context = context or {}
        self.timestamp = timezone.now().isoformat()

        logger.error(
            f"{self.__class__.__name__}: {detail or self.default_detail}",
            extra={
                "error_code": code or self.default_code,
                "context": self.context,
                "timestamp": self.timestamp,
            },
        )


class ConfigurationError(ReplPlanError):
    """Raised for invalid run configuration or unusable input files."""

    status_code = 400
    default_detail = "Configuration error"
    default_code = "configuration_error"


class DemoLoadError(ConfigurationError):
    """Raised when a demo file or bug patch list cannot be loaded."""

    default_detail = "Demo file could not be loaded"
    default_code = "demo_load_error"

    def __init__(self, detail=None, entry: Optional[str] = None, **kwargs):
        super().__init__(detail, **kwargs)
        self.entry = entry
        if entry is not None:
            self.context["entry"] = entry


class PlaybookError(ReplPlanError):
    """Raised when the scripted provider cannot serve a prompt."""

    status_code = 500
    default_detail = "Scripted playbook error"
    default_code = "playbook_error"

    def __init__(self, detail=None, repl: str = "", turn: int = 0, **kwargs):
        super().__init__(detail, **kwargs)
        self.repl = repl
        self.turn = turn
        self.context.update({"repl": repl, "turn": turn})


class PlaybookExhaustedError(PlaybookError):
    """Raised when a REPL's completion queue has no entries left."""

    default_detail = "Playbook exhausted"
    default_code = "playbook_exhausted"


class PromptMismatchError(PlaybookError):
    """Raised when a prompt does not start with the playbook's expected prefix."""

    default_detail = "Prompt does not match the expected prefix"
    default_code = "prompt_mismatch"


class LLMTransportError(ReplPlanError):
    """Raised when the HTTP provider gives up on a request."""

    status_code = 502
    default_detail = "LLM provider request failed"
    default_code = "llm_transport_error"

    def __init__(self, detail=None, retryable: bool = False, **kwargs):
        super().__init__(detail, **kwargs)
        self.retryable = retryable
        self.context["retryable"] = retryable


class EnvironmentStepError(ReplPlanError):
    """Raised when an environment is stepped after it reported done."""

    status_code = 409
    default_detail = "Environment step after done"
    default_code = "environment_step_error"


class BudgetExhausted(Exception):
    """Internal episode terminator carrying the termination reason."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class ReplayDivergenceError(ReplPlanError):
    """Raised when a replayed episode does not match its recorded log."""

    status_code = 409
    default_detail = "Replay diverged from the recorded transcript"
    default_code = "replay_divergence"


def handle_episode_error(
    task_index: int, error: Exception, reason: str = "error"
) -> Dict[str, Any]:
    """
    Turn an exception raised while running one episode into a report row.

    Args:
        task_index: Index of the task in the batch
        error: The exception that occurred
        reason: Termination reason recorded for the row

    Returns:
        Dictionary shaped like a failed episode row
    """
    logger.error(
        f"Episode {task_index} aborted: {error}",
        extra={
            "task_index": task_index,
            "error_type": error.__class__.__name__,
            "error_message": str(error),
        },
        exc_info=True,
    )

    return {
        "task_index": task_index,
        "success": False,
        "score": 0.0,
        "env_steps": 0,
        "llm_calls": 0,
        "reason": reason,
        "diagnostic": f"{error.__class__.__name__}: {error}",
    }


class ErrorHandler:
    """Context manager that logs an operation's failure and optionally swallows it."""

    def __init__(self, operation: str, suppress: bool = False, log_level: str = "error"):
        self.operation = operation
        self.suppress = suppress
        self.log_level = log_level
        self.error: Optional[BaseException] = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is not None:
            self.error = exc_val
            log_func = getattr(logger, self.log_level, logger.error)
            log_func(
                f"Error in {self.operation}: {exc_val}",
                extra={
                    "operation": self.operation,
                    "error_type": exc_type.__name__,
                    "error_message": str(exc_val),
                },
                exc_info=True,
            )
            return self.suppress

        return False
