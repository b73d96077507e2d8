"""
Django app configuration for django_replplan.
"""

import logging
from pathlib import Path

from django.apps import AppConfig
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

logger = logging.getLogger(__name__)

ASSETS_DIR = Path(__file__).resolve().parent / "assets"

POSITIVE_KEYS = (
    "MAX_ENV_STEPS",
    "MAX_LLM_CALLS",
    "MAX_SPAWN_DEPTH",
    "STEP_BUDGET",
    "MAX_SYNTAX_FAILURES",
    "MAX_CONTINUATIONS",
    "RESULTS_PER_PAGE",
    "LLM_MAX_TOKENS",
    "RETRY_MAX_ATTEMPTS",
)


class ReplPlanConfig(AppConfig):
    """Configuration for the django-replplan app."""

    name = "django_replplan"
    verbose_name = "Django REPL-Plan"
    default_auto_field = "django.db.models.BigAutoField"

    def ready(self):
        """
        Called when Django starts up.
        Validates the REPL_PLAN settings and wires the package loggers.
        """
        self._validate_configuration()
        self._setup_logging()

        logger.info("Django REPL-Plan initialized")

    def _validate_configuration(self):
        """Validate REPL_PLAN settings."""
        replplan_settings = self.get_settings()

        for key in POSITIVE_KEYS:
            value = replplan_settings[key]
            if not isinstance(value, int) or value <= 0:
                raise ImproperlyConfigured(f"REPL_PLAN['{key}'] must be a positive integer")

        if replplan_settings["LLM_TEMPERATURE"] < 0:
            raise ImproperlyConfigured("REPL_PLAN['LLM_TEMPERATURE'] must be >= 0")
        if replplan_settings["RETRY_BASE_DELAY"] < 0:
            raise ImproperlyConfigured("REPL_PLAN['RETRY_BASE_DELAY'] must be >= 0")
        if replplan_settings["RETRY_BACKOFF_FACTOR"] < 1:
            raise ImproperlyConfigured("REPL_PLAN['RETRY_BACKOFF_FACTOR'] must be >= 1")

        if "\n>>>" not in replplan_settings["LLM_STOP"]:
            logger.warning(
                "REPL_PLAN['LLM_STOP'] lacks the prompt marker; it will be added per request"
            )

        preamble = ASSETS_DIR / f"preamble_{replplan_settings['PREAMBLE_VERSION']}.txt"
        if not preamble.exists():
            raise ImproperlyConfigured(
                f"REPL_PLAN['PREAMBLE_VERSION'] names a missing asset: {preamble.name}"
            )

        logger.info("Configuration validation passed")

    def _setup_logging(self):
        """Attach default handlers to the package loggers that have none."""
        replplan_settings = self.get_settings()
        levels = {
            "django_replplan.trace": logging.WARNING,
            "django_replplan.llm": (
                logging.DEBUG if replplan_settings["DEBUG_HTTP"] else logging.WARNING
            ),
            "django_replplan.performance": logging.INFO,
        }

        for name, level in levels.items():
            named_logger = logging.getLogger(name)
            if not named_logger.handlers:
                handler = logging.StreamHandler()
                handler.setLevel(level)
                formatter = logging.Formatter(
                    "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
                )
                handler.setFormatter(formatter)
                named_logger.addHandler(handler)

    @classmethod
    def get_default_settings(cls):
        """Get default settings for django-replplan."""
        return {
            # Episode budgets
            "MAX_ENV_STEPS": 50,
            "MAX_LLM_CALLS": 100,
            "MAX_SPAWN_DEPTH": 16,
            "STEP_BUDGET": 100000,
            "MAX_SYNTAX_FAILURES": 3,
            "MAX_CONTINUATIONS": 3,
            # Environments
            "RESULTS_PER_PAGE": 3,
            # LLM gateway
            "LLM_BASE_URL": "https://api.openai.com/v1",
            "LLM_MODEL": "gpt-4o-mini",
            "LLM_API_KEY_ENV": "OPENAI_API_KEY",
            "LLM_TEMPERATURE": 0,
            "LLM_MAX_TOKENS": 512,
            "LLM_STOP": ["\n>>>"],
            "LLM_TIMEOUT": 60,
            "PREAMBLE_VERSION": "v1",
            # Retries
            "RETRY_MAX_ATTEMPTS": 5,
            "RETRY_BASE_DELAY": 1.0,
            "RETRY_BACKOFF_FACTOR": 2.0,
            # Diagnostics
            "DEBUG_HTTP": False,
        }

    @classmethod
    def get_settings(cls):
        """Get current settings with defaults."""
        defaults = cls.get_default_settings()
        user_settings = getattr(settings, "REPL_PLAN", {})

        merged_settings = defaults.copy()
        merged_settings.update(user_settings)

        return merged_settings
