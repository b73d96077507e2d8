"""
Django REPL-Plan - LLM-REPL planning runtime

Runs language agents written as read-eval-print loops: an LLM writes one
MiniLang block at a time, calling an undefined function spawns a child
LLM-REPL for that subtask, and ``act``/``answer`` cross into the
environment and back to the caller. Blocks are re-run from their start
after each suspension with cached call results, so every effect happens
exactly once.

Usage:
    from django_replplan import CounterEnv, ScriptedProvider, load_demos, run_episode

    result = run_episode(CounterEnv(), load_demos(None), ScriptedProvider(playbook))
"""

__version__ = "1.0.0"
__author__ = "Django REPL-Plan Team"

# Components that don't require Django settings
from .nodes import SourceBlock, SyntaxDiagnostic
from .parser import extract_block, is_block_complete, parse_block, render_echo
from .values import BuiltinFn, CallLedger, Effect, ExecOutcome, ReplFn, Scope, render_value


def _get_runtime():
    """Lazy import of the modules that log through Django-aware exceptions."""
    try:
        from .environments import CounterEnv, Environment, EnvResult, TranscriptEnv
        from .exceptions import (
            BudgetExhausted,
            ConfigurationError,
            DemoLoadError,
            EnvironmentStepError,
            LLMTransportError,
            PlaybookError,
            ReplPlanError,
        )
        from .interpreter import Interpreter, REPLNameError, resolve_name
        from .kernel import Budgets, Episode, EpisodeResult, run_episode
        from .minishop import MiniWebShop
        from .providers import CompletionParams, HttpProvider, ScriptedProvider
        from .repl import LlmRepl, ReplPool, load_demos

        return {
            "CounterEnv": CounterEnv,
            "Environment": Environment,
            "EnvResult": EnvResult,
            "TranscriptEnv": TranscriptEnv,
            "MiniWebShop": MiniWebShop,
            "BudgetExhausted": BudgetExhausted,
            "ConfigurationError": ConfigurationError,
            "DemoLoadError": DemoLoadError,
            "EnvironmentStepError": EnvironmentStepError,
            "LLMTransportError": LLMTransportError,
            "PlaybookError": PlaybookError,
            "ReplPlanError": ReplPlanError,
            "Interpreter": Interpreter,
            "REPLNameError": REPLNameError,
            "resolve_name": resolve_name,
            "Budgets": Budgets,
            "Episode": Episode,
            "EpisodeResult": EpisodeResult,
            "run_episode": run_episode,
            "CompletionParams": CompletionParams,
            "HttpProvider": HttpProvider,
            "ScriptedProvider": ScriptedProvider,
            "LlmRepl": LlmRepl,
            "ReplPool": ReplPool,
            "load_demos": load_demos,
        }
    except ImportError:
        return {}


def __getattr__(name):
    """Lazy loading of Django-dependent components."""
    components = _get_runtime()
    if name in components:
        return components[name]

    raise AttributeError(f"module '{__name__}' has no attribute '{name}'")


__all__ = [
    # MiniLang
    "SourceBlock",
    "SyntaxDiagnostic",
    "extract_block",
    "is_block_complete",
    "parse_block",
    "render_echo",
    "BuiltinFn",
    "CallLedger",
    "Effect",
    "ExecOutcome",
    "ReplFn",
    "Scope",
    "render_value",
    # Runtime (lazy loaded)
    "Interpreter",
    "REPLNameError",
    "resolve_name",
    "Budgets",
    "Episode",
    "EpisodeResult",
    "run_episode",
    "LlmRepl",
    "ReplPool",
    "load_demos",
    "CompletionParams",
    "HttpProvider",
    "ScriptedProvider",
    "Environment",
    "EnvResult",
    "CounterEnv",
    "TranscriptEnv",
    "MiniWebShop",
    # Exceptions (lazy loaded)
    "ReplPlanError",
    "ConfigurationError",
    "DemoLoadError",
    "PlaybookError",
    "LLMTransportError",
    "EnvironmentStepError",
    "BudgetExhausted",
]

VERSION = (1, 0, 0)


def get_version():
    """Get version string."""
    return ".".join(str(v) for v in VERSION)
