"""
Batch runner, transcript replay and demo validation behind the commands.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

from .environments import CounterEnv, Environment, TranscriptEnv
from .exceptions import (
    ConfigurationError,
    ErrorHandler,
    ReplayDivergenceError,
    handle_episode_error,
)
from .kernel import PLAYBOOK_ERROR, Budgets, EpisodeResult, run_episode
from .metrics import MetricsReport, performance_timer
from .minishop import MiniWebShop
from .nodes import SyntaxDiagnostic
from .parser import parse_block
from .providers import CompletionParams, LlmProvider, ScriptedProvider, build_provider
from .repl import load_demo_specs, load_demos
from .serializers import (
    load_bug_patches,
    load_catalog,
    load_playbooks,
    load_tasks,
    load_transcript,
    validate_run_config,
)
from .trace import TraceRecorder, compare_logs

logger = logging.getLogger(__name__)

FIXTURES_DIR = Path(__file__).resolve().parent / "fixtures"
DEFAULT_CATALOG = FIXTURES_DIR / "catalog.json"
DEFAULT_TASKS = FIXTURES_DIR / "tasks.json"

BUNDLE_FILES = {
    "transcript": "transcript.json",
    "demos": "demos.json",
    "playbook": "playbook.json",
    "expected_log": "recorded.log",
}


@dataclass
class RunConfig:
    env: str = "minishop"
    catalog: Optional[str] = None
    tasks: Optional[str] = None
    demos: Optional[str] = None
    playbook: Optional[str] = None
    http_base: Optional[str] = None
    model: Optional[str] = None
    temperature: Optional[float] = None
    no_subtask_repls: bool = False
    drop_repls: List[str] = field(default_factory=list)
    inject_bugs: Optional[str] = None
    max_env_steps: int = 50
    max_llm_calls: int = 100
    max_depth: int = 16
    step_budget: int = 100000
    results_per_page: int = 3
    workers: int = 1
    out: Optional[str] = None
    assert_sr: Optional[float] = None
    limit: Optional[int] = None
    seed: int = 0

    @classmethod
    def from_options(cls, options: Dict[str, Any], replplan_settings: Dict[str, Any]) -> "RunConfig":
        """
        Merge command options over REPL_PLAN settings and validate the result.

        Raises:
            ConfigurationError: invalid combination or unreadable path
        """
        defaults = {
            "max_env_steps": replplan_settings["MAX_ENV_STEPS"],
            "max_llm_calls": replplan_settings["MAX_LLM_CALLS"],
            "max_depth": replplan_settings["MAX_SPAWN_DEPTH"],
            "step_budget": replplan_settings["STEP_BUDGET"],
            "results_per_page": replplan_settings["RESULTS_PER_PAGE"],
        }
        data = dict(defaults)
        known = set(cls.__dataclass_fields__)
        data.update({k: v for k, v in options.items() if k in known and v is not None})
        if isinstance(data.get("drop_repls"), str):
            data["drop_repls"] = [name.strip() for name in data["drop_repls"].split(",") if name.strip()]
        if data.get("env", "minishop") == "minishop":
            data.setdefault("catalog", str(DEFAULT_CATALOG))
            data.setdefault("tasks", str(DEFAULT_TASKS))
        return cls(**validate_run_config(data))

    def budgets(self, replplan_settings: Dict[str, Any]) -> Budgets:
        return Budgets.from_settings(
            replplan_settings,
            max_env_steps=self.max_env_steps,
            max_llm_calls=self.max_llm_calls,
            max_spawn_depth=self.max_depth,
            step_budget=self.step_budget,
        )

    def params(self, replplan_settings: Dict[str, Any]) -> CompletionParams:
        return CompletionParams.from_settings(
            replplan_settings, model=self.model, temperature=self.temperature, seed=self.seed
        )


def env_factory(config: RunConfig) -> Callable[[], Environment]:
    """Environment constructor for ``config``; each episode gets its own instance."""
    if config.env == "counter":
        return CounterEnv
    if config.env == "transcript":
        steps = load_transcript(config.tasks)
        return lambda: TranscriptEnv(steps)
    catalog = load_catalog(config.catalog)
    tasks = load_tasks(config.tasks)
    return lambda: MiniWebShop(catalog, tasks, results_per_page=config.results_per_page)


class BatchRunner:
    """Runs one episode per task and aggregates a MetricsReport."""

    def __init__(self, config: RunConfig, replplan_settings: Dict[str, Any]):
        self.config = config
        self.settings = replplan_settings
        self.make_env = env_factory(config)
        self.pool = load_demos(config.demos, drop=config.drop_repls, bugs_path=config.inject_bugs)
        self.budgets = config.budgets(replplan_settings)
        self.params = config.params(replplan_settings)
        self.playbooks = load_playbooks(config.playbook) if config.playbook else None
        self._shared_provider: Optional[LlmProvider] = None

    def task_ids(self) -> List[int]:
        count = self.make_env().task_count()
        if self.config.limit is not None:
            count = min(count, self.config.limit)
        if isinstance(self.playbooks, list) and len(self.playbooks) < count:
            raise ConfigurationError(
                f"playbook list has {len(self.playbooks)} entries for {count} tasks",
                context={"playbook": self.config.playbook},
            )
        return list(range(count))

    def provider_for(self, task_index: int) -> LlmProvider:
        if isinstance(self.playbooks, list):
            return ScriptedProvider(self.playbooks[task_index])
        if self._shared_provider is None:
            self._shared_provider = build_provider(
                self.settings, playbook=self.playbooks, http_base=self.config.http_base
            )
        return self._shared_provider

    def run_one(self, task_index: int) -> Dict[str, Any]:
        trace = TraceRecorder()
        with ErrorHandler(f"episode {task_index}", suppress=True) as handler:
            with performance_timer("episode", task_index=task_index):
                result = run_episode(
                    self.make_env(),
                    self.pool.fresh_copy(),
                    self.provider_for(task_index),
                    task_id=task_index,
                    budgets=self.budgets,
                    params=self.params,
                    no_subtask_repls=self.config.no_subtask_repls,
                    preamble_version=self.settings["PREAMBLE_VERSION"],
                    trace=trace,
                )
        if handler.error is not None:
            row = handle_episode_error(task_index, handler.error)
        else:
            row = dict(result.as_dict(), task_index=task_index)
        if self.config.out:
            trace.write(self.config.out, task_index)
        return row

    def run(self) -> MetricsReport:
        task_ids = self.task_ids()
        if task_ids and not isinstance(self.playbooks, list):
            self.provider_for(0)
        report = MetricsReport()
        logger.info(
            f"Running {len(task_ids)} episodes on {self.config.workers} worker(s)",
            extra={"env": self.config.env, "workers": self.config.workers},
        )
        with ThreadPoolExecutor(max_workers=self.config.workers) as executor:
            futures = {executor.submit(self.run_one, index): index for index in task_ids}
            for future in as_completed(futures):
                report.add(future.result())
        if self.config.out:
            write_report(report, self.config)
        return report


def write_report(report: MetricsReport, config: RunConfig):
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = dict(report.as_dict(), env=config.env, seed=config.seed)
    (out_dir / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def run_batch(config: RunConfig, replplan_settings: Dict[str, Any]) -> MetricsReport:
    """Run every selected task of ``config`` and return the aggregate report."""
    return BatchRunner(config, replplan_settings).run()


@dataclass
class ReplayReport:
    passed: bool
    reward: float
    actions: List[str]
    divergence: Optional[str] = None
    log: str = ""
    result: Optional[EpisodeResult] = None

    def as_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "reward": self.reward,
            "actions": list(self.actions),
            "divergence": self.divergence,
            "reason": self.result.reason if self.result else None,
        }

    def raise_for_divergence(self) -> None:
        if not self.passed:
            raise ReplayDivergenceError(
                f"Replay diverged: {self.divergence}",
                context={"actions": len(self.actions), "reward": self.reward},
            )


def bundle_paths(bundle: Union[str, Path]) -> Dict[str, Path]:
    bundle = Path(bundle)
    if not bundle.is_dir():
        raise ConfigurationError(f"bundle directory not found: {bundle}")
    return {key: bundle / name for key, name in BUNDLE_FILES.items()}


def replay_bundle(
    transcript: Union[str, Path],
    demos: Optional[Union[str, Path]],
    playbook: Union[str, Path],
    expected_log: Optional[Union[str, Path]] = None,
    replplan_settings: Optional[Dict[str, Any]] = None,
    out: Optional[Union[str, Path]] = None,
) -> ReplayReport:
    """
    Replay a recorded transcript with a scripted provider.

    Passes when the environment reward is 1.0 and the human log equals the
    recorded one modulo trailing whitespace.

    Raises:
        ConfigurationError: a file is missing or malformed
    """
    from .apps import ReplPlanConfig

    replplan_settings = replplan_settings or ReplPlanConfig.get_settings()
    steps = load_transcript(transcript)
    playbook_data = load_playbooks(playbook)
    if isinstance(playbook_data, list):
        raise ConfigurationError("a replay playbook must be a single playbook, not a list")
    expected = None
    if expected_log is not None:
        path = Path(expected_log)
        if not path.exists():
            raise ConfigurationError(f"expected log not found: {path}")
        expected = path.read_text(encoding="utf-8")

    env = TranscriptEnv(steps)
    trace = TraceRecorder()
    provider = ScriptedProvider(playbook_data)
    result = run_episode(
        env,
        load_demos(demos),
        provider,
        budgets=Budgets.from_settings(replplan_settings),
        params=CompletionParams.from_settings(replplan_settings),
        preamble_version=replplan_settings["PREAMBLE_VERSION"],
        trace=trace,
    )
    if out:
        trace.write(out, 0, prefix="replay")

    divergence = None
    if result.reason == PLAYBOOK_ERROR:
        divergence = result.diagnostic
    elif env.divergence:
        divergence = env.divergence
    elif env.score() < 1.0:
        divergence = f"episode ended with reason {result.reason} before the transcript finished"
    elif expected is not None:
        divergence = compare_logs(trace.human_log(), expected)
    if divergence and result.reason != PLAYBOOK_ERROR and provider.calls:
        last = provider.calls[-1]
        divergence = f"{divergence} (last completion: {last['repl']} turn {last['turn']})"

    passed = divergence is None
    log_method = logger.info if passed else logger.warning
    log_method(f"Replay {'passed' if passed else 'diverged'}: {divergence or 'log matches'}")
    return ReplayReport(
        passed=passed,
        reward=env.score(),
        actions=list(result.actions),
        divergence=divergence,
        log=trace.human_log(),
        result=result,
    )


@dataclass
class DemoReport:
    repls: List[Dict[str, Any]] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def diagnostics(self) -> int:
        return sum(len(repl["diagnostics"]) for repl in self.repls)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "repl_count": len(self.repls),
            "diagnostic_count": self.diagnostics,
            "repls": self.repls,
            "warnings": list(self.warnings),
        }


def validate_demos(path: Union[str, Path], bugs_path: Optional[Union[str, Path]] = None) -> DemoReport:
    """
    Parse every code entry of a demo file.

    Syntax diagnostics are reported as warnings; the file is still accepted
    since demos may carry deliberate bugs.

    Raises:
        ConfigurationError: missing or malformed file
    """
    specs = load_demo_specs(path)
    if bugs_path:
        from .repl import inject_bugs

        specs = inject_bugs(specs, load_bug_patches(bugs_path))

    report = DemoReport()
    for spec in specs:
        statements = 0
        diagnostics = []
        for index, entry in enumerate(spec["entries"]):
            if entry["kind"] != "code":
                continue
            parsed = parse_block(entry["text"])
            if isinstance(parsed, SyntaxDiagnostic):
                diagnostics.append({"entry": index, "message": parsed.message})
                first_line = entry["text"].split("\n")[0]
                report.warnings.append(
                    f"{spec['name']}[{index}]: {parsed.message} in {first_line!r}"
                )
            else:
                statements += 1
        report.repls.append(
            {"name": spec["name"], "statements": statements, "diagnostics": diagnostics}
        )
    for warning in report.warnings:
        logger.warning(f"Demo diagnostic: {warning}")
    return report
