"""
Episode kernel: drives LLM-REPLs against an environment.

Each step takes the REPL on top of the invocation stack, obtains a block
from the LLM when it has none suspended, evaluates the block and resolves
the effect it suspended on:

    act       -> environment step, observation broadcast to the stack
    answer    -> pop the REPL, cache the value in the caller's ledger
    spawn     -> push a pooled or newly described child REPL
    get_args  -> the current invocation's arguments
    get_obs   -> the latest observation (print_page prints it)

The block is then evaluated again from its start; resolved calls replay
from the ledger, so every effect happens exactly once.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .environments import Environment
from .exceptions import BudgetExhausted, LLMTransportError, PlaybookError
from .interpreter import DEFAULT_STEP_BUDGET, Interpreter
from .nodes import SyntaxDiagnostic
from .parser import extract_block, is_block_complete, parse_block, render_echo
from .prompts import NEXT_BLOCK, SUBTASK, parse_subtask_description, render_prompt
from .providers import CompletionParams, LlmProvider
from .repl import (
    AWAITING_CHILD,
    CODE,
    ECHO_VALUE,
    ERROR,
    FINISHED_BLOCK,
    MAIN,
    OBSERVATION,
    RUNNING,
    STDOUT,
    LlmRepl,
    ReplPool,
)
from .trace import TraceRecorder
from .values import ACT, ANSWER, GET_ARGS, GET_OBS, SPAWN, Effect, Invocation, ReplFn, commit_prints

logger = logging.getLogger(__name__)

# Termination reasons
ENV_DONE = "env_done"
ROOT_ANSWER = "root_answer"
LLM_CALL_BUDGET = "llm_call_budget"
ENV_STEP_BUDGET = "env_step_budget"
SYNTAX_FAILURES = "syntax_failures"
LLM_ERROR = "llm_error"
PLAYBOOK_ERROR = "playbook_error"


@dataclass
class Budgets:
    max_env_steps: int = 50
    max_llm_calls: int = 100
    max_spawn_depth: int = 16
    step_budget: int = DEFAULT_STEP_BUDGET
    max_syntax_failures: int = 3
    max_continuations: int = 3

    @classmethod
    def from_settings(cls, replplan_settings: Dict[str, Any], **overrides) -> "Budgets":
        values = {
            "max_env_steps": replplan_settings["MAX_ENV_STEPS"],
            "max_llm_calls": replplan_settings["MAX_LLM_CALLS"],
            "max_spawn_depth": replplan_settings["MAX_SPAWN_DEPTH"],
            "step_budget": replplan_settings["STEP_BUDGET"],
            "max_syntax_failures": replplan_settings["MAX_SYNTAX_FAILURES"],
            "max_continuations": replplan_settings["MAX_CONTINUATIONS"],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class Frame:
    repl: LlmRepl
    call_site: Optional[Effect] = None


@dataclass
class EpisodeResult:
    task_id: Any
    success: bool
    score: float
    reason: str
    env_steps: int
    llm_calls: int
    actions: List[str] = field(default_factory=list)
    answer: Optional[str] = None
    diagnostic: str = ""

    def as_dict(self) -> Dict[str, Any]:
        return {
            "task_id": self.task_id,
            "success": self.success,
            "score": self.score,
            "reason": self.reason,
            "env_steps": self.env_steps,
            "llm_calls": self.llm_calls,
            "actions": list(self.actions),
            "answer": self.answer,
            "diagnostic": self.diagnostic,
        }


class _EpisodeFinished(Exception):
    def __init__(self, reason: str, diagnostic: str = ""):
        super().__init__(reason)
        self.reason = reason
        self.diagnostic = diagnostic


class Episode:
    """One task execution: environment reset, REPL loop, termination, score."""

    def __init__(
        self,
        env: Environment,
        pool: ReplPool,
        llm: LlmProvider,
        task_id: Any = 0,
        budgets: Optional[Budgets] = None,
        params: Optional[CompletionParams] = None,
        no_subtask_repls: bool = False,
        preamble_version: str = "v1",
        trace: Optional[TraceRecorder] = None,
    ):
        self.env = env
        self.pool = pool
        self.llm = llm
        self.task_id = task_id
        self.budgets = budgets or Budgets()
        self.params = params or CompletionParams()
        self.no_subtask_repls = no_subtask_repls
        self.preamble_version = preamble_version
        self.trace = trace or TraceRecorder()
        self.interpreter = Interpreter(step_budget=self.budgets.step_budget)
        self.stack: List[Frame] = []
        self.latest_obs = ""
        self.llm_calls = 0
        self.env_steps = 0
        self.actions: List[str] = []
        self.root_answer: Any = None
        self.markers_open = False

    @property
    def root(self) -> LlmRepl:
        return self.stack[0].repl

    # Driver

    def run(self) -> EpisodeResult:
        task = self.env.task_text(self.task_id)
        self.latest_obs = self.env.reset(self.task_id)
        self.trace.observation(self.latest_obs)
        logger.info(f"Episode for task {self.task_id!r} started")

        root = self.pool.get(MAIN)
        if root is None:
            root = LlmRepl(name=MAIN, task=task)
            self.pool.register(root)
        root.begin_episode(task)
        self.push(Frame(root))

        reason, diagnostic = ENV_DONE, ""
        try:
            while True:
                self.step()
        except _EpisodeFinished as finished:
            reason, diagnostic = finished.reason, finished.diagnostic
        except BudgetExhausted as exhausted:
            reason = exhausted.reason
        except PlaybookError as error:
            reason, diagnostic = PLAYBOOK_ERROR, str(error.detail)
        except LLMTransportError as error:
            reason, diagnostic = LLM_ERROR, str(error.detail)

        self.close_markers()
        if self.env.actions != self.actions:
            logger.error(
                f"Action log mismatch for task {self.task_id!r}",
                extra={"env_actions": self.env.actions, "kernel_actions": self.actions},
            )
        score = self.env.score()
        result = EpisodeResult(
            task_id=self.task_id,
            success=self.env.done and score >= 1.0,
            score=score,
            reason=reason,
            env_steps=self.env_steps,
            llm_calls=self.llm_calls,
            actions=list(self.actions),
            answer=repr(self.root_answer) if reason == ROOT_ANSWER else None,
            diagnostic=diagnostic,
        )
        self.trace.episode_end(
            {k: v for k, v in result.as_dict().items() if k not in ("actions", "task_id")}
        )
        logger.info(
            f"Episode for task {self.task_id!r} ended: {reason}, score {score:.3f}",
            extra={"reason": reason, "score": score},
        )
        return result

    def step(self):
        frame = self.stack[-1]
        repl = frame.repl
        repl.status = RUNNING
        if repl.suspended_block is None:
            if not self.acquire_block(repl):
                self.note_syntax_failure(frame)
                return

        _, node = repl.suspended_block
        outcome = self.interpreter.evaluate_block(node, repl.scope, repl.ledger)
        commit_prints(repl.ledger, outcome)
        if outcome.stdout:
            repl.append(STDOUT, outcome.stdout)
            self.trace.stdout(repl.name, outcome.stdout)

        if outcome.completed:
            if outcome.echo:
                repl.append(ECHO_VALUE, outcome.echo)
                self.trace.echo_value(repl.name, outcome.echo)
            repl.clear_block()
            repl.status = FINISHED_BLOCK
        elif outcome.failed:
            self.fail_block(repl, outcome.diag)
        else:
            self.dispatch(frame, outcome.effect)

    def dispatch(self, frame: Frame, effect: Effect):
        repl = frame.repl
        if effect.kind == ACT:
            self.perform_action(repl, effect)
        elif effect.kind == ANSWER:
            self.deliver_answer(frame, effect)
        elif effect.kind == GET_ARGS:
            repl.ledger.record(GET_ARGS, effect.index, self.deliver_args(repl))
        elif effect.kind == GET_OBS:
            if effect.name == "print_page":
                repl.ledger.record(effect.name, effect.index, None, self.latest_obs)
                repl.append(STDOUT, self.latest_obs)
            else:
                repl.ledger.record(effect.name, effect.index, self.latest_obs)
        elif effect.kind == SPAWN:
            self.spawn_child(effect, frame)

    # Stack and markers

    def push(self, frame: Frame):
        if self.stack:
            self.stack[-1].repl.status = AWAITING_CHILD
        self.stack.append(frame)
        self.trace.enter(frame.repl.name)
        self.markers_open = True

    def pop(self) -> Frame:
        frame = self.stack.pop()
        self.trace.exit(frame.repl.name)
        return frame

    def close_markers(self):
        if not self.markers_open:
            return
        for frame in reversed(self.stack):
            self.trace.exit(frame.repl.name)
        self.markers_open = False

    def open_markers(self):
        for frame in self.stack:
            self.trace.enter(frame.repl.name)
        self.markers_open = True

    # LLM access

    def query(self, prompt) -> str:
        if self.llm_calls >= self.budgets.max_llm_calls:
            raise BudgetExhausted(LLM_CALL_BUDGET)
        self.llm_calls += 1
        self.trace.llm_calls = self.llm_calls
        self.trace.llm_call(prompt.repl_name, prompt.mode)
        return self.llm.complete(prompt, self.params)

    def acquire_block(self, repl: LlmRepl) -> bool:
        """
        Query the LLM for the REPL's next block and parse it.

        Returns:
            True when a parsed block is now suspended on the REPL; False
            after a syntax diagnostic was appended to its history
        """
        completion = self.query(render_prompt(repl, NEXT_BLOCK, version=self.preamble_version))
        block = extract_block(completion)
        continuations = 0
        while (
            not isinstance(block, SyntaxDiagnostic)
            and not is_block_complete(block.text + "\n\n")
            and continuations < self.budgets.max_continuations
        ):
            continuations += 1
            more = self.query(
                render_prompt(repl, NEXT_BLOCK, partial=block.text, version=self.preamble_version)
            )
            block = extract_block(block.text + "\n" + more)

        if isinstance(block, SyntaxDiagnostic):
            repl.append(ERROR, block.message)
            self.trace.error(repl.name, block.message)
            return False

        repl.append(CODE, block.text)
        self.trace.code(repl.name, render_echo(block.text), block.text)
        node = parse_block(block)
        if isinstance(node, SyntaxDiagnostic):
            repl.append(ERROR, node.message)
            self.trace.error(repl.name, node.message)
            return False

        repl.syntax_failures = 0
        repl.ledger.reset()
        repl.suspended_block = (block, node)
        return True

    def note_syntax_failure(self, frame: Frame):
        repl = frame.repl
        repl.syntax_failures += 1
        if repl.syntax_failures < self.budgets.max_syntax_failures:
            return
        logger.warning(f"REPL {repl.name} failed after {repl.syntax_failures} syntax errors")
        repl.syntax_failures = 0
        repl.clear_block()
        if len(self.stack) == 1:
            raise _EpisodeFinished(SYNTAX_FAILURES, f"{repl.name} produced no valid block")
        self.pop()
        caller = self.stack[-1].repl
        caller.ledger.record(frame.call_site.name, frame.call_site.index, None)

    def fail_block(self, repl: LlmRepl, diag: str):
        repl.append(ERROR, diag)
        self.trace.error(repl.name, diag)
        repl.clear_block()

    # Effects

    def perform_action(self, repl: LlmRepl, effect: Effect):
        if self.env_steps >= self.budgets.max_env_steps:
            raise BudgetExhausted(ENV_STEP_BUDGET)
        action = effect.action
        self.close_markers()
        result = self.env.step(action)
        self.env_steps += 1
        self.trace.env_steps = self.env_steps
        repl.ledger.record(ACT, effect.index)
        self.actions.append(action)
        self.trace.action(repl.name, action, result.obs)
        self.latest_obs = result.obs
        self.broadcast_observation(result.obs)
        if result.done:
            raise _EpisodeFinished(ENV_DONE)
        self.open_markers()

    def broadcast_observation(self, obs: str):
        """Append the observation to every REPL on the invocation stack."""
        seen = set()
        for frame in self.stack:
            if frame.repl.name in seen:
                continue
            seen.add(frame.repl.name)
            frame.repl.append(OBSERVATION, obs)

    def deliver_args(self, repl: LlmRepl) -> Any:
        return repl.invocation.as_value()

    def deliver_answer(self, frame: Frame, effect: Effect):
        child = frame.repl
        child.ledger.record(ANSWER, effect.index)
        self.trace.answer(child.name, effect.payload)
        if len(self.stack) == 1:
            self.root_answer = effect.payload
            raise _EpisodeFinished(ROOT_ANSWER)
        self.pop()
        caller = self.stack[-1].repl
        caller.ledger.record(frame.call_site.name, frame.call_site.index, effect.payload)

    def spawn_child(self, effect: Effect, frame: Frame):
        parent = frame.repl
        fname = effect.name

        if self.no_subtask_repls and not effect.bound:
            self.fail_block(parent, repr_name_error(fname))
            return
        if len(self.stack) >= self.budgets.max_spawn_depth:
            self.fail_block(
                parent,
                f"RecursionError('maximum LLM-REPL spawn depth {self.budgets.max_spawn_depth} exceeded')",
            )
            return
        if any(f.repl.name == fname for f in self.stack):
            self.fail_block(parent, f"RecursionError(\"LLM-REPL '{fname}' is already running\")")
            return

        child = self.pool.get(fname)
        if child is None:
            self.trace.name_error(parent.name, fname, cached=False)
            child = self.create_child(parent, fname)
        elif not effect.bound:
            self.trace.name_error(parent.name, fname, cached=True)
        if not child.history:
            child.begin_episode()

        # Bound at once, like a REPL injecting the function into its globals:
        # later uses in the same block resolve on replay.
        if not effect.bound:
            parent.scope.bind(fname, ReplFn(fname))
        child.invocation = Invocation(tuple(effect.args))
        self.push(Frame(child, call_site=effect))

    def create_child(self, parent: LlmRepl, fname: str) -> LlmRepl:
        completion = self.query(
            render_prompt(parent, SUBTASK, fname=fname, version=self.preamble_version)
        )
        task = parse_subtask_description(completion, fname)
        self.trace.subtask_query(parent.name, fname, task)
        child = LlmRepl(name=fname, task=task)
        child.begin_episode()
        self.pool.register(child)
        return child


def repr_name_error(name: str) -> str:
    return f"REPLNameError(\"name '{name}' not defined.\")"


def run_episode(
    env: Environment,
    pool: ReplPool,
    llm: LlmProvider,
    task_id: Any = 0,
    budgets: Optional[Budgets] = None,
    **kwargs,
) -> EpisodeResult:
    """Run one episode; see ``Episode`` for the keyword arguments."""
    return Episode(env, pool, llm, task_id=task_id, budgets=budgets, **kwargs).run()
