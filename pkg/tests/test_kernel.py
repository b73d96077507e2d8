"""
Tests for the episode kernel: spawning, answers, broadcast and budgets.
"""

from django.test import SimpleTestCase

from django_replplan import kernel
from django_replplan.environments import CounterEnv
from django_replplan.harness import DEFAULT_CATALOG, DEFAULT_TASKS, FIXTURES_DIR
from django_replplan.kernel import Budgets, run_episode
from django_replplan.minishop import MiniWebShop
from django_replplan.providers import ScriptedProvider
from django_replplan.repl import ERROR, MAIN, OBSERVATION, STDOUT, LlmRepl, ReplPool, load_demos
from django_replplan.serializers import load_catalog, load_playbooks, load_tasks
from django_replplan.trace import SUBTASK_QUERY, TraceRecorder, enter_marker, exit_marker

PLAYBOOKS = FIXTURES_DIR / "playbooks"


def history_texts(repl, kind):
    return [entry.text for entry in repl.history if entry.kind == kind]


class EpisodeTestMixin:
    def run_counter(self, playbook, **kwargs):
        self.pool = ReplPool()
        self.trace = TraceRecorder()
        self.provider = ScriptedProvider(playbook)
        self.env = CounterEnv()
        return run_episode(self.env, self.pool, self.provider, trace=self.trace, **kwargs)


class TestCounterEpisode(EpisodeTestMixin, SimpleTestCase):
    """A parent and one child REPL interleave actions on the counter"""

    def setUp(self):
        self.result = self.run_counter(load_playbooks(PLAYBOOKS / "counter.json"))

    def test_actions_and_result(self):
        self.assertEqual(self.result.actions, ["1", "2", "3", "4"])
        self.assertTrue(self.result.success)
        self.assertEqual(self.result.score, 1.0)
        self.assertEqual(self.result.reason, kernel.ENV_DONE)
        self.assertEqual(self.result.env_steps, 4)
        self.assertEqual(self.result.llm_calls, 3)
        self.assertEqual(self.env.actions, self.result.actions)

    def test_single_subtask_query(self):
        queries = [event for event in self.trace.events if event.event == SUBTASK_QUERY]
        self.assertEqual(len(queries), 1)
        self.assertEqual(queries[0].repl, MAIN)
        self.assertEqual(queries[0].payload["function"], "count_even")
        self.assertEqual(queries[0].payload["task"], "Count only evens to 4.")
        self.assertEqual(self.provider.remaining(), {MAIN: 0, "count_even": 0})

    def test_child_registered_in_pool(self):
        child = self.pool.get("count_even")
        self.assertIsInstance(child, LlmRepl)
        self.assertEqual(child.task, "Count only evens to 4.")

    def test_markers(self):
        main, child = MAIN, "count_even"
        expected = [
            enter_marker(main),
            exit_marker(main),
            enter_marker(main),
            enter_marker(child),
            exit_marker(child),
            exit_marker(main),
            enter_marker(main),
            enter_marker(child),
            exit_marker(child),
            exit_marker(main),
            enter_marker(main),
            enter_marker(child),
            exit_marker(child),
            exit_marker(main),
        ]
        self.assertEqual(self.trace.markers(), expected)

    def test_name_error_line_only_on_first_call(self):
        lines = [line for line in self.trace.lines if line.startswith("Name error")]
        self.assertEqual(lines, ["Name error: count_even. querying LLM for a new func."])

    def test_observations_broadcast_to_stack(self):
        main = self.pool.get(MAIN)
        child = self.pool.get("count_even")
        self.assertEqual(
            history_texts(main, OBSERVATION),
            ["Received 1.", "Received 2.", "Received 3.", "Received 4."],
        )
        self.assertEqual(history_texts(child, OBSERVATION), ["Received 2.", "Received 4."])

    def test_human_log_shows_actions(self):
        log = self.trace.human_log()
        self.assertTrue(log.startswith("Count to 4.\n"))
        for value in ("1", "2", "3", "4"):
            self.assertIn(f"> {value}\n\nReceived {value}.\n", log)


class TestNestedInterleaving(SimpleTestCase):
    """Three levels of REPLs search, inspect and buy on a small shop"""

    def setUp(self):
        env = MiniWebShop(
            load_catalog(FIXTURES_DIR / "table2_catalog.json"),
            load_tasks(FIXTURES_DIR / "table2_tasks.json"),
        )
        self.provider = ScriptedProvider(load_playbooks(PLAYBOOKS / "table2.json"))
        self.pool = ReplPool()
        self.result = run_episode(env, self.pool, self.provider)

    def test_action_sequence(self):
        expected = ["search [scarf]"]
        for page in (("T2SCARF01", "T2SCARF02", "T2SCARF03"), ("T2SCARF04", "T2SCARF05", "T2SCARF06")):
            for item in page:
                expected += [f"click [{item}]", "click [< Back]"]
            expected.append("click [Next >]")
        expected += ["click [T2SCARF05]", "click [Buy Now]"]
        self.assertEqual(self.result.actions, expected)

    def test_purchase_succeeds(self):
        self.assertTrue(self.result.success)
        self.assertEqual(self.result.score, 1.0)
        self.assertEqual(self.result.reason, kernel.ENV_DONE)

    def test_every_completion_used(self):
        self.assertTrue(all(count == 0 for count in self.provider.remaining().values()))
        self.assertEqual(
            sorted(self.pool.names()),
            sorted([MAIN, "filter_search", "filter_page", "parse_items", "item_matches"]),
        )


class TestFreshPoolEpisodes(SimpleTestCase):
    """Episodes on copies of one demo pool do not see each other"""

    def setUp(self):
        self.demo_pool = load_demos(FIXTURES_DIR / "demos" / "webshop_full.json")
        self.playbooks = load_playbooks(PLAYBOOKS / "minishop.json")

    def run_task(self, task_index):
        env = MiniWebShop(load_catalog(DEFAULT_CATALOG), load_tasks(DEFAULT_TASKS))
        trace = TraceRecorder()
        result = run_episode(
            env,
            self.demo_pool.fresh_copy(),
            ScriptedProvider(self.playbooks[task_index]),
            task_id=task_index,
            trace=trace,
        )
        return result, trace

    def test_repeated_task_has_identical_trace(self):
        first, first_trace = self.run_task(0)
        self.run_task(3)
        again, again_trace = self.run_task(0)
        self.assertTrue(first.success)
        self.assertEqual(again.as_dict(), first.as_dict())
        self.assertEqual(again_trace.lines, first_trace.lines)
        self.assertEqual(again_trace.jsonl(), first_trace.jsonl())

    def test_demo_pool_left_untouched(self):
        names = sorted(self.demo_pool.names())
        histories = {name: list(self.demo_pool.get(name).history) for name in names}
        self.run_task(0)
        self.assertEqual(sorted(self.demo_pool.names()), names)
        for name in names:
            self.assertEqual(self.demo_pool.get(name).history, histories[name])


class TestSpawnLimits(EpisodeTestMixin, SimpleTestCase):
    """Depth, recursion and no-subtask mode turn spawns into REPL errors"""

    def test_depth_limit(self):
        result = self.run_counter(
            load_playbooks(PLAYBOOKS / "counter.json"), budgets=Budgets(max_spawn_depth=1)
        )
        self.assertEqual(result.actions, ["1"])
        self.assertEqual(result.reason, kernel.PLAYBOOK_ERROR)
        errors = history_texts(self.pool.get(MAIN), ERROR)
        self.assertEqual(
            errors, ["RecursionError('maximum LLM-REPL spawn depth 1 exceeded')"]
        )
        self.assertNotIn("count_even", self.pool)

    def test_self_recursion(self):
        result = self.run_counter({MAIN: ["f()"], "f": ["Your task is to: Recurse.", "f()"]})
        self.assertEqual(result.reason, kernel.PLAYBOOK_ERROR)
        errors = history_texts(self.pool.get("f"), ERROR)
        self.assertEqual(errors, ["RecursionError(\"LLM-REPL 'f' is already running\")"])
        self.assertIn("Name error: f. querying LLM for a new func.", self.trace.lines)

    def test_no_subtask_mode(self):
        result = self.run_counter(
            load_playbooks(PLAYBOOKS / "counter.json"), no_subtask_repls=True
        )
        self.assertEqual(result.actions, ["1"])
        errors = history_texts(self.pool.get(MAIN), ERROR)
        self.assertEqual(errors, ["REPLNameError(\"name 'count_even' not defined.\")"])
        self.assertNotIn(enter_marker("count_even"), self.trace.markers())
        self.assertFalse(any(e.event == SUBTASK_QUERY for e in self.trace.events))


class TestNameBinding(EpisodeTestMixin, SimpleTestCase):
    """A spawned function is bound in the caller from the spawn onwards"""

    def test_later_use_in_same_block_resolves(self):
        result = self.run_counter(
            {
                MAIN: ["for i in [1]:\n    x = helper(3)\n    print(helper, x)", "answer(x)"],
                "helper": ["Your task is to: Double it.", "answer(get_args() * 2)"],
            }
        )
        self.assertEqual(result.reason, kernel.ROOT_ANSWER)
        self.assertEqual(result.answer, "6")
        self.assertEqual(result.llm_calls, 4)
        main = self.pool.get(MAIN)
        self.assertEqual(history_texts(main, STDOUT), ["<LLMREPL helper> 6\n"])
        self.assertEqual(history_texts(main, ERROR), [])
        self.assertIn("Name error: helper. querying LLM for a new func.", self.trace.lines)

    def test_use_before_spawn_is_name_error(self):
        self.run_counter(
            {MAIN: ["for i in [1]:\n    print(helper)\n    helper(3)", "answer(0)"]}
        )
        errors = history_texts(self.pool.get(MAIN), ERROR)
        self.assertEqual(errors, ["REPLNameError(\"name 'helper' not defined.\")"])
        self.assertNotIn("helper", self.pool)


class TestTermination(EpisodeTestMixin, SimpleTestCase):
    """Each termination reason and its bookkeeping"""

    def test_llm_call_budget(self):
        result = self.run_counter(
            load_playbooks(PLAYBOOKS / "counter.json"), budgets=Budgets(max_llm_calls=2)
        )
        self.assertEqual(result.reason, kernel.LLM_CALL_BUDGET)
        self.assertEqual(result.llm_calls, 2)
        self.assertEqual(result.actions, ["1"])
        self.assertFalse(result.success)

    def test_env_step_budget(self):
        result = self.run_counter(
            load_playbooks(PLAYBOOKS / "counter.json"), budgets=Budgets(max_env_steps=2)
        )
        self.assertEqual(result.reason, kernel.ENV_STEP_BUDGET)
        self.assertEqual(result.actions, ["1", "2"])
        self.assertEqual(result.env_steps, 2)

    def test_syntax_failures(self):
        result = self.run_counter({MAIN: ["x = = 1", "1 = x", "x y"]})
        self.assertEqual(result.reason, kernel.SYNTAX_FAILURES)
        self.assertEqual(result.llm_calls, 3)
        errors = history_texts(self.pool.get(MAIN), ERROR)
        self.assertEqual(len(errors), 3)
        self.assertTrue(all(error.startswith("SyntaxError(") for error in errors))

    def test_syntax_failure_count_resets_after_valid_block(self):
        result = self.run_counter(
            {MAIN: ["x = = 1", "1 = x", "act(1)", "x y", "1 = y", "answer('done.')"]},
        )
        self.assertEqual(result.actions, ["1"])
        self.assertEqual(result.reason, kernel.ROOT_ANSWER)

    def test_root_answer(self):
        result = self.run_counter({MAIN: ["answer('done.')"]})
        self.assertEqual(result.reason, kernel.ROOT_ANSWER)
        self.assertEqual(result.answer, "'done.'")
        self.assertFalse(result.success)
        self.assertEqual(result.score, 0.0)

    def test_playbook_exhausted(self):
        result = self.run_counter({MAIN: ["act(1)"]})
        self.assertEqual(result.reason, kernel.PLAYBOOK_ERROR)
        self.assertIn("exhausted", result.diagnostic)

    def test_runtime_error_is_history(self):
        self.run_counter({MAIN: ["x = {}['k']", "answer(x)", "answer(1)"]})
        errors = history_texts(self.pool.get(MAIN), ERROR)
        self.assertEqual(errors, ["KeyError('k')", "REPLNameError(\"name 'x' not defined.\")"])

    def test_continuation_completes_compound_block(self):
        result = self.run_counter({MAIN: ["for i in range(2):", "    act(i + 1)", "answer(2)"]})
        self.assertEqual(result.actions, ["1", "2"])
        self.assertEqual(result.reason, kernel.ROOT_ANSWER)
        modes = [call["mode"] for call in self.provider.calls]
        self.assertEqual(len(modes), 3)

    def test_episode_end_event(self):
        self.run_counter({MAIN: ["answer(4)"]})
        last = self.trace.events[-1]
        self.assertEqual(last.event, "episode_end")
        self.assertEqual(last.payload["reason"], kernel.ROOT_ANSWER)
        self.assertEqual(last.llm_calls, 1)

    def test_root_reused_from_pool(self):
        pool = ReplPool([LlmRepl(name=MAIN, task="old task")])
        result = run_episode(CounterEnv(), pool, ScriptedProvider({MAIN: ["answer(1)"]}))
        self.assertEqual(result.reason, kernel.ROOT_ANSWER)
        self.assertEqual(pool.get(MAIN).task, "Count to 4.")
