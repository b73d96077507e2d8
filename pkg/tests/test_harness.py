"""
Tests for the batch runner, replay, demo validation and their commands.
"""

import json
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from io import StringIO
from pathlib import Path
from unittest.mock import patch

from django.apps import apps
from django.core.exceptions import ImproperlyConfigured
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from django_replplan import cli
from django_replplan.apps import ReplPlanConfig
from django_replplan.exceptions import (
    ConfigurationError,
    ErrorHandler,
    ReplayDivergenceError,
    handle_episode_error,
)
from django_replplan.harness import (
    DEFAULT_CATALOG,
    FIXTURES_DIR,
    RunConfig,
    replay_bundle,
    run_batch,
    validate_demos,
)
from django_replplan.metrics import MetricsReport, performance_monitor, performance_timer
from django_replplan.providers import HttpProvider
from django_replplan.repl import MAIN
from django_replplan.trace import compare_logs, enter_marker, exit_marker

PLAYBOOKS = FIXTURES_DIR / "playbooks"
DEMOS = FIXTURES_DIR / "demos"
BUNDLE = FIXTURES_DIR / "bundles" / "webshop_microphone"


def run_command(*args):
    out = StringIO()
    call_command("replplan_run", *args, stdout=out)
    return out.getvalue()


class OutputDirMixin:
    def setUp(self):
        super().setUp()
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.out_dir = Path(tmp.name)


class TestRunCommand(OutputDirMixin, SimpleTestCase):
    """replplan_run over the bundled fixtures"""

    def test_counter(self):
        output = run_command("--env", "counter", "--playbook", str(PLAYBOOKS / "counter.json"))
        self.assertIn(
            "Episodes: 1  SR: 100.0%  Score: 100.0  Env steps: 4.0  LLM calls: 3.0", output
        )

    def test_minishop_with_full_demos(self):
        output = run_command(
            "--demos",
            str(DEMOS / "webshop_full.json"),
            "--playbook",
            str(PLAYBOOKS / "minishop.json"),
            "--format",
            "json",
        )
        report = json.loads(output)
        self.assertEqual(report["episodes"], 10)
        self.assertEqual(report["success_rate"], 1.0)
        self.assertEqual([row["task_index"] for row in report["rows"]], list(range(10)))

    def test_parallel_workers_match_sequential(self):
        args = ["--playbook", str(PLAYBOOKS / "minishop.json"), "--format", "json", "--limit", "4"]
        sequential = json.loads(run_command(*args))
        parallel = json.loads(run_command(*args, "--workers", "3"))
        for key in ("success_rate", "mean_score", "mean_env_steps", "mean_llm_calls"):
            self.assertEqual(sequential[key], parallel[key])

    def test_transcript_env(self):
        output = run_command(
            "--env",
            "transcript",
            "--tasks",
            str(BUNDLE / "transcript.json"),
            "--demos",
            str(BUNDLE / "demos.json"),
            "--playbook",
            str(BUNDLE / "playbook.json"),
        )
        self.assertIn("Episodes: 1  SR: 100.0%", output)

    def test_no_subtask_repls_writes_outputs(self):
        run_command(
            "--no-subtask-repls",
            "--playbook",
            str(PLAYBOOKS / "minishop_no_subtask.json"),
            "--out",
            str(self.out_dir),
        )
        report = json.loads((self.out_dir / "report.json").read_text())
        self.assertEqual(report["episodes"], 10)
        self.assertEqual(report["success_rate"], 1.0)
        self.assertEqual(report["env"], "minishop")
        self.assertTrue((self.out_dir / "episode-9.log").exists())
        events = [
            json.loads(line)
            for line in (self.out_dir / "episode-0.jsonl").read_text().splitlines()
        ]
        self.assertEqual(events[-1]["event"], "episode_end")
        self.assertNotIn("subtask_query", {event["event"] for event in events})
        for index in range(10):
            log = (self.out_dir / f"episode-{index}.log").read_text()
            markers = {line for line in log.splitlines() if line.startswith("##### ")}
            self.assertEqual(markers, {enter_marker(MAIN), exit_marker(MAIN)})

    def test_dropped_demo_is_described_again(self):
        output = run_command(
            "--demos",
            str(DEMOS / "webshop_full.json"),
            "--drop-repls",
            "check_requirements",
            "--playbook",
            str(PLAYBOOKS / "drop_check_requirements.json"),
            "--limit",
            "1",
            "--out",
            str(self.out_dir),
        )
        self.assertIn("SR: 100.0%", output)
        queries = [
            json.loads(line)
            for line in (self.out_dir / "episode-0.jsonl").read_text().splitlines()
            if '"subtask_query"' in line
        ]
        self.assertEqual([event["payload"]["function"] for event in queries], ["check_requirements"])

    def test_injected_bugs_are_corrected(self):
        output = run_command(
            "--demos",
            str(DEMOS / "webshop_full.json"),
            "--inject-bugs",
            str(FIXTURES_DIR / "bugs" / "a6_bugs.json"),
            "--playbook",
            str(PLAYBOOKS / "buggy_correction.json"),
            "--limit",
            "1",
            "--out",
            str(self.out_dir),
        )
        self.assertIn("SR: 100.0%", output)
        log = (self.out_dir / "episode-0.log").read_text()
        self.assertIn("SyntaxError('invalid syntax'", log)

    def test_assert_sr_failure(self):
        with self.assertRaises(CommandError) as raised:
            run_command(
                "--env",
                "counter",
                "--playbook",
                str(PLAYBOOKS / "counter.json"),
                "--max-llm-calls",
                "2",
                "--assert-sr",
                "0.5",
            )
        self.assertEqual(raised.exception.returncode, 1)

    def test_configuration_errors(self):
        cases = [
            ["--playbook", str(PLAYBOOKS / "counter.json"), "--http-base", "http://llm.test/v1"],
            ["--env", "counter", "--playbook", str(self.out_dir / "absent.json")],
            ["--env", "transcript", "--playbook", str(PLAYBOOKS / "counter.json")],
            ["--demos", str(DEMOS / "webshop_full.json"), "--drop-repls", "no_such_repl",
             "--playbook", str(PLAYBOOKS / "minishop.json")],
        ]
        for args in cases:
            with self.subTest(args=args):
                with self.assertRaises(CommandError) as raised:
                    run_command(*args)
                self.assertEqual(raised.exception.returncode, 2)

    def test_verbose_rows(self):
        out = StringIO()
        call_command(
            "replplan_run",
            "--env",
            "counter",
            "--playbook",
            str(PLAYBOOKS / "counter.json"),
            verbosity=2,
            stdout=out,
        )
        self.assertIn("task 0:", out.getvalue())
        self.assertIn("reason=env_done", out.getvalue())


class TestReproducibleRuns(SimpleTestCase):
    """Scripted batches are offline and write identical outputs every time"""

    def run_into_new_dir(self, *args):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        run_command(*args, "--out", tmp.name)
        return {path.name: path.read_bytes() for path in sorted(Path(tmp.name).iterdir())}

    def test_identical_invocations_write_identical_files(self):
        args = [
            "--demos",
            str(DEMOS / "webshop_full.json"),
            "--playbook",
            str(PLAYBOOKS / "minishop.json"),
        ]
        first = self.run_into_new_dir(*args)
        second = self.run_into_new_dir(*args)
        self.assertIn("report.json", first)
        self.assertIn("episode-9.jsonl", first)
        self.assertEqual(sorted(first), sorted(second))
        for name, content in first.items():
            with self.subTest(file=name):
                self.assertEqual(content, second[name])

    def test_counter_outputs_repeat(self):
        args = ["--env", "counter", "--playbook", str(PLAYBOOKS / "counter.json")]
        self.assertEqual(self.run_into_new_dir(*args), self.run_into_new_dir(*args))

    @patch("django_replplan.providers.openai.OpenAI", side_effect=AssertionError("client built"))
    @patch.object(HttpProvider, "complete", side_effect=AssertionError("network request made"))
    def test_playbook_batch_needs_no_network(self, complete, client):
        output = run_command(
            "--demos",
            str(DEMOS / "webshop_full.json"),
            "--playbook",
            str(PLAYBOOKS / "minishop.json"),
            "--workers",
            "2",
        )
        self.assertIn("Episodes: 10  SR: 100.0%", output)
        client.assert_not_called()
        complete.assert_not_called()


class TestReplayCommand(OutputDirMixin, SimpleTestCase):
    """replplan_replay against the recorded microphone bundle"""

    def test_bundle_passes(self):
        out = StringIO()
        call_command("replplan_replay", "--bundle", str(BUNDLE), stdout=out)
        self.assertIn("Replay passed: 9 actions, reward 1", out.getvalue())

    def test_explicit_files_and_out(self):
        report = replay_bundle(
            BUNDLE / "transcript.json",
            BUNDLE / "demos.json",
            BUNDLE / "playbook.json",
            expected_log=BUNDLE / "recorded.log",
            out=self.out_dir,
        )
        self.assertTrue(report.passed)
        self.assertEqual(report.reward, 1.0)
        self.assertEqual(report.actions[0], "search[noise cancelling cosycost usb microphone]")
        self.assertEqual(report.actions[-1], "click[Buy Now]")
        written = (self.out_dir / "replay-0.log").read_text()
        self.assertIsNone(compare_logs(written, (BUNDLE / "recorded.log").read_text()))

    def test_log_divergence(self):
        expected = self.out_dir / "expected.log"
        expected.write_text("WebShop\nSomething else\n")
        with self.assertRaises(CommandError) as raised:
            call_command(
                "replplan_replay",
                "--bundle",
                str(BUNDLE),
                "--expected-log",
                str(expected),
                stdout=StringIO(),
            )
        self.assertEqual(raised.exception.returncode, 1)
        self.assertIn("Replay diverged: line 2", str(raised.exception))

    def test_playbook_divergence(self):
        playbook = self.out_dir / "playbook.json"
        playbook.write_text(json.dumps({"_main": ["act('search[microphone]')"]}))
        report = replay_bundle(BUNDLE / "transcript.json", None, playbook)
        self.assertFalse(report.passed)
        self.assertEqual(report.reward, 0.0)
        self.assertTrue(
            report.divergence.startswith(
                "expected search[noise cancelling cosycost usb microphone], got search[microphone]"
            )
        )
        with self.assertRaises(ReplayDivergenceError) as raised:
            report.raise_for_divergence()
        self.assertEqual(raised.exception.status_code, 409)
        self.assertEqual(raised.exception.context["reward"], 0.0)

    def test_json_format(self):
        out = StringIO()
        call_command("replplan_replay", "--bundle", str(BUNDLE), "--format", "json", stdout=out)
        payload = json.loads(out.getvalue())
        self.assertTrue(payload["passed"])
        self.assertEqual(payload["reason"], "env_done")

    def test_missing_arguments(self):
        with self.assertRaises(CommandError) as raised:
            call_command("replplan_replay", "--transcript", str(BUNDLE / "transcript.json"))
        self.assertEqual(raised.exception.returncode, 2)
        self.assertIn("--playbook", str(raised.exception))

    def test_missing_bundle(self):
        with self.assertRaises(CommandError) as raised:
            call_command("replplan_replay", "--bundle", str(self.out_dir / "absent"))
        self.assertEqual(raised.exception.returncode, 2)


class TestDemoValidateCommand(SimpleTestCase):
    """replplan_demo_validate reports diagnostics as warnings"""

    def test_clean_demo_file(self):
        out = StringIO()
        call_command("replplan_demo_validate", str(DEMOS / "webshop_top3.json"), stdout=out)
        output = out.getvalue()
        self.assertIn("5 repls", output)
        self.assertIn("No syntax diagnostics", output)

    def test_injected_bugs_reported(self):
        out = StringIO()
        call_command(
            "replplan_demo_validate",
            str(DEMOS / "webshop_full.json"),
            "--inject-bugs",
            str(FIXTURES_DIR / "bugs" / "a6_bugs.json"),
            "--format",
            "json",
            stdout=out,
        )
        payload = json.loads(out.getvalue())
        self.assertEqual(payload["repl_count"], 8)
        self.assertEqual(payload["diagnostic_count"], 2)
        self.assertEqual(len(payload["warnings"]), 2)
        self.assertTrue(payload["warnings"][0].startswith("_main[0]: SyntaxError('invalid syntax'"))
        self.assertIn("unterminated string literal", payload["warnings"][1])

    def test_report_counts(self):
        report = validate_demos(DEMOS / "webshop_top3.json")
        self.assertEqual(report.diagnostics, 0)
        self.assertTrue(all(repl["statements"] > 0 for repl in report.repls))

    def test_missing_file(self):
        with self.assertRaises(CommandError) as raised:
            call_command("replplan_demo_validate", "absent.json")
        self.assertEqual(raised.exception.returncode, 2)


class TestConsoleScript(SimpleTestCase):
    """Exit codes of the replplan entry point"""

    def main(self, *argv):
        stdout, stderr = StringIO(), StringIO()
        with redirect_stdout(stdout), redirect_stderr(stderr):
            code = cli.main(list(argv))
        return code, stdout.getvalue(), stderr.getvalue()

    def test_usage(self):
        code, stdout, _ = self.main()
        self.assertEqual(code, 2)
        self.assertIn("usage: replplan", stdout)
        self.assertEqual(self.main("-h")[0], 0)

    def test_unknown_command(self):
        code, _, stderr = self.main("train")
        self.assertEqual(code, 2)
        self.assertIn("unknown command 'train'", stderr)

    def test_run(self):
        code, stdout, _ = self.main("run", "--env", "counter", "--playbook", str(PLAYBOOKS / "counter.json"))
        self.assertEqual(code, 0)
        self.assertIn("SR: 100.0%", stdout)

    def test_bad_flag_value(self):
        self.assertEqual(self.main("run", "--env", "forest")[0], 2)

    def test_command_returncode(self):
        code, _, stderr = self.main("replay", "--transcript", str(BUNDLE / "transcript.json"))
        self.assertEqual(code, 2)
        self.assertIn("CommandError:", stderr)


class TestRunConfig(SimpleTestCase):
    def setUp(self):
        self.settings = ReplPlanConfig.get_settings()

    def test_defaults_from_settings(self):
        config = RunConfig.from_options({}, self.settings)
        self.assertEqual(config.env, "minishop")
        self.assertEqual(config.catalog, str(DEFAULT_CATALOG))
        self.assertEqual(config.max_llm_calls, 100)
        self.assertEqual(config.budgets(self.settings).max_spawn_depth, 16)

    def test_option_overrides(self):
        config = RunConfig.from_options(
            {"env": "counter", "max_depth": 2, "drop_repls": "a, b", "seed": 5, "verbosity": 1},
            self.settings,
        )
        self.assertEqual(config.drop_repls, ["a", "b"])
        self.assertEqual(config.budgets(self.settings).max_spawn_depth, 2)
        self.assertEqual(config.params(self.settings).seed, 5)
        self.assertIsNone(config.catalog)

    def test_invalid_budget(self):
        with self.assertRaises(ConfigurationError) as raised:
            RunConfig.from_options({"max_env_steps": 0}, self.settings)
        self.assertIn("max_env_steps", str(raised.exception.detail))

    def test_playbook_list_too_short(self):
        with tempfile.TemporaryDirectory() as tmp:
            playbook = Path(tmp) / "playbooks.json"
            playbook.write_text(json.dumps([{"_main": ["act(1)"]}]))
            config = RunConfig.from_options({"playbook": str(playbook)}, self.settings)
            with self.assertRaises(ConfigurationError):
                run_batch(config, self.settings)


class TestMetricsReport(SimpleTestCase):
    def setUp(self):
        self.report = MetricsReport()
        self.report.add({"task_index": 1, "success": True, "score": 1.0, "env_steps": 4, "llm_calls": 3})
        self.report.add({"task_index": 0, "success": False, "score": 0.5, "env_steps": 2, "llm_calls": 1})

    def test_aggregates(self):
        self.assertEqual(self.report.success_rate, 0.5)
        self.assertEqual(self.report.mean_score, 0.75)
        self.assertEqual(
            self.report.summary(),
            "Episodes: 2  SR: 50.0%  Score: 75.0  Env steps: 3.0  LLM calls: 2.0",
        )
        self.assertEqual([row["task_index"] for row in self.report.as_dict()["rows"]], [0, 1])

    def test_empty_report(self):
        self.assertEqual(MetricsReport().success_rate, 0.0)
        self.assertEqual(MetricsReport().mean_score, 0.0)

    def test_performance_timer_records_duration(self):
        with performance_timer("unit", task_index=7):
            pass
        latest = performance_monitor.get_metrics("duration_ms")[-1]
        self.assertEqual(latest["tags"], {"operation": "unit", "task_index": "7"})


class TestAppSettings(SimpleTestCase):
    """REPL_PLAN defaults, overrides and validation"""

    def test_defaults_merged(self):
        with override_settings(REPL_PLAN={"MAX_LLM_CALLS": 7}):
            replplan_settings = ReplPlanConfig.get_settings()
        self.assertEqual(replplan_settings["MAX_LLM_CALLS"], 7)
        self.assertEqual(replplan_settings["MAX_ENV_STEPS"], 50)
        self.assertEqual(replplan_settings["LLM_STOP"], ["\n>>>"])

    def test_validation(self):
        config = apps.get_app_config("django_replplan")
        invalid = [
            {"MAX_LLM_CALLS": 0},
            {"STEP_BUDGET": "many"},
            {"LLM_TEMPERATURE": -1},
            {"RETRY_BACKOFF_FACTOR": 0.5},
            {"PREAMBLE_VERSION": "v9"},
        ]
        for overrides in invalid:
            with self.subTest(overrides=overrides):
                with override_settings(REPL_PLAN=overrides):
                    with self.assertRaises(ImproperlyConfigured):
                        config._validate_configuration()
        with override_settings(REPL_PLAN={}):
            config._validate_configuration()


class TestErrorHandling(SimpleTestCase):
    def test_error_handler_suppresses(self):
        with ErrorHandler("unit", suppress=True) as handler:
            raise ValueError("boom")
        self.assertIsInstance(handler.error, ValueError)

    def test_error_handler_reraises(self):
        with self.assertRaises(KeyError):
            with ErrorHandler("unit"):
                raise KeyError("k")

    def test_episode_error_row(self):
        row = handle_episode_error(3, RuntimeError("lost"))
        self.assertEqual(row["task_index"], 3)
        self.assertFalse(row["success"])
        self.assertEqual(row["diagnostic"], "RuntimeError: lost")
