"""
Tests for the environments and the file loaders that feed them.
"""

import json
import re
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from django_replplan.environments import CounterEnv, TranscriptEnv, instruction_from_observation
from django_replplan.exceptions import ConfigurationError, DemoLoadError, EnvironmentStepError
from django_replplan.harness import FIXTURES_DIR
from django_replplan.minishop import MiniWebShop
from django_replplan.serializers import (
    load_catalog,
    load_demo_file,
    load_playbooks,
    load_tasks,
    load_transcript,
    validate_run_config,
)

CATALOG = [
    {"id": "A1", "title": "Blue Wool Scarf", "price": 20, "attributes": ["wool", "blue"]},
    {
        "id": "A2",
        "title": "Red Wool Scarf",
        "price": 35,
        "attributes": ["wool", "red"],
        "options": {"size": ["small", "large"]},
        "description": "A warm scarf.",
    },
    {"id": "A3", "title": "Red Cotton Hat", "price": 10, "attributes": ["cotton", "red"]},
    {"id": "A4", "title": "Green Wool Hat", "price": 12},
]
TASKS = [
    {
        "instruction": "i want a red wool scarf, and price lower than 30.00 dollars",
        "max_price": 30,
        "required_attributes": ["red", "wool"],
        "required_options": {"size": "large"},
        "target_ids": ["A2"],
    }
]

RESULTS_PAGE_1 = (
    "[Back to Search]\n"
    "Page 1 (Total results: 4)\n"
    "[Next >]\n"
    "[A2]\nRed Wool Scarf\n$35.00\n"
    "[A1]\nBlue Wool Scarf\n$20.00"
)


class TestMiniWebShop(SimpleTestCase):
    """Page rendering, navigation and purchase scoring"""

    def setUp(self):
        self.env = MiniWebShop(CATALOG, TASKS, results_per_page=2)
        self.start = self.env.reset(0)

    def test_start_page(self):
        self.assertEqual(
            self.start,
            "WebShop\nInstruction:\ni want a red wool scarf, and price lower than 30.00 dollars\n[Search]",
        )
        self.assertEqual(
            self.env.task_text(0),
            "Navigate a shopping website to purchase an item matching the following "
            "request: i want a red wool scarf, and price lower than 30.00 dollars",
        )

    def test_search_ranks_by_overlap_then_id(self):
        self.assertEqual(self.env.search("red wool scarf"), ["A2", "A1", "A3", "A4"])
        self.assertEqual(self.env.search("sandals"), [])

    def test_results_pages(self):
        result = self.env.step("search[red wool scarf]")
        self.assertEqual(result.obs, RESULTS_PAGE_1)
        self.assertFalse(result.done)
        page_2 = self.env.step("click [Next >]").obs
        self.assertIn("Page 2 (Total results: 4)\n[< Prev]\n[A3]", page_2)
        self.assertNotIn("[Next >]", page_2)
        self.assertEqual(self.env.step("click[< Prev]").obs, RESULTS_PAGE_1)

    def test_item_page_with_options(self):
        self.env.step("search[red wool scarf]")
        page = self.env.step("click[A2]").obs
        self.assertEqual(
            page.split("\n"),
            [
                "[Back to Search]",
                "[< Prev]",
                "size [small][large]",
                "Red Wool Scarf",
                "Price: $35.00",
                "Rating: N.A.",
                "[Description]",
                "[Features]",
                "[Reviews]",
                "[Attributes]",
                "[Buy Now] (You must select buying variation for size before buying this product)",
                "Selected Buying Variation Options: size: None",
            ],
        )
        page = self.env.step("click[large]").obs
        self.assertIn("\n[Buy Now]\nSelected Buying Variation Options: size: large", page)

    def test_sections(self):
        self.env.step("search[red wool scarf]")
        self.env.step("click[A2]")
        self.assertEqual(
            self.env.step("click[Description]").obs, "[Back to Search]\n[< Prev]\nA warm scarf."
        )
        self.assertIn("Red Wool Scarf", self.env.step("click[< Prev]").obs)
        self.assertEqual(
            self.env.step("click[Attributes]").obs, "[Back to Search]\n[< Prev]\nred\nwool"
        )

    def test_buy_with_option(self):
        self.env.step("search[red wool scarf]")
        self.env.step("click[A2]")
        self.env.step("click[large]")
        result = self.env.step("click[Buy Now]")
        self.assertTrue(result.done)
        self.assertEqual(result.reward, 0.75)
        self.assertEqual(
            result.obs, "Thank you for shopping with us!\nYour score (min 0.0, max 1.0): 0.75"
        )
        self.assertEqual(self.env.score(), 0.75)
        self.assertEqual(self.env.purchased, "A2")

    def test_buy_cheaper_mismatch(self):
        self.env.step("search[red wool scarf]")
        self.env.step("click[A1]")
        self.assertEqual(self.env.step("click[Buy Now]").reward, 0.5)

    def test_step_after_done_raises(self):
        self.env.step("search[red wool scarf]")
        self.env.step("click[A1]")
        self.env.step("click[Buy Now]")
        with self.assertRaises(EnvironmentStepError):
            self.env.step("click[< Prev]")

    def test_invalid_actions_keep_page(self):
        cases = [
            ("click[A1]", "Invalid action: click[A1]\nWebShop"),
            ("jump", "Invalid action: jump\nWebShop"),
        ]
        for action, prefix in cases:
            with self.subTest(action=action):
                self.assertTrue(self.env.step(action).obs.startswith(prefix))

        self.env.step("search[red wool scarf]")
        reasons = [
            ("click[< Prev]", "already on the first page"),
            ("click[A3]", "no such item on this page"),
            ("search[hat]", "search is only available on the search page"),
        ]
        for action, reason in reasons:
            with self.subTest(action=action):
                obs = self.env.step(action).obs
                self.assertEqual(obs, f"Invalid action: {action} ({reason})\n{RESULTS_PAGE_1}")

        self.env.step("click[Next >]")
        obs = self.env.step("click[Next >]").obs
        self.assertTrue(obs.startswith("Invalid action: click[Next >] (already on the last page)\n"))

        self.env.step("click[A3]")
        obs = self.env.step("click[medium]").obs
        self.assertTrue(obs.startswith("Invalid action: click[medium] (no such option on this page)\n"))
        self.assertFalse(self.env.done)

    def test_back_to_search(self):
        self.env.step("search[red wool scarf]")
        self.env.step("click[A2]")
        self.assertEqual(self.env.step("click[Back to Search]").obs, self.start)
        self.assertEqual(self.env.step("search[hat]").obs.split("\n")[1], "Page 1 (Total results: 2)")

    def test_action_log(self):
        self.env.step("search[red wool scarf]")
        self.env.step("jump")
        self.assertEqual(self.env.actions, ["search[red wool scarf]", "jump"])
        self.env.reset(0)
        self.assertEqual(self.env.actions, [])

    def test_fixture_catalog_search(self):
        env = MiniWebShop(
            load_catalog(FIXTURES_DIR / "catalog.json"), load_tasks(FIXTURES_DIR / "tasks.json")
        )
        self.assertEqual(env.task_count(), 10)
        ranked = env.search("noise cancelling cosycost usb microphone")
        self.assertEqual(ranked[:3], ["B0972Q1T8T", "B071H84LTJ", "B072L2D6LY"])

    def fixture_env(self):
        return MiniWebShop(
            load_catalog(FIXTURES_DIR / "catalog.json"), load_tasks(FIXTURES_DIR / "tasks.json")
        )

    def test_same_actions_same_observations(self):
        actions = [
            "search[noise cancelling cosycost usb microphone]",
            "click [Next >]",
            "click [< Prev]",
            "click [B0972Q1T8T]",
            "click [< Prev]",
            "click [Back to Search]",
            "search [wool scarf]",
        ]

        def walk(env):
            seen = [env.reset(2)]
            for action in actions:
                result = env.step(action)
                seen.append((result.obs, result.reward, result.done))
            return seen

        env = self.fixture_env()
        first = walk(env)
        self.assertEqual(walk(self.fixture_env()), first)
        self.assertEqual(walk(env), first)

    def test_pages_partition_ranked_results(self):
        env = self.fixture_env()
        env.reset(0)
        query = "noise cancelling cosycost usb microphone"
        ranked = env.search(query)
        self.assertGreater(len(ranked), env.results_per_page)

        page = env.step(f"search[{query}]").obs
        pages = []
        while True:
            ids = re.findall(r"^\[([A-Z0-9]+)\]$", page, flags=re.MULTILINE)
            self.assertEqual(ids, env.page_ids())
            self.assertLessEqual(len(ids), env.results_per_page)
            pages.append(ids)
            if "[Next >]" not in page:
                break
            page = env.step("click [Next >]").obs

        self.assertEqual(len(pages), env.last_page())
        self.assertEqual([item for ids in pages for item in ids], ranked)
        self.assertEqual(len(set(ranked)), len(ranked))


class TestCounterEnv(SimpleTestCase):
    def test_counts_to_target(self):
        env = CounterEnv()
        self.assertEqual(env.reset(), "Count to 4.")
        for value in range(1, 4):
            result = env.step(str(value))
            self.assertEqual(result.obs, f"Received {value}.")
            self.assertFalse(result.done)
        result = env.step("4")
        self.assertTrue(result.done)
        self.assertEqual(result.reward, 1.0)

    def test_wrong_order_scores_zero(self):
        env = CounterEnv(target=2)
        env.reset()
        env.step("2")
        result = env.step("1")
        self.assertTrue(result.done)
        self.assertEqual(result.reward, 0.0)

    def test_non_integer_action(self):
        env = CounterEnv()
        env.reset()
        result = env.step("x")
        self.assertEqual(result.obs, "Invalid action: x")
        self.assertTrue(result.done)
        self.assertEqual(env.score(), 0.0)


class TestTranscriptEnv(SimpleTestCase):
    """Recorded transcripts replay action by action"""

    def setUp(self):
        self.steps = load_transcript(FIXTURES_DIR / "bundles" / "webshop_microphone" / "transcript.json")
        self.env = TranscriptEnv(self.steps)

    def test_task_text_from_instruction(self):
        self.assertEqual(
            self.env.task_text(),
            "Navigate a shopping website to purchase an item matching the following request: "
            "i want a noise cancelling cosycost usb microphone, and price lower than 70.00 dollars",
        )

    def test_full_replay_succeeds(self):
        self.assertEqual(self.env.reset(), self.steps[0]["obs"])
        for number, step in enumerate(self.steps):
            result = self.env.step(step["action"])
            if number + 1 < len(self.steps):
                self.assertEqual(result.obs, self.steps[number + 1]["obs"])
        self.assertTrue(result.done)
        self.assertEqual(self.env.score(), 1.0)

    def test_divergence(self):
        self.env.reset()
        result = self.env.step("search[microphone]")
        self.assertTrue(result.done)
        self.assertEqual(result.reward, 0.0)
        self.assertEqual(
            self.env.divergence,
            "expected search[noise cancelling cosycost usb microphone], got search[microphone]",
        )

    def test_explicit_task(self):
        self.assertEqual(TranscriptEnv([], task="Replay.").task_text(), "Replay.")
        self.assertEqual(TranscriptEnv([]).task_text(), "Follow the recorded transcript.")

    def test_instruction_on_same_line(self):
        self.assertEqual(instruction_from_observation("WebShop\nInstruction: buy a hat"), "buy a hat")


class TestFileLoaders(SimpleTestCase):
    """Malformed input files fail with the offending entry named"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, name, data):
        path = Path(self.tmp.name) / name
        path.write_text(data if isinstance(data, str) else json.dumps(data), encoding="utf-8")
        return path

    def test_fixture_files_load(self):
        self.assertEqual(len(load_catalog(FIXTURES_DIR / "catalog.json")), 40)
        self.assertEqual(len(load_tasks(FIXTURES_DIR / "tasks.json")), 10)
        playbook = load_playbooks(FIXTURES_DIR / "playbooks" / "counter.json")
        self.assertEqual(
            playbook["_main"][0],
            {"expect_prefix": None, "completion": "for i in range(2):\n    act(i*2+1)\n    count_even()"},
        )

    def test_invalid_json(self):
        with self.assertRaises(ConfigurationError) as raised:
            load_catalog(self.write("catalog.json", "[{"))
        self.assertIn("is not valid JSON", str(raised.exception.detail))

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError) as raised:
            load_tasks(Path(self.tmp.name) / "absent.json")
        self.assertIn("task file not found", str(raised.exception.detail))

    def test_catalog_entry_named(self):
        path = self.write("catalog.json", [CATALOG[0], {"id": "A2", "title": "Hat", "price": -1}])
        with self.assertRaises(ConfigurationError) as raised:
            load_catalog(path)
        self.assertIn("[1].price: price must be positive", str(raised.exception.detail))

    def test_duplicate_catalog_ids(self):
        with self.assertRaises(ConfigurationError) as raised:
            load_catalog(self.write("catalog.json", [CATALOG[0], CATALOG[0]]))
        self.assertIn("duplicate item ids: A1", str(raised.exception.detail))

    def test_task_without_targets(self):
        task = dict(TASKS[0], target_ids=[])
        with self.assertRaises(ConfigurationError) as raised:
            load_tasks(self.write("tasks.json", [task]))
        self.assertIn("[0].target_ids", str(raised.exception.detail))

    def test_playbook_turn_forms(self):
        path = self.write(
            "playbook.json",
            {"_main": ["act(1)", {"completion": "act(2)", "expect_prefix": "Your task"}]},
        )
        self.assertEqual(
            load_playbooks(path)["_main"],
            [
                {"expect_prefix": None, "completion": "act(1)"},
                {"expect_prefix": "Your task", "completion": "act(2)"},
            ],
        )

    def test_playbook_list_per_task(self):
        path = self.write("playbooks.json", [{"_main": ["act(1)"]}, {"_main": ["act(2)"]}])
        playbooks = load_playbooks(path)
        self.assertEqual(len(playbooks), 2)
        self.assertEqual(playbooks[1]["_main"][0]["completion"], "act(2)")

    def test_playbook_bad_repl_name(self):
        with self.assertRaises(ConfigurationError) as raised:
            load_playbooks(self.write("playbook.json", {"not a name": ["act(1)"]}))
        self.assertIn("invalid REPL name 'not a name'", str(raised.exception.detail))

    def test_demo_file_errors(self):
        path = self.write(
            "demos.json",
            {"repls": [{"name": "f", "task": "t", "entries": [{"kind": "prose", "text": "x"}]}]},
        )
        with self.assertRaises(DemoLoadError) as raised:
            load_demo_file(path)
        self.assertEqual(raised.exception.entry, "repls[0].entries[0].kind")

    def test_duplicate_demo_repl(self):
        repl = {"name": "f", "task": "t", "entries": []}
        with self.assertRaises(DemoLoadError):
            load_demo_file(self.write("demos.json", {"repls": [repl, repl]}))

    def test_empty_demo_file(self):
        self.assertEqual(load_demo_file(self.write("demos.json", {})), [])

    def test_run_config_rejects_two_providers(self):
        with self.assertRaises(ConfigurationError) as raised:
            validate_run_config(
                {
                    "playbook": str(FIXTURES_DIR / "playbooks" / "counter.json"),
                    "http_base": "http://llm.test/v1",
                    "max_env_steps": 50,
                    "max_llm_calls": 100,
                    "max_depth": 16,
                    "step_budget": 100000,
                    "results_per_page": 3,
                }
            )
        self.assertIn("choose exactly one provider", str(raised.exception.detail))
