"""
Run a batch of REPL-Plan episodes.
"""

import json
import logging

from django.core.management.base import BaseCommand, CommandError

from django_replplan.apps import ReplPlanConfig
from django_replplan.exceptions import ConfigurationError
from django_replplan.harness import RunConfig, run_batch

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    """
    Run one episode per task and report success rate and mean score.

    Usage:
        python manage.py replplan_run --env counter --playbook counter.json
        python manage.py replplan_run --demos webshop_full.json --playbook minishop.json --out runs/
        python manage.py replplan_run --http-base https://api.openai.com/v1 --model gpt-4o-mini

    Exit codes: 0 success, 1 success rate below --assert-sr, 2 configuration error.
    """

    help = "Run REPL-Plan episodes against an environment"

    def add_arguments(self, parser):
        parser.add_argument(
            "--env",
            choices=["minishop", "counter", "transcript"],
            default="minishop",
            help="Environment kind (default: minishop)",
        )
        parser.add_argument("--catalog", help="MiniWebShop catalog file")
        parser.add_argument("--tasks", help="Task file, or the transcript file for --env transcript")
        parser.add_argument("--demos", help="Demo file preloaded into the REPL pool")
        parser.add_argument("--playbook", help="Scripted provider playbook")
        parser.add_argument("--http-base", dest="http_base", help="Chat-completions base URL")
        parser.add_argument("--model", help="Model name for the HTTP provider")
        parser.add_argument("--temperature", type=float, help="Sampling temperature")
        parser.add_argument(
            "--no-subtask-repls",
            dest="no_subtask_repls",
            action="store_true",
            help="Turn child REPL spawns into name errors",
        )
        parser.add_argument(
            "--drop-repls",
            dest="drop_repls",
            help="Comma-separated demo REPL names to leave out of the pool",
        )
        parser.add_argument("--inject-bugs", dest="inject_bugs", help="Bug patch file applied to the demos")
        parser.add_argument("--max-env-steps", dest="max_env_steps", type=int)
        parser.add_argument("--max-llm-calls", dest="max_llm_calls", type=int)
        parser.add_argument("--max-depth", dest="max_depth", type=int)
        parser.add_argument("--step-budget", dest="step_budget", type=int)
        parser.add_argument("--results-per-page", dest="results_per_page", type=int)
        parser.add_argument("--workers", type=int, default=1, help="Parallel episodes (default: 1)")
        parser.add_argument("--limit", type=int, help="Run only the first N tasks")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--out", help="Directory for report.json and episode logs")
        parser.add_argument(
            "--assert-sr",
            dest="assert_sr",
            type=float,
            help="Exit 1 when the success rate is below this fraction",
        )
        parser.add_argument(
            "--format",
            choices=["text", "json"],
            default="text",
            help="Output format (default: text)",
        )

    def handle(self, *args, **options):
        self.verbosity = options["verbosity"]
        replplan_settings = ReplPlanConfig.get_settings()
        try:
            config = RunConfig.from_options(options, replplan_settings)
            report = run_batch(config, replplan_settings)
        except ConfigurationError as error:
            raise CommandError(str(error.detail), returncode=2)

        if options["format"] == "json":
            self.stdout.write(json.dumps(report.as_dict(), indent=2, sort_keys=True))
        else:
            self._output_text(report)

        if config.assert_sr is not None and report.success_rate < config.assert_sr:
            raise CommandError(
                f"success rate {report.success_rate:.3f} is below {config.assert_sr:.3f}",
                returncode=1,
            )

    def _output_text(self, report):
        if self.verbosity >= 2:
            for row in report.sorted_rows():
                status = self.style.SUCCESS("ok") if row.get("success") else self.style.ERROR("fail")
                self.stdout.write(
                    f"  task {row.get('task_index')}: {status} score={row.get('score', 0):.3f} "
                    f"reason={row.get('reason')} steps={row.get('env_steps')} "
                    f"llm_calls={row.get('llm_calls')}"
                )
        style = self.style.SUCCESS if report.success_rate == 1.0 else self.style.WARNING
        self.stdout.write(style(report.summary()))
