"""
Replay a recorded transcript bundle and compare the trace log.
"""

import json

from django.core.management.base import BaseCommand, CommandError

from django_replplan.exceptions import ConfigurationError, ReplayDivergenceError
from django_replplan.harness import bundle_paths, replay_bundle


class Command(BaseCommand):
    """
    Replay a transcript with its demos and playbook.

    Usage:
        python manage.py replplan_replay --bundle django_replplan/fixtures/bundles/webshop_microphone
        python manage.py replplan_replay --transcript t.json --demos d.json --playbook p.json --expected-log r.log
    """

    help = "Replay a recorded transcript and check it against the recorded log"

    def add_arguments(self, parser):
        parser.add_argument("--bundle", help="Directory holding transcript, demos, playbook and log")
        parser.add_argument("--transcript")
        parser.add_argument("--demos")
        parser.add_argument("--playbook")
        parser.add_argument("--expected-log", dest="expected_log")
        parser.add_argument("--out", help="Directory for the replay log and events")
        parser.add_argument(
            "--format",
            choices=["text", "json"],
            default="text",
            help="Output format (default: text)",
        )

    def handle(self, *args, **options):
        try:
            paths = self._paths(options)
            report = replay_bundle(
                paths["transcript"],
                paths["demos"],
                paths["playbook"],
                expected_log=paths["expected_log"],
                out=options.get("out"),
            )
        except ConfigurationError as error:
            raise CommandError(str(error.detail), returncode=2)

        if options["format"] == "json":
            self.stdout.write(json.dumps(report.as_dict(), indent=2))
        elif report.passed:
            self.stdout.write(
                self.style.SUCCESS(f"Replay passed: {len(report.actions)} actions, reward {report.reward:g}")
            )

        try:
            report.raise_for_divergence()
        except ReplayDivergenceError as error:
            raise CommandError(str(error.detail), returncode=1)

    def _paths(self, options):
        if options.get("bundle"):
            paths = bundle_paths(options["bundle"])
            for key in ("transcript", "demos", "playbook", "expected_log"):
                if options.get(key):
                    paths[key] = options[key]
            if not paths["demos"].exists():
                paths["demos"] = None
            return paths
        missing = [flag for flag in ("transcript", "playbook") if not options.get(flag)]
        if missing:
            raise ConfigurationError(
                "replay needs --bundle or " + " and ".join(f"--{flag}" for flag in missing)
            )
        return {
            "transcript": options["transcript"],
            "demos": options.get("demos"),
            "playbook": options["playbook"],
            "expected_log": options.get("expected_log"),
        }
