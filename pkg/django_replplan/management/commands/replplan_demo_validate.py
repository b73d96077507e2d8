"""
Validate a demo file by parsing every code entry.
"""

import json

from django.core.management.base import BaseCommand, CommandError

from django_replplan.exceptions import ConfigurationError
from django_replplan.harness import validate_demos


class Command(BaseCommand):
    """
    Report per-REPL statement counts and syntax diagnostics of a demo file.

    Diagnostics are warnings: demos with deliberate bugs are accepted.

    Usage:
        python manage.py replplan_demo_validate django_replplan/fixtures/demos/webshop_top3.json
        python manage.py replplan_demo_validate demos.json --inject-bugs bugs.json --format=json
    """

    help = "Parse a demo file and report statements and syntax diagnostics"

    def add_arguments(self, parser):
        parser.add_argument("demos", help="Demo file")
        parser.add_argument("--inject-bugs", dest="inject_bugs", help="Bug patch file to apply first")
        parser.add_argument(
            "--format",
            choices=["text", "json"],
            default="text",
            help="Output format (default: text)",
        )

    def handle(self, *args, **options):
        try:
            report = validate_demos(options["demos"], bugs_path=options.get("inject_bugs"))
        except ConfigurationError as error:
            raise CommandError(str(error.detail), returncode=2)

        if options["format"] == "json":
            self.stdout.write(json.dumps(report.as_dict(), indent=2))
            return

        self.stdout.write(f"{len(report.repls)} repls")
        for repl in report.repls:
            self.stdout.write(
                f"  {repl['name']}: {repl['statements']} statements, "
                f"{len(repl['diagnostics'])} diagnostics"
            )
        for warning in report.warnings:
            self.stdout.write(self.style.WARNING(f"warning: {warning}"))
        if not report.warnings:
            self.stdout.write(self.style.SUCCESS("No syntax diagnostics"))
