"""
``replplan`` console script.

Maps ``replplan {run,replay,demo-validate} ...`` onto the management
commands, configuring a minimal settings module when no Django project is
active.
"""

import os
import sys
from typing import List, Optional

import django
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError

SUBCOMMANDS = {
    "run": "replplan_run",
    "replay": "replplan_replay",
    "demo-validate": "replplan_demo_validate",
}

USAGE = "usage: replplan {run,replay,demo-validate} [options]"


def configure():
    if settings.configured or os.environ.get("DJANGO_SETTINGS_MODULE"):
        django.setup()
        return
    settings.configure(
        DEBUG=False,
        SECRET_KEY="replplan-cli",
        INSTALLED_APPS=["rest_framework", "django_replplan"],
        DATABASES={},
        USE_TZ=True,
        LOGGING_CONFIG=None,
        REPL_PLAN={},
    )
    django.setup()


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE)
        print("\ncommands:")
        for name, command in SUBCOMMANDS.items():
            print(f"  {name:<14} see 'replplan {name} --help' ({command})")
        return 0 if argv else 2
    name, rest = argv[0], argv[1:]
    if name not in SUBCOMMANDS:
        print(f"{USAGE}\nreplplan: unknown command '{name}'", file=sys.stderr)
        return 2

    configure()
    try:
        call_command(SUBCOMMANDS[name], *rest)
    except CommandError as error:
        print(f"CommandError: {error}", file=sys.stderr)
        if str(error).startswith("Error: "):
            return 2
        return error.returncode
    return 0


if __name__ == "__main__":
    sys.exit(main())
