"""Standalone `sitebid` console entry point.

Runs the `sitebid` management command without a Django project,
configuring minimal settings when none are configured.

"""
import sys
from typing import List, Optional

import django
from django.conf import settings

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {'format': '%(levelname)s %(name)s: %(message)s'},
    },
    'handlers': {
        'stderr': {'class': 'logging.StreamHandler', 'formatter': 'plain', 'stream': 'ext://sys.stderr'},
    },
    'loggers': {
        'sitebid': {'handlers': ['stderr'], 'level': 'WARNING', 'propagate': False},
    },
}


def configure():
    if not settings.configured:
        settings.configure(
            INSTALLED_APPS=['sitebid'],
            DATABASES={},
            LOGGING=LOGGING,
            USE_TZ=True,
        )

    django.setup()


def main(argv: Optional[List[str]] = None) -> int:
    """Runs a pipeline stage. Returns process exit code.

    :param argv: arguments after the program name

    """
    argv = sys.argv[1:] if argv is None else list(argv)

    configure()

    from sitebid.management.commands.sitebid import Command

    try:
        Command().run_from_argv(['sitebid', 'sitebid'] + argv)

    except SystemExit as e:
        code = e.code

        if code is None:
            return 0

        return code if isinstance(code, int) else 1

    return 0


if __name__ == '__main__':  # pragma: nocover
    sys.exit(main())
