"""
Entry point of the ``specfid`` command.

Parses the command line, configures logging and maps toolkit errors to exit
codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import logging
import sys
from typing import List, Optional

from specfid.cli import build_parser, run
from specfid.config import LOG_FORMAT
from specfid.errors import DataError, SpecFidError, UsageError


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Set up the root logger once; results on stdout stay separate from the log."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one ``specfid`` command.

    :param argv: Arguments without the program name; ``sys.argv[1:]`` when None
    :type argv: list[str] | None
    :return: Process exit code
    :rtype: int
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    configure_logging(getattr(args, "verbose", False), getattr(args, "quiet", False))
    try:
        return run(args)
    except SpecFidError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return DataError.exit_code
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return UsageError.exit_code


if __name__ == "__main__":
    sys.exit(main())
