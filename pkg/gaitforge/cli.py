# -*- coding: utf-8 -*-
"""
Command-line front end: ``gaitforge <command> [flags]``.

Flags are generated from the option schemas in ``gaitforge.fields``;
absent flags fall back to the schema defaults. Exit codes: 0 success,
1 validation error, 2 solver failure budget exceeded, 64 bad usage.
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from gaitforge import api, configs, fields
from gaitforge.misc import EXIT_USAGE, UsageError, _fields_to_dict

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)


class _Parser(argparse.ArgumentParser):
    """Argument parser raising UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_options(parser: argparse.ArgumentParser, schema):
    for name, param in _fields_to_dict(schema().fields).items():
        flag = f"--{name.replace('_', '-')}"
        if param["flag"]:
            parser.add_argument(flag, dest=name, action="store_true",
                                default=None, help=param["help"])
            continue
        parser.add_argument(
            flag, dest=name, type=param["type"], default=None,
            required=param["required"], choices=param.get("choices"),
            nargs="+" if param["multiple"] else None, help=param["help"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gaitforge",
                     description="Gait data augmentation by anthropometric "
                                 "scaling and trajectory optimization.")
    commands = parser.add_subparsers(dest="command", metavar="command",
                                     parser_class=_Parser)
    for name, schema in fields.COMMAND_SCHEMAS.items():
        summary = " ".join((schema.__doc__ or "").split())
        _add_options(commands.add_parser(name, help=summary,
                                         description=summary), schema)
    return parser


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse ``argv`` and run the selected command.

    Returns:
        the exit code of the command
    """
    parser = build_parser()
    try:
        namespace = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:     # --help
        return int(e.code or 0)
    if namespace.command is None:
        print(parser.format_usage(), file=sys.stderr)
        return EXIT_USAGE

    args = {k: v for k, v in vars(namespace).items()
            if k != "command" and v is not None}
    return api.COMMANDS[namespace.command](**args)


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
