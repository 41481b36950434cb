"""
Main command line interface of the dcsurv package.

Like the programs of the clld toolbox, `dcsurv` is called with subcommands, each implemented as
a module in `dcsurv.commands` with functions `register(parser)` and `run(args)`.
"""
import sys
import argparse
import pkgutil
import importlib
import contextlib

from clldutils.clilib import ParserError, get_parser_and_subparsers
from clldutils.loglib import Logging

import dcsurv
from dcsurv import commands


def register_commands(subparsers):
    for _, name, _ in pkgutil.iter_modules(commands.__path__):
        mod = importlib.import_module('{}.{}'.format(commands.__name__, name))
        if not (hasattr(mod, 'register') and hasattr(mod, 'run')):  # pragma: no cover
            continue
        parser = subparsers.add_parser(
            name.replace('_', '-'),
            help=(mod.__doc__ or '').strip().splitlines()[0] if mod.__doc__ else None,
            description=mod.__doc__,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        mod.register(parser)
        parser.set_defaults(main=mod.run)


def error_line(e: Exception) -> str:
    return 'error: {}: {}'.format(e.__class__.__name__, e)


def main(args=None, catch_all=False, parsed_args=None, log=None):
    parser, subparsers = get_parser_and_subparsers(dcsurv.__name__)
    parser.add_argument('--version', action='version', version=dcsurv.__version__)
    register_commands(subparsers)

    args = parsed_args or parser.parse_args(args=args)

    if not hasattr(args, 'main'):  # pragma: no cover
        parser.print_help()
        return 1

    with contextlib.ExitStack() as stack:
        if not log:  # pragma: no cover
            stack.enter_context(Logging(args.log, level=args.log_level))
        else:
            args.log = log
        try:
            return args.main(args) or 0
        except KeyboardInterrupt:  # pragma: no cover
            return 0
        except ParserError as e:
            subparsers.choices[args._command].print_usage(sys.stderr)
            print(error_line(e), file=sys.stderr)
            return 1
        except Exception as e:
            if catch_all:
                print(error_line(e))
                return 1
            raise


def console_main():  # pragma: no cover
    sys.exit(main(catch_all=True))


if __name__ == '__main__':  # pragma: no cover
    console_main()
