"""
Functionality shared by the subcommands.
"""
import json
import pathlib

from clldutils import jsonlib
from csvw import dsv
from clldutils.clilib import PathType

from dcsurv.config import RunConfig
from dcsurv.data import DatasetSchema

__all__ = ['add_config', 'add_output', 'get_config', 'get_schema', 'write_json', 'write_rows']

JSON_FORMAT = dict(indent=2, separators=(',', ': '))


def add_config(parser, required=False):
    parser.add_argument(
        '--config' if not required else 'config',
        metavar='CONFIG',
        help='Run configuration (INI file). Stored verbatim next to the outputs.',
        type=PathType(type='file'),
        default=None,
    )


def add_output(parser, help_='Output file. If not given, print to stdout.'):
    parser.add_argument(
        '--output',
        help=help_,
        type=PathType(type='file', must_exist=False),
        default=None,
    )


def get_config(args) -> RunConfig:
    return RunConfig.from_file(args.config) if args.config else RunConfig()


def get_schema(args) -> DatasetSchema:
    return get_config(args).schema


def write_json(obj, path=None):
    if path:
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        jsonlib.dump(obj, path, **JSON_FORMAT)
    else:
        print(json.dumps(obj, **JSON_FORMAT))


def write_rows(header, rows, path=None):
    if path:
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
    with dsv.UnicodeWriter(path) as w:
        w.writerow(header)
        w.writerows(rows)
    if not path:
        print(w.read().decode('utf8'), end='')
