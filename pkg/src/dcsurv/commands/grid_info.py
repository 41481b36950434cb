"""
Report per-node event and censoring counts of linear, logarithmic and quantile grids as CSV.
"""
from clldutils.clilib import PathType

from dcsurv.core import DomainError, Spacing
from dcsurv.cli_util import add_config, add_output, get_schema, write_rows
from dcsurv.data import load_csv
from dcsurv.grids import GridSpec, build_grid, event_histogram


def register(parser):
    parser.add_argument(
        'data',
        help='Dataset as CSV.',
        type=PathType(type='file'),
    )
    add_config(parser)
    add_output(parser)
    parser.add_argument('--num-nodes', type=int, default=10)
    parser.add_argument(
        '--spacing',
        help='Grid spacing to report. Repeat the option for several; all if not given.',
        action='append',
        choices=[s.value for s in Spacing],
        default=None,
    )
    parser.add_argument('--t-max', type=float, default=None)
    parser.add_argument('--t-min', type=float, default=None)


def run(args):
    data = load_csv(args.data, get_schema(args)).labels
    if not len(data):
        raise DomainError('{} contains no records'.format(args.data))
    rows = []
    for spacing in args.spacing or [s.value for s in Spacing]:
        grid = build_grid(
            GridSpec(
                spacing=spacing, num_nodes=args.num_nodes, t_max=args.t_max, t_min=args.t_min),
            data)
        for row in event_histogram(data, grid).iter_rows():
            rows.append([spacing, row[0], repr(row[1])] + list(row[2:]))
        args.log.info('{} grid: {} nodes'.format(spacing, len(grid)))
    write_rows(['spacing', 'node', 'time', 'events', 'censored', 'total'], rows, args.output)
