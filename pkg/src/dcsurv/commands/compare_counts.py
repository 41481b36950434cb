"""
Count event-to-event and event-to-censoring comparisons.

For a CSV dataset, report |A|, |B|, the observed factor F = |B|/|A| and its estimate 1/(1-c) as
JSON. With --sweep, draw synthetic datasets at the given censoring rates and report observed and
estimated comparisons (normalized by n^2) as CSV.
"""
from clldutils.clilib import PathType, ParserError

from dcsurv.cli_util import add_config, add_output, get_schema, write_json, write_rows
from dcsurv.data import DISTRIBUTIONS, CENSORING_MODES, load_csv
from dcsurv.losses import SweepPoint, comparison_factor, censoring_sweep


def rates(s):
    return [float(v) for v in s.split(',') if v.strip()]


def register(parser):
    parser.add_argument(
        'data',
        nargs='?',
        help='Dataset as CSV.',
        type=PathType(type='file'),
        default=None,
    )
    add_config(parser)
    add_output(parser)
    parser.add_argument(
        '--sweep',
        help='Comma-separated censoring rates for a synthetic sweep, e.g. 0.1,0.2,0.3',
        type=rates,
        default=None,
    )
    parser.add_argument('--n', help='Records per synthetic dataset.', type=int, default=10000)
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument(
        '--censoring-mode', choices=CENSORING_MODES, default='uniform')
    parser.add_argument(
        '--distribution', choices=DISTRIBUTIONS, default='uniform')


def run(args):
    if bool(args.data) == bool(args.sweep):
        raise ParserError('specify either a dataset or --sweep')
    if args.sweep:
        points = censoring_sweep(
            args.sweep,
            n=args.n,
            seed=args.seed,
            censoring=args.censoring_mode,
            distribution=args.distribution,
            log=args.log)
        write_rows(
            SweepPoint.header(),
            [['' if v is None else repr(float(v)) for v in p.as_row()] for p in points],
            args.output)
        return
    counts = comparison_factor(load_csv(args.data, get_schema(args)).labels)
    write_json(counts.to_dict(), args.output)
