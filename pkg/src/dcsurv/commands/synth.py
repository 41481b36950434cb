"""
Write a synthetic survival dataset as CSV.
"""
from clldutils.clilib import PathType

from dcsurv.data import DISTRIBUTIONS, CENSORING_MODES, generate_synthetic, write_csv


def register(parser):
    parser.add_argument(
        'output',
        help='Path of the CSV file to write.',
        type=PathType(type='file', must_exist=False),
    )
    parser.add_argument('--n', help='Number of records.', type=int, default=1000)
    parser.add_argument(
        '--censoring',
        help='Censoring rate c in [0, 1).',
        type=float,
        default=0.3,
    )
    parser.add_argument(
        '--distribution',
        help='Distribution of the event times.',
        choices=DISTRIBUTIONS,
        default='uniform',
    )
    parser.add_argument(
        '--censoring-mode',
        help="'uniform' flips event flags independently of time, 'skewed' censors late records "
             "more often, 'competing' draws independent censoring times.",
        choices=CENSORING_MODES,
        default='uniform',
    )
    parser.add_argument('--features', help='Number of features.', type=int, default=1)
    parser.add_argument('--seed', type=int, default=0)


def run(args):
    data = generate_synthetic(
        args.n,
        args.censoring,
        distribution=args.distribution,
        censoring=args.censoring_mode,
        seed=args.seed,
        num_features=args.features,
        log=args.log)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, args.output)
    args.log.info('{} records written to {}'.format(len(data), args.output))
