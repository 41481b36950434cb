"""
Evaluate a trained model on a test CSV with bootstrapped C-index-td, CDAUC and DDC.

The report is written as JSON. Metric settings are read from --config, if given.
"""
import numpy as np
from clldutils.clilib import PathType

from dcsurv.core import DomainError, SurvivalCurve, interpolate_curve
from dcsurv.cli_util import add_config, add_output, get_config, write_json, write_rows
from dcsurv.data import load_csv, apply_preprocess
from dcsurv.metrics import WEIGHTINGS, bootstrap_curves
from dcsurv.model import load_model

ORACLES = ('perfect', 'constant')


def register(parser):
    parser.add_argument(
        'model',
        help='Directory containing checkpoint.json and manifest.json.',
        type=PathType(type='dir'),
    )
    parser.add_argument(
        'test',
        help='Test data as CSV, with the columns of the training data.',
        type=PathType(type='file'),
    )
    add_config(parser)
    add_output(parser, help_='Path of the JSON report. If not given, print to stdout.')
    parser.add_argument(
        '--folds',
        help='Number of bootstrap resamples, overriding [metrics] folds.',
        type=int,
        default=None,
    )
    parser.add_argument(
        '--seed',
        help='Seed of the bootstrap resampling, overriding [metrics] seed.',
        type=int,
        default=None,
    )
    parser.add_argument(
        '--weighting',
        help='Case weighting of CDAUC, overriding [metrics] cdauc_weighting.',
        choices=WEIGHTINGS,
        default=None,
    )
    parser.add_argument(
        '--curves',
        help='Also write the predictions, interpolated onto the evaluation times stored with '
             'the model, to this CSV file.',
        type=PathType(type='file', must_exist=False),
        default=None,
    )
    parser.add_argument(
        '--oracle',
        help="Replace the predictions by a debugging oracle: 'perfect' orders records by their "
             "observed times, 'constant' predicts 0.5 for everyone.",
        choices=ORACLES,
        default=None,
    )


def oracle_curves(kind, grid, times) -> SurvivalCurve:
    """
    Curves constant in time: either one distinct level per record, increasing with the observed
    time, or 0.5 for all records.
    """
    n = len(times)
    if kind == 'perfect':
        levels = (np.argsort(np.argsort(times, kind='stable'), kind='stable') + 1) / (n + 1)
    else:
        levels = np.full(n, 0.5)
    return SurvivalCurve(grid=grid, values=np.repeat(levels[:, None], len(grid), axis=1))


def run(args):
    cfg = get_config(args)
    model = load_model(args.model)
    if model.schema is None or model.stats is None:
        raise DomainError('model {} was not trained from CSV data'.format(args.model))
    test = apply_preprocess(load_csv(args.test, model.schema), model.stats)

    if args.oracle:
        curves = oracle_curves(args.oracle, model.grid, test.times)
    else:
        curves = model.predict_features(test.features)

    report = bootstrap_curves(
        curves,
        test,
        folds=args.folds or cfg.metrics.folds,
        seed=cfg.metrics.seed if args.seed is None else args.seed,
        tau1=cfg.metrics.tau1,
        tau2=cfg.metrics.tau2,
        num_bins=cfg.metrics.num_bins,
        weighting=args.weighting or cfg.metrics.cdauc_weighting,
        log=args.log)
    write_json(report.to_dict(), args.output)
    if args.output and args.config:
        cfg.write_source(args.output.parent)

    if args.curves:
        times = model.eval_times if model.eval_times is not None else model.grid.nodes
        write_rows(
            ['record'] + [repr(float(t)) for t in times],
            [[i + 1] + [repr(float(v)) for v in row]
             for i, row in enumerate(interpolate_curve(curves, times))],
            args.curves)
