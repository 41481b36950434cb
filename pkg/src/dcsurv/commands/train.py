"""
Train a DCS model as described by a run configuration.

Writes checkpoint.json, manifest.json, training_log.csv and a verbatim copy of the config to the
output directory. If [run] test_fraction is set, a stratified test split is held out and written
as test.csv.
"""
from clldutils.clilib import PathType

from dcsurv.cli_util import add_config, get_config
from dcsurv.config import ConfigError
from dcsurv.data import load_csv, fit_preprocess, apply_preprocess, stratified_split, write_table
from dcsurv.model import train, save_model


def register(parser):
    add_config(parser, required=True)
    parser.add_argument(
        '--output',
        help='Output directory, overriding [paths] output.',
        type=PathType(type='dir', must_exist=False),
        default=None,
    )


def run(args):
    cfg = get_config(args)
    if cfg.paths.data is None:
        raise ConfigError(['[paths] data: required for training'])
    output = args.output or cfg.paths.output_path
    if output is None:
        raise ConfigError(['[paths] output: required unless --output is given'])

    table = load_csv(cfg.paths.data_path, cfg.schema)
    test = None
    if cfg.test_fraction:
        table, test = stratified_split(table, cfg.test_fraction, seed=cfg.seed)
    stats = fit_preprocess(table, log=args.log)
    model, training_log = train(
        apply_preprocess(table, stats),
        cfg.model,
        cfg.train,
        stats=stats,
        schema=cfg.schema,
        config_hash=cfg.config_hash,
        log=args.log)

    save_model(model, output)
    training_log.write_csv(output / 'training_log.csv')
    cfg.write_source(output)
    if test is not None:
        write_table(test, output / 'test.csv')
    args.log.info('best epoch {} of {}, model written to {}'.format(
        training_log.best_epoch, len(training_log.epochs), output))
