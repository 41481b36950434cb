"""
Run configuration, read from INI files.

Example::

    [schema]
    time_column = time
    event_column = event
    categorical_columns =
        sex
        stage

    [grid]
    spacing = quantile
    num_nodes = 10

    [model]
    encoder_layers = 32
    decoder_layers = 32
    bidirectional = true
    lstm_skip = true
    aggregation_layers = 32
    dropout_rate = 0.2

    [loss]
    lambda = 1.0
    sigma = 1.0
    kernel_variant = ee_ec

    [train]
    batch_size = 50
    max_epochs = 100
    early_stop_patience = 10
    validation_fraction = 0.2

    [metrics]
    folds = 10
    cdauc_weighting = km

    [paths]
    data = train.csv
    output = model

    [run]
    seed = 0
    test_fraction = 0.2

Relative paths are resolved against the directory of the config file.
"""
import typing
import pathlib
import hashlib
import configparser

import attr
from clldutils.inifile import INI

from dcsurv.core import Spacing
from dcsurv.grids import GridSpec
from dcsurv.losses import LossConfig, KernelVariant, KernelEvaluation
from dcsurv.data import DatasetSchema
from dcsurv.metrics import WEIGHTINGS
from dcsurv.model import ModelConfig, TrainConfig

__all__ = ['ConfigError', 'MetricsConfig', 'PathsConfig', 'RunConfig']

SECTIONS = {
    'schema': [
        'time_column', 'event_column', 'categorical_columns', 'zero_as_missing_columns',
        'time_unit'],
    'grid': ['spacing', 'num_nodes', 't_max', 't_min'],
    'model': [
        'encoder_layers', 'decoder_layers', 'bidirectional', 'lstm_skip', 'aggregation_layers',
        'dropout_rate'],
    'loss': ['lambda', 'sigma', 'kernel_variant', 'normalized', 'kernel_evaluation'],
    'train': [
        'batch_size', 'max_epochs', 'early_stop_patience', 'validation_fraction',
        'learning_rate', 'evaluation_times'],
    'metrics': ['folds', 'seed', 'tau1', 'tau2', 'num_bins', 'cdauc_weighting'],
    'paths': ['data', 'output'],
    'run': ['seed', 'test_fraction'],
}


class ConfigError(ValueError):
    """
    :ivar problems: All problems found while validating a configuration.
    """
    def __init__(self, problems: typing.List[str]):
        self.problems = list(problems)
        ValueError.__init__(self, '; '.join(self.problems))


@attr.s(frozen=True)
class MetricsConfig:
    folds = attr.ib(default=10)
    seed = attr.ib(default=0)
    tau1 = attr.ib(default=None)
    tau2 = attr.ib(default=None)
    num_bins = attr.ib(default=10)
    cdauc_weighting = attr.ib(default='km')


@attr.s(frozen=True)
class PathsConfig:
    """
    :ivar data: Path as written in the config file.
    :ivar base: Directory against which relative paths are resolved.
    """
    data = attr.ib(default=None)
    output = attr.ib(default=None)
    base = attr.ib(default=None, eq=False)

    def _resolve(self, value) -> typing.Optional[pathlib.Path]:
        if value is None:
            return None
        p = pathlib.Path(value)
        if self.base and not p.is_absolute():
            p = pathlib.Path(self.base) / p
        return p

    @property
    def data_path(self) -> typing.Optional[pathlib.Path]:
        return self._resolve(self.data)

    @property
    def output_path(self) -> typing.Optional[pathlib.Path]:
        return self._resolve(self.output)


def _boolean(value: str) -> bool:
    try:
        return INI.BOOLEAN_STATES[value.lower()]
    except KeyError:
        raise ValueError(value)


class _Reader:
    """
    Typed access to INI options, collecting problems instead of failing on the first.
    """
    def __init__(self, ini: INI):
        self.ini, self.problems = ini, []

    def problem(self, section, option, msg):
        self.problems.append('[{}] {}: {}'.format(section, option, msg))

    def get(self, section, option, default=None, type_=str, check=None, msg=None):
        if not self.ini.has_option(section, option):
            return default
        raw = self.ini.get(section, option).strip()
        if not raw:
            return default
        try:
            value = type_(raw)
        except ValueError:
            self.problem(section, option, 'invalid value {!r}'.format(raw))
            return default
        if check and not check(value):
            self.problem(section, option, msg)
            return default
        return value

    def getlist(self, section, option, default=(), type_=str, check=None, msg=None):
        if not self.ini.has_option(section, option):
            return default
        res = []
        for raw in self.ini.getlist(section, option):
            raw = raw.strip()
            if not raw:
                continue
            try:
                value = type_(raw)
            except ValueError:
                self.problem(section, option, 'invalid value {!r}'.format(raw))
                continue
            if check and not check(value):
                self.problem(section, option, msg)
                continue
            res.append(value)
        return tuple(res)

    def choice(self, section, option, enum, default):
        choices = [m.value for m in enum]
        value = self.get(
            section, option, check=lambda v: v in choices,
            msg='must be one of {}'.format(', '.join(choices)))
        return default if value is None else enum(value)


def _positive(v):
    return v > 0


@attr.s(frozen=True, eq=False)
class RunConfig:
    """
    All settings of a run.

    :ivar source: The config file text as read, `None` for configs built in code.
    """
    schema = attr.ib(default=attr.Factory(DatasetSchema))
    model = attr.ib(default=attr.Factory(ModelConfig))
    train = attr.ib(default=attr.Factory(TrainConfig))
    metrics = attr.ib(default=attr.Factory(MetricsConfig))
    paths = attr.ib(default=attr.Factory(PathsConfig))
    seed = attr.ib(default=0)
    test_fraction = attr.ib(default=None)
    source = attr.ib(default=None)

    @classmethod
    def from_file(cls, path: typing.Union[str, pathlib.Path]) -> 'RunConfig':
        """
        :raises ConfigError: listing every problem found in the file.
        """
        path = pathlib.Path(path)
        if not path.exists():
            raise ConfigError(['config file {} does not exist'.format(path)])
        return cls.from_string(path.read_text(encoding='utf-8'), base=path.parent)

    @classmethod
    def from_string(cls, text: str, base=None) -> 'RunConfig':
        ini = INI(interpolation=None)
        try:
            ini.read_string(text)
        except configparser.Error as e:
            raise ConfigError(['invalid INI syntax: {}'.format(e)])
        r = _Reader(ini)

        for section in ini.sections():
            if section not in SECTIONS:
                r.problems.append('unknown section [{}]'.format(section))
                continue
            for option in ini.options(section):
                if option not in SECTIONS[section]:
                    r.problem(section, option, 'unknown option')

        schema = dict(
            time_column=r.get('schema', 'time_column', 'time'),
            event_column=r.get('schema', 'event_column', 'event'),
            categorical_columns=r.getlist('schema', 'categorical_columns'),
            zero_as_missing_columns=r.getlist('schema', 'zero_as_missing_columns'),
            time_unit=r.get('schema', 'time_unit'),
        )
        grid = dict(
            spacing=r.choice('grid', 'spacing', Spacing, Spacing.quantile),
            num_nodes=r.get(
                'grid', 'num_nodes', 10, int, lambda v: v >= 2, 'must be at least 2'),
            t_max=r.get('grid', 't_max', None, float, _positive, 'must be positive'),
            t_min=r.get('grid', 't_min', None, float, _positive, 'must be positive'),
        )
        if grid['t_max'] is not None and grid['t_min'] is not None \
                and not grid['t_min'] < grid['t_max']:
            r.problem('grid', 't_min', 'must be smaller than t_max')
        loss = dict(
            lambda_=r.get('loss', 'lambda', 1.0, float, lambda v: v >= 0, 'must not be negative'),
            sigma=r.get('loss', 'sigma', 1.0, float, _positive, 'must be positive'),
            kernel_variant=r.choice(
                'loss', 'kernel_variant', KernelVariant, KernelVariant.ee_and_ec),
            normalized=r.get('loss', 'normalized', True, _boolean),
            kernel_evaluation=r.choice(
                'loss', 'kernel_evaluation', KernelEvaluation, KernelEvaluation.interpolate),
        )
        seed = r.get('run', 'seed', 0, int)
        width = dict(type_=int, check=_positive, msg='layer widths must be positive')
        model = dict(
            encoder_layers=r.getlist('model', 'encoder_layers', (32,), **width),
            decoder_layers=r.getlist('model', 'decoder_layers', (32,), **width),
            bidirectional=r.get('model', 'bidirectional', True, _boolean),
            lstm_skip=r.get('model', 'lstm_skip', True, _boolean),
            aggregation_layers=r.getlist('model', 'aggregation_layers', (32,), **width),
            dropout_rate=r.get(
                'model', 'dropout_rate', 0.2, float, lambda v: 0 <= v < 1, 'must lie in [0, 1)'),
        )
        train = dict(
            batch_size=r.get(
                'train', 'batch_size', 50, int, lambda v: v >= 1, 'must be at least 1'),
            max_epochs=r.get(
                'train', 'max_epochs', 100, int, lambda v: v >= 1, 'must be at least 1'),
            early_stop_patience=r.get(
                'train', 'early_stop_patience', 10, int, lambda v: v >= 1, 'must be at least 1'),
            validation_fraction=r.get(
                'train', 'validation_fraction', 0.2, float, lambda v: 0 < v < 1,
                'must lie in (0, 1)'),
            learning_rate=r.get(
                'train', 'learning_rate', 1e-3, float, _positive, 'must be positive'),
            evaluation_times=r.get(
                'train', 'evaluation_times', 'all', str, lambda v: v in ('all', 'events'),
                'must be one of all, events'),
        )
        metrics = MetricsConfig(
            folds=r.get('metrics', 'folds', 10, int, lambda v: v >= 2, 'must be at least 2'),
            seed=r.get('metrics', 'seed', 0, int),
            tau1=r.get('metrics', 'tau1', None, float, _positive, 'must be positive'),
            tau2=r.get('metrics', 'tau2', None, float, _positive, 'must be positive'),
            num_bins=r.get('metrics', 'num_bins', 10, int, _positive, 'must be positive'),
            cdauc_weighting=r.get(
                'metrics', 'cdauc_weighting', 'km', str, lambda v: v in WEIGHTINGS,
                'must be one of {}'.format(', '.join(WEIGHTINGS))),
        )
        if metrics.tau1 is not None and metrics.tau2 is not None \
                and not metrics.tau1 < metrics.tau2:
            r.problem('metrics', 'tau2', 'must be larger than tau1')
        paths = PathsConfig(
            data=r.get('paths', 'data'), output=r.get('paths', 'output'), base=base)
        if paths.data is not None and not paths.data_path.exists():
            r.problem('paths', 'data', 'file {} does not exist'.format(paths.data_path))
        test_fraction = r.get(
            'run', 'test_fraction', None, float, lambda v: 0 < v < 1, 'must lie in (0, 1)')

        try:
            schema = DatasetSchema(**schema)
        except ValueError as e:
            r.problems.append('[schema] {}'.format(e))
        if r.problems:
            raise ConfigError(r.problems)
        return cls(
            schema=schema,
            model=ModelConfig(
                grid_spec=GridSpec(**grid), loss=LossConfig(**loss), seed=seed, **model),
            train=TrainConfig(**train),
            metrics=metrics,
            paths=paths,
            seed=seed,
            test_fraction=test_fraction,
            source=text)

    def to_ini(self) -> str:
        """
        Canonical serialization: every option, in fixed order, with normalized values.
        """
        ini = INI(interpolation=None)
        s, m, g, lo, t = self.schema, self.model, self.model.grid_spec, self.model.loss, self.train
        values = [
            ('schema', [
                ('time_column', s.time_column),
                ('event_column', s.event_column),
                ('categorical_columns', list(s.categorical_columns)),
                ('zero_as_missing_columns', list(s.zero_as_missing_columns)),
                ('time_unit', s.time_unit),
            ]),
            ('grid', [
                ('spacing', g.spacing.value),
                ('num_nodes', g.num_nodes),
                ('t_max', g.t_max),
                ('t_min', g.t_min),
            ]),
            ('model', [
                ('encoder_layers', [str(w) for w in m.encoder_layers]),
                ('decoder_layers', [str(w) for w in m.decoder_layers]),
                ('bidirectional', str(m.bidirectional).lower()),
                ('lstm_skip', str(m.lstm_skip).lower()),
                ('aggregation_layers', [str(w) for w in m.aggregation_layers]),
                ('dropout_rate', repr(m.dropout_rate)),
            ]),
            ('loss', [
                ('lambda', repr(lo.lambda_)),
                ('sigma', repr(lo.sigma)),
                ('kernel_variant', lo.kernel_variant.value),
                ('normalized', str(lo.normalized).lower()),
                ('kernel_evaluation', lo.kernel_evaluation.value),
            ]),
            ('train', [
                ('batch_size', t.batch_size),
                ('max_epochs', t.max_epochs),
                ('early_stop_patience', t.early_stop_patience),
                ('validation_fraction', repr(t.validation_fraction)),
                ('learning_rate', repr(t.learning_rate)),
                ('evaluation_times', t.evaluation_times),
            ]),
            ('metrics', [
                ('folds', self.metrics.folds),
                ('seed', self.metrics.seed),
                ('tau1', self.metrics.tau1),
                ('tau2', self.metrics.tau2),
                ('num_bins', self.metrics.num_bins),
                ('cdauc_weighting', self.metrics.cdauc_weighting),
            ]),
            ('paths', [
                ('data', self.paths.data),
                ('output', self.paths.output),
            ]),
            ('run', [
                ('seed', self.seed),
                ('test_fraction', self.test_fraction),
            ]),
        ]
        for section, options in values:
            ini.add_section(section)
            for option, value in options:
                if value is None:
                    continue
                if isinstance(value, list):
                    value = ''.join('\n' + v for v in value)
                ini.set(section, option, repr(value) if isinstance(value, float) else str(value))
        return ini.write_string()

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode('utf8')).hexdigest()

    def write_source(self, directory: typing.Union[str, pathlib.Path]) -> pathlib.Path:
        """
        Store the config next to the outputs of a run, verbatim if it was read from a file.
        """
        p = pathlib.Path(directory) / 'config.ini'
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.source if self.source is not None else self.to_ini(), encoding='utf-8')
        return p
