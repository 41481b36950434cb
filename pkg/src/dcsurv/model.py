"""
The DCS network and its training loop.

A network maps a feature vector `x` to one hazard per node of a time grid::

    x -> encoder (dense) -> e(x), replicated L times
      -> decoder ((bi)LSTM), optionally concatenated with e(x) per step
      -> aggregation (dense, shared across steps) -> sigmoid -> h_1..h_L

The decoder input is identical at every step, so the steps are distinguished by recurrence only.
"""
import math
import typing
import pathlib
import hashlib
import warnings
import collections

import attr
import numpy as np
from clldutils import jsonlib
from csvw import dsv

from dcsurv.core import DomainError, SurvivalDataset, TimeGrid, HazardSequence, SurvivalCurve
from dcsurv.grids import GridSpec, build_grid
from dcsurv.losses import LossConfig, combined_loss
from dcsurv.data import (
    DatasetSchema, PreprocessStats, RawTable, encode_features, evaluation_times,
    stratified_indices,
)
from dcsurv.numerics import (
    Tensor, Parameter, Dense, LSTM, Adam, as_tensor, backward, concat, cumprod, dropout, stack,
    save_checkpoint, load_checkpoint,
)

__all__ = [
    'TrainingError', 'ModelConfig', 'TrainConfig', 'DCSNetwork', 'TrainedModel', 'EpochRecord',
    'TrainingLog',
    'forward', 'train', 'predict', 'save_model', 'load_model']

CHECKPOINT = 'checkpoint.json'
MANIFEST = 'manifest.json'
MANIFEST_FORMAT = 'dcsurv-model'


class TrainingError(RuntimeError):
    pass


def _widths(value) -> typing.Tuple[int, ...]:
    return tuple(int(v) for v in value)


def _check_widths(instance, attribute, value):
    if any(v < 1 for v in value):
        raise DomainError('{} must be positive'.format(attribute.name))


@attr.s(frozen=True)
class ModelConfig:
    """
    Architecture and objective of a DCS network.

    :ivar decoder_layers: Hidden sizes of stacked LSTMs. If empty, the replicated encoder output \
    is fed into the aggregation network directly.
    :ivar aggregation_layers: Widths of the hidden dense layers before the final scalar layer.
    """
    encoder_layers = attr.ib(converter=_widths, default=(32,), validator=_check_widths)
    decoder_layers = attr.ib(converter=_widths, default=(32,), validator=_check_widths)
    bidirectional = attr.ib(converter=bool, default=True)
    lstm_skip = attr.ib(converter=bool, default=True)
    aggregation_layers = attr.ib(converter=_widths, default=(32,), validator=_check_widths)
    grid_spec = attr.ib(
        default=attr.Factory(GridSpec), validator=attr.validators.instance_of(GridSpec))
    loss = attr.ib(
        default=attr.Factory(LossConfig), validator=attr.validators.instance_of(LossConfig))
    dropout_rate = attr.ib(converter=float, default=0.2)
    seed = attr.ib(converter=int, default=0)

    @dropout_rate.validator
    def _check_dropout(self, attribute, value):
        if not 0 <= value < 1:
            raise DomainError('dropout rate must lie in [0, 1)')

    def to_dict(self) -> dict:
        return collections.OrderedDict([
            ('encoder_layers', list(self.encoder_layers)),
            ('decoder_layers', list(self.decoder_layers)),
            ('bidirectional', self.bidirectional),
            ('lstm_skip', self.lstm_skip),
            ('aggregation_layers', list(self.aggregation_layers)),
            ('dropout_rate', self.dropout_rate),
            ('seed', self.seed),
            ('grid', collections.OrderedDict([
                ('spacing', self.grid_spec.spacing.value),
                ('num_nodes', self.grid_spec.num_nodes),
                ('t_max', self.grid_spec.t_max),
                ('t_min', self.grid_spec.t_min),
            ])),
            ('loss', collections.OrderedDict([
                ('lambda', self.loss.lambda_),
                ('sigma', self.loss.sigma),
                ('kernel_variant', self.loss.kernel_variant.value),
                ('normalized', self.loss.normalized),
                ('kernel_evaluation', self.loss.kernel_evaluation.value),
            ])),
        ])

    @classmethod
    def from_dict(cls, d: dict) -> 'ModelConfig':
        d = dict(d)
        grid, loss = dict(d.pop('grid')), dict(d.pop('loss'))
        loss['lambda_'] = loss.pop('lambda')
        return cls(grid_spec=GridSpec(**grid), loss=LossConfig(**loss), **d)


@attr.s(frozen=True)
class TrainConfig:
    """
    :ivar evaluation_times: Times stored with the model for projecting predictions onto a shared \
    time axis: `all` distinct training times or `events` only.
    """
    batch_size = attr.ib(converter=int, default=50)
    max_epochs = attr.ib(converter=int, default=100)
    early_stop_patience = attr.ib(converter=int, default=10)
    validation_fraction = attr.ib(converter=float, default=0.2)
    learning_rate = attr.ib(converter=float, default=1e-3)
    evaluation_times = attr.ib(
        default='all', validator=attr.validators.in_(['all', 'events']))

    def __attrs_post_init__(self):
        problems = []
        if self.batch_size < 1:
            problems.append('batch_size must be at least 1')
        if self.max_epochs < 1:
            problems.append('max_epochs must be at least 1')
        if self.early_stop_patience < 1:
            problems.append('early_stop_patience must be at least 1')
        if not 0 < self.validation_fraction < 1:
            problems.append('validation_fraction must lie in (0, 1)')
        if not self.learning_rate > 0:
            problems.append('learning_rate must be positive')
        if problems:
            raise DomainError('; '.join(problems))


class DCSNetwork:
    """
    Layers of a DCS network, initialized with seeded Glorot-uniform weights and zero biases.
    """
    def __init__(self, num_features: int, num_nodes: int, cfg: ModelConfig):
        rng = np.random.default_rng(cfg.seed)
        self.num_features, self.num_nodes, self.cfg = num_features, num_nodes, cfg

        self.encoder, width = [], num_features
        for i, w in enumerate(cfg.encoder_layers):
            self.encoder.append(Dense(width, w, 'encoder.{}'.format(i), rng, activation='relu'))
            width = w
        encoded = width

        self.decoder = []
        for i, w in enumerate(cfg.decoder_layers):
            self.decoder.append(
                LSTM(width, w, 'decoder.{}'.format(i), rng, bidirectional=cfg.bidirectional))
            width = self.decoder[-1].out_features
        if self.decoder and cfg.lstm_skip:
            width += encoded

        self.aggregation = []
        for i, w in enumerate(cfg.aggregation_layers):
            self.aggregation.append(
                Dense(width, w, 'aggregation.{}'.format(i), rng, activation='relu'))
            width = w
        self.output = Dense(width, 1, 'aggregation.output', rng, activation='identity')

    def parameters(self) -> typing.List[Parameter]:
        res = []
        for layer in self.encoder + self.decoder + self.aggregation + [self.output]:
            res.extend(layer.parameters())
        return res

    def state(self) -> typing.Dict[str, np.ndarray]:
        return collections.OrderedDict((p.name, p.data.copy()) for p in self.parameters())

    def load_state(self, state: typing.Mapping[str, np.ndarray]):
        params = self.parameters()
        names = [p.name for p in params]
        if set(names) != set(state):
            raise DomainError('parameters do not match the network: expected {}, got {}'.format(
                sorted(names), sorted(state)))
        for p in params:
            value = np.array(state[p.name], dtype=np.float64)
            if value.shape != p.shape:
                raise DomainError('parameter {} has shape {}, expected {}'.format(
                    p.name, value.shape, p.shape))
            p.data = value

    def hazards(
            self,
            features,
            training: bool = False,
            rng: typing.Optional[np.random.Generator] = None) -> Tensor:
        """
        :param features: `(batch, p)` features.
        :return: `(batch, L)` hazards in (0, 1).
        """
        x = as_tensor(features)
        if x.ndim != 2 or x.shape[1] != self.num_features:
            raise DomainError('expected features of shape (batch, {}), got {}'.format(
                self.num_features, x.shape))
        rate = self.cfg.dropout_rate
        for layer in self.encoder:
            x = dropout(layer(x), rate, rng, training)
        batch = x.shape[0]
        steps = stack([x] * self.num_nodes, axis=1)

        states = steps
        if self.decoder:
            for lstm in self.decoder:
                states = lstm(states)
            if self.cfg.lstm_skip:
                states = concat([states, steps], axis=2)
        flat = states.reshape(batch * self.num_nodes, states.shape[2])
        for layer in self.aggregation:
            flat = dropout(layer(flat), rate, rng, training)
        return self.output(flat).reshape(batch, self.num_nodes).sigmoid()

    def survival(self, features, training=False, rng=None) -> Tensor:
        return cumprod(1.0 - self.hazards(features, training=training, rng=rng))


def _frozen_state(state) -> typing.Dict[str, np.ndarray]:
    res = collections.OrderedDict()
    for name, value in state.items():
        value = np.array(value, dtype=np.float64)
        value.setflags(write=False)
        res[name] = value
    return res


@attr.s(frozen=True, eq=False)
class TrainedModel:
    """
    A trained network together with everything needed to apply it to raw data.

    :ivar parameters: Read-only parameter arrays by name.
    :ivar stats: Preprocessing fitted on the training data, if the model was trained from a CSV.
    :ivar eval_times: Distinct training times onto which predictions can be projected.
    :ivar config_hash: SHA-256 of the canonical run configuration.
    """
    parameters = attr.ib(converter=_frozen_state)
    grid = attr.ib(validator=attr.validators.instance_of(TimeGrid))
    config = attr.ib(validator=attr.validators.instance_of(ModelConfig))
    num_features = attr.ib(converter=int)
    feature_names = attr.ib(converter=tuple, default=())
    stats = attr.ib(default=None)
    schema = attr.ib(default=None)
    eval_times = attr.ib(default=None)
    config_hash = attr.ib(default=None)

    def network(self) -> DCSNetwork:
        net = DCSNetwork(self.num_features, len(self.grid), self.config)
        net.load_state(self.parameters)
        return net

    def predict_hazards(self, features) -> HazardSequence:
        features = np.asarray(features, dtype=float)
        return HazardSequence(grid=self.grid, values=self.network().hazards(features).data)

    def predict_features(self, features) -> SurvivalCurve:
        features = np.asarray(features, dtype=float)
        return SurvivalCurve(grid=self.grid, values=self.network().survival(features).data)


def forward(model: TrainedModel, features) -> HazardSequence:
    """
    Hazards of preprocessed features, with dropout disabled.
    """
    return model.predict_hazards(features)


def predict(model: TrainedModel, table: RawTable) -> SurvivalCurve:
    """
    Survival curves for raw records, preprocessed with the statistics stored in the model.
    """
    if model.stats is None:
        raise DomainError('model carries no preprocessing statistics')
    return model.predict_features(encode_features(table, model.stats))


@attr.s(frozen=True)
class EpochRecord:
    epoch = attr.ib()
    train_loss = attr.ib()
    validation_loss = attr.ib()
    improved = attr.ib(default=False)


@attr.s
class TrainingLog:
    """
    :ivar monitor: `validation` or, if the data were too small to split, `train`.
    """
    epochs = attr.ib(default=attr.Factory(list))
    best_epoch = attr.ib(default=None)
    stopped_early = attr.ib(default=False)
    monitor = attr.ib(default='validation')

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch - 1]

    def write_csv(self, path: typing.Union[str, pathlib.Path]) -> pathlib.Path:
        path = pathlib.Path(path)
        with dsv.UnicodeWriter(path) as w:
            w.writerow(['epoch', 'train_loss', 'validation_loss', 'best'])
            for e in self.epochs:
                w.writerow([
                    e.epoch,
                    repr(e.train_loss),
                    repr(e.validation_loss),
                    int(e.epoch == self.best_epoch)])
        return path


def _loss(net, data, grid, cfg, training=False, rng=None) -> Tensor:
    return combined_loss(
        net.survival(data.features, training=training, rng=rng), data, grid, cfg)


def train(
        data: SurvivalDataset,
        mcfg: typing.Optional[ModelConfig] = None,
        tcfg: typing.Optional[TrainConfig] = None,
        stats: typing.Optional[PreprocessStats] = None,
        schema: typing.Optional[DatasetSchema] = None,
        config_hash: typing.Optional[str] = None,
        log=None) -> typing.Tuple[TrainedModel, TrainingLog]:
    """
    Minibatch training with Adam on the combined loss and early stopping.

    The grid is built from all of `data`. A stratified validation split of
    `tcfg.validation_fraction` (seeded with `mcfg.seed`) is held out; if the data are too small
    to split, the training loss is monitored instead. The parameters of the epoch with the lowest
    monitored loss are returned.

    :raises TrainingError: if a loss or gradient becomes non-finite.
    """
    mcfg, tcfg = mcfg or ModelConfig(), tcfg or TrainConfig()
    if not len(data):
        raise DomainError('cannot train on an empty dataset')
    grid = build_grid(mcfg.grid_spec, data)
    training_log = TrainingLog()
    try:
        train_idx, val_idx = stratified_indices(
            data.events, tcfg.validation_fraction, seed=mcfg.seed)
    except DomainError:
        warnings.warn('too few records for a validation split, monitoring the training loss')
        train_idx, val_idx = np.arange(len(data)), None
        training_log.monitor = 'train'
    train_data = data.subset(train_idx)
    monitor_data = data.subset(val_idx) if val_idx is not None else train_data

    net = DCSNetwork(data.num_features, len(grid), mcfg)
    params = net.parameters()
    optimizer = Adam(params, lr=tcfg.learning_rate)
    rng = np.random.default_rng(mcfg.seed + 1)
    best_loss, best_state, wait = math.inf, net.state(), 0
    if log:
        log.info('training on {} records, {} grid nodes, {} parameters'.format(
            len(train_data), len(grid), sum(p.data.size for p in params)))

    for epoch in range(1, tcfg.max_epochs + 1):
        perm = rng.permutation(len(train_data))
        total = 0.0
        for batch_no, start in enumerate(range(0, len(perm), tcfg.batch_size), start=1):
            batch = train_data.subset(perm[start:start + tcfg.batch_size])
            loss = _loss(net, batch, grid, mcfg.loss, training=True, rng=rng)
            if not math.isfinite(loss.item()):
                raise TrainingError('non-finite loss in epoch {}, batch {}'.format(
                    epoch, batch_no))
            grads = backward(loss, params)
            try:
                optimizer.step(grads)
            except FloatingPointError as e:
                raise TrainingError('epoch {}, batch {}: {}'.format(epoch, batch_no, e))
            total += loss.item() * len(batch)

        monitored = _loss(net, monitor_data, grid, mcfg.loss).item()
        if not math.isfinite(monitored):
            raise TrainingError('non-finite {} loss in epoch {}'.format(
                training_log.monitor, epoch))
        improved = monitored < best_loss
        training_log.epochs.append(EpochRecord(
            epoch=epoch,
            train_loss=total / len(train_data),
            validation_loss=monitored,
            improved=improved))
        if improved:
            best_loss, best_state, wait = monitored, net.state(), 0
            training_log.best_epoch = epoch
        else:
            wait += 1
        if log:
            log.info('epoch {}: train loss {:.6f}, {} loss {:.6f}'.format(
                epoch, total / len(train_data), training_log.monitor, monitored))
        if wait >= tcfg.early_stop_patience:
            training_log.stopped_early = True
            if log:
                log.info('early stopping after epoch {}, best epoch {}'.format(
                    epoch, training_log.best_epoch))
            break

    return TrainedModel(
        parameters=best_state,
        grid=grid,
        config=mcfg,
        num_features=data.num_features,
        feature_names=data.feature_names,
        stats=stats,
        schema=schema,
        eval_times=evaluation_times(data, tcfg.evaluation_times),
        config_hash=config_hash), training_log


def _sha256(path: pathlib.Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_model(model: TrainedModel, directory: typing.Union[str, pathlib.Path]) -> pathlib.Path:
    """
    Write `checkpoint.json` and a `manifest.json` sidecar to `directory`.

    :return: Path of the manifest.
    """
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    checkpoint = save_checkpoint(model.parameters, directory / CHECKPOINT)
    manifest = collections.OrderedDict([
        ('format', MANIFEST_FORMAT),
        ('version', 1),
        ('checkpoint', CHECKPOINT),
        ('checkpoint_sha256', _sha256(checkpoint)),
        ('config_hash', model.config_hash),
        ('grid', collections.OrderedDict([
            ('spacing', model.grid.spacing.value),
            ('nodes', [float(t) for t in model.grid.nodes]),
        ])),
        ('num_features', model.num_features),
        ('feature_names', list(model.feature_names)),
        ('model', model.config.to_dict()),
        ('schema', attr.asdict(model.schema) if model.schema else None),
        ('preprocessing', model.stats.to_dict() if model.stats else None),
        ('evaluation_times',
         None if model.eval_times is None else [float(t) for t in model.eval_times]),
    ])
    jsonlib.dump(manifest, directory / MANIFEST, indent=1)
    return directory / MANIFEST


def load_model(directory: typing.Union[str, pathlib.Path]) -> TrainedModel:
    """
    :raises DomainError: if the manifest is missing or does not match the checkpoint.
    """
    directory = pathlib.Path(directory)
    if not (directory / MANIFEST).exists():
        raise DomainError('{} contains no model manifest'.format(directory))
    manifest = jsonlib.load(directory / MANIFEST)
    if manifest.get('format') != MANIFEST_FORMAT:
        raise DomainError('{} is not a dcsurv model manifest'.format(directory / MANIFEST))
    checkpoint = directory / manifest['checkpoint']
    if _sha256(checkpoint) != manifest['checkpoint_sha256']:
        raise DomainError('checkpoint {} does not match its manifest'.format(checkpoint))
    return TrainedModel(
        parameters=load_checkpoint(checkpoint),
        grid=TimeGrid(nodes=manifest['grid']['nodes'], spacing=manifest['grid']['spacing']),
        config=ModelConfig.from_dict(manifest['model']),
        num_features=manifest['num_features'],
        feature_names=manifest['feature_names'],
        stats=PreprocessStats.from_dict(manifest['preprocessing'])
        if manifest['preprocessing'] else None,
        schema=DatasetSchema(**manifest['schema']) if manifest['schema'] else None,
        eval_times=None if manifest['evaluation_times'] is None
        else np.array(manifest['evaluation_times']),
        config_hash=manifest['config_hash'])
