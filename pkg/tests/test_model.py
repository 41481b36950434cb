import json
import logging

import numpy as np
import pytest

from dcsurv.core import DomainError, SurvivalDataset, TimeGrid
from dcsurv.data import (
    DatasetSchema, load_csv, fit_preprocess, apply_preprocess, generate_synthetic,
    stratified_split,
)
from dcsurv.grids import GridSpec
from dcsurv.losses import LossConfig, combined_loss
from dcsurv.metrics import cindex_td, cdauc, ddc, bootstrap_evaluate
from dcsurv.numerics import Tensor, gradcheck
from dcsurv.model import *


@pytest.fixture
def small_config():
    return ModelConfig(
        encoder_layers=[4],
        decoder_layers=[4],
        aggregation_layers=[4],
        grid_spec=GridSpec(num_nodes=4),
        dropout_rate=0.1,
        seed=1)


@pytest.fixture
def small_train():
    return TrainConfig(batch_size=16, max_epochs=4, early_stop_patience=2)


@pytest.fixture
def synthetic():
    return generate_synthetic(80, 0.3, distribution='weibull', num_features=2, seed=1)


@pytest.fixture
def trained(synthetic, small_config, small_train):
    return train(synthetic, small_config, small_train)


def test_ModelConfig():
    cfg = ModelConfig(loss=LossConfig(lambda_=0.5, kernel_variant='ee'), seed=3)
    assert ModelConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    assert cfg.to_dict()['loss']['lambda'] == 0.5

    with pytest.raises(DomainError):
        ModelConfig(dropout_rate=1)
    with pytest.raises(DomainError):
        ModelConfig(encoder_layers=[8, 0])


def test_TrainConfig():
    assert TrainConfig().batch_size == 50
    with pytest.raises(DomainError) as e:
        TrainConfig(batch_size=0, learning_rate=0)
    assert 'batch_size' in str(e.value) and 'learning_rate' in str(e.value)
    with pytest.raises(ValueError):
        TrainConfig(evaluation_times='nodes')


def test_DCSNetwork_zero_parameters():
    net = DCSNetwork(3, 5, ModelConfig())
    net.load_state({name: np.zeros_like(value) for name, value in net.state().items()})
    features = np.random.default_rng(0).normal(size=(4, 3))
    assert np.allclose(net.hazards(features).data, 0.5)
    assert np.allclose(net.survival(features).data, 0.5 ** np.arange(1, 6))


@pytest.mark.parametrize(
    'kw',
    [
        dict(),
        dict(encoder_layers=[]),
        dict(decoder_layers=[]),
        dict(aggregation_layers=[]),
        dict(decoder_layers=[6, 5], bidirectional=False, lstm_skip=False),
        dict(encoder_layers=[], decoder_layers=[], aggregation_layers=[]),
    ]
)
def test_DCSNetwork_shapes(kw):
    net = DCSNetwork(3, 7, ModelConfig(**kw))
    features = np.random.default_rng(0).normal(size=(5, 3))
    hazards = net.hazards(features).data
    assert hazards.shape == (5, 7)
    assert np.all((hazards > 0) & (hazards < 1))
    survival = net.survival(features).data
    assert np.all(np.diff(survival, axis=1) <= 0)
    assert net.hazards(features[:1]).shape == (1, 7)

    with pytest.raises(DomainError):
        net.hazards(features[:, :2])


def test_DCSNetwork_parameter_count():
    p, hidden = 5, 7
    net = DCSNetwork(p, 4, ModelConfig(
        encoder_layers=[], decoder_layers=[hidden], bidirectional=False, lstm_skip=False,
        aggregation_layers=[]))
    assert sum(param.data.size for param in net.parameters()) == \
        4 * hidden * (p + hidden + 1) + hidden + 1

    net = DCSNetwork(p, 4, ModelConfig(encoder_layers=[3], decoder_layers=[2]))
    names = [param.name for param in net.parameters()]
    assert names[:2] == ['encoder.0.weights', 'encoder.0.bias']
    assert 'decoder.0.backward.hidden_weights' in names
    # The skip connection widens the aggregation input by the encoder width.
    assert net.aggregation[0].weights.shape == (2 * 2 + 3, 32)


def test_DCSNetwork_seeded():
    a, b = DCSNetwork(2, 3, ModelConfig(seed=5)), DCSNetwork(2, 3, ModelConfig(seed=5))
    assert all(np.array_equal(a.state()[k], v) for k, v in b.state().items())
    c = DCSNetwork(2, 3, ModelConfig(seed=6))
    assert not np.array_equal(a.state()['encoder.0.weights'], c.state()['encoder.0.weights'])

    with pytest.raises(DomainError):
        a.load_state({'encoder.0.weights': np.zeros((2, 32))})
    state = a.state()
    state['encoder.0.bias'] = np.zeros(3)
    with pytest.raises(DomainError):
        a.load_state(state)


def test_DCSNetwork_dropout():
    net = DCSNetwork(2, 3, ModelConfig(dropout_rate=0.5))
    features = np.ones((4, 2))
    assert np.array_equal(net.hazards(features).data, net.hazards(features).data)
    dropped = net.hazards(features, training=True, rng=np.random.default_rng(0)).data
    assert not np.allclose(dropped, net.hazards(features).data)


def test_DCSNetwork_no_dropout_on_decoder():
    net = DCSNetwork(2, 3, ModelConfig(
        encoder_layers=[], decoder_layers=[4, 4], aggregation_layers=[], dropout_rate=0.5))
    features = np.random.default_rng(1).normal(size=(4, 2))
    assert np.array_equal(
        net.hazards(features, training=True, rng=np.random.default_rng(0)).data,
        net.hazards(features).data)


def test_gradients_through_the_full_model():
    rng = np.random.default_rng(12)
    cfg = ModelConfig(
        encoder_layers=[8],
        decoder_layers=[8],
        bidirectional=True,
        lstm_skip=True,
        aggregation_layers=[8],
        dropout_rate=0,
        seed=3)
    grid = TimeGrid(nodes=[1, 2, 3, 4, 5, 6])
    data = SurvivalDataset(
        features=rng.normal(size=(5, 3)),
        times=rng.uniform(0.5, 7, size=5),
        events=[True, True, False, True, False])
    net = DCSNetwork(3, len(grid), cfg)
    err = gradcheck(
        lambda: combined_loss(net.survival(data.features), data, grid),
        net.parameters(),
        max_checks=6,
        floor=1e-5)
    assert err < 1e-4


def test_train(trained, synthetic, small_config):
    model, training_log = trained
    assert isinstance(model, TrainedModel)
    assert len(model.grid) == 4
    assert model.num_features == 2 and model.feature_names == ('x0', 'x1')
    assert list(model.eval_times) == sorted(set(synthetic.times))
    assert training_log.monitor == 'validation'
    assert 1 <= len(training_log.epochs) <= 4

    best = training_log.best
    assert best.improved
    assert best.validation_loss == min(e.validation_loss for e in training_log.epochs)
    if training_log.stopped_early:
        assert len(training_log.epochs) == training_log.best_epoch + 2

    with pytest.raises(ValueError):
        model.parameters['aggregation.output.bias'][0] = 1

    curves = model.predict_features(synthetic.features)
    assert curves.values.shape == (80, 4)
    assert np.all(np.diff(curves.values, axis=1) <= 0)
    hazards = forward(model, synthetic.features[:3])
    assert np.all((hazards.values > 0) & (hazards.values < 1))


def test_train_deterministic(trained, synthetic, small_config, small_train, tmp_path):
    model, training_log = trained
    again, again_log = train(synthetic, small_config, small_train)
    assert [e.validation_loss for e in again_log.epochs] == \
        [e.validation_loss for e in training_log.epochs]
    assert all(np.array_equal(again.parameters[k], v) for k, v in model.parameters.items())

    training_log.write_csv(tmp_path / 'a.csv')
    again_log.write_csv(tmp_path / 'b.csv')
    assert (tmp_path / 'a.csv').read_bytes() == (tmp_path / 'b.csv').read_bytes()


def test_train_logs(synthetic, small_config, small_train, mocker):
    log = mocker.Mock()
    train(synthetic, small_config, small_train, log=log)
    assert log.info.call_count >= 2


def test_train_small_data(toy, small_config):
    data = SurvivalDataset(features=[[0.1], [0.2], [0.3]], times=toy.times, events=toy.events)
    with pytest.warns(UserWarning, match='validation'):
        _, training_log = train(data, small_config, TrainConfig(max_epochs=2))
    assert training_log.monitor == 'train'

    with pytest.raises(DomainError):
        train(data.subset([]), small_config)


def test_train_non_finite_loss(synthetic, small_config, small_train, mocker):
    mocker.patch('dcsurv.model.combined_loss', lambda *args, **kw: Tensor(np.nan))
    with pytest.raises(TrainingError, match='epoch 1, batch 1'):
        train(synthetic, small_config, small_train)


def test_save_and_load(trained, synthetic, tmp_path):
    model, _ = trained
    manifest = save_model(model, tmp_path / 'model')
    assert manifest.name == 'manifest.json'
    doc = json.loads(manifest.read_text(encoding='utf8'))
    assert doc['format'] == 'dcsurv-model'
    assert doc['grid']['nodes'] == [float(t) for t in model.grid.nodes]
    assert doc['model']['grid']['num_nodes'] == 4

    loaded = load_model(tmp_path / 'model')
    assert loaded.grid == model.grid
    assert loaded.config == model.config
    assert np.array_equal(loaded.eval_times, model.eval_times)
    assert np.array_equal(
        loaded.predict_features(synthetic.features).values,
        model.predict_features(synthetic.features).values)

    checkpoint = tmp_path / 'model' / 'checkpoint.json'
    checkpoint.write_text(checkpoint.read_text(encoding='utf8') + ' ', encoding='utf8')
    with pytest.raises(DomainError):
        load_model(tmp_path / 'model')
    with pytest.raises(DomainError):
        load_model(tmp_path)


def test_predict(fixtures_dir, small_config, tmp_path):
    schema = DatasetSchema(categorical_columns=['stage'], zero_as_missing_columns=['chol'])
    table = load_csv(fixtures_dir / 'mixed.csv', schema)
    stats = fit_preprocess(table)
    model, _ = train(
        apply_preprocess(table, stats), small_config, TrainConfig(max_epochs=2),
        stats=stats, schema=schema)
    curves = predict(model, table)
    assert curves.values.shape == (5, len(model.grid))

    # Predictions do not depend on the other records of a batch.
    perm = [4, 2, 0, 1, 3]
    assert np.allclose(predict(model, table.subset(perm)).values, curves.values[perm])
    assert np.allclose(predict(model, table.subset([1, 1])).values, curves.values[[1, 1]])

    save_model(model, tmp_path)
    loaded = load_model(tmp_path)
    assert loaded.schema == schema
    assert loaded.stats == stats
    assert np.array_equal(predict(loaded, table).values, curves.values)

    with pytest.raises(DomainError):
        predict(model, load_csv(fixtures_dir / 'toy.csv'))
    with pytest.raises(DomainError):
        predict(TrainedModel(
            parameters=model.parameters, grid=model.grid, config=model.config,
            num_features=model.num_features), table)


def test_bootstrap_evaluate(trained, synthetic):
    model, _ = trained
    report = bootstrap_evaluate(model, synthetic, folds=2, seed=1)
    assert report.n_records == 80
    assert 0 <= report.cindex_td <= 1
    assert len(report.bootstrap['ddc'].values) == 2


@pytest.mark.slow
def test_learns_clusters():
    data = generate_synthetic(500, 0.2, distribution='clusters', seed=0)
    train_data, test = stratified_split(data, 0.2, seed=0)
    model, _ = train(train_data, ModelConfig(), TrainConfig(), log=logging.getLogger(__name__))
    curves = model.predict_features(test.features)
    assert cindex_td(curves, test) > 0.7
    assert cdauc(curves, test) > 0.7


@pytest.mark.slow
def test_calibration_without_kernel_term():
    data = generate_synthetic(500, 0.2, distribution='clusters', seed=1)
    train_data, test = stratified_split(data, 0.2, seed=1)
    cfg = ModelConfig(loss=LossConfig(lambda_=0))
    model, _ = train(train_data, cfg, TrainConfig())
    untrained = TrainedModel(
        parameters=DCSNetwork(1, len(model.grid), cfg).state(),
        grid=model.grid,
        config=cfg,
        num_features=1)
    assert ddc(model.predict_features(test.features), test) < \
        ddc(untrained.predict_features(test.features), test)


@pytest.mark.slow
def test_kernel_term_improves_concordance():
    data = generate_synthetic(
        600, 0.6, distribution='weibull', num_features=2, seed=2)
    train_data, test = stratified_split(data, 0.2, seed=2)
    scores = {}
    for lambda_ in [0, 1]:
        cfg = ModelConfig(grid_spec=GridSpec(num_nodes=5), loss=LossConfig(lambda_=lambda_))
        model, _ = train(train_data, cfg, TrainConfig())
        scores[lambda_] = cindex_td(model.predict_features(test.features), test)
    assert scores[1] - scores[0] >= 0.02
