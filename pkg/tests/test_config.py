import pytest

from dcsurv.core import Spacing
from dcsurv.data import DatasetSchema
from dcsurv.losses import KernelVariant
from dcsurv.model import ModelConfig, TrainConfig
from dcsurv.config import *


@pytest.fixture
def run_config(fixtures_dir):
    return RunConfig.from_file(fixtures_dir / 'run.ini')


def test_defaults():
    cfg = RunConfig.from_string('')
    assert cfg.model == ModelConfig()
    assert cfg.train == TrainConfig()
    assert cfg.schema == DatasetSchema()
    assert cfg.metrics == MetricsConfig()
    assert cfg.paths.data is None and cfg.test_fraction is None
    assert cfg.config_hash == RunConfig().config_hash


def test_from_file(run_config, fixtures_dir):
    cfg = run_config
    assert cfg.schema.categorical_columns == ('stage',)
    assert cfg.schema.zero_as_missing_columns == ('chol',)
    assert cfg.schema.time_unit == 'months'
    assert cfg.model.grid_spec.spacing == Spacing.linear
    assert cfg.model.grid_spec.num_nodes == 5
    assert cfg.model.encoder_layers == (4,)
    assert cfg.model.aggregation_layers == (4, 3)
    assert cfg.model.bidirectional is False and cfg.model.lstm_skip is True
    assert cfg.model.dropout_rate == 0
    assert cfg.model.loss.lambda_ == 0.5 and cfg.model.loss.sigma == 2
    assert cfg.model.loss.kernel_variant == KernelVariant.ee_only
    assert cfg.train.batch_size == 2 and cfg.train.early_stop_patience == 2
    assert cfg.metrics.folds == 3 and cfg.metrics.seed == 1
    assert cfg.metrics.cdauc_weighting == 'ipcw'
    assert cfg.seed == 42 and cfg.model.seed == 42
    assert cfg.paths.data_path == fixtures_dir / 'mixed.csv'
    assert cfg.paths.output_path == fixtures_dir / 'out'


def test_problems_are_collected():
    text = """\
[grid]
num_nodes = 1
spacing = cubic

[model]
dropout_rate = 2
foo = 1

[train]
batch_size = x

[extra]
a = 1
"""
    with pytest.raises(ConfigError) as e:
        RunConfig.from_string(text)
    problems = e.value.problems
    assert len(problems) == 6
    assert 'unknown section [extra]' in problems
    assert '[model] foo: unknown option' in problems
    assert "[train] batch_size: invalid value 'x'" in problems
    assert '[grid] num_nodes: must be at least 2' in problems
    assert any(p.startswith('[grid] spacing') for p in problems)
    assert any(p.startswith('[model] dropout_rate') for p in problems)
    assert str(e.value) == '; '.join(problems)


@pytest.mark.parametrize(
    'text,match',
    [
        ('[paths]\ndata = missing.csv\n', 'does not exist'),
        ('[metrics]\ntau1 = 5\ntau2 = 2\n', 'larger than tau1'),
        ('[metrics]\ncdauc_weighting = uno\n', 'must be one of km, ipcw'),
        ('[grid]\nt_max = 5\nt_min = 10\n', 'smaller than t_max'),
        ('[model]\nencoder_layers =\n    8\n    0\n', 'positive'),
        ('[loss]\nlambda = -1\n', 'negative'),
        ('[model]\nbidirectional = maybe\n', 'invalid value'),
        ('[schema]\ncategorical_columns = time\n', 'schema'),
        ('lambda = 1\n', 'syntax'),
    ]
)
def test_invalid(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_string(text, base=tmp_path)


def test_from_file_missing(tmp_path):
    with pytest.raises(ConfigError, match='does not exist'):
        RunConfig.from_file(tmp_path / 'run.ini')


def test_config_hash(run_config, fixtures_dir):
    again = RunConfig.from_string(run_config.to_ini(), base=fixtures_dir)
    assert again.config_hash == run_config.config_hash
    assert again.model == run_config.model

    # Formatting and comments do not matter, values do.
    a = RunConfig.from_string('[loss]\nlambda = 1\n')
    b = RunConfig.from_string('# comment\n[loss]\nlambda   =   1.0\n\n[grid]\n')
    assert a.config_hash == b.config_hash == RunConfig().config_hash
    assert RunConfig.from_string('[loss]\nlambda = 0.9\n').config_hash != a.config_hash


def test_write_source(run_config, fixtures_dir, tmp_path):
    p = run_config.write_source(tmp_path / 'out')
    assert p.read_text(encoding='utf-8') == (fixtures_dir / 'run.ini').read_text(encoding='utf-8')

    p = RunConfig().write_source(tmp_path)
    assert RunConfig.from_string(p.read_text(encoding='utf-8')).config_hash == \
        RunConfig().config_hash
