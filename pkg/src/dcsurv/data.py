"""
Ingestion of survival data from CSV, preprocessing, synthetic datasets and stratified splits.

CSV files are UTF-8 with a header row. An empty cell is a missing value. The event column must
contain `0` (censored) or `1` (event), the time column positive numbers.
"""
import math
import typing
import pathlib
import warnings
import collections

import attr
import numpy as np
from csvw import dsv

from dcsurv.core import DomainError, SurvivalDataset, frozen_array

__all__ = [
    'DISTRIBUTIONS', 'CENSORING_MODES',
    'DatasetSchema', 'RawTable', 'NumericStats', 'CategoricalStats', 'PreprocessStats',
    'load_csv', 'fit_preprocess', 'apply_preprocess', 'encode_features', 'generate_synthetic',
    'write_csv', 'write_table', 'stratified_indices', 'stratified_split', 'evaluation_times']

DISTRIBUTIONS = ('uniform', 'weibull', 'clusters')
CENSORING_MODES = ('uniform', 'skewed', 'competing')
MIN_TIME = 1e-6


@attr.s(frozen=True)
class DatasetSchema:
    """
    :ivar time_column: Name of the column holding observed times.
    :ivar event_column: Name of the column holding event indicators.
    :ivar categorical_columns: Feature columns to one-hot encode. All other columns are numeric.
    :ivar zero_as_missing_columns: Numeric columns in which `0` marks a missing value.
    :ivar time_unit: Unit of the time column, recorded for provenance only.
    """
    time_column = attr.ib(default='time')
    event_column = attr.ib(default='event')
    categorical_columns = attr.ib(converter=tuple, default=())
    zero_as_missing_columns = attr.ib(converter=tuple, default=())
    time_unit = attr.ib(default=None)

    def __attrs_post_init__(self):
        if self.time_column == self.event_column:
            raise DomainError('time and event column must differ')
        labels = {self.time_column, self.event_column}
        clashes = sorted(
            labels.intersection(self.categorical_columns + self.zero_as_missing_columns))
        if clashes:
            raise DomainError('label columns used as features: {}'.format(', '.join(clashes)))
        both = sorted(set(self.categorical_columns).intersection(self.zero_as_missing_columns))
        if both:
            raise DomainError(
                'columns both categorical and zero-as-missing: {}'.format(', '.join(both)))


@attr.s(frozen=True, eq=False)
class RawTable:
    """
    Rows of a survival CSV before preprocessing.

    :ivar columns: Feature column names in file order.
    :ivar rows: One tuple of cells per record. Numeric cells are `float`, categorical cells `str`, \
    missing cells `None`.
    """
    schema = attr.ib(validator=attr.validators.instance_of(DatasetSchema))
    columns = attr.ib(converter=tuple)
    rows = attr.ib(converter=tuple)
    times = attr.ib(converter=frozen_array(ndim=1))
    events = attr.ib(converter=frozen_array(dtype=bool, ndim=1))

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def subset(self, indices) -> 'RawTable':
        indices = np.asarray(indices, dtype=int)
        return attr.evolve(
            self,
            rows=[self.rows[i] for i in indices],
            times=self.times[indices],
            events=self.events[indices])

    @property
    def labels(self) -> SurvivalDataset:
        return SurvivalDataset.from_times(self.times, self.events)


def _parse_number(value: str, column: str, lineno: int) -> float:
    try:
        res = float(value)
    except ValueError:
        raise DomainError('line {}: column {}: not a number: {!r}'.format(lineno, column, value))
    if not math.isfinite(res):
        raise DomainError('line {}: column {}: not a finite number'.format(lineno, column))
    return res


def load_csv(
        path: typing.Union[str, pathlib.Path],
        schema: typing.Optional[DatasetSchema] = None) -> RawTable:
    """
    Read a survival CSV file.

    :raises DomainError: for malformed rows (reporting the line number), missing columns, \
    non-positive times or event indicators other than `0`/`1`.
    """
    schema = schema or DatasetSchema()
    path = pathlib.Path(path)
    if not path.exists():
        raise DomainError('{} does not exist'.format(path))
    header, rows, times, events = None, [], [], []
    for lineno, row in enumerate(dsv.reader(path), start=1):
        if header is None:
            header = [c.strip() for c in row]
            missing = [
                c for c in
                (schema.time_column, schema.event_column)
                + schema.categorical_columns + schema.zero_as_missing_columns
                if c not in header]
            if missing:
                raise DomainError('{}: missing columns: {}'.format(path, ', '.join(missing)))
            if len(set(header)) != len(header):
                raise DomainError('{}: duplicate column names'.format(path))
            features = [
                (i, c) for i, c in enumerate(header)
                if c not in (schema.time_column, schema.event_column)]
            time_index = header.index(schema.time_column)
            event_index = header.index(schema.event_column)
            continue
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DomainError('line {}: expected {} cells, got {}'.format(
                lineno, len(header), len(row)))
        row = [cell.strip() for cell in row]

        if row[event_index] not in ('0', '1'):
            raise DomainError('line {}: event indicator must be 0 or 1, got {!r}'.format(
                lineno, row[event_index]))
        if not row[time_index]:
            raise DomainError('line {}: missing time'.format(lineno))
        time = _parse_number(row[time_index], schema.time_column, lineno)
        if time <= 0:
            raise DomainError('line {}: time must be positive, got {}'.format(lineno, time))

        cells = []
        for i, name in features:
            value = row[i] or None
            if value is not None and name not in schema.categorical_columns:
                value = _parse_number(value, name, lineno)
                if value == 0 and name in schema.zero_as_missing_columns:
                    value = None
            cells.append(value)
        rows.append(tuple(cells))
        times.append(time)
        events.append(row[event_index] == '1')
    if header is None:
        raise DomainError('{}: no header row'.format(path))
    return RawTable(
        schema=schema,
        columns=[name for _, name in features],
        rows=rows,
        times=np.array(times, dtype=float),
        events=np.array(events, dtype=bool))


@attr.s(frozen=True)
class NumericStats:
    name = attr.ib()
    median = attr.ib(converter=float)
    mean = attr.ib(converter=float)
    std = attr.ib(converter=float)

    @property
    def feature_names(self) -> typing.List[str]:
        return [self.name]

    def encode(self, values: typing.Sequence) -> np.ndarray:
        column = np.array([self.median if v is None else v for v in values], dtype=float)
        return ((column - self.mean) / self.std)[:, None]


@attr.s(frozen=True)
class CategoricalStats:
    name = attr.ib()
    mode = attr.ib()
    vocabulary = attr.ib(converter=tuple)

    @property
    def feature_names(self) -> typing.List[str]:
        return ['{}={}'.format(self.name, v) for v in self.vocabulary]

    def encode(self, values: typing.Sequence) -> np.ndarray:
        res = np.zeros((len(values), len(self.vocabulary)))
        index = {v: i for i, v in enumerate(self.vocabulary)}
        unseen = collections.Counter()
        for row, value in enumerate(values):
            value = self.mode if value is None else value
            if value in index:
                res[row, index[value]] = 1.0
            else:
                unseen.update([value])
        if unseen:
            warnings.warn('column {}: unseen categories encoded as all-zero: {}'.format(
                self.name, ', '.join(sorted(unseen))))
        return res


@attr.s(frozen=True)
class PreprocessStats:
    """
    Imputation, standardization and encoding parameters fitted on training data.

    :ivar columns: `NumericStats` or `CategoricalStats`, in file order.
    :ivar dropped: Columns removed at fit time (constant or entirely missing).
    """
    columns = attr.ib(converter=tuple)
    dropped = attr.ib(converter=tuple, default=())

    @property
    def feature_names(self) -> typing.List[str]:
        return [name for col in self.columns for name in col.feature_names]

    def to_dict(self) -> dict:
        return collections.OrderedDict([
            ('columns', [
                collections.OrderedDict(
                    [('kind', 'numeric' if isinstance(col, NumericStats) else 'categorical')]
                    + list(attr.asdict(col, recurse=False).items()))
                for col in self.columns]),
            ('dropped', list(self.dropped)),
        ])

    @classmethod
    def from_dict(cls, d: dict) -> 'PreprocessStats':
        columns = []
        for col in d['columns']:
            col = dict(col)
            kind = col.pop('kind')
            columns.append(NumericStats(**col) if kind == 'numeric' else CategoricalStats(**col))
        return cls(columns=columns, dropped=d.get('dropped', []))


def fit_preprocess(table: RawTable, log=None) -> PreprocessStats:
    """
    Fit medians, means and (population) standard deviations of numeric columns on the imputed
    values, and modes and vocabularies of categorical columns.

    Columns which are constant after imputation, or entirely missing, are dropped with a warning.
    """
    if not len(table):
        raise DomainError('cannot fit preprocessing on an empty table')
    columns, dropped = [], []
    for name in table.columns:
        values = table.column(name)
        present = [v for v in values if v is not None]
        if not present:
            warnings.warn('column {} is entirely missing and dropped'.format(name))
            dropped.append(name)
            continue
        if name in table.schema.categorical_columns:
            counts = collections.Counter(present)
            mode = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
            columns.append(CategoricalStats(name=name, mode=mode, vocabulary=sorted(counts)))
        else:
            median = float(np.median(present))
            imputed = np.array([median if v is None else v for v in values], dtype=float)
            std = float(imputed.std())
            if std == 0:
                warnings.warn('column {} is constant and dropped'.format(name))
                dropped.append(name)
                continue
            columns.append(NumericStats(name=name, median=median, mean=imputed.mean(), std=std))
        if log:
            log.info('fitted preprocessing for column {}'.format(name))
    return PreprocessStats(columns=columns, dropped=dropped)


def encode_features(table: RawTable, stats: PreprocessStats) -> np.ndarray:
    """
    :raises DomainError: if fitted columns are missing from the table, or the table has \
    columns the preprocessing does not know.
    """
    known = [col.name for col in stats.columns]
    missing = [name for name in known if name not in table.columns]
    if missing:
        raise DomainError('missing feature columns: {}'.format(', '.join(missing)))
    unknown = [
        name for name in table.columns if name not in known and name not in stats.dropped]
    if unknown:
        raise DomainError('unknown feature columns: {}'.format(', '.join(unknown)))
    parts = [col.encode(table.column(col.name)) for col in stats.columns]
    return np.concatenate(parts, axis=1) if parts else np.zeros((len(table), 0))


def apply_preprocess(table: RawTable, stats: PreprocessStats) -> SurvivalDataset:
    return SurvivalDataset(
        features=encode_features(table, stats),
        times=table.times,
        events=table.events,
        feature_names=stats.feature_names)


def _event_times(distribution, n, num_features, rng):
    if distribution == 'clusters':
        cluster = rng.integers(0, 2, size=n)
        short, long = rng.uniform(1, 30, size=n), rng.uniform(60, 100, size=n)
        return cluster[:, None].astype(float), np.where(cluster == 0, short, long), ('cluster',)

    features = rng.normal(size=(n, num_features))
    names = tuple('x{}'.format(i) for i in range(num_features))
    if distribution == 'uniform':
        return features, 100.0 * (1.0 - rng.random(n)), names
    # Weibull with shape 1.5, the scale depends on the features.
    scale = 10.0 * np.exp(features @ (np.ones(num_features) / np.sqrt(num_features)))
    return features, np.maximum(scale * rng.weibull(1.5, size=n), MIN_TIME), names


def _competing_scale(times, draws, rate):
    lo, hi = 0.0, float(np.max(times) / np.min(draws)) * 2
    for _ in range(100):
        mid = (lo + hi) / 2
        if np.mean(mid * draws < times) > rate:
            lo = mid
        else:
            hi = mid
    return hi


def generate_synthetic(
        n: int,
        censoring_rate: float,
        distribution: str = 'uniform',
        censoring: str = 'uniform',
        seed: int = 0,
        num_features: int = 1,
        log=None) -> SurvivalDataset:
    """
    Draw a synthetic dataset.

    Distributions of the event times:

    - `uniform`: Uniform on (0, 100], independent of the standard normal features.
    - `weibull`: Weibull with shape 1.5 and scale `10 exp(x . beta)`.
    - `clusters`: One binary feature; cluster 0 has times Uniform(1, 30), cluster 1 \
      Uniform(60, 100).

    Censoring modes:

    - `uniform`: Each record is independently marked censored with probability `c`; observed \
      times stay as drawn.
    - `skewed`: Flags flip with a probability growing with the rank of the observed time, \
      averaging `c`.
    - `competing`: Independent censoring times `C = tau V`, `V ~ Uniform(0, 1]`, with `tau` \
      chosen such that the empirical censoring rate matches `c`; `z = min(t, C)`.
    """
    if not 0 <= censoring_rate < 1:
        raise DomainError('censoring rate must lie in [0, 1)')
    if n < 1:
        raise DomainError('n must be positive')
    if distribution not in DISTRIBUTIONS:
        raise DomainError('unknown time distribution: {}'.format(distribution))
    if censoring not in CENSORING_MODES:
        raise DomainError('unknown censoring mode: {}'.format(censoring))
    rng = np.random.default_rng(seed)
    features, times, names = _event_times(distribution, n, num_features, rng)
    draws = 1.0 - rng.random(n)
    c = censoring_rate

    if censoring == 'uniform':
        censored = draws <= c
    elif censoring == 'skewed':
        if c == 0:
            censored = np.zeros(n, dtype=bool)
        else:
            k = min(1.0, 1.0 / c - 1.0)
            ranks = (np.argsort(np.argsort(times)) + 0.5) / n
            censored = draws <= c * (k + 1) * ranks ** k
    else:
        if c == 0:
            censored = np.zeros(n, dtype=bool)
        else:
            limits = _competing_scale(times, draws, c) * draws
            censored = limits < times
            times = np.where(censored, limits, times)

    res = SurvivalDataset(features=features, times=times, events=~censored, feature_names=names)
    if log:
        log.info('generated {} records ({} times, {} censoring), censoring rate {:.3f}'.format(
            n, distribution, censoring, res.censoring_rate))
    return res


def write_csv(
        data: SurvivalDataset,
        path: typing.Union[str, pathlib.Path],
        time_column: str = 'time',
        event_column: str = 'event') -> pathlib.Path:
    """
    Write a dataset in the format read by `load_csv`.
    """
    path = pathlib.Path(path)
    names = list(data.feature_names) or ['x{}'.format(i) for i in range(data.num_features)]
    with dsv.UnicodeWriter(path) as w:
        w.writerow(names + [time_column, event_column])
        for x, t, d in zip(data.features, data.times, data.events):
            w.writerow([repr(float(v)) for v in x] + [repr(float(t)), '1' if d else '0'])
    return path


def write_table(table: RawTable, path: typing.Union[str, pathlib.Path]) -> pathlib.Path:
    """
    Write raw records in the format read by `load_csv`. Missing cells are written empty.
    """
    path = pathlib.Path(path)
    with dsv.UnicodeWriter(path) as w:
        w.writerow(list(table.columns) + [table.schema.time_column, table.schema.event_column])
        for row, t, d in zip(table.rows, table.times, table.events):
            w.writerow(
                ['' if v is None else (repr(v) if isinstance(v, float) else v) for v in row]
                + [repr(float(t)), '1' if d else '0'])
    return path


def stratified_indices(
        events: typing.Sequence[bool],
        test_fraction: float,
        seed: int = 0) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Split record indices into training and test part, stratified by event indicator.

    The RNG stream is `np.random.default_rng(seed)`, drawing one permutation of the event records
    and then one of the censored records (each in ascending index order). The first
    `floor(test_fraction * size + 0.5)` indices of each permutation go into the test part.
    """
    if not 0 < test_fraction < 1:
        raise DomainError('test fraction must lie in (0, 1)')
    events = np.asarray(events, dtype=bool)
    rng = np.random.default_rng(seed)
    test = []
    for flag in (True, False):
        stratum = rng.permutation(np.flatnonzero(events == flag))
        test.extend(stratum[:int(math.floor(test_fraction * len(stratum) + 0.5))])
    test = np.sort(np.array(test, dtype=int))
    train = np.setdiff1d(np.arange(len(events)), test)
    if not len(test) or not len(train):
        raise DomainError('too few records ({}) to stratify'.format(len(events)))
    return train, test


def stratified_split(data, test_fraction: float, seed: int = 0):
    """
    :param data: `SurvivalDataset` or `RawTable`.
    :return: Pair `(train, test)` of the same type as `data`.
    """
    train, test = stratified_indices(data.events, test_fraction, seed=seed)
    return data.subset(train), data.subset(test)


def evaluation_times(data: SurvivalDataset, mode: str = 'all') -> np.ndarray:
    """
    Shared evaluation times for predictions: distinct observed times (`all`) or distinct event
    times (`events`).
    """
    if mode not in ('all', 'events'):
        raise DomainError('unknown evaluation time mode: {}'.format(mode))
    times = data.times if mode == 'all' else data.times[data.events]
    if not len(times):
        raise DomainError('no {} times to evaluate at'.format(
            'event' if mode == 'events' else 'observed'))
    return np.unique(times)
