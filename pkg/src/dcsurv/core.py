"""
Domain types shared by all modules, the Kaplan-Meier estimator and the transformations between
hazards, survival curves and arbitrary evaluation times.
"""
import enum
import typing

import attr
import numpy as np

__all__ = [
    'DomainError', 'Spacing',
    'SurvivalRecord', 'SurvivalDataset', 'TimeGrid', 'HazardSequence', 'SurvivalCurve',
    'KaplanMeierCurve',
    'survival_from_hazards', 'kaplan_meier', 'interpolate_curve', 'interpolation_weights',
    'interpolation_brackets', 'node_weights', 'anchored']


class DomainError(ValueError):
    pass


class Spacing(enum.Enum):
    linear = 'linear'
    logarithmic = 'logarithmic'
    quantile = 'quantile'


def frozen_array(dtype=np.float64, ndim=None):
    def convert(value):
        res = np.array(value, dtype=dtype)
        if ndim is not None and res.ndim != ndim:
            raise DomainError('Expected {}-dimensional array, got shape {}'.format(ndim, res.shape))
        res.setflags(write=False)
        return res
    return convert


def _positive_finite(instance, attribute, value):
    if not (np.all(np.isfinite(value)) and np.all(value > 0)):
        raise DomainError('{} must be positive and finite'.format(attribute.name))


@attr.s(frozen=True)
class SurvivalRecord:
    """
    Observation of one individual.

    :ivar features: feature vector after preprocessing.
    :ivar float time: observed time `z = min(t, c)`.
    :ivar bool event: `True` if the event was observed, `False` if right-censored.
    """
    features = attr.ib(converter=frozen_array(ndim=1), eq=False)
    time = attr.ib(converter=float, validator=_positive_finite)
    event = attr.ib(converter=bool)


@attr.s(frozen=True, eq=False)
class SurvivalDataset:
    """
    A dataset of right-censored observations, stored column-wise.

    :ivar features: `(n, p)` array of preprocessed features.
    :ivar times: observed times `z_i`.
    :ivar events: event indicators `d_i`.
    :ivar feature_names: names of the `p` feature columns.
    """
    features = attr.ib(converter=frozen_array(ndim=2))
    times = attr.ib(converter=frozen_array(ndim=1), validator=_positive_finite)
    events = attr.ib(converter=frozen_array(dtype=bool, ndim=1))
    feature_names = attr.ib(converter=tuple, default=())

    def __attrs_post_init__(self):
        n = len(self.times)
        if self.features.shape[0] != n or len(self.events) != n:
            raise DomainError('features, times and events must have the same length')
        if self.feature_names and len(self.feature_names) != self.features.shape[1]:
            raise DomainError('number of feature names does not match feature dimension')
        if not np.all(np.isfinite(self.features)):
            raise DomainError('features must not contain missing values')

    @classmethod
    def from_records(
            cls,
            records: typing.Sequence[SurvivalRecord],
            feature_names: typing.Sequence[str] = ()) -> 'SurvivalDataset':
        dims = {len(r.features) for r in records}
        if len(dims) > 1:
            raise DomainError('records must have identical feature dimensionality')
        return cls(
            features=np.array(
                [r.features for r in records]).reshape(len(records), dims.pop() if dims else 0),
            times=[r.time for r in records],
            events=[r.event for r in records],
            feature_names=feature_names)

    @classmethod
    def from_times(cls, times, events) -> 'SurvivalDataset':
        """
        A dataset without features, e.g. for comparison counting or grid construction.
        """
        return cls(features=np.zeros((len(times), 0)), times=times, events=events)

    def __len__(self):
        return len(self.times)

    @property
    def records(self) -> typing.List[SurvivalRecord]:
        return [
            SurvivalRecord(features=x, time=t, event=d)
            for x, t, d in zip(self.features, self.times, self.events)]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def censoring_rate(self) -> float:
        if not len(self):
            raise DomainError('censoring rate of an empty dataset is undefined')
        return float(np.mean(~self.events))

    def subset(self, indices) -> 'SurvivalDataset':
        indices = np.asarray(indices, dtype=int)
        return attr.evolve(
            self,
            features=self.features[indices],
            times=self.times[indices],
            events=self.events[indices])


@attr.s(frozen=True, eq=False)
class TimeGrid:
    """
    Ordered discrete prediction times `t_1 < ... < t_L`.
    """
    nodes = attr.ib(converter=frozen_array(ndim=1), validator=_positive_finite)
    spacing = attr.ib(converter=Spacing, default=Spacing.linear)

    @nodes.validator
    def _check_nodes(self, attribute, value):
        if len(value) < 2:
            raise DomainError('a time grid needs at least two nodes')
        if not np.all(np.diff(value) > 0):
            raise DomainError('time grid nodes must be strictly increasing')

    def __len__(self):
        return len(self.nodes)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) \
            and len(self) == len(other) and bool(np.all(self.nodes == other.nodes))

    def __hash__(self):
        return hash(tuple(self.nodes))

    @property
    def t_max(self) -> float:
        return float(self.nodes[-1])


class _Batch:
    """
    Values on a grid, for one individual (1-D) or a batch of individuals (2-D).
    """
    def __len__(self):
        if self.values.ndim == 1:
            raise TypeError('single-individual values have no len()')
        return self.values.shape[0]

    def __getitem__(self, item):
        return attr.evolve(self, values=np.atleast_1d(self.values[item]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def matrix(self) -> np.ndarray:
        return np.atleast_2d(self.values)

    def _check_values(self, attribute, value):
        if value.ndim not in (1, 2) or value.shape[-1] != len(self.grid):
            raise DomainError(
                'values of shape {} do not match a grid with {} nodes'.format(
                    value.shape, len(self.grid)))


@attr.s(frozen=True, eq=False)
class HazardSequence(_Batch):
    """
    Discrete hazards `h_1..h_L` on a grid.
    """
    grid = attr.ib(validator=attr.validators.instance_of(TimeGrid))
    values = attr.ib(converter=frozen_array())

    @values.validator
    def _check(self, attribute, value):
        self._check_values(attribute, value)
        if not (np.all(value >= 0) and np.all(value <= 1)):
            raise DomainError('hazards must lie in [0, 1]')


@attr.s(frozen=True, eq=False)
class SurvivalCurve(_Batch):
    """
    Survival probabilities `S(t_1|x)..S(t_L|x)` on a grid.
    """
    grid = attr.ib(validator=attr.validators.instance_of(TimeGrid))
    values = attr.ib(converter=frozen_array())

    @values.validator
    def _check(self, attribute, value):
        self._check_values(attribute, value)
        if not (np.all(value >= 0) and np.all(value <= 1)):
            raise DomainError('survival values must lie in [0, 1]')
        if np.any(np.diff(value, axis=-1) > 0):
            raise DomainError('survival curves must be non-increasing')

    @classmethod
    def from_curves(cls, curves: typing.Sequence['SurvivalCurve']) -> 'SurvivalCurve':
        grids = {c.grid for c in curves}
        if len(grids) != 1:
            raise DomainError('curves must share one grid')
        return cls(grid=grids.pop(), values=np.stack([c.values for c in curves]))


@attr.s(frozen=True, eq=False)
class KaplanMeierCurve:
    """
    Product-limit estimate: a right-continuous step function, dropping at `event_times`.
    """
    event_times = attr.ib(converter=frozen_array(ndim=1))
    survival = attr.ib(converter=frozen_array(ndim=1))

    def at(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        idx = np.searchsorted(self.event_times, times, side='right')
        return np.concatenate([[1.0], self.survival])[idx]


def survival_from_hazards(h: HazardSequence) -> SurvivalCurve:
    """
    `S(t_l) = prod_{j <= l} (1 - h_j)`
    """
    values = np.asarray(h.values, dtype=float)
    if not (np.all(values >= 0) and np.all(values <= 1)):
        raise DomainError('hazards must lie in [0, 1]')
    return SurvivalCurve(grid=h.grid, values=np.cumprod(1.0 - values, axis=-1))


def kaplan_meier(data: SurvivalDataset) -> KaplanMeierCurve:
    if not len(data):
        raise DomainError('Kaplan-Meier estimate of an empty dataset is undefined')
    event_times, deaths = np.unique(data.times[data.events], return_counts=True)
    at_risk = len(data) - np.searchsorted(np.sort(data.times), event_times, side='left')
    return KaplanMeierCurve(
        event_times=event_times,
        survival=np.cumprod(1.0 - deaths / at_risk))


def interpolation_brackets(
        grid: TimeGrid,
        times: typing.Iterable[float]) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Locate times between the knots `0, t_1, ..., t_L`.

    :return: Pair `(left, frac)`: the value at `times[m]` is \
    `(1 - frac[m]) * S(knot[left[m]]) + frac[m] * S(knot[left[m] + 1])` with `S(0) = 1`. Times \
    beyond `t_L` are clamped to `t_L`.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    knots = np.concatenate([[0.0], grid.nodes])
    clamped = np.clip(times, 0.0, grid.nodes[-1])
    left = np.minimum(np.searchsorted(knots, clamped, side='right') - 1, len(grid) - 1)
    return left, (clamped - knots[left]) / (knots[left + 1] - knots[left])


def interpolation_weights(
        grid: TimeGrid,
        times: typing.Iterable[float]) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Linear interpolation as a linear operator on curve values.

    Before `t_1` we interpolate towards the anchor `S(0) = 1`, beyond `t_L` values are clamped.

    :return: A pair `(W, offset)` with `W` of shape `(len(times), L)`, such that the curve value \
    at `times[m]` is `W[m] @ values + offset[m]`.
    """
    left, frac = interpolation_brackets(grid, times)
    rows = np.arange(len(left))
    weights = np.zeros((len(left), len(grid) + 1))
    weights[rows, left] = 1.0 - frac
    weights[rows, left + 1] += frac
    return weights[:, 1:], weights[:, 0]


def node_weights(
        grid: TimeGrid,
        times: typing.Iterable[float]) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Lookup of the discretized node `l` (smallest `t_l >= t`) in the form of `interpolation_weights`.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    idx = np.minimum(np.searchsorted(grid.nodes, times, side='left'), len(grid) - 1)
    weights = np.zeros((len(times), len(grid)))
    weights[np.arange(len(times)), idx] = 1.0
    return weights, np.zeros(len(times))


def anchored(values: np.ndarray) -> np.ndarray:
    """
    Curve values with `S(0) = 1` prepended along the last axis.
    """
    values = np.asarray(values, dtype=float)
    return np.concatenate([np.ones(values.shape[:-1] + (1,)), values], axis=-1)


def interpolate_curve(curve: SurvivalCurve, eval_times: typing.Iterable[float]) -> np.ndarray:
    """
    Evaluate a curve (or batch of curves) at arbitrary times.

    Each value is computed element-wise, so identical curves yield identical values.

    :return: Array of shape `(len(eval_times),)` or `(n, len(eval_times))` for batches.
    """
    left, frac = interpolation_brackets(curve.grid, eval_times)
    values = anchored(curve.values)
    return values[..., left] * (1.0 - frac) + values[..., left + 1] * frac
