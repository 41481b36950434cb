"""
Construction of prediction time grids and discretization of observed times onto them.
"""
import typing

import attr
import numpy as np

from dcsurv.core import DomainError, Spacing, SurvivalDataset, TimeGrid

__all__ = ['GridSpec', 'EventHistogram', 'build_grid', 'discretize', 'event_histogram']

LOG_GRID_MIN_ANCHOR = 1.0


def _optional_positive(instance, attribute, value):
    if value is not None and not value > 0:
        raise DomainError('{} must be positive'.format(attribute.name))


@attr.s(frozen=True)
class GridSpec:
    """
    :ivar spacing: One of `linear`, `logarithmic`, `quantile`.
    :ivar int num_nodes: Number of output nodes `L`.
    :ivar t_max: Observation window. Defaults to the maximum observed time of the data.
    :ivar t_min: Lower anchor of logarithmic grids. Defaults to the smallest positive observed \
    time, but at least 1 time unit.
    """
    spacing = attr.ib(converter=Spacing, default=Spacing.quantile)
    num_nodes = attr.ib(converter=int, default=10)
    t_max = attr.ib(default=None, validator=_optional_positive)
    t_min = attr.ib(default=None, validator=_optional_positive)

    @num_nodes.validator
    def _check_num_nodes(self, attribute, value):
        if value < 2:
            raise DomainError('a grid needs at least two nodes')


def _quantiles(times: np.ndarray, num_nodes: int) -> np.ndarray:
    # Nearest-rank quantiles at levels l/L, computed with integer arithmetic.
    times = np.sort(times)
    n = len(times)
    ranks = [-(-level * n // num_nodes) for level in range(1, num_nodes + 1)]
    return np.unique(times[np.array(ranks) - 1])


def build_grid(spec: GridSpec, data: typing.Optional[SurvivalDataset] = None) -> TimeGrid:
    """
    Build a time grid with linear, logarithmic or quantile spacing.

    Quantile grids pool event and censoring times. Tied quantiles are merged, so the grid may
    have fewer than `spec.num_nodes` nodes.
    """
    num_nodes = spec.num_nodes
    if spec.spacing == Spacing.quantile:
        if data is None or not len(data):
            raise DomainError('quantile spacing requires a non-empty dataset')
        nodes = _quantiles(data.times, num_nodes)
        if len(nodes) < 2:
            raise DomainError(
                'quantile spacing needs at least two distinct quantiles of the observed times, '
                'got only {}'.format(nodes[0]))
        return TimeGrid(nodes=nodes, spacing=spec.spacing)

    t_max = spec.t_max
    if t_max is None:
        if data is None or not len(data):
            raise DomainError('t_max must be given or derived from a non-empty dataset')
        t_max = float(np.max(data.times))
    levels = np.arange(1, num_nodes + 1) / num_nodes

    if spec.spacing == Spacing.linear:
        nodes = levels * t_max
    else:
        t_min = spec.t_min
        if t_min is None:
            if data is None or not len(data):
                raise DomainError('t_min must be given or derived from a non-empty dataset')
            t_min = max(float(np.min(data.times)), LOG_GRID_MIN_ANCHOR)
        if not t_min < t_max:
            raise DomainError('logarithmic spacing requires t_min < t_max')
        nodes = t_min * (t_max / t_min) ** levels
    nodes[-1] = t_max
    return TimeGrid(nodes=nodes, spacing=spec.spacing)


def discretize(z, grid: TimeGrid):
    """
    Map observed time(s) to the 1-based index of the smallest node `t_l >= z`, clamped to `L`.
    """
    idx = np.minimum(np.searchsorted(grid.nodes, z, side='left') + 1, len(grid))
    return int(idx) if np.ndim(idx) == 0 else idx


@attr.s(frozen=True, eq=False)
class EventHistogram:
    grid = attr.ib()
    events = attr.ib()
    censored = attr.ib()

    @property
    def totals(self) -> np.ndarray:
        return self.events + self.censored

    def iter_rows(self) -> typing.Generator[typing.Tuple[int, float, int, int, int], None, None]:
        for i, t in enumerate(self.grid.nodes):
            yield i + 1, float(t), int(self.events[i]), int(self.censored[i]), \
                int(self.totals[i])


def event_histogram(data: SurvivalDataset, grid: TimeGrid) -> EventHistogram:
    idx = np.asarray(discretize(data.times, grid)) - 1
    return EventHistogram(
        grid=grid,
        events=np.bincount(idx[data.events], minlength=len(grid)),
        censored=np.bincount(idx[~data.events], minlength=len(grid)))
