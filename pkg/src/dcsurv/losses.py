"""
Calibration (RPS) and discrimination (kernel) losses, their normalized combination, and the
analytics of how many pairwise comparisons each kernel variant admits.

All loss functions accept survival values either as `SurvivalCurve` (returning a `float`) or as
a `Tensor` of shape `(n, L)` (returning a scalar `Tensor` that can be differentiated).
"""
import enum
import typing

import attr
import numpy as np

from dcsurv.core import (
    DomainError, SurvivalDataset, SurvivalCurve, TimeGrid, interpolation_weights, node_weights,
)
from dcsurv.grids import discretize
from dcsurv.data import generate_synthetic
from dcsurv.numerics import Tensor

__all__ = [
    'KernelVariant', 'KernelEvaluation', 'ComparisonMask', 'LossConfig', 'ComparisonCounts',
    'SweepPoint',
    'build_mask', 'count_comparisons', 'rps_loss', 'kernel_loss', 'combined_loss', 'kamran_loss',
    'estimate_comparison_probability', 'comparison_factor', 'censoring_sweep']


class KernelVariant(enum.Enum):
    ee_only = 'ee'  # masking matrix A
    ee_and_ec = 'ee_ec'  # masking matrix B


class KernelEvaluation(enum.Enum):
    interpolate = 'interpolate'
    node = 'node'


@attr.s(frozen=True, eq=False)
class ComparisonMask:
    """
    Sparse masking matrix as parallel arrays of (0-based) row and column indices.

    Every pair `(i, j)` satisfies `d_i = 1` and `z_i < z_j` (and `d_j = 1` for `ee_only`).
    """
    first = attr.ib(converter=lambda v: np.asarray(v, dtype=int))
    second = attr.ib(converter=lambda v: np.asarray(v, dtype=int))
    variant = attr.ib(converter=KernelVariant)

    def __len__(self):
        return len(self.first)

    @property
    def pairs(self) -> typing.Set[typing.Tuple[int, int]]:
        return set(zip(self.first.tolist(), self.second.tolist()))


def _non_negative(instance, attribute, value):
    if value < 0:
        raise DomainError('{} must not be negative'.format(attribute.name))


def _positive(instance, attribute, value):
    if not value > 0:
        raise DomainError('{} must be positive'.format(attribute.name))


@attr.s(frozen=True)
class LossConfig:
    """
    :ivar lambda_: Weight of the kernel term.
    :ivar sigma: Kernel bandwidth; large values emphasize spreading of the predictions.
    :ivar kernel_variant: `ee_ec` (DCS) or `ee` (event-to-event only).
    :ivar normalized: Normalize both terms (DCS objective). If `False`, the loss is \
    `L_RPS + lambda * L_kernel`.
    :ivar kernel_evaluation: How `S(z_i|x)` is read off the discrete curve.
    """
    lambda_ = attr.ib(converter=float, default=1.0, validator=_non_negative)
    sigma = attr.ib(converter=float, default=1.0, validator=_positive)
    kernel_variant = attr.ib(converter=KernelVariant, default=KernelVariant.ee_and_ec)
    normalized = attr.ib(converter=bool, default=True)
    kernel_evaluation = attr.ib(converter=KernelEvaluation, default=KernelEvaluation.interpolate)


def build_mask(data: SurvivalDataset, variant=KernelVariant.ee_and_ec) -> ComparisonMask:
    """
    Enumerate all comparable pairs. Ties `z_i = z_j` are never comparable.
    """
    variant = KernelVariant(variant)
    z, d = data.times, data.events
    mask = d[:, None] & (z[:, None] < z[None, :])
    if variant == KernelVariant.ee_only:
        mask &= d[None, :]
    first, second = np.nonzero(mask)
    return ComparisonMask(first=first, second=second, variant=variant)


def count_comparisons(data: SurvivalDataset, variant=KernelVariant.ee_and_ec) -> int:
    """
    Size of the mask `build_mask(data, variant)`, computed by sorting instead of enumeration.
    """
    variant = KernelVariant(variant)
    pool = data.times if variant == KernelVariant.ee_and_ec else data.times[data.events]
    pool = np.sort(pool)
    event_times = data.times[data.events]
    return int(np.sum(len(pool) - np.searchsorted(pool, event_times, side='right')))


def _survival_values(curves, grid: typing.Optional[TimeGrid]) -> typing.Tuple[Tensor, TimeGrid]:
    if isinstance(curves, Tensor):
        if grid is None:
            raise DomainError('a time grid is required to evaluate losses on tensors')
        values = curves
    else:
        if isinstance(curves, (list, tuple)):
            curves = SurvivalCurve.from_curves(curves)
        if grid is not None and curves.grid != grid:
            raise DomainError('curves are not evaluated on the given time grid')
        grid = curves.grid
        values = Tensor(curves.matrix)
    if values.ndim != 2 or values.shape[1] != len(grid):
        raise DomainError('survival values of shape {} do not match a grid with {} nodes'.format(
            values.shape, len(grid)))
    return values, grid


def _result(value: Tensor, curves):
    return value if isinstance(curves, Tensor) else value.item()


def _check_size(values: Tensor, data: SurvivalDataset):
    if values.shape[0] != len(data):
        raise DomainError('{} curves for {} records'.format(values.shape[0], len(data)))


def rps_loss(curves, data: SurvivalDataset, grid: typing.Optional[TimeGrid] = None):
    """
    Unnormalized rank probability score.

    Uncensored records are compared to a step dropping from 1 to 0 at their discretized event
    index `l_i`; censored records are compared to 1 up to and including `l_i`.
    """
    values, grid = _survival_values(curves, grid)
    _check_size(values, data)
    nodes = np.arange(1, len(grid) + 1)[None, :]
    idx = np.asarray(discretize(data.times, grid))[:, None]
    target = (nodes < idx).astype(float)
    target[~data.events] = 1.0
    weight = np.where(data.events[:, None], 1.0, (nodes <= idx).astype(float))
    return _result((((values - target) ** 2) * weight).sum(), curves)


def _pairwise_survival(values: Tensor, data: SurvivalDataset, grid: TimeGrid, evaluation):
    # M[k, i] = S(z_i | x_k)
    weights = interpolation_weights \
        if KernelEvaluation(evaluation) == KernelEvaluation.interpolate else node_weights
    w, offset = weights(grid, data.times)
    return values @ w.T + offset[None, :]


def kernel_loss(
        curves,
        data: SurvivalDataset,
        mask: ComparisonMask,
        sigma: float,
        grid: typing.Optional[TimeGrid] = None,
        evaluation=KernelEvaluation.interpolate):
    """
    Unnormalized kernel loss `sum_{(i,j) in mask} exp(-(S(z_i|x_j) - S(z_i|x_i)) / sigma)`.

    An empty mask contributes 0.
    """
    if not sigma > 0:
        raise DomainError('sigma must be positive')
    values, grid = _survival_values(curves, grid)
    _check_size(values, data)
    if not len(mask):
        return _result(values.sum() * 0.0, curves)
    pairwise = _pairwise_survival(values, data, grid, evaluation)
    margin = pairwise[mask.second, mask.first] - pairwise[mask.first, mask.first]
    return _result((margin * (-1.0 / sigma)).exp().sum(), curves)


def kamran_loss(curves, data: SurvivalDataset, grid: typing.Optional[TimeGrid] = None,
                lambda_: float = 1.0, sigma: float = 1.0):
    """
    The unnormalized objective `L_RPS + lambda * L_kernel` with event-to-event comparisons only.
    """
    return combined_loss(
        curves, data, grid,
        LossConfig(lambda_=lambda_, sigma=sigma, kernel_variant=KernelVariant.ee_only,
                   normalized=False))


def combined_loss(curves, data: SurvivalDataset, grid: typing.Optional[TimeGrid] = None,
                  cfg: typing.Optional[LossConfig] = None):
    """
    The DCS objective `L_RPS / (n L) + lambda / n_comp * L_kernel`.

    `n`, `L` and `n_comp` refer to the records passed in, i.e. to the minibatch during training.
    The kernel term is 0 when there are no comparable pairs.
    """
    cfg = cfg or LossConfig()
    values, grid = _survival_values(curves, grid)
    rps = rps_loss(values, data, grid)
    mask = build_mask(data, cfg.kernel_variant)
    kernel = kernel_loss(values, data, mask, cfg.sigma, grid, evaluation=cfg.kernel_evaluation)
    if cfg.normalized:
        loss = rps * (1.0 / (len(data) * len(grid)))
        if len(mask):
            loss = loss + kernel * (cfg.lambda_ / len(mask))
    else:
        loss = rps + kernel * cfg.lambda_
    return _result(loss, curves)


def estimate_comparison_probability(c: float, variant=KernelVariant.ee_and_ec) -> float:
    """
    Probability that a random ordered pair is comparable, if censoring flags are independent of
    the observed times: `(1 - c)^2 / 2` for event-to-event pairs, `(1 - c) / 2` including
    event-to-censoring pairs.
    """
    if not 0 <= c < 1:
        raise DomainError('censoring rate must lie in [0, 1)')
    if KernelVariant(variant) == KernelVariant.ee_only:
        return (1 - c) ** 2 / 2
    return (1 - c) / 2


@attr.s(frozen=True)
class ComparisonCounts:
    """
    :ivar n_ee: `|A|`, number of event-to-event comparisons.
    :ivar n_ee_ec: `|B|`, number of event-to-event plus event-to-censoring comparisons.
    :ivar f_observed: `|B| / |A|`, `None` if `|A| = 0`.
    :ivar f_estimated: `1 / (1 - c)`, `None` if all records are censored.
    """
    n = attr.ib()
    censoring_rate = attr.ib()
    n_ee = attr.ib()
    n_ee_ec = attr.ib()
    f_observed = attr.ib()
    f_estimated = attr.ib()

    def to_dict(self) -> dict:
        return attr.asdict(self)


def comparison_factor(data: SurvivalDataset) -> ComparisonCounts:
    n_ee = count_comparisons(data, KernelVariant.ee_only)
    n_ee_ec = count_comparisons(data, KernelVariant.ee_and_ec)
    c = data.censoring_rate
    return ComparisonCounts(
        n=len(data),
        censoring_rate=c,
        n_ee=n_ee,
        n_ee_ec=n_ee_ec,
        f_observed=n_ee_ec / n_ee if n_ee else None,
        f_estimated=1 / (1 - c) if c < 1 else None)


@attr.s(frozen=True)
class SweepPoint:
    """
    Observed and estimated comparison counts for one synthetic dataset, normalized by `n^2`.
    """
    target_rate = attr.ib()
    counts = attr.ib()
    observed_ee = attr.ib()
    observed_ee_ec = attr.ib()
    estimated_ee = attr.ib()
    estimated_ee_ec = attr.ib()

    def as_row(self) -> typing.List:
        return [
            self.target_rate,
            self.counts.censoring_rate,
            self.observed_ee,
            self.estimated_ee,
            self.observed_ee_ec,
            self.estimated_ee_ec,
            self.counts.f_observed,
            self.counts.f_estimated,
        ]

    @staticmethod
    def header() -> typing.List[str]:
        return [
            'target_censoring_rate',
            'censoring_rate',
            'ee_observed',
            'ee_estimated',
            'ee_ec_observed',
            'ee_ec_estimated',
            'f_observed',
            'f_estimated',
        ]


def censoring_sweep(
        rates: typing.Iterable[float],
        n: int = 10000,
        seed: int = 0,
        censoring: str = 'uniform',
        distribution: str = 'uniform',
        log=None) -> typing.List[SweepPoint]:
    """
    Compare observed comparison counts with their estimates across censoring rates.

    A fresh synthetic dataset is drawn for every rate, seeded with `seed + index`.
    """
    res = []
    for i, c in enumerate(rates):
        data = generate_synthetic(
            n, c, distribution=distribution, censoring=censoring, seed=seed + i)
        counts = comparison_factor(data)
        res.append(SweepPoint(
            target_rate=c,
            counts=counts,
            observed_ee=counts.n_ee / n ** 2,
            observed_ee_ec=counts.n_ee_ec / n ** 2,
            estimated_ee=estimate_comparison_probability(c, KernelVariant.ee_only),
            estimated_ee_ec=estimate_comparison_probability(c, KernelVariant.ee_and_ec)))
        if log:
            log.info('censoring rate {}: F observed {}, F estimated {}'.format(
                c, counts.f_observed, counts.f_estimated))
    return res
