"""
Evaluation of predicted survival curves: time-dependent concordance (C-index-td), the
Kaplan-Meier weighted cumulative dynamic AUC (CDAUC), distributional divergence for calibration
(DDC) and bootstrap aggregation of all three.

CDAUC can optionally weight cases by the inverse probability of censoring.

Ties in predictions count 0.5 in both rank metrics.
"""
import typing
import collections

import attr
import numpy as np

from dcsurv.core import (
    DomainError, SurvivalDataset, SurvivalCurve, anchored, kaplan_meier, interpolate_curve,
    interpolation_brackets,
)
from dcsurv.losses import KernelVariant, count_comparisons

__all__ = [
    'METRICS', 'WEIGHTINGS', 'UndefinedMetricError', 'MetricSummary', 'EvaluationReport',
    'concordance_counts', 'cindex_td', 'censoring_weights', 'auc_at', 'cdauc',
    'own_survival', 'ddc', 'bootstrap_curves', 'bootstrap_evaluate']

METRICS = ('cindex_td', 'cdauc', 'ddc')
WEIGHTINGS = ('km', 'ipcw')


class UndefinedMetricError(DomainError):
    """
    A metric is undefined for the given data, e.g. for lack of comparable pairs or events.
    """


def _batch(curves, data: SurvivalDataset) -> SurvivalCurve:
    if isinstance(curves, (list, tuple)):
        curves = SurvivalCurve.from_curves(curves)
    if curves.values.ndim != 2 or curves.values.shape[0] != len(data):
        raise DomainError('expected one curve per record, got values of shape {}'.format(
            curves.values.shape))
    return curves


def concordance_counts(
        curves,
        data: SurvivalDataset,
        chunk_size: int = 512) -> typing.Tuple[int, int, int]:
    """
    Count comparable pairs `z_i < z_j, d_i = 1` with `S(z_i|x_i) < S(z_i|x_j)` (concordant) and
    with `S(z_i|x_i) = S(z_i|x_j)` (tied).

    :return: Triple `(concordant, tied, comparable)`.
    """
    curves = _batch(curves, data)
    cases = np.flatnonzero(data.events)
    concordant, tied, comparable = 0, 0, 0
    for start in range(0, len(cases), chunk_size):
        chunk = cases[start:start + chunk_size]
        # S(z_i | x_k) for all k and i in chunk
        values = interpolate_curve(curves, data.times[chunk])
        own = values[chunk, np.arange(len(chunk))]
        later = data.times[:, None] > data.times[chunk][None, :]
        comparable += int(later.sum())
        concordant += int((later & (values > own[None, :])).sum())
        tied += int((later & (values == own[None, :])).sum())
    return concordant, tied, comparable


def cindex_td(curves, data: SurvivalDataset) -> float:
    """
    Time-dependent concordance index.

    :raises UndefinedMetricError: if there are no comparable pairs.
    """
    concordant, tied, comparable = concordance_counts(curves, data)
    if not comparable:
        raise UndefinedMetricError('C-index-td is undefined without comparable pairs')
    return (concordant + 0.5 * tied) / comparable


def censoring_weights(data: SurvivalDataset) -> np.ndarray:
    """
    Inverse probability of censoring weights `1 / G(z_i-)`, where `G` is the Kaplan-Meier
    estimate of the censoring distribution, i.e. of the data with event indicators flipped.
    """
    censoring = kaplan_meier(attr.evolve(data, events=~data.events))
    before = np.concatenate([[1.0], censoring.survival])
    return 1.0 / before[np.searchsorted(censoring.event_times, data.times, side='left')]


def auc_at(
        curves,
        data: SurvivalDataset,
        t: float,
        weights: typing.Optional[np.ndarray] = None) -> float:
    """
    Cumulative/dynamic AUC at time `t`: cases have an event at or before `t`, controls are still
    at risk after `t`.

    :param weights: Optional per-record case weights, e.g. from `censoring_weights`.
    """
    curves = _batch(curves, data)
    scores = interpolate_curve(curves, [t])[:, 0]
    is_case = data.events & (data.times <= t)
    cases = scores[is_case]
    controls = np.sort(scores[data.times > t])
    if not len(cases) or not len(controls):
        raise UndefinedMetricError('AUC({}) is undefined without cases and controls'.format(t))
    right = np.searchsorted(controls, cases, side='right')
    left = np.searchsorted(controls, cases, side='left')
    wins = (len(controls) - right) + 0.5 * (right - left)
    if weights is None:
        return float(np.sum(wins)) / (len(cases) * len(controls))
    weights = np.asarray(weights, dtype=float)[is_case]
    return float(np.sum(weights * wins)) / (float(np.sum(weights)) * len(controls))


def _default_window(data: SurvivalDataset) -> typing.Tuple[float, float]:
    km = kaplan_meier(data)
    if not len(km.event_times):
        raise UndefinedMetricError('CDAUC is undefined without events')
    positive = km.event_times[km.survival > 0]
    if not len(positive):
        raise UndefinedMetricError('CDAUC is undefined: Kaplan-Meier estimate drops to 0 at once')
    return float(km.event_times[0]), float(positive[-1])


def cdauc(
        curves,
        data: SurvivalDataset,
        tau1: typing.Optional[float] = None,
        tau2: typing.Optional[float] = None,
        weighting: str = 'km') -> float:
    """
    AUC(t) integrated over the event times in `(tau1, tau2]`, weighted by the decrements of the
    Kaplan-Meier estimate of the evaluation data.

    `tau1` defaults to the smallest event time, `tau2` to the largest event time at which the
    Kaplan-Meier estimate is still positive. Event times at which AUC(t) is undefined are skipped
    and the remaining weights renormalized.

    With `weighting='ipcw'` the cases entering AUC(t) are weighted by `censoring_weights`, the
    integration over `t` still uses the Kaplan-Meier decrements.
    """
    if weighting not in WEIGHTINGS:
        raise DomainError('unknown CDAUC weighting {!r}, expected one of {}'.format(
            weighting, ', '.join(WEIGHTINGS)))
    curves = _batch(curves, data)
    default1, default2 = _default_window(data)
    tau1 = default1 if tau1 is None else float(tau1)
    tau2 = default2 if tau2 is None else float(tau2)
    if not tau1 < tau2:
        raise UndefinedMetricError('CDAUC requires tau1 < tau2')

    km = kaplan_meier(data)
    before = np.concatenate([[1.0], km.survival[:-1]])
    case_weights = censoring_weights(data) if weighting == 'ipcw' else None
    window = (km.event_times > tau1) & (km.event_times <= tau2)
    total, weights = 0.0, 0.0
    for t, prev, cur in zip(km.event_times[window], before[window], km.survival[window]):
        try:
            auc = auc_at(curves, data, t, weights=case_weights)
        except UndefinedMetricError:
            continue
        total += auc * (prev - cur)
        weights += prev - cur
    if weights <= 0:
        raise UndefinedMetricError(
            'CDAUC is undefined: no Kaplan-Meier mass in ({}, {}]'.format(tau1, tau2))
    return total / weights


def own_survival(curves, data: SurvivalDataset) -> np.ndarray:
    """
    :return: `S(z_i|x_i)` for every record.
    """
    curves = _batch(curves, data)
    left, frac = interpolation_brackets(curves.grid, data.times)
    values, rows = anchored(curves.values), np.arange(len(data))
    return values[rows, left] * (1.0 - frac) + values[rows, left + 1] * frac


def ddc(curves, data: SurvivalDataset, num_bins: int = 10) -> float:
    """
    KL divergence (natural logarithm) between the histogram of `S(z_i|x_i)` over the uncensored
    records, with `num_bins` equal-width bins on [0, 1], and the uniform distribution.

    Censored records are excluded.
    """
    if num_bins < 1:
        raise DomainError('num_bins must be positive')
    curves = _batch(curves, data)
    if not np.any(data.events):
        raise UndefinedMetricError('DDC is undefined without uncensored records')
    values = own_survival(curves, data)[data.events]
    bins = np.minimum(np.floor(values * num_bins).astype(int), num_bins - 1)
    p = np.bincount(bins, minlength=num_bins) / len(values)
    p = p[p > 0]
    return float(np.sum(p * np.log(p * num_bins)))


@attr.s(frozen=True)
class MetricSummary:
    """
    Bootstrap statistics of one metric.

    :ivar values: Metric value per fold, `None` where the metric was undefined.
    :ivar mean: Mean over the folds with a defined value.
    :ivar std: Sample standard deviation, `None` if fewer than two folds had a defined value.
    """
    values = attr.ib(converter=tuple)

    @property
    def valid(self) -> typing.List[float]:
        return [v for v in self.values if v is not None]

    @property
    def failed_folds(self) -> typing.List[int]:
        return [i for i, v in enumerate(self.values) if v is None]

    @property
    def mean(self) -> typing.Optional[float]:
        return float(np.mean(self.valid)) if self.valid else None

    @property
    def std(self) -> typing.Optional[float]:
        return float(np.std(self.valid, ddof=1)) if len(self.valid) > 1 else None

    def to_dict(self) -> dict:
        return collections.OrderedDict([
            ('mean', self.mean),
            ('std', self.std),
            ('folds', list(self.values)),
            ('failed_folds', self.failed_folds),
        ])


@attr.s(frozen=True)
class EvaluationReport:
    """
    Metrics on a test set (point estimates on the full set) with bootstrap statistics.

    :ivar n_excluded_ddc: Number of censored records excluded from DDC.
    """
    n_records = attr.ib()
    n_events = attr.ib()
    n_comparable_pairs = attr.ib()
    n_excluded_ddc = attr.ib()
    cindex_td = attr.ib()
    cdauc = attr.ib()
    ddc = attr.ib()
    bootstrap = attr.ib()
    folds = attr.ib()
    seed = attr.ib()

    def to_dict(self) -> dict:
        return collections.OrderedDict([
            ('n_records', self.n_records),
            ('n_events', self.n_events),
            ('n_comparable_pairs', self.n_comparable_pairs),
            ('n_excluded_ddc', self.n_excluded_ddc),
            ('metrics', collections.OrderedDict([
                (name, getattr(self, name)) for name in METRICS])),
            ('bootstrap', collections.OrderedDict([
                ('folds', self.folds),
                ('seed', self.seed),
                ('metrics', collections.OrderedDict([
                    (name, self.bootstrap[name].to_dict()) for name in METRICS])),
            ])),
        ])


def _all_metrics(
        curves, data, tau1, tau2, num_bins, weighting) -> typing.Dict[str, typing.Optional[float]]:
    funcs = collections.OrderedDict([
        ('cindex_td', lambda: cindex_td(curves, data)),
        ('cdauc', lambda: cdauc(curves, data, tau1=tau1, tau2=tau2, weighting=weighting)),
        ('ddc', lambda: ddc(curves, data, num_bins=num_bins)),
    ])
    res = collections.OrderedDict()
    for name, func in funcs.items():
        try:
            res[name] = func()
        except UndefinedMetricError:
            res[name] = None
    return res


def bootstrap_curves(
        curves,
        data: SurvivalDataset,
        folds: int = 10,
        seed: int = 0,
        tau1: typing.Optional[float] = None,
        tau2: typing.Optional[float] = None,
        num_bins: int = 10,
        weighting: str = 'km',
        log=None) -> EvaluationReport:
    """
    Evaluate given predictions on the full data and on `folds` bootstrap resamples.

    Resample `f` consists of the indices `rng.integers(0, n, size=n)` of the `f`-th draw from
    `rng = np.random.default_rng(seed)`. Metrics undefined on a resample are recorded as `None`.
    """
    if folds < 2:
        raise DomainError('bootstrapping requires at least two folds')
    curves = _batch(curves, data)
    point = _all_metrics(curves, data, tau1, tau2, num_bins, weighting)
    rng = np.random.default_rng(seed)
    per_fold = []
    for fold in range(folds):
        idx = rng.integers(0, len(data), size=len(data))
        per_fold.append(_all_metrics(
            curves[idx], data.subset(idx), tau1, tau2, num_bins, weighting))
        if log:
            log.info('bootstrap fold {}: {}'.format(
                fold + 1, ', '.join('{}={}'.format(k, v) for k, v in per_fold[-1].items())))
    return EvaluationReport(
        n_records=len(data),
        n_events=int(np.sum(data.events)),
        n_comparable_pairs=count_comparisons(data, KernelVariant.ee_and_ec),
        n_excluded_ddc=int(np.sum(~data.events)),
        cindex_td=point['cindex_td'],
        cdauc=point['cdauc'],
        ddc=point['ddc'],
        bootstrap={name: MetricSummary(values=[m[name] for m in per_fold]) for name in METRICS},
        folds=folds,
        seed=seed)


def bootstrap_evaluate(model, test: SurvivalDataset, folds: int = 10, seed: int = 0, **kw):
    """
    Bootstrap evaluation of a `TrainedModel` on a preprocessed test set.
    """
    return bootstrap_curves(model.predict_features(test.features), test, folds, seed, **kw)
