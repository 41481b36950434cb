import math

import numpy as np
import pytest

from dcsurv.core import DomainError, SurvivalDataset, SurvivalCurve, TimeGrid
from dcsurv.data import generate_synthetic
from dcsurv.numerics import Parameter, gradcheck
from dcsurv.losses import *


def test_build_mask(toy):
    assert build_mask(toy, KernelVariant.ee_only).pairs == {(0, 2)}
    mask = build_mask(toy)
    assert mask.variant == KernelVariant.ee_and_ec
    assert mask.pairs == {(0, 1), (0, 2)}
    assert len(mask) == 2

    assert not len(build_mask(SurvivalDataset.from_times([1, 2, 3], [0, 0, 0])))
    assert not len(build_mask(SurvivalDataset.from_times([2, 2, 2], [1, 1, 1])))


def test_count_comparisons(random_dataset):
    rng = np.random.default_rng(7)
    for _ in range(100):
        data = random_dataset(rng, int(rng.integers(1, 40)), integer_times=True)
        a, b = build_mask(data, 'ee'), build_mask(data, 'ee_ec')
        assert count_comparisons(data, 'ee') == len(a)
        assert count_comparisons(data, 'ee_ec') == len(b)
        assert a.pairs <= b.pairs
        assert all(data.times[i] < data.times[j] and data.events[i] for i, j in b.pairs)


def test_LossConfig():
    cfg = LossConfig()
    assert cfg.lambda_ == 1.0 and cfg.sigma == 1.0
    assert cfg.kernel_variant == KernelVariant.ee_and_ec
    assert LossConfig(kernel_variant='ee').kernel_variant == KernelVariant.ee_only

    with pytest.raises(DomainError):
        LossConfig(sigma=0)
    with pytest.raises(DomainError):
        LossConfig(lambda_=-1)


def test_rps_loss(grid3):
    data = SurvivalDataset.from_times([2], [True])
    assert rps_loss(SurvivalCurve(grid=grid3, values=[[0.5, 0.5, 0.5]]), data) == \
        pytest.approx(0.75)
    assert rps_loss(SurvivalCurve(grid=grid3, values=[[1, 0, 0]]), data) == 0

    # Censored records only count up to their discretized time.
    data = SurvivalDataset.from_times([2], [False])
    assert rps_loss(SurvivalCurve(grid=grid3, values=[[1, 1, 0.3]]), data) == 0
    assert rps_loss(SurvivalCurve(grid=grid3, values=[[0.5, 0.5, 0.3]]), data) == \
        pytest.approx(0.5)

    with pytest.raises(DomainError):
        rps_loss(SurvivalCurve(grid=grid3, values=[[1, 1, 1], [1, 1, 1]]), data)
    with pytest.raises(DomainError):
        rps_loss(SurvivalCurve(grid=grid3, values=[[1, 1, 1]]), data, TimeGrid(nodes=[1, 2]))


def test_kernel_loss():
    data = SurvivalDataset.from_times([1, 2], [True, True])
    grid = TimeGrid(nodes=[1, 2])
    mask = build_mask(data)

    curves = SurvivalCurve(grid=grid, values=[[0.5, 0.5], [0.5, 0.5]])
    assert kernel_loss(curves, data, mask, sigma=1) == pytest.approx(1.0)

    # Maximal spread between the individuals.
    curves = SurvivalCurve(grid=grid, values=[[0, 0], [1, 1]])
    assert kernel_loss(curves, data, mask, sigma=1) == pytest.approx(math.exp(-1))
    assert kernel_loss(curves, data, mask, sigma=2) == pytest.approx(math.exp(-0.5))
    assert kernel_loss(curves, data, mask, sigma=1, evaluation='node') == \
        pytest.approx(math.exp(-1))

    empty = build_mask(SurvivalDataset.from_times([1, 2], [False, False]))
    assert kernel_loss(curves, data, empty, sigma=1) == 0
    with pytest.raises(DomainError):
        kernel_loss(curves, data, mask, sigma=0)


def test_kernel_loss_decreases_with_margin():
    data = SurvivalDataset.from_times([1, 2], [True, True])
    grid = TimeGrid(nodes=[1, 2])
    mask = build_mask(data)
    margins = [-0.2, 0.0, 0.1, 0.3, 0.6, 0.8]
    losses = [
        float(kernel_loss(
            SurvivalCurve(grid=grid, values=[[0.2, 0.2], [0.2 + m, 0.2 + m]]), data, mask, 0.5))
        for m in margins]
    assert np.all(np.diff(losses) < 0)
    assert losses == pytest.approx([math.exp(-m / 0.5) for m in margins])


def test_kernel_loss_variants(random_dataset, random_curves):
    rng = np.random.default_rng(11)
    grid = TimeGrid(nodes=[2, 5, 10, 20])
    data = random_dataset(rng, 30)
    curves = SurvivalCurve(grid=grid, values=random_curves(rng, 30, grid))
    ee = kernel_loss(curves, data, build_mask(data, 'ee'), 1.0)
    ee_ec = kernel_loss(curves, data, build_mask(data, 'ee_ec'), 1.0)
    assert ee_ec >= ee > 0


def test_combined_loss(grid3):
    data = SurvivalDataset.from_times([2], [True])
    curves = SurvivalCurve(grid=grid3, values=[[0.5, 0.5, 0.5]])
    # No comparable pairs: only the normalized RPS term remains.
    assert combined_loss(curves, data) == pytest.approx(0.25)
    assert combined_loss(curves, data, cfg=LossConfig(normalized=False)) == pytest.approx(0.75)

    data = SurvivalDataset.from_times([1, 2], [True, True])
    grid = TimeGrid(nodes=[1, 2])
    curves = SurvivalCurve(grid=grid, values=[[0.5, 0.5], [0.5, 0.5]])
    rps = rps_loss(curves, data)
    assert combined_loss(curves, data, cfg=LossConfig(lambda_=0)) == pytest.approx(rps / 4)
    assert combined_loss(curves, data, cfg=LossConfig(lambda_=2)) == \
        pytest.approx(rps / 4 + 2.0)
    assert kamran_loss(curves, data, lambda_=2) == pytest.approx(rps + 2.0)


def test_combined_loss_invariant_under_duplication(random_dataset, random_curves):
    rng = np.random.default_rng(5)
    grid = TimeGrid(nodes=[3, 6, 12, 20])
    data = random_dataset(rng, 25)
    values = random_curves(rng, 25, grid)
    doubled = data.subset(np.concatenate([np.arange(25), np.arange(25)]))
    for variant in KernelVariant:
        cfg = LossConfig(lambda_=0.7, sigma=0.5, kernel_variant=variant)
        single = combined_loss(SurvivalCurve(grid=grid, values=values), data, cfg=cfg)
        double = combined_loss(
            SurvivalCurve(grid=grid, values=np.concatenate([values, values])), doubled, cfg=cfg)
        assert double == pytest.approx(single, rel=1e-9)


def test_combined_loss_gradient(random_dataset, random_curves):
    rng = np.random.default_rng(2)
    grid = TimeGrid(nodes=[2, 6, 11, 20])
    data = random_dataset(rng, 8)
    values = Parameter(random_curves(rng, 8, grid), 'values')
    for cfg in [LossConfig(), LossConfig(kernel_variant='ee', sigma=0.3, normalized=False)]:
        err = gradcheck(lambda: combined_loss(values, data, grid, cfg), [values], floor=1e-6)
        assert err < 1e-4

    with pytest.raises(DomainError):
        combined_loss(values, data)


def test_estimate_comparison_probability():
    assert estimate_comparison_probability(0) == 0.5
    assert estimate_comparison_probability(0, 'ee') == 0.5
    assert estimate_comparison_probability(0.5, 'ee') == pytest.approx(0.125)
    assert estimate_comparison_probability(0.5) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        estimate_comparison_probability(1)


def test_comparison_factor(toy):
    counts = comparison_factor(toy)
    assert (counts.n_ee, counts.n_ee_ec, counts.f_observed) == (1, 2, 2.0)
    assert counts.f_estimated == pytest.approx(1.5)
    assert counts.to_dict()['n'] == 3

    counts = comparison_factor(SurvivalDataset.from_times([1, 2, 3], [1, 1, 1]))
    assert counts.f_observed == counts.f_estimated == 1

    counts = comparison_factor(SurvivalDataset.from_times([1, 2], [0, 0]))
    assert counts.f_observed is None and counts.f_estimated is None


@pytest.mark.parametrize('c', [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7])
def test_comparison_counts_match_estimates(c):
    n = 10000
    counts = comparison_factor(generate_synthetic(n, c, seed=round(c * 10)))
    for observed, variant in [(counts.n_ee, 'ee'), (counts.n_ee_ec, 'ee_ec')]:
        p = estimate_comparison_probability(c, variant)
        assert abs(observed / n ** 2 - p) <= 3 * math.sqrt(p * (1 - p) / n)
    assert counts.f_estimated == pytest.approx(1 / (1 - c), rel=0.05)
    assert counts.f_observed == pytest.approx(counts.f_estimated, rel=0.05)


def test_skewed_censoring_inflates_factor():
    counts = comparison_factor(generate_synthetic(10000, 0.7, censoring='skewed', seed=1))
    assert counts.censoring_rate == pytest.approx(0.7, abs=0.03)
    assert 3 < counts.f_observed < 6
    assert counts.f_observed > counts.f_estimated * 1.2


def test_censoring_sweep(mocker):
    log = mocker.Mock()
    points = censoring_sweep([0.2, 0.4], n=500, seed=3, log=log)
    assert [p.target_rate for p in points] == [0.2, 0.4]
    assert points[1].estimated_ee == pytest.approx(0.18)
    assert len(points[0].as_row()) == len(SweepPoint.header())
    assert log.info.call_count == 2
    again = censoring_sweep([0.2, 0.4], n=500, seed=3)
    assert [p.as_row() for p in again] == [p.as_row() for p in points]
