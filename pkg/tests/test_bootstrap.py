import math

import numpy as np
import pytest

from atesim.bootstrap import (
    BootstrapConfig,
    EstimateResult,
    bootstrap_ci,
    percentile_ranks,
    resample_indices,
)
from atesim.errors import BootstrapFailure, EmptyArmError
from atesim.estimators import Estimator, EstimatorSpec, estimate_crude
from atesim.scenario import SimulatedDataset, simulate, true_ate
from conftest import make_scenario

# ---------------------------------------------------------------------------
# rank formula
# ---------------------------------------------------------------------------


def test_rank_formula_by_enumeration():
    # k_lo = floor((B+1) * alpha/2), k_hi = B+1-k_lo, both 1-indexed;
    # the oracle evaluates the formula in exact rational arithmetic
    from fractions import Fraction

    cases = {
        (599, 0.95): (15, 585),
        (999, 0.95): (25, 975),
        (999, 0.90): (50, 950),
        (199, 0.95): (5, 195),
        (99, 0.95): (2, 98),
        (19, 0.95): (1, 19),  # k_lo clamps to 1
    }
    for (b, level), expected in cases.items():
        alpha = 1 - Fraction(str(level))
        k_lo = max(1, math.floor(Fraction(b + 1) * alpha / 2))
        assert (k_lo, b + 1 - k_lo) == expected  # the enumeration itself
        assert percentile_ranks(b, level) == expected


# ---------------------------------------------------------------------------
# resample index streams
# ---------------------------------------------------------------------------


def test_resample_indices_contract():
    idx = resample_indices(50, seed=3, replicate=7)
    assert idx.shape == (50,)
    assert idx.min() >= 0 and idx.max() < 50
    assert np.array_equal(idx, resample_indices(50, 3, 7))
    assert not np.array_equal(idx, resample_indices(50, 3, 8))
    assert not np.array_equal(idx, resample_indices(50, 4, 7))


def test_resample_indices_n1_all_zero():
    assert np.array_equal(resample_indices(1, 0, 5), np.zeros(1, dtype=int))


def test_resample_indices_uniform_chi_square():
    from scipy import stats

    n = 200
    draws = np.concatenate([resample_indices(n, 0, r) for r in range(500)])
    counts = np.bincount(draws, minlength=n)
    chi2 = float(np.sum((counts - draws.size / n) ** 2 / (draws.size / n)))
    p = stats.chi2.sf(chi2, df=n - 1)
    assert p > 1e-6


# ---------------------------------------------------------------------------
# interval construction
# ---------------------------------------------------------------------------


class ConstantEstimator:
    def __init__(self, c):
        self.c = c

    def __call__(self, d):
        return self.c


class ResampleMeanEstimator:
    def __call__(self, d):
        return float(np.mean(d.y))


def _tiny_dataset(n=40, seed=0):
    s = make_scenario([0.5, 0.5], [0.5, 0.5], [[0.3, 0.5], [0.6, 0.7]])
    return simulate(s, n, seed)


def test_constant_estimator_degenerate_interval():
    d = _tiny_dataset()
    res = bootstrap_ci(d, ConstantEstimator(0.42), BootstrapConfig(iterations=99, seed=1))
    assert res.point == 0.42
    assert res.lo == 0.42 and res.hi == 0.42
    assert res.kind == "bootstrap-percentile"
    assert res.redraw_count == 0
    assert len(res.replicate_estimates) == 99


def test_interval_is_order_statistics_of_replicates():
    """Recompute every replicate estimate independently via the published
    resample_indices contract and check the rank selection."""
    d = _tiny_dataset(n=60, seed=2)
    cfg = BootstrapConfig(iterations=199, seed=9)
    est = ResampleMeanEstimator()
    res = bootstrap_ci(d, est, cfg)

    values = []
    for b in range(cfg.iterations):
        idx = resample_indices(d.n, cfg.seed, b)
        values.append(float(np.mean(d.y[idx])))
    values.sort()
    k_lo, k_hi = percentile_ranks(cfg.iterations, cfg.level)
    assert res.lo == values[k_lo - 1]
    assert res.hi == values[k_hi - 1]
    assert res.point == float(np.mean(d.y))
    np.testing.assert_array_equal(np.sort(res.replicate_estimates), values)


def test_worker_count_does_not_change_result():
    d = _tiny_dataset(n=80, seed=5)
    est = Estimator(EstimatorSpec("gcomp", "logistic"))
    cfg = BootstrapConfig(iterations=59, seed=4)
    a = bootstrap_ci(d, est, cfg, workers=1)
    b = bootstrap_ci(d, est, cfg, workers=4)
    assert (a.point, a.lo, a.hi, a.redraw_count) == (b.point, b.lo, b.hi, b.redraw_count)
    np.testing.assert_array_equal(a.replicate_estimates, b.replicate_estimates)


# ---------------------------------------------------------------------------
# redraw policy
# ---------------------------------------------------------------------------


def _single_treated_dataset():
    # one treated row among 8: many resamples miss the treated arm entirely
    z = np.zeros((8, 1), dtype=np.uint8)
    x = np.array([1, 0, 0, 0, 0, 0, 0, 0], dtype=np.uint8)
    y = np.array([1, 0, 1, 0, 1, 0, 1, 0], dtype=np.uint8)
    return SimulatedDataset(n=8, stratum_index=np.zeros(8, dtype=np.int32),
                            z=z, x=x, y=y, seed=0)


def test_failed_draws_redrawn_at_b_plus_jB():
    d = _single_treated_dataset()
    cfg = BootstrapConfig(iterations=40, seed=6)
    res = bootstrap_ci(d, lambda dd: estimate_crude(dd).ate_hat, cfg)
    assert res.redraw_count > 0

    # replay the documented schedule: attempt j of slot b uses index b + j*40
    for b in range(cfg.iterations):
        for j in range(1 + cfg.redraw_budget // cfg.iterations):
            idx = resample_indices(d.n, cfg.seed, b + j * cfg.iterations)
            xs = d.x[idx]
            if xs.any() and not xs.all():
                expected = float(np.mean(d.y[idx][xs == 1])) - float(
                    np.mean(d.y[idx][xs == 0])
                )
                assert res.replicate_estimates[b] == expected
                break
        else:
            pytest.fail("oracle replay found no valid draw inside the budget")


def test_budget_exhaustion_raises_bootstrap_failure():
    d = _tiny_dataset(n=30, seed=1)

    class FailsOnResamples:
        """Succeeds on the point estimate, fails on every resample."""

        def __init__(self):
            self.calls = 0

        def __call__(self, dd):
            self.calls += 1
            if self.calls == 1:
                return 0.0
            raise EmptyArmError(1)

    cfg = BootstrapConfig(iterations=10, max_redraws=20, seed=0)
    with pytest.raises(BootstrapFailure) as ei:
        bootstrap_ci(d, FailsOnResamples(), cfg)
    assert ei.value.attempts == 3  # 1 + 20 // 10
    assert isinstance(ei.value.last_error, EmptyArmError)


def test_point_estimate_failure_propagates_directly():
    # nothing to resample if the full-data estimate already fails
    z = np.zeros((5, 1), dtype=np.uint8)
    d = SimulatedDataset(n=5, stratum_index=np.zeros(5, dtype=np.int32),
                         z=z, x=np.ones(5, dtype=np.uint8),
                         y=np.ones(5, dtype=np.uint8), seed=0)
    with pytest.raises(EmptyArmError):
        bootstrap_ci(d, lambda dd: estimate_crude(dd).ate_hat,
                     BootstrapConfig(iterations=10, seed=0))


def test_nonretryable_errors_propagate():
    d = _tiny_dataset(n=30, seed=1)

    def broken(dd):
        raise RuntimeError("not a statistical failure")

    with pytest.raises(RuntimeError):
        bootstrap_ci(d, broken, BootstrapConfig(iterations=5, seed=0))


# ---------------------------------------------------------------------------
# result invariants and config
# ---------------------------------------------------------------------------


def test_result_validates_bounds():
    with pytest.raises(Exception):
        EstimateResult(point=0.0, lo=1.0, hi=-1.0, kind="bootstrap-percentile",
                       wall_time_s=0.0, redraw_count=0)


def test_config_defaults_and_budget():
    cfg = BootstrapConfig()
    assert cfg.iterations == 599
    assert cfg.level == 0.95
    assert cfg.redraw_budget == 5990
    assert BootstrapConfig(iterations=100, max_redraws=7).redraw_budget == 7
    with pytest.raises(Exception):
        BootstrapConfig(iterations=0)
    with pytest.raises(Exception):
        BootstrapConfig(level=1.5)


def test_wall_time_recorded():
    d = _tiny_dataset()
    res = bootstrap_ci(d, ConstantEstimator(1.0), BootstrapConfig(iterations=19, seed=2))
    assert res.wall_time_s >= 0.0


# ---------------------------------------------------------------------------
# Monte Carlo coverage of the percentile interval (slow-ish, ~40 s)
# ---------------------------------------------------------------------------


def test_coverage_near_nominal_randomized_crude():
    """Crude on a randomized scenario is unbiased, so the percentile interval
    should cover the truth about 95% of the time. 1000 Monte Carlo draws give
    a binomial SE of 0.69 points; the gate is 2 SE."""
    s = make_scenario([0.5, 0.5], [0.5, 0.5], [[0.3, 0.5], [0.6, 0.7]])
    truth = true_ate(s)
    est = Estimator(EstimatorSpec("crude"))
    hits = 0
    reps = 1000
    for r in range(reps):
        d = simulate(s, 1000, seed=10_000 + r)
        res = bootstrap_ci(d, est, BootstrapConfig(iterations=599, seed=r))
        hits += int(res.lo <= truth <= res.hi)
    coverage = hits / reps
    assert abs(coverage - 0.95) <= 0.014
