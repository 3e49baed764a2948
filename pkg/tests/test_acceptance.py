"""End-to-end acceptance checks against the study's reference targets.

Each test covers one acceptance item and finishes with a single PASS line,
so running this module with `pytest -v` reads as a checklist. The two study
fixtures execute the full replicate grids (1000 replicates, 599 bootstrap
iterations) in process and dominate the runtime: expect well over an hour
on a single core for the whole module.
"""

import io
import itertools
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from atesim import (
    BootstrapConfig,
    BoostedTreesConfig,
    Estimator,
    EstimatorSpec,
    IngestionConfig,
    SimulatedDataset,
    StudyConfig,
    bootstrap_ci,
    build_scenario,
    emit_report,
    estimate_crude,
    estimate_gcomp,
    estimate_iptw,
    fit_boosted_trees,
    fit_logistic,
    ingest,
    percentile_ranks,
    run_study,
    simulate,
    true_ate,
)
from test_estimators import LookupModel, cell_mean_fit, dataset_from_arrays

ROOT = Path(__file__).resolve().parents[1]

# Reference targets for the shipped scenarios (coverage in percent, mean
# error and MSE in absolute units). Tolerances: coverage +/-2.0 points,
# mean error +/-3e-3, MSE +/-20 percent relative.
INDO_TRUTH = (-0.062, 0.002)
ROTT_TRUTH = (-0.101, 0.003)

INDO_GCOMP = {
    200: (94.5, 5.49e-3, 2.84e-3),
    500: (94.7, 7.59e-3, 1.15e-3),
    1000: (94.5, 6.84e-3, 0.54e-3),
}
INDO_IPTW = {
    200: (94.9, 4.78e-3, 2.91e-3),
    500: (94.6, 5.83e-3, 1.15e-3),
    1000: (94.7, 5.22e-3, 0.53e-3),
}
ROTT_GCOMP_1000 = (95.4, -4.37e-3)

COV_TOL = 2.0
ME_TOL = 3e-3
MSE_REL_TOL = 0.20


def _scenario(config_name):
    cfg = IngestionConfig.from_json(str(ROOT / "configs" / config_name))
    cfg = replace(cfg, source=str(ROOT / cfg.source))
    return build_scenario(ingest(cfg))


@pytest.fixture(scope="session")
def indo_scenario():
    return _scenario("indomethacin.json")


@pytest.fixture(scope="session")
def rotterdam_scenario():
    return _scenario("rotterdam.json")


@pytest.fixture(scope="session")
def indo_study(indo_scenario):
    cfg = StudyConfig(
        scenario=indo_scenario,
        estimators=(
            EstimatorSpec(strategy="crude"),
            EstimatorSpec(strategy="gcomp", model="logistic"),
            EstimatorSpec(strategy="iptw", model="logistic"),
        ),
        sample_sizes=(200, 500, 1000),
        replicates=1000,
        bootstrap=BootstrapConfig(iterations=599, level=0.95),
        base_seed=0,
        workers=1,
        name="indomethacin-acceptance",
    )
    return run_study(cfg, progress=True)


@pytest.fixture(scope="session")
def rotterdam_study(rotterdam_scenario):
    cfg = StudyConfig(
        scenario=rotterdam_scenario,
        estimators=(
            EstimatorSpec(strategy="gcomp", model="logistic"),
            EstimatorSpec(strategy="iptw", model="logistic"),
        ),
        sample_sizes=(1000,),
        replicates=1000,
        bootstrap=BootstrapConfig(iterations=599, level=0.95),
        base_seed=0,
        workers=1,
        name="rotterdam-acceptance",
    )
    return run_study(cfg, progress=True)


# ---------------------------------------------------------------------------
# scenario truth
# ---------------------------------------------------------------------------


def test_scenario_truth_values(indo_scenario, rotterdam_scenario):
    checks = (
        ("indomethacin", indo_scenario, 14, 570, INDO_TRUTH),
        ("rotterdam", rotterdam_scenario, 98, 2260, ROTT_TRUTH),
    )
    for name, scen, k, n, (target, tol) in checks:
        ate = true_ate(scen)
        assert scen.k == k, f"{name}: K={scen.k}, expected {k}"
        assert scen.retained_n == n, f"{name}: n={scen.retained_n}, expected {n}"
        assert abs(ate - target) <= tol, f"{name}: true ATE {ate:.5f} not {target}+/-{tol}"
    print("scenario truth: PASS "
          f"(indomethacin {true_ate(indo_scenario):.4f}, "
          f"rotterdam {true_ate(rotterdam_scenario):.4f})")


# ---------------------------------------------------------------------------
# indomethacin study grid
# ---------------------------------------------------------------------------


def _check_glm_row(study, label, n, cov_target, me_target, mse_target):
    m = study.metrics[(n, label)]
    lines = []
    cov = m.coverage * 100.0
    ok = abs(cov - cov_target) <= COV_TOL
    lines.append((ok, f"{label} n={n} coverage {cov:.1f} vs {cov_target}+/-{COV_TOL}"))
    ok = abs(m.mean_error - me_target) <= ME_TOL
    lines.append((ok, f"{label} n={n} ME {m.mean_error * 1e3:.2f}e-3 vs "
                      f"{me_target * 1e3:.2f}e-3 +/- {ME_TOL * 1e3:.0f}e-3"))
    ok = abs(m.mse - mse_target) <= MSE_REL_TOL * mse_target
    lines.append((ok, f"{label} n={n} MSE {m.mse * 1e3:.2f}e-3 vs "
                      f"{mse_target * 1e3:.2f}e-3 +/- 20%"))
    return lines


def test_indomethacin_glm_grid(indo_study):
    lines = []
    for n, (cov, me, mse) in INDO_GCOMP.items():
        lines += _check_glm_row(indo_study, "gcomp+logistic", n, cov, me, mse)
    for n, (cov, me, mse) in INDO_IPTW.items():
        lines += _check_glm_row(indo_study, "iptw+logistic", n, cov, me, mse)
    bad = [msg for ok, msg in lines if not ok]
    assert not bad, "out of window:\n  " + "\n  ".join(bad)
    print(f"indomethacin GLM grid: PASS ({len(lines)} windows)")


def test_indomethacin_crude_degradation(indo_study):
    m200 = indo_study.metrics[(200, "crude")]
    m1000 = indo_study.metrics[(1000, "crude")]
    assert m200.coverage <= 0.80, f"crude n=200 coverage {m200.coverage:.3f} > 0.80"
    assert m1000.coverage <= 0.25, f"crude n=1000 coverage {m1000.coverage:.3f} > 0.25"
    becs = []
    for n in (200, 500, 1000):
        bec = indo_study.metrics[(n, "crude")].bias_eliminated_coverage
        becs.append(bec)
        assert bec >= 0.92, f"crude n={n} bias-eliminated coverage {bec:.3f} < 0.92"
    print("crude degradation: PASS "
          f"(coverage {m200.coverage:.3f} -> {m1000.coverage:.3f}, "
          f"bias-eliminated {min(becs):.3f}..{max(becs):.3f})")


# ---------------------------------------------------------------------------
# rotterdam study spot checks
# ---------------------------------------------------------------------------


def test_rotterdam_spot_checks(rotterdam_study):
    cov_target, me_target = ROTT_GCOMP_1000
    m = rotterdam_study.metrics[(1000, "gcomp+logistic")]
    cov = m.coverage * 100.0
    assert abs(cov - cov_target) <= COV_TOL, \
        f"gcomp n=1000 coverage {cov:.1f} vs {cov_target}+/-{COV_TOL}"
    assert abs(m.mean_error - me_target) <= ME_TOL, \
        f"gcomp n=1000 ME {m.mean_error:.5f} vs {me_target}+/-{ME_TOL}"
    w = rotterdam_study.metrics[(1000, "iptw+logistic")]
    assert w.coverage <= 0.80, f"iptw n=1000 coverage {w.coverage:.3f} > 0.80"
    print("rotterdam spot checks: PASS "
          f"(gcomp coverage {cov:.1f}, ME {m.mean_error * 1e3:.2f}e-3; "
          f"iptw coverage {w.coverage * 100:.1f})")


# ---------------------------------------------------------------------------
# oracle equivalences
# ---------------------------------------------------------------------------


def _standardization_rowwise(d):
    """Brute-force standardization: empirical cell means averaged over rows."""
    cells = {}
    for zr, xi, yi in zip(d.z.tolist(), d.x.tolist(), d.y.tolist()):
        k = (int(xi), tuple(zr))
        s, c = cells.get(k, (0.0, 0))
        cells[k] = (s + float(yi), c + 1)
    m1 = np.array([cells[(1, tuple(zr))][0] / cells[(1, tuple(zr))][1]
                   for zr in d.z.tolist()])
    m0 = np.array([cells[(0, tuple(zr))][0] / cells[(0, tuple(zr))][1]
                   for zr in d.z.tolist()])
    return float(np.mean(m1)) - float(np.mean(m0))


def _standardization_weighted(d):
    """The same quantity in sum_z phat(z) (m1 - m0) form."""
    from collections import defaultdict

    cells = defaultdict(lambda: [0.0, 0])
    zn = defaultdict(int)
    for zr, xi, yi in zip(d.z.tolist(), d.x.tolist(), d.y.tolist()):
        key = tuple(zr)
        zn[key] += 1
        cells[(int(xi), key)][0] += float(yi)
        cells[(int(xi), key)][1] += 1
    out = 0.0
    for key, c in zn.items():
        s1, n1 = cells[(1, key)]
        s0, n0 = cells[(0, key)]
        out += (c / d.n) * (s1 / n1 - s0 / n0)
    return out


def _enumerate_occupied_datasets():
    """Every dataset in a structured family: K strata (1..4), each with
    1 or 2 rows per arm (K=4 capped at 1 per arm) and every event split."""
    strata = [(0, 0), (0, 1), (1, 0), (1, 1)]
    for k in (1, 2, 3, 4):
        per_arm = (1,) if k == 4 else (1, 2)
        arm_patterns = [(na, e) for na in per_arm for e in range(na + 1)]
        cell_patterns = list(itertools.product(arm_patterns, arm_patterns))
        for combo in itertools.product(cell_patterns, repeat=k):
            z_rows, xs, ys = [], [], []
            for s, ((n1, e1), (n0, e0)) in enumerate(combo):
                for i in range(n1):
                    z_rows.append(strata[s])
                    xs.append(1)
                    ys.append(1 if i < e1 else 0)
                for i in range(n0):
                    z_rows.append(strata[s])
                    xs.append(0)
                    ys.append(1 if i < e0 else 0)
            yield dataset_from_arrays(np.array(z_rows), xs, ys)


def _random_occupied_dataset(rng):
    # 1..4 strata, 1..6 rows per (stratum, arm) cell: n <= 48 and every
    # cell occupied by construction
    k = int(rng.integers(1, 5))
    strata = [(0, 0), (0, 1), (1, 0), (1, 1)][:k]
    z_rows, xs, ys = [], [], []
    for s in range(k):
        for arm in (1, 0):
            for _ in range(int(rng.integers(1, 7))):
                z_rows.append(strata[s])
                xs.append(arm)
                ys.append(int(rng.integers(0, 2)))
    return dataset_from_arrays(np.array(z_rows), xs, ys)


def test_saturated_gcomp_equals_standardization():
    count = 0
    for d in _enumerate_occupied_datasets():
        pe = estimate_gcomp(d, cell_mean_fit)
        assert pe.ate_hat == _standardization_rowwise(d)
        assert abs(pe.ate_hat - _standardization_weighted(d)) < 1e-12
        count += 1
    rng = np.random.default_rng(514)
    extra = 300
    for _ in range(extra):
        d = _random_occupied_dataset(rng)
        assert d.n <= 50
        pe = estimate_gcomp(d, cell_mean_fit)
        assert pe.ate_hat == _standardization_rowwise(d)
        assert abs(pe.ate_hat - _standardization_weighted(d)) < 1e-12
    print(f"saturated gcomp == standardization: PASS "
          f"({count} enumerated + {extra} random datasets)")


def test_iptw_true_propensity_consistent(indo_scenario):
    table = {tuple(map(float, zr)): float(p)
             for zr, p in zip(indo_scenario.strata.tolist(),
                              indo_scenario.p_x_given_z)}

    def fit(F, y):
        return LookupModel(table)

    d = simulate(indo_scenario, 1_000_000, 514)
    pe = estimate_iptw(d, fit)
    err = abs(pe.ate_hat - true_ate(indo_scenario))
    assert err < 0.005, f"true-propensity iptw off by {err:.5f}"
    print(f"iptw with true propensities: PASS (|error| {err:.5f} at n=1e6)")


def test_constant_propensity_iptw_equals_crude(indo_scenario):
    class Half:
        kind = "const"

        def predict_proba(self, F):
            return np.full(np.asarray(F).shape[0], 0.5)

    for seed in (1, 2, 3, 4, 5):
        d = simulate(indo_scenario, 4000, seed)
        a = estimate_iptw(d, lambda F, y: Half())
        b = estimate_crude(d)
        assert a.ate_hat == b.ate_hat
    print("constant-propensity iptw == crude: PASS (5 simulated datasets)")


# ---------------------------------------------------------------------------
# bootstrap calibration
# ---------------------------------------------------------------------------


def test_bootstrap_percentile_calibration():
    assert percentile_ranks(599, 0.95) == (15, 585)
    rng = np.random.default_rng(515)
    est = lambda d: float(d.y.mean())
    n = 1000
    hits = 0
    reps = 1000
    for r in range(reps):
        y = (rng.random(n) < 0.5).astype(np.uint8)
        d = SimulatedDataset(
            n=n,
            stratum_index=np.zeros(n, dtype=np.int32),
            z=np.zeros((n, 1), dtype=np.uint8),
            x=np.zeros(n, dtype=np.uint8),
            y=y,
            seed=r,
        )
        res = bootstrap_ci(d, est, BootstrapConfig(iterations=599, level=0.95,
                                                   seed=int(rng.integers(2**63))),
                           keep_replicates=False)
        if res.lo <= 0.5 <= res.hi:
            hits += 1
    rate = hits / reps
    assert 0.93 <= rate <= 0.97, f"coverage {rate:.3f} outside [0.93, 0.97]"
    print(f"bootstrap calibration: PASS (coverage {rate:.3f}, ranks (15, 585))")


# ---------------------------------------------------------------------------
# numerical kernels
# ---------------------------------------------------------------------------


def test_logistic_score_at_convergence():
    rng = np.random.default_rng(516)
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(80, 400))
        p = int(rng.integers(1, 6))
        X = rng.normal(size=(n, p))
        beta = rng.normal(scale=0.8, size=p)
        eta = np.clip(X @ beta + rng.normal(scale=0.3), -1.6, 1.6)
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
        if y.min() == y.max():
            y[0] = 1.0 - y[0]
        model = fit_logistic(X, y)
        worst = max(worst, model.diagnostics.max_abs_score)
    assert worst < 1e-6, f"max |score| {worst:.2e} >= 1e-6"
    print(f"logistic IRLS score: PASS (worst max |score| {worst:.2e} over 100 fits)")


def test_boosted_trees_loss_monotone():
    rng = np.random.default_rng(517)
    for trial in range(20):
        n = int(rng.integers(60, 240))
        p = int(rng.integers(2, 5))
        X = rng.normal(size=(n, p))
        logit = np.sin(X[:, 0]) + 0.5 * X[:, 1]
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(float)
        model = fit_boosted_trees(X, y, BoostedTreesConfig(rounds=40))
        trace = np.asarray(model.loss_trace)
        assert trace.size == 40
        diffs = np.diff(trace)
        assert np.all(diffs <= 1e-12), f"loss rose by {diffs.max():.2e}"
    print("boosted trees loss trace: PASS (non-increasing on 20 datasets)")


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------


def test_study_runs_byte_identical_across_workers(indo_scenario):
    def run(workers):
        cfg = StudyConfig(
            scenario=indo_scenario,
            estimators=(
                EstimatorSpec(strategy="crude"),
                EstimatorSpec(strategy="gcomp", model="logistic"),
            ),
            sample_sizes=(200,),
            replicates=24,
            bootstrap=BootstrapConfig(iterations=59, level=0.95),
            base_seed=11,
            workers=workers,
            name="determinism",
        )
        return emit_report(run_study(cfg), fmt="csv", include_timing=False)

    first = run(1)
    again = run(1)
    pooled = run(8)
    assert first == again, "repeat run at workers=1 differed"
    assert first == pooled, "workers=8 run differed from workers=1"
    print(f"study determinism: PASS ({len(first.encode())} byte CSV, workers 1 and 8)")
