"""Generate the bundled post-ERCP pancreatitis source table.

Writes data/indomethacin.csv, a synthetic 602-row table laid out like the
indo_rct export from the medicaldata R package (same column names and value
codings). The rows are not the original trial records: joint (site, age,
gender, sod, sphincterotomy, pancreatitis) cell counts are searched so that
the scenario built with configs/indomethacin.json reproduces the documented
summary targets for this benchmark design:

  14 retained strata, 570 retained rows, true ATE -0.062,
  331 treated rows, 77 outcome events (45 treated / 32 control),
  and stated large-sample biases for the main-effects logistic
  adjustment estimators (see TARGETS).

Run from the repository root:  python3 scripts/make_indomethacin.py [--mc]
"""

from __future__ import annotations

import argparse
import csv
import itertools
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))
from _tablefit import Table, anneal, hinge, largest_remainder, sigmoid  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
OUT_CSV = ROOT / "data" / "indomethacin.csv"
CONFIG = ROOT / "configs" / "indomethacin.json"

RNG_SEED = 20240511

# Confounder bit order matches the config: (site, age, gender, sod).
DROPPED = ((0, 1, 1, 1), (1, 1, 0, 1))  # observed at a single treatment level
PATTERNS = [p for p in itertools.product((0, 1), repeat=4) if p not in DROPPED]

TARGETS = {
    "truth": -0.0620,
    "gcomp": 0.0065,   # single outcome model, main-effects logistic
    "iptw": 0.0053,    # main-effects logistic propensity, ratio-form weighting
    "gcomp2": 0.0072,  # per-arm outcome models (weakly steered)
    "rows": 570,
    "treated": 331,
    "events_treated": 45,
    "events_control": 32,
}

# Post-search calibration windows for the Monte Carlo check (--mc); mean
# errors are x1e3, MSE windows are +/-20 percent around the study targets.
ME_WINDOWS = {
    ("gcomp", 200): (2.49, 8.49), ("gcomp", 500): (4.59, 10.59), ("gcomp", 1000): (3.84, 9.84),
    ("iptw", 200): (1.78, 7.78), ("iptw", 500): (2.83, 8.83), ("iptw", 1000): (2.22, 8.22),
}
MSE_WINDOWS = {
    ("gcomp", 200): (2.27, 3.41), ("gcomp", 500): (0.92, 1.38), ("gcomp", 1000): (0.43, 0.65),
    ("iptw", 200): (2.33, 3.49), ("iptw", 500): (0.92, 1.38), ("iptw", 1000): (0.42, 0.64),
}

AGE_MEDIAN = 45
AGE_BELOW_COUNT = 276  # rows strictly under the median among the 582 kept rows


def nudge_to_sum(values, target, lo, hi, rng):
    """Push an integer vector to an exact total by +/-1 steps within bounds."""
    v = values.copy()
    guard = 0
    while v.sum() != target:
        i = int(rng.integers(v.size))
        if v.sum() < target and v[i] < hi[i]:
            v[i] += 1
        elif v.sum() > target and v[i] > lo[i]:
            v[i] -= 1
        guard += 1
        if guard > 100000:
            raise RuntimeError("could not reach the requested total")
    return v


def seed_table(rng):
    bits = np.array(PATTERNS, dtype=np.uint8)
    s, a, g, d = (bits[:, j].astype(float) for j in range(4))

    marg = np.array([[0.55, 0.45], [0.54, 0.46], [0.78, 0.22], [0.42, 0.58]])
    w = np.ones(len(bits))
    for j in range(4):
        w *= marg[j][bits[:, j]]
    w *= np.exp(0.25 * s * d - 0.30 * g * d)
    n = largest_remainder(w, TARGETS["rows"])
    n = np.maximum(n, 10)
    n = nudge_to_sum(n, TARGETS["rows"], np.full_like(n, 10), np.full_like(n, 110), rng)

    e = sigmoid(0.2 + 1.2 * d - 0.5 * a + 0.3 * s - 0.5 * g - 0.7 * a * d + 0.4 * s * d)
    t = np.clip(np.round(n * e).astype(np.int64), 3, n - 3)
    t = nudge_to_sum(t, TARGETS["treated"], np.full_like(n, 3), n - 3, rng)

    p0 = sigmoid(-2.9 + 1.3 * d + 0.6 * a * d + 0.3 * g - 0.35 * s)
    p1 = np.clip(p0 + (-0.115 * d - 0.005 * (1 - d)), 0.01, 0.45)
    e1 = np.clip(np.round(t * p1).astype(np.int64), 0, t)
    e1 = nudge_to_sum(e1, TARGETS["events_treated"], np.zeros_like(t), t, rng)
    e0 = np.clip(np.round((n - t) * p0).astype(np.int64), 0, n - t)
    e0 = nudge_to_sum(e0, TARGETS["events_control"], np.zeros_like(t), n - t, rng)
    return Table(bits, n, t, e1, e0)


def objective(tab):
    try:
        f = tab.functionals()
    except RuntimeError:
        return 1e12
    P, e, p1, p0 = tab.fractions()
    obj = 0.0
    obj += ((f["truth"] - TARGETS["truth"]) / 1.2e-4) ** 2
    obj += ((f["gcomp"] - f["truth"] - TARGETS["gcomp"]) / 2.5e-4) ** 2
    obj += ((f["iptw"] - f["truth"] - TARGETS["iptw"]) / 2.5e-4) ** 2
    obj += ((f["gcomp2"] - f["truth"] - TARGETS["gcomp2"]) / 8e-4) ** 2
    # Keep the sampling variance of the adjusted estimators near the study's
    # scale. The windows target the large-sample value; small samples then add
    # their own inflation, so the n=1000 MSE ceilings keep real headroom.
    obj += hinge(f["nvar_bound"], 0.47, 0.51) / 0.02**2
    obj += hinge(f["nvar_iptw"], 0.47, 0.535) / 0.02**2
    obj += hinge(f["nvar_crude"], 0.44, 0.54) / 0.03**2
    obj += hinge(tab.marginal_zero(1), 296, 316) / 2.0**2
    for k in range(tab.k):
        obj += hinge(tab.n[k], 10, 105) / 3.0**2
        obj += hinge(tab.t[k], 3, tab.n[k] - 3) / 1.0**2
        obj += hinge(e[k], 0.32, 0.75) / 0.02**2
        obj += hinge(p1[k], 0.0, 0.45) / 0.01**2
        obj += hinge(p0[k], 0.0, 0.45) / 0.01**2
    return obj


def design_table(seed=RNG_SEED):
    rng = np.random.default_rng(seed)
    tab = seed_table(rng)
    print(f"seed objective: {objective(tab):.1f}")
    tab, obj = anneal(tab, objective, rng, iters=60000, t0=50.0, t1=0.5,
                      max_cell=110, report_every=20000)
    tab, obj = anneal(tab, objective, rng, iters=120000, t0=0.8, t1=5e-4,
                      max_cell=110, report_every=40000)
    f = tab.functionals()
    print(f"final objective {obj:.4f}")
    print(f"  truth        {f['truth']: .6f}")
    for key in ("crude", "gcomp", "gcomp2", "iptw"):
        print(f"  {key:12s} {f[key]: .6f}  (bias {f[key] - f['truth']:+.6f})")
    for key in ("nvar_crude", "nvar_bound", "nvar_iptw"):
        print(f"  {key:12s} {f[key]: .6f}")
    assert abs(f["truth"] - TARGETS["truth"]) < 2.5e-4
    assert abs(f["gcomp"] - f["truth"] - TARGETS["gcomp"]) < 6e-4
    assert abs(f["iptw"] - f["truth"] - TARGETS["iptw"]) < 6e-4
    assert tab.n.sum() == TARGETS["rows"]
    assert tab.t.sum() == TARGETS["treated"]
    assert tab.e1.sum() == TARGETS["events_treated"]
    assert tab.e0.sum() == TARGETS["events_control"]
    assert tab.marginal_zero(1) >= 294
    return tab


# ---------------------------------------------------------------------------
# Row synthesis
# ---------------------------------------------------------------------------

def synthesize_rows(tab, rng):
    """Expand cell counts to raw rows styled after the indo_rct export."""
    rows = []  # (site_bit_or_code, age_bit, gender_bit, sod, x, y, kept)
    for k in range(tab.k):
        s, a, g, d = (int(v) for v in tab.bits[k])
        n, t, e1, e0 = int(tab.n[k]), int(tab.t[k]), int(tab.e1[k]), int(tab.e0[k])
        for i in range(t):
            rows.append([s, a, g, d, 1, 1 if i < e1 else 0, True])
        for i in range(n - t):
            rows.append([s, a, g, d, 0, 1 if i < e0 else 0, True])
    # Strata observed at a single treatment level (excluded by the builder).
    sa, sb = DROPPED
    for i in range(7):
        rows.append([sa[0], sa[1], sa[2], sa[3], 0, 1 if i < 2 else 0, True])
    for i in range(5):
        rows.append([sb[0], sb[1], sb[2], sb[3], 1, 1 if i < 1 else 0, True])
    # Two low-enrollment sites, removed by the shipped row filter.
    for i in range(20):
        site_code = "3_UK" if i < 12 else "4_Case"
        rows.append([site_code, int(rng.integers(2)), int(rng.integers(2)),
                     int(rng.random() < 0.6), int(i % 2), 1 if i in (3, 9, 16) else 0,
                     False])

    kept = [r for r in rows if r[6]]
    n_kept = len(kept)
    assert n_kept == 582
    low_total = sum(1 for r in kept if r[1] == 0)
    tie_count = low_total - AGE_BELOW_COUNT
    assert tie_count >= 2, "not enough rows at the median value"

    # Assign ages: below / at / above the median so the split is exact.
    below_pool = list(rng.integers(22, AGE_MEDIAN, size=AGE_BELOW_COUNT))
    low_ages = below_pool + [AGE_MEDIAN] * tie_count
    rng.shuffle(low_ages)
    out = []
    li = 0
    for r in rows:
        site_bit, age_bit, g, d, x, y, in_sites = r
        if not in_sites:
            age = int(rng.integers(25, 79))
            site = site_bit
        else:
            site = "1_UM" if site_bit == 0 else "2_IU"
            if age_bit == 0:
                age = int(low_ages[li])
                li += 1
            else:
                age = int(rng.integers(AGE_MEDIAN + 1, 82))
        gender = "1_female" if g == 0 else "2_male"
        rx = "1_indomethacin" if rng.random() < (0.52 - 0.10 * y) else "0_placebo"
        units = 2 + 3 * d + (1 if age <= AGE_MEDIAN else 0) + (1 if g == 0 else 0) \
            + (1 if rng.random() < 0.25 else 0)
        risk = units / 2.0
        pep = "1_yes" if y == 1 else "0_no"
        out.append({"site": site, "age": age, "risk": f"{risk:.1f}", "gender": gender,
                    "sod": d, "rx": rx, "psphinc": x, "pep": pep})
    assert li == len(low_ages)

    rng.shuffle(out)
    for i, row in enumerate(out, start=1):
        row["id"] = i
    return out


def write_csv(rows, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["id", "site", "age", "risk", "gender", "sod", "rx", "psphinc", "pep"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def verify_against_engine(tab):
    from atesim import IngestionConfig, build_scenario, ingest, true_ate

    cfg = replace(IngestionConfig.from_json(str(CONFIG)), source=str(OUT_CSV))
    scen = build_scenario(ingest(cfg))
    assert scen.k == 14, scen.k
    assert scen.retained_n == 570, scen.retained_n
    assert np.array_equal(scen.strata, tab.bits)
    assert np.array_equal(scen.p_z, tab.n / tab.n.sum())
    assert np.array_equal(scen.p_x_given_z, tab.t / tab.n)
    assert np.array_equal(scen.p_y_given_xz[:, 1], tab.e1 / tab.t)
    assert np.array_equal(scen.p_y_given_xz[:, 0], tab.e0 / (tab.n - tab.t))
    ate = true_ate(scen)
    assert round(ate, 3) == -0.062, ate
    print(f"engine check: K={scen.k}, n={scen.retained_n}, true ATE {ate:.6f}")
    return scen


def monte_carlo_check(scen, replicates=2000):
    from atesim import Estimator, EstimatorSpec, derive_seed, simulate, true_ate

    truth = true_ate(scen)
    specs = {
        "crude": Estimator(EstimatorSpec(strategy="crude")),
        "gcomp": Estimator(EstimatorSpec(strategy="gcomp", model="logistic")),
        "gcomp2": Estimator(EstimatorSpec(strategy="gcomp2", model="logistic")),
        "iptw": Estimator(EstimatorSpec(strategy="iptw", model="logistic")),
    }
    print(f"monte carlo calibration, {replicates} replicates per sample size")
    for n in (200, 500, 1000):
        points = {name: [] for name in specs}
        for r in range(replicates):
            d = simulate(scen, n, derive_seed(904401, "calibration", n, r))
            for name, est in specs.items():
                points[name].append(est(d).ate_hat)
        for name in specs:
            p = np.asarray(points[name])
            me = float(np.mean(p - truth))
            sd = float(np.std(p, ddof=1))
            mse = float(np.mean((p - truth) ** 2))
            line = (f"  n={n:4d} {name:7s} ME {me * 1e3:7.2f}e-3  sd {sd:.4f}  "
                    f"n*var {n * sd * sd:5.2f}  MSE {mse * 1e3:5.2f}e-3")
            status = []
            if (name, n) in ME_WINDOWS:
                lo, hi = ME_WINDOWS[(name, n)]
                status.append("ME ok" if lo <= me * 1e3 <= hi else f"ME OUT {lo}..{hi}")
            if (name, n) in MSE_WINDOWS:
                lo, hi = MSE_WINDOWS[(name, n)]
                status.append("MSE ok" if lo <= mse * 1e3 <= hi else f"MSE OUT {lo}..{hi}")
            print(line + ("   [" + ", ".join(status) + "]" if status else ""))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mc", action="store_true", help="run the Monte Carlo calibration check")
    ap.add_argument("--mc-only", action="store_true",
                    help="skip the design search; check the already-written csv")
    ap.add_argument("--replicates", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=RNG_SEED,
                    help="design search seed (the shipped table uses the default)")
    args = ap.parse_args(argv)

    if args.mc_only:
        from atesim import IngestionConfig, build_scenario, ingest

        cfg = replace(IngestionConfig.from_json(str(CONFIG)), source=str(OUT_CSV))
        monte_carlo_check(build_scenario(ingest(cfg)), args.replicates)
        return

    tab = design_table(args.seed)
    rng = np.random.default_rng(args.seed + 1)
    rows = synthesize_rows(tab, rng)
    assert len(rows) == 602
    write_csv(rows, OUT_CSV)
    print(f"wrote {OUT_CSV} ({len(rows)} rows)")
    scen = verify_against_engine(tab)
    if args.mc:
        monte_carlo_check(scen, args.replicates)


if __name__ == "__main__":
    main()
