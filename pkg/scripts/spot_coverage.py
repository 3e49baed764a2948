"""Bootstrap-coverage spot check for one scenario cell.

Runs the first R replicates of a study cell with the same substream seeds
the harness would use (data: (base, n, rep); bootstrap: (base, "bootstrap",
n, rep)), so the empirical coverage here is an exact prefix of the full
study at that base seed. Useful for sizing a long run before paying for it.

Usage:
  python3 scripts/spot_coverage.py configs/rotterdam.json --n 1000 --reps 250
  python3 scripts/spot_coverage.py out/scenario.json --n 200 --reps 400 \
      --estimators crude gcomp
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from atesim import (  # noqa: E402
    BootstrapConfig,
    Estimator,
    EstimatorSpec,
    IngestionConfig,
    bootstrap_ci,
    build_scenario,
    derive_seed,
    ingest,
    load_scenario,
    simulate,
    true_ate,
)

SPECS = {
    "crude": EstimatorSpec(strategy="crude"),
    "gcomp": EstimatorSpec(strategy="gcomp", model="logistic"),
    "gcomp2": EstimatorSpec(strategy="gcomp2", model="logistic"),
    "iptw": EstimatorSpec(strategy="iptw", model="logistic"),
}


def load_any_scenario(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") == "scenario":
        return load_scenario(path)
    return build_scenario(ingest(IngestionConfig.from_json(path)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", help="scenario JSON or ingestion config JSON")
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--reps", type=int, default=250)
    ap.add_argument("--estimators", nargs="+", default=["gcomp", "iptw"],
                    choices=sorted(SPECS))
    ap.add_argument("--base-seed", type=int, default=0)
    ap.add_argument("--iterations", type=int, default=599)
    ap.add_argument("--level", type=float, default=0.95)
    args = ap.parse_args(argv)

    scen = load_any_scenario(args.scenario)
    truth = true_ate(scen)
    ests = {name: Estimator(SPECS[name]) for name in args.estimators}
    hits = {name: 0 for name in ests}
    widths = {name: [] for name in ests}
    points = {name: [] for name in ests}

    t0 = time.perf_counter()
    for rep in range(args.reps):
        d = simulate(scen, args.n, derive_seed(args.base_seed, args.n, rep))
        bcfg = BootstrapConfig(
            iterations=args.iterations, level=args.level,
            seed=derive_seed(args.base_seed, "bootstrap", args.n, rep))
        for name, est in ests.items():
            res = bootstrap_ci(d, est, bcfg, keep_replicates=False)
            hits[name] += int(res.lo <= truth <= res.hi)
            widths[name].append(res.hi - res.lo)
            points[name].append(res.point)
        if (rep + 1) % 25 == 0:
            rate = (time.perf_counter() - t0) / (rep + 1)
            print(f"  {rep + 1}/{args.reps} replicates ({rate:.2f}s each)",
                  file=sys.stderr)

    print(f"truth {truth:+.6f}, n={args.n}, reps={args.reps}, "
          f"B={args.iterations}, base seed {args.base_seed}")
    for name in ests:
        p = np.asarray(points[name])
        cov = hits[name] / args.reps
        se = float(np.sqrt(cov * (1 - cov) / args.reps))
        print(f"  {name:7s} coverage {cov * 100:5.1f}% (+-{se * 100:.1f}) "
              f"width {np.mean(widths[name]) * 100:5.2f}e-2 "
              f"ME {np.mean(p - truth) * 1e3:+7.2f}e-3 sd {np.std(p, ddof=1):.4f}")


if __name__ == "__main__":
    main()
