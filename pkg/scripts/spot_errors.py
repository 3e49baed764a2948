"""Point-estimate error replay for study cells, without the bootstrap.

Mean error and MSE in a study depend only on the data substream (base, n,
rep) and on which replicates fail, not on the interval method, so this
script reproduces those aggregates for a full replicate budget in seconds.
Failed fits are excluded and counted, matching the harness.

Usage:
  python3 scripts/spot_errors.py configs/indomethacin.json --gates indo
  python3 scripts/spot_errors.py out/rotterdam.scenario.json --gates rotterdam \
      --sizes 1000 --estimators gcomp
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
    Estimator,
    EstimatorSpec,
    IngestionConfig,
    build_scenario,
    derive_seed,
    ingest,
    load_scenario,
    simulate,
    true_ate,
)
from atesim.errors import EngineError  # noqa: E402

SPECS = {
    "crude": EstimatorSpec(strategy="crude"),
    "gcomp": EstimatorSpec(strategy="gcomp", model="logistic"),
    "gcomp2": EstimatorSpec(strategy="gcomp2", model="logistic"),
    "iptw": EstimatorSpec(strategy="iptw", model="logistic"),
}

# Acceptance windows, ME as (lo, hi) x1e3 and MSE as target x1e3 +/-20%.
GATES = {
    "indo": {
        "me": {
            ("gcomp", 200): (2.49, 8.49), ("gcomp", 500): (4.59, 10.59),
            ("gcomp", 1000): (3.84, 9.84),
            ("iptw", 200): (1.78, 7.78), ("iptw", 500): (2.83, 8.83),
            ("iptw", 1000): (2.22, 8.22),
        },
        "mse": {
            ("gcomp", 200): 2.84, ("gcomp", 500): 1.15, ("gcomp", 1000): 0.54,
            ("iptw", 200): 2.91, ("iptw", 500): 1.15, ("iptw", 1000): 0.53,
        },
    },
    "rotterdam": {
        "me": {("gcomp", 1000): (-7.37, -1.37)},
        "mse": {},
    },
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
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 500, 1000])
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--estimators", nargs="+", default=["gcomp", "iptw"],
                    choices=sorted(SPECS))
    ap.add_argument("--base-seed", type=int, default=0)
    ap.add_argument("--gates", choices=sorted(GATES), default=None)
    args = ap.parse_args(argv)

    scen = load_any_scenario(args.scenario)
    truth = true_ate(scen)
    ests = {name: Estimator(SPECS[name]) for name in args.estimators}
    gates = GATES[args.gates] if args.gates else {"me": {}, "mse": {}}

    print(f"truth {truth:+.6f}, reps={args.reps}, base seed {args.base_seed}")
    bad = 0
    t0 = time.perf_counter()
    for n in args.sizes:
        points = {name: [] for name in ests}
        fails = {name: 0 for name in ests}
        for rep in range(args.reps):
            d = simulate(scen, n, derive_seed(args.base_seed, n, rep))
            for name, est in ests.items():
                try:
                    points[name].append(est(d).ate_hat)
                except EngineError:
                    fails[name] += 1
        for name in ests:
            p = np.asarray(points[name])
            me = float(np.mean(p - truth))
            mse = float(np.mean((p - truth) ** 2))
            sd = float(np.std(p, ddof=1))
            line = (f"  n={n:4d} {name:7s} ME {me * 1e3:+7.2f}e-3  sd {sd:.4f}  "
                    f"MSE {mse * 1e3:5.2f}e-3  fails {fails[name]}")
            status = []
            if (name, n) in gates["me"]:
                lo, hi = gates["me"][(name, n)]
                ok = lo <= me * 1e3 <= hi
                bad += 0 if ok else 1
                status.append("ME ok" if ok else f"ME OUT {lo}..{hi}")
            if (name, n) in gates["mse"]:
                tgt = gates["mse"][(name, n)]
                ok = abs(mse * 1e3 - tgt) <= 0.20 * tgt
                bad += 0 if ok else 1
                status.append("MSE ok" if ok else f"MSE OUT {tgt}+-20%")
            print(line + ("   [" + ", ".join(status) + "]" if status else ""))
    print(f"elapsed {time.perf_counter() - t0:.1f}s")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
