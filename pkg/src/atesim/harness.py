"""Monte Carlo study harness.

Runs scenario x sample-size x estimator grids with a paired design: within a
(sample size, replicate) cell, every estimator sees the same simulated
dataset (verified by dataset hashes in the audit records), and bootstrap
resample streams are shared across estimators. Replicates are distributed
over a worker pool; determinism comes from substream seeding, never from
scheduling order.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import BootstrapConfig, bootstrap_ci
from .errors import EngineError
from .estimators import Estimator, EstimatorSpec, estimate_external_direct
from .rng import derive_seed
from .scenario import Scenario, load_scenario, simulate, true_ate

DEFAULT_SAMPLE_SIZES = (200, 500, 1000)
DEFAULT_REPLICATES = 1000


@dataclass
class StudyConfig:
    scenario: Scenario
    estimators: tuple
    sample_sizes: tuple = DEFAULT_SAMPLE_SIZES
    replicates: int = DEFAULT_REPLICATES
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    base_seed: int = 0
    workers: int = 1
    name: str = "study"

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if any(n < 2 for n in self.sample_sizes):
            raise ValueError("sample sizes must be >= 2")

    @staticmethod
    def from_json(path: str, scenario_path: str | None = None,
                  base_seed: int | None = None, workers: int | None = None) -> "StudyConfig":
        """Load a study config document.

        Schema: {"scenario": path, "sample_sizes": [..], "replicates": int,
        "estimators": [{"strategy":.., "model":.., "endpoint":..}, ..],
        "bootstrap": {"iterations":.., "level":.., "max_redraws":..},
        "base_seed": int, "workers": int, "name": str}. Relative scenario
        paths resolve against the current working directory.
        """
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        spath = scenario_path or doc["scenario"]
        scen = load_scenario(spath)
        specs = tuple(
            EstimatorSpec(
                strategy=e["strategy"],
                model=e.get("model"),
                endpoint=e.get("endpoint"),
            )
            for e in doc["estimators"]
        )
        bdoc = doc.get("bootstrap", {})
        boot = BootstrapConfig(
            iterations=bdoc.get("iterations", 599),
            level=bdoc.get("level", 0.95),
            max_redraws=bdoc.get("max_redraws"),
        )
        return StudyConfig(
            scenario=scen,
            estimators=specs,
            sample_sizes=tuple(doc.get("sample_sizes", DEFAULT_SAMPLE_SIZES)),
            replicates=doc.get("replicates", DEFAULT_REPLICATES),
            bootstrap=boot,
            base_seed=base_seed if base_seed is not None else doc.get("base_seed", 0),
            workers=workers if workers is not None else doc.get("workers", 1),
            name=doc.get("name", "study"),
        )


@dataclass
class StudyMetrics:
    coverage: float
    mean_width: float
    bias_eliminated_coverage: float
    mean_error: float
    mse: float
    mean_time_s: float
    mc_se_coverage: float
    failures: int
    n_used: int


def compute_metrics(results, truth: float, failures: int = 0) -> StudyMetrics:
    """Aggregate EstimateResults against the known truth.

    mean_error = mean(point - truth); bias-eliminated coverage counts
    intervals containing truth + bias (equivalently, intervals re-centered by
    subtracting the Monte Carlo bias that cover truth).
    """
    if not results:
        raise ValueError("results must be non-empty")
    points = np.array([r.point for r in results])
    lo = np.array([r.lo for r in results])
    hi = np.array([r.hi for r in results])
    times = np.array([r.wall_time_s for r in results])
    r_count = points.shape[0]

    coverage = float(np.mean((lo <= truth) & (truth <= hi)))
    bias = float(np.mean(points - truth))
    shifted = truth + bias
    bec = float(np.mean((lo <= shifted) & (shifted <= hi)))
    mse = float(np.mean((points - truth) ** 2))
    return StudyMetrics(
        coverage=coverage,
        mean_width=float(np.mean(hi - lo)),
        bias_eliminated_coverage=bec,
        mean_error=bias,
        mse=mse,
        mean_time_s=float(np.mean(times)),
        mc_se_coverage=float(np.sqrt(coverage * (1.0 - coverage) / r_count)),
        failures=failures,
        n_used=r_count,
    )


@dataclass
class StudyResult:
    truth: float
    metrics: dict  # (sample_size, estimator label) -> StudyMetrics
    order: list  # deterministic key order
    audit: list  # per-(estimator, replicate) record dicts
    config_summary: dict

    def rows(self):
        for key in self.order:
            yield key, self.metrics[key]


# ---------------------------------------------------------------------------
# Worker plumbing
# ---------------------------------------------------------------------------

_CTX = None


def _init_worker(payload):
    global _CTX
    _CTX = payload


def _replicate_seeds(base_seed: int, n: int, rep: int):
    return (
        derive_seed(base_seed, n, rep),
        derive_seed(base_seed, "bootstrap", n, rep),
    )


def _run_cell(scenario, estimators, boot, base_seed, n, rep):
    """One (sample size, replicate): simulate once, run every estimator on it."""
    from dataclasses import replace as _replace

    data_seed, boot_seed = _replicate_seeds(base_seed, n, rep)
    d = simulate(scenario, n, data_seed)
    d_hash = d.sha256()
    bcfg = _replace(boot, seed=boot_seed)
    records = []
    for spec in estimators:
        rec = {
            "sample_size": n,
            "replicate": rep,
            "estimator": spec.label(),
            "dataset_sha256": d_hash,
            "point": None,
            "lo": None,
            "hi": None,
            "kind": None,
            "wall_time_s": None,
            "redraw_count": None,
            "error": None,
        }
        try:
            if spec.strategy == "external-direct":
                res = estimate_external_direct(d, spec.endpoint)
            else:
                res = bootstrap_ci(d, Estimator(spec), bcfg, workers=1)
            rec.update(
                point=res.point,
                lo=res.lo,
                hi=res.hi,
                kind=res.kind,
                wall_time_s=res.wall_time_s,
                redraw_count=res.redraw_count,
            )
        except EngineError as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    return records


def _worker(task):
    n, rep = task
    scenario, estimators, boot, base_seed = _CTX
    return n, rep, _run_cell(scenario, estimators, boot, base_seed, n, rep)


def run_study(cfg: StudyConfig, audit_path: str | None = None,
              progress: bool = False) -> StudyResult:
    """Run the full grid and aggregate per-(sample size, estimator) metrics.

    Replicate (n, rep) simulates with substream (base_seed, n, rep); its
    bootstrap streams are keyed (base_seed, "bootstrap", n, rep) and shared by
    all estimators (paired resampling). Estimator hard failures are counted,
    excluded from aggregates, and kept in the audit records. Identical configs
    give identical metric tables at any worker count.
    """
    cfg.scenario.validate()
    truth = true_ate(cfg.scenario)
    tasks = [(n, rep) for n in cfg.sample_sizes for rep in range(cfg.replicates)]
    payload = (cfg.scenario, cfg.estimators, cfg.bootstrap, cfg.base_seed)

    cell_records = {}
    if cfg.workers > 1:
        import multiprocessing as mp

        chunk = max(1, len(tasks) // (cfg.workers * 8))
        with mp.Pool(cfg.workers, initializer=_init_worker, initargs=(payload,)) as pool:
            done = 0
            for n, rep, recs in pool.imap_unordered(_worker, tasks, chunksize=chunk):
                cell_records[(n, rep)] = recs
                done += 1
                if progress and done % max(1, len(tasks) // 20) == 0:
                    print(f"[{cfg.name}] {done}/{len(tasks)} replicates", file=sys.stderr)
    else:
        _init_worker(payload)
        for done, task in enumerate(tasks, start=1):
            n, rep, recs = _worker(task)
            cell_records[(n, rep)] = recs
            if progress and done % max(1, len(tasks) // 20) == 0:
                print(f"[{cfg.name}] {done}/{len(tasks)} replicates", file=sys.stderr)

    labels = [spec.label() for spec in cfg.estimators]
    metrics = {}
    order = []
    audit = []
    for n in cfg.sample_sizes:
        per_label = {lab: [] for lab in labels}
        fail_count = {lab: 0 for lab in labels}
        for rep in range(cfg.replicates):
            for rec in cell_records[(n, rep)]:
                audit.append(rec)
                lab = rec["estimator"]
                if rec["error"] is None:
                    per_label[lab].append(rec)
                else:
                    fail_count[lab] += 1
        for lab in labels:
            key = (n, lab)
            order.append(key)
            good = per_label[lab]
            if not good:
                raise EngineError(f"every replicate failed for {lab} at n={n}")
            metrics[key] = compute_metrics(
                [_RecordView(r) for r in good], truth, failures=fail_count[lab]
            )

    if audit_path:
        with open(audit_path, "w", encoding="utf-8") as fh:
            for rec in audit:
                fh.write(json.dumps(rec) + "\n")

    summary = {
        "name": cfg.name,
        "replicates": cfg.replicates,
        "sample_sizes": list(cfg.sample_sizes),
        "estimators": labels,
        "bootstrap_iterations": cfg.bootstrap.iterations,
        "level": cfg.bootstrap.level,
        "base_seed": cfg.base_seed,
        "true_ate": truth,
    }
    return StudyResult(truth=truth, metrics=metrics, order=order,
                       audit=audit, config_summary=summary)


class _RecordView:
    """Adapts an audit record dict to the EstimateResult attribute surface."""

    __slots__ = ("point", "lo", "hi", "wall_time_s")

    def __init__(self, rec):
        self.point = rec["point"]
        self.lo = rec["lo"]
        self.hi = rec["hi"]
        self.wall_time_s = rec["wall_time_s"]
