"""Causal-effect point estimators.

Five strategies: crude association, single-model g-computation, two-model
g-computation (T-learner), Hajek IPTW, and a direct-ATE pass-through to an
external server. All are pure functions of (dataset, model factory) and
permutation-symmetric in row order. Arm failures raise typed errors; the
bootstrap layer owns the redraw policy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bootstrap import EstimateResult
from .errors import EmptyArmError, EstimatorError, FitError, InfiniteWeightError
from .models import BoostedTreesConfig, fit_boosted_trees, fit_logistic

STRATEGIES = ("crude", "gcomp", "gcomp2", "iptw", "external-direct")
MODELS = ("logistic", "boosted-trees", "external")


@dataclass(frozen=True)
class EstimatorSpec:
    """A causal strategy paired with a statistical model.

    crude and external-direct carry no model; external-direct and
    model="external" carry an endpoint.
    """

    strategy: str
    model: str | None = None
    endpoint: str | None = None
    boosted: BoostedTreesConfig | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise EstimatorError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "crude" and self.model is not None:
            raise EstimatorError("crude carries no model")
        if self.strategy == "external-direct":
            if self.endpoint is None:
                raise EstimatorError("external-direct needs an endpoint")
            if self.model is not None:
                raise EstimatorError("external-direct carries no model")
        elif self.strategy in ("gcomp", "gcomp2", "iptw"):
            if self.model not in MODELS:
                raise EstimatorError(f"strategy {self.strategy!r} needs a model in {MODELS}")
            if self.model == "external" and self.endpoint is None:
                raise EstimatorError("external model needs an endpoint")

    def label(self) -> str:
        if self.strategy in ("crude", "external-direct"):
            return self.strategy
        return f"{self.strategy}+{self.model}"


@dataclass
class PointEstimate:
    ate_hat: float
    per_arm: tuple | None = None
    diagnostics: dict | None = None


def _check_arms(x: np.ndarray) -> None:
    n1 = int(x.sum())
    if n1 == 0:
        raise EmptyArmError(1)
    if n1 == x.shape[0]:
        raise EmptyArmError(0)


def _model_diagnostics(model) -> dict:
    diag = getattr(model, "diagnostics", None)
    if diag is None:
        return {}
    return {
        "converged": diag.converged,
        "iterations": diag.iterations,
        "separation": diag.separation,
        "warnings": list(diag.warnings),
    }


def estimate_crude(d) -> PointEstimate:
    """Unadjusted difference in outcome means between the arms."""
    _check_arms(d.x)
    treated = d.x == 1
    mu1 = float(np.mean(d.y[treated]))
    mu0 = float(np.mean(d.y[~treated]))
    return PointEstimate(ate_hat=mu1 - mu0, per_arm=(mu1, mu0), diagnostics={})


def estimate_gcomp(d, fit) -> PointEstimate:
    """Single-model g-computation (standardization).

    Fits one outcome model on [x, z], predicts every row under x=1 and x=0,
    and averages the contrasts.
    """
    _check_arms(d.x)
    z = d.z.astype(float)
    features = np.column_stack([d.x.astype(float), z])
    model = fit(features, d.y)
    x1 = features.copy()
    x1[:, 0] = 1.0
    x0 = features.copy()
    x0[:, 0] = 0.0
    p1 = np.asarray(model.predict_proba(x1), dtype=float)
    p0 = np.asarray(model.predict_proba(x0), dtype=float)
    mu1 = float(np.mean(p1))
    mu0 = float(np.mean(p0))
    return PointEstimate(ate_hat=mu1 - mu0, per_arm=(mu1, mu0),
                         diagnostics=_model_diagnostics(model))


def estimate_gcomp2(d, fit) -> PointEstimate:
    """Two-model g-computation (T-learner): one outcome model per arm on [z]."""
    _check_arms(d.x)
    z = d.z.astype(float)
    treated = d.x == 1
    models = {}
    for arm, mask in ((1, treated), (0, ~treated)):
        try:
            models[arm] = fit(z[mask], d.y[mask])
        except Exception as exc:
            raise FitError(f"arm x={arm} model fit failed: {exc}") from exc
    p1 = np.asarray(models[1].predict_proba(z), dtype=float)
    p0 = np.asarray(models[0].predict_proba(z), dtype=float)
    mu1 = float(np.mean(p1))
    mu0 = float(np.mean(p0))
    diag = {f"arm{arm}": _model_diagnostics(m) for arm, m in models.items()}
    return PointEstimate(ate_hat=mu1 - mu0, per_arm=(mu1, mu0), diagnostics=diag)


def estimate_iptw(d, fit) -> PointEstimate:
    """Hajek (self-normalized) inverse probability of treatment weighting.

    Propensities come from a model of x on [z]; weights are 1/e for treated
    rows and 1/(1-e) for controls. A fitted propensity of exactly 0 or 1
    raises InfiniteWeight (the bootstrap redraws such resamples).
    """
    _check_arms(d.x)
    z = d.z.astype(float)
    model = fit(z, d.x)
    e = np.asarray(model.predict_proba(z), dtype=float)
    bad = int(np.sum((e == 0.0) | (e == 1.0)))
    if bad:
        raise InfiniteWeightError(bad)
    x = d.x.astype(float)
    y = d.y.astype(float)
    w = np.where(d.x == 1, 1.0 / e, 1.0 / (1.0 - e))
    sw1 = float(np.sum(w * x))
    sw0 = float(np.sum(w * (1.0 - x)))
    mu1 = float(np.sum(w * x * y)) / sw1
    mu0 = float(np.sum(w * (1.0 - x) * y)) / sw0
    wt = w[d.x == 1]
    wc = w[d.x == 0]
    diag = _model_diagnostics(model)
    diag.update(
        max_weight=float(np.max(w)),
        ess_treated=float(wt.sum() ** 2 / np.sum(wt**2)),
        ess_control=float(wc.sum() ** 2 / np.sum(wc**2)),
    )
    return PointEstimate(ate_hat=mu1 - mu0, per_arm=(mu1, mu0), diagnostics=diag)


def estimate_external_direct(d, endpoint) -> EstimateResult:
    """Ask a protocol-v1 server for its native ATE point and credible interval.

    Sends (z-matrix, x, y) once; the server's bounds are passed through
    verbatim (lower > upper is rejected by EstimateResult). No bootstrap.
    """
    from .external import open_session

    t0 = time.perf_counter()
    if hasattr(endpoint, "estimate_ate"):
        ate, lo, hi = endpoint.estimate_ate(d.z, d.x, d.y)
    else:
        with open_session(endpoint) as session:
            ate, lo, hi = session.estimate_ate(d.z, d.x, d.y)
    return EstimateResult(
        point=float(ate),
        lo=float(lo),
        hi=float(hi),
        kind="native-credible",
        wall_time_s=time.perf_counter() - t0,
        redraw_count=0,
    )


# ---------------------------------------------------------------------------
# Factory plumbing
# ---------------------------------------------------------------------------

def _fit_boosted_factory(cfg):
    def factory(X, y):
        return fit_boosted_trees(X, y, cfg)

    return factory


class Estimator:
    """Picklable estimator closure: dataset -> PointEstimate.

    Built from an EstimatorSpec. The model factory (including any external
    session) is created lazily per process, so instances survive pickling
    into worker pools.
    """

    def __init__(self, spec: EstimatorSpec):
        self.spec = spec
        self._factory = None

    def __getstate__(self):
        return {"spec": self.spec}

    def __setstate__(self, state):
        self.spec = state["spec"]
        self._factory = None

    def model_factory(self):
        if self._factory is not None:
            return self._factory
        spec = self.spec
        if spec.model == "logistic":
            self._factory = fit_logistic
        elif spec.model == "boosted-trees":
            self._factory = _fit_boosted_factory(spec.boosted or BoostedTreesConfig())
        elif spec.model == "external":
            from .external import connect_external_model

            task = "propensity" if spec.strategy == "iptw" else "outcome"
            self._factory = connect_external_model(spec.endpoint, task)
        else:
            raise ValueError(f"no model factory for {spec!r}")
        return self._factory

    def __call__(self, d):
        strategy = self.spec.strategy
        if strategy == "crude":
            return estimate_crude(d)
        if strategy == "gcomp":
            return estimate_gcomp(d, self.model_factory())
        if strategy == "gcomp2":
            return estimate_gcomp2(d, self.model_factory())
        if strategy == "iptw":
            return estimate_iptw(d, self.model_factory())
        raise ValueError(f"{strategy} is not a point estimator; use estimate_external_direct")
