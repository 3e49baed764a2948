"""Model backends and the per-connection LRU model store.

Every backend answers fit/predict_proba; only causalpfn answers
estimate_ate. The heavy imports (torch and friends) happen lazily inside
the PFN backends so that the reference backend, and the protocol machinery
around it, stay importable everywhere.
"""

from collections import OrderedDict

import numpy as np


class BackendError(RuntimeError):
    """Any backend-side failure; the server reports it and keeps serving."""


# ---------------------------------------------------------------------------
# reference logistic
# ---------------------------------------------------------------------------


def _sigmoid(eta):
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class _NewtonLogistic:
    """Plain dense Newton maximum-likelihood logistic with an intercept.

    Deliberately written from first principles rather than shared with any
    client-side implementation: this backend exists so two independent
    codebases can check each other through the wire protocol.
    """

    def __init__(self, X, y):
        n, p = X.shape
        design = np.column_stack([np.ones(n), X])
        beta = np.zeros(p + 1)
        converged = False
        for _ in range(50):
            mu = _sigmoid(design @ beta)
            score = design.T @ (y - mu)
            if np.max(np.abs(score)) < 1e-10:
                converged = True
                break
            w = np.maximum(mu * (1.0 - mu), 1e-10)
            hess = (design * w[:, None]).T @ design
            try:
                beta = beta + np.linalg.solve(hess, score)
            except np.linalg.LinAlgError as exc:
                raise BackendError(f"singular normal equations: {exc}") from exc
            if np.max(np.abs(beta)) > 30.0:
                # separated data cannot reach an interior optimum; stop at a
                # saturated iterate like reference GLM implementations do
                converged = True
                break
        if not converged and np.max(np.abs(score)) > 1e-6:
            raise BackendError("Newton iterations failed to converge")
        self._beta = beta
        self._p = p

    def predict_proba(self, X):
        if X.shape[1] != self._p:
            raise BackendError(
                f"model was fitted on {self._p} features, got {X.shape[1]}"
            )
        return _sigmoid(self._beta[0] + X @ self._beta[1:])


class ReferenceLogisticBackend:
    name = "reference-logistic"
    capabilities = ("fit_predict",)

    def __init__(self, cfg):
        self.cfg = cfg

    def fit(self, X, y):
        return _NewtonLogistic(X, y)

    def predict_proba(self, model, X):
        return model.predict_proba(X)


# ---------------------------------------------------------------------------
# PFN backends
# ---------------------------------------------------------------------------


class TabPFNBackend:
    """In-context tabular classifier; fit stores the episode, predict runs it."""

    name = "tabpfn"
    capabilities = ("fit_predict",)

    def __init__(self, cfg):
        self.cfg = cfg
        self._cls = self._load()

    def _load(self):
        try:
            from tabpfn import TabPFNClassifier
        except ImportError as exc:
            raise BackendError(
                f"backend tabpfn is not importable here: {exc}"
            ) from exc
        return TabPFNClassifier

    def fit(self, X, y):
        kwargs = {"device": self.cfg.device}
        kwargs.update(self.cfg.extra_settings)
        try:
            clf = self._cls(**kwargs)
            clf.fit(X, y.astype(int))
        except Exception as exc:
            raise BackendError(f"tabpfn fit failed: {exc}") from exc
        return clf

    def predict_proba(self, model, X):
        try:
            probs = np.asarray(model.predict_proba(X), dtype=float)
        except Exception as exc:
            raise BackendError(f"tabpfn predict failed: {exc}") from exc
        if probs.ndim == 2:
            probs = probs[:, -1]
        return np.clip(probs, 0.0, 1.0)


class CausalPFNBackend:
    """Direct ATE estimation with the backend's native 95% credible interval."""

    name = "causalpfn"
    capabilities = ("estimate_ate",)

    def __init__(self, cfg):
        self.cfg = cfg
        self._estimator_cls = self._load()

    def _load(self):
        try:
            import causalpfn
        except ImportError as exc:
            raise BackendError(
                f"backend causalpfn is not importable here: {exc}"
            ) from exc
        for attr in ("CausalPFN", "ATEEstimator", "CausalPFNEstimator"):
            cls = getattr(causalpfn, attr, None)
            if cls is not None:
                return cls
        raise BackendError(
            "causalpfn is installed but exposes no known estimator entry point"
        )

    def estimate_ate(self, z, x, y):
        kwargs = {"device": self.cfg.device}
        kwargs.update(self.cfg.extra_settings)
        try:
            est = self._estimator_cls(**kwargs)
        except TypeError:
            est = self._estimator_cls()
        try:
            out = est.estimate_ate(z, x, y, ci_level=0.95)
        except TypeError:
            out = est.estimate_ate(z, x, y)
        except Exception as exc:
            raise BackendError(f"causalpfn estimate failed: {exc}") from exc
        ate, lo, hi = self._unpack(out)
        if not (lo <= ate <= hi):
            raise BackendError(
                f"backend returned an out-of-order interval [{lo}, {hi}] around {ate}"
            )
        return float(ate), float(lo), float(hi)

    @staticmethod
    def _unpack(out):
        if isinstance(out, dict):
            try:
                return float(out["ate"]), float(out["lo"]), float(out["hi"])
            except KeyError as exc:
                raise BackendError(f"unexpected causalpfn output keys: {out}") from exc
        try:
            ate, lo, hi = (float(v) for v in np.asarray(out, dtype=float).ravel()[:3])
        except (TypeError, ValueError) as exc:
            raise BackendError(f"unexpected causalpfn output: {out!r}") from exc
        return ate, lo, hi


BACKEND_CLASSES = {
    cls.name: cls
    for cls in (ReferenceLogisticBackend, TabPFNBackend, CausalPFNBackend)
}


def make_backend(cfg):
    return BACKEND_CLASSES[cfg.backend](cfg)


# ---------------------------------------------------------------------------
# model store
# ---------------------------------------------------------------------------


class ModelStore:
    """Monotonically numbered fitted models with LRU eviction.

    Ids are never reused: a freed or evicted id stays invalid for the life
    of the connection, so stale handles fail loudly instead of silently
    hitting a newer model.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._models = OrderedDict()
        self._dead = {}  # id -> "freed" | "evicted"
        self._counter = 0

    def put(self, model) -> str:
        self._counter += 1
        model_id = f"m{self._counter}"
        self._models[model_id] = model
        if len(self._models) > self.capacity:
            old_id, _ = self._models.popitem(last=False)
            self._dead[old_id] = "evicted"
        return model_id

    def get(self, model_id: str):
        if model_id in self._models:
            self._models.move_to_end(model_id)
            return self._models[model_id]
        if model_id in self._dead:
            raise KeyError(
                f"model_id {model_id!r} was {self._dead[model_id]}"
                + (f" (LRU capacity {self.capacity})"
                   if self._dead[model_id] == "evicted" else "")
            )
        raise KeyError(f"unknown model_id {model_id!r}")

    def free(self, model_id: str) -> None:
        if model_id in self._models:
            del self._models[model_id]
            self._dead[model_id] = "freed"
            return
        if model_id in self._dead:
            raise KeyError(f"model_id {model_id!r} was already {self._dead[model_id]}")
        raise KeyError(f"unknown model_id {model_id!r}")

    def __len__(self):
        return len(self._models)
