import json

import numpy as np
import pytest

from pfn_bridge.backends import (
    BackendError,
    CausalPFNBackend,
    ModelStore,
    ReferenceLogisticBackend,
    make_backend,
)
from pfn_bridge.config import ServerConfig
from pfn_bridge.server import ConnectionHandler


def ref_handler(max_models=8):
    cfg = ServerConfig(backend="reference-logistic", max_models=max_models)
    return ConnectionHandler(make_backend(cfg), cfg.max_models)


def req(handler, **msg):
    return handler.handle_line(json.dumps(msg))


def logistic_data(seed=0, n=120, p=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta = rng.normal(scale=0.7, size=p)
    probs = 1.0 / (1.0 + np.exp(-(0.3 + X @ beta)))
    y = (rng.random(n) < probs).astype(float)
    if y.min() == y.max():
        y[0] = 1.0 - y[0]
    return X, y


# ---------------------------------------------------------------------------
# reference logistic
# ---------------------------------------------------------------------------


def test_reference_logistic_score_is_zero_at_optimum():
    X, y = logistic_data(1)
    backend = ReferenceLogisticBackend(ServerConfig())
    model = backend.fit(X, y)
    p = backend.predict_proba(model, X)
    design = np.column_stack([np.ones(len(y)), X])
    score = design.T @ (y - p)
    assert np.max(np.abs(score)) < 1e-8
    assert np.all((p > 0) & (p < 1))


def test_reference_logistic_feature_mismatch():
    X, y = logistic_data(2)
    backend = ReferenceLogisticBackend(ServerConfig())
    model = backend.fit(X, y)
    with pytest.raises(BackendError):
        backend.predict_proba(model, X[:, :2])


def test_reference_logistic_separated_data_saturates():
    # perfectly separated single feature: fit succeeds, predictions saturate
    X = np.linspace(-2, 2, 40).reshape(-1, 1)
    y = (X[:, 0] > 0).astype(float)
    backend = ReferenceLogisticBackend(ServerConfig())
    model = backend.fit(X, y)
    p = backend.predict_proba(model, X)
    assert p[0] < 0.01 and p[-1] > 0.99


# ---------------------------------------------------------------------------
# model store
# ---------------------------------------------------------------------------


def test_model_store_lru_eviction_and_tombstones():
    store = ModelStore(capacity=2)
    a = store.put("A")
    b = store.put("B")
    assert store.get(a) == "A"  # refreshes a; b is now least recent
    c = store.put("C")
    with pytest.raises(KeyError, match="evicted"):
        store.get(b)
    assert store.get(a) == "A" and store.get(c) == "C"
    store.free(a)
    with pytest.raises(KeyError, match="freed"):
        store.get(a)
    with pytest.raises(KeyError, match="already freed"):
        store.free(a)
    with pytest.raises(KeyError, match="unknown"):
        store.get("m999")
    assert len(store) == 1


def test_model_ids_never_reused():
    store = ModelStore(capacity=1)
    seen = set()
    for _ in range(5):
        mid = store.put(object())
        assert mid not in seen
        seen.add(mid)


# ---------------------------------------------------------------------------
# dispatcher
# ---------------------------------------------------------------------------


def test_hello_capabilities():
    h = ref_handler()
    reply = req(h, v=1, cmd="hello")
    assert reply == {"v": 1, "ok": True, "capabilities": ["fit_predict"]}
    bad = req(h, v=2, cmd="hello")
    assert bad["ok"] is False and "version" in bad["error"]


def test_fit_predict_free_cycle():
    h = ref_handler()
    X, y = logistic_data(3)
    r = req(h, cmd="fit", model="default", features=X.tolist(), labels=y.tolist())
    assert r["ok"] and r["model_id"] == "m1"
    pr = req(h, cmd="predict_proba", model_id="m1", features=X.tolist())
    assert pr["ok"] and len(pr["probs"]) == len(y)
    assert all(0.0 <= v <= 1.0 for v in pr["probs"])
    assert req(h, cmd="free", model_id="m1") == {"ok": True}
    stale = req(h, cmd="predict_proba", model_id="m1", features=X.tolist())
    assert stale["ok"] is False and "freed" in stale["error"]
    refit = req(h, cmd="fit", model="default", features=X.tolist(), labels=y.tolist())
    assert refit["model_id"] == "m2"


def test_dispatcher_error_paths_do_not_raise():
    h = ref_handler()
    cases = [
        "{broken json",
        json.dumps({"cmd": "warp"}),
        json.dumps({"cmd": "fit", "features": [[1, 2]], "labels": [0.5]}),
        json.dumps({"cmd": "fit", "features": "x", "labels": [1]}),
        json.dumps({"cmd": "predict_proba", "model_id": "m9", "features": [[1.0]]}),
        json.dumps({"cmd": "predict_proba", "features": [[1.0]]}),
        json.dumps({"cmd": "free", "model_id": "m9"}),
        json.dumps({"cmd": "estimate_ate", "features": [[1.0]],
                    "treatment": [1], "outcome": [1]}),
    ]
    for line in cases:
        reply = h.handle_line(line)
        assert reply["ok"] is False and reply["error"]
    # the handler still works afterwards
    X, y = logistic_data(4)
    assert req(h, cmd="fit", model="default",
               features=X.tolist(), labels=y.tolist())["ok"]


def test_lru_eviction_through_dispatcher():
    h = ref_handler(max_models=1)
    X, y = logistic_data(5, n=40, p=2)
    first = req(h, cmd="fit", model="default", features=X.tolist(), labels=y.tolist())
    second = req(h, cmd="fit", model="default", features=X.tolist(), labels=y.tolist())
    gone = req(h, cmd="predict_proba", model_id=first["model_id"],
               features=X.tolist())
    assert gone["ok"] is False and "evicted" in gone["error"]
    alive = req(h, cmd="predict_proba", model_id=second["model_id"],
                features=X.tolist())
    assert alive["ok"] is True


# ---------------------------------------------------------------------------
# causalpfn path (stubbed; the real backend needs pretrained weights)
# ---------------------------------------------------------------------------


class _StubEstimator:
    def __init__(self, **kwargs):
        pass

    def estimate_ate(self, z, x, y, ci_level=0.95):
        ate = float(np.mean(y[x == 1]) - np.mean(y[x == 0]))
        return {"ate": ate, "lo": ate - 0.1, "hi": ate + 0.1}


def test_estimate_ate_dispatch_with_stub(monkeypatch):
    monkeypatch.setattr(CausalPFNBackend, "_load", lambda self: _StubEstimator)
    cfg = ServerConfig(backend="causalpfn")
    h = ConnectionHandler(make_backend(cfg), cfg.max_models)
    hello = req(h, v=1, cmd="hello")
    assert hello["capabilities"] == ["estimate_ate"]
    rng = np.random.default_rng(6)
    z = rng.integers(0, 2, size=(50, 3)).astype(float)
    x = rng.integers(0, 2, size=50).astype(float)
    x[:4] = [0, 1, 0, 1]
    y = rng.integers(0, 2, size=50).astype(float)
    r = req(h, cmd="estimate_ate", features=z.tolist(),
            treatment=x.tolist(), outcome=y.tolist())
    assert r["ok"] and r["lo"] <= r["ate"] <= r["hi"] and r["hi"] - r["lo"] > 0
    fit_refused = req(h, cmd="fit", model="default",
                      features=z.tolist(), labels=y.tolist())
    assert fit_refused["ok"] is False and "does not fit" in fit_refused["error"]


def test_estimate_ate_refused_without_capability():
    h = ref_handler()
    r = req(h, cmd="estimate_ate", features=[[0.0], [1.0]],
            treatment=[0, 1], outcome=[0, 1])
    assert r["ok"] is False and "estimate" in r["error"]


# ---------------------------------------------------------------------------
# optional: real PFN backends when their packages are installed
# ---------------------------------------------------------------------------


def test_real_tabpfn_fit_predict():
    pytest.importorskip("tabpfn")
    cfg = ServerConfig(backend="tabpfn")
    h = ConnectionHandler(make_backend(cfg), cfg.max_models)
    X, y = logistic_data(7, n=60, p=3)
    r = req(h, cmd="fit", model="default", features=X.tolist(), labels=y.tolist())
    assert r["ok"]
    pr = req(h, cmd="predict_proba", model_id=r["model_id"], features=X.tolist())
    assert pr["ok"] and all(0.0 <= v <= 1.0 for v in pr["probs"])


def test_real_causalpfn_interval_well_formed():
    pytest.importorskip("causalpfn")
    cfg = ServerConfig(backend="causalpfn")
    h = ConnectionHandler(make_backend(cfg), cfg.max_models)
    rng = np.random.default_rng(8)
    z = rng.integers(0, 2, size=(200, 3)).astype(float)
    e = 1.0 / (1.0 + np.exp(-(z[:, 0] - 0.5)))
    x = (rng.random(200) < e).astype(float)
    py = 1.0 / (1.0 + np.exp(-(0.8 * z[:, 0] - 0.4 * x)))
    y = (rng.random(200) < py).astype(float)
    r = req(h, cmd="estimate_ate", features=z.tolist(),
            treatment=x.tolist(), outcome=y.tolist())
    assert r["ok"] and r["lo"] <= r["ate"] <= r["hi"] and r["hi"] - r["lo"] > 0
