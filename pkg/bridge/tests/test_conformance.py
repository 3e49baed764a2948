"""Cross-implementation conformance: the reference-logistic backend, reached
through the wire protocol by the engine's client, must reproduce the engine's
in-process logistic probabilities to 1e-6 on random non-separated data. This
file finishes with one PASS line so the suite output reads as a checklist.
"""

import sys

import numpy as np
import pytest

atesim = pytest.importorskip("atesim")

from atesim import connect_external_model, fit_logistic  # noqa: E402


def make_dataset(rng):
    n = int(rng.integers(60, 300))
    p = int(rng.integers(1, 6))
    X = rng.normal(size=(n, p))
    beta = rng.normal(scale=0.7, size=p)
    eta = np.clip(0.2 + X @ beta, -1.8, 1.8)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    if y.min() == y.max():
        y[0] = 1.0 - y[0]
    return X, y


def test_reference_backend_matches_engine_logistic():
    endpoint = (f"stdio:{sys.executable} -m pfn_bridge --listen stdio "
                "--backend reference-logistic --max-models 4")
    factory = connect_external_model(endpoint, task="outcome")
    rng = np.random.default_rng(518)
    worst = 0.0
    try:
        for trial in range(50):
            X, y = make_dataset(rng)
            local = fit_logistic(X, y).predict_proba(X)
            remote_model = factory(X, y)
            remote = remote_model.predict_proba(X)
            remote_model.free()
            worst = max(worst, float(np.max(np.abs(local - remote))))
            assert worst < 1e-6, f"trial {trial}: max divergence {worst:.3e}"
    finally:
        factory.close()
    print(f"protocol conformance: PASS (worst |diff| {worst:.2e} over 50 datasets)")
