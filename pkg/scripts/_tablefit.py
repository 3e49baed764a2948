"""Population-limit estimator values for integer (z, x, y) cell tables.

The bundled source tables are synthetic. Their joint cell counts are chosen
so that the scenario built from them lands on documented target summaries:
stratum count, retained rows, true ATE, and the large-sample value of each
estimator under the empirical distribution the table induces. Every
estimator here has a closed-form population limit given the table (the
model-based ones via a small weighted MLE with fractional targets), so a
search loop can steer the counts without ever simulating.

Conventions: a table holds K retained strata (both treatment arms present),
bit pattern rows `bits` (K, d), and integer vectors n (stratum size),
t (treated), e1 (events among treated), e0 (events among controls).
"""

from __future__ import annotations

import numpy as np


def sigmoid(eta):
    return 1.0 / (1.0 + np.exp(-np.clip(eta, -35.0, 35.0)))


def fit_fractional_logistic(X, w, target, tol=1e-11, max_iter=200, ridge=1e-9):
    """Weighted logistic MLE where targets may be fractions in [0, 1].

    This is the population analogue of an ordinary logistic fit: cells stand
    in for infinitely many rows, w is the cell mass and target the cell mean.
    Newton steps with halving on deviance increase; the tiny ridge keeps the
    optimum finite when a search proposal separates some coefficient.
    """
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    target = np.asarray(target, dtype=float)
    beta = np.zeros(X.shape[1])

    def deviance(b):
        mu = sigmoid(X @ b)
        mu = np.clip(mu, 1e-12, 1.0 - 1e-12)
        ll = float(np.sum(w * (target * np.log(mu) + (1.0 - target) * np.log(1.0 - mu))))
        return -2.0 * ll + ridge * float(b @ b)

    dev = deviance(beta)
    for _ in range(max_iter):
        mu = sigmoid(X @ beta)
        grad = X.T @ (w * (target - mu)) - ridge * beta
        if np.max(np.abs(grad)) < tol:
            return beta
        h = w * mu * (1.0 - mu)
        hess = X.T @ (X * h[:, None]) + ridge * np.eye(X.shape[1])
        step = np.linalg.solve(hess, grad)
        scale = 1.0
        for _ in range(40):
            cand = beta + scale * step
            cand_dev = deviance(cand)
            if cand_dev <= dev + 1e-14:
                beta, dev = cand, cand_dev
                break
            scale *= 0.5
        else:
            return beta
    raise RuntimeError("population logistic fit did not converge")


class Table:
    """Integer cell counts for one scenario design."""

    def __init__(self, bits, n, t, e1, e0):
        self.bits = np.asarray(bits, dtype=np.uint8)
        self.n = np.asarray(n, dtype=np.int64).copy()
        self.t = np.asarray(t, dtype=np.int64).copy()
        self.e1 = np.asarray(e1, dtype=np.int64).copy()
        self.e0 = np.asarray(e0, dtype=np.int64).copy()
        self.k = self.bits.shape[0]
        self.validate()

    def validate(self):
        ok = (
            np.all(self.t >= 1)
            and np.all(self.n - self.t >= 1)
            and np.all(self.e1 >= 0)
            and np.all(self.e0 >= 0)
            and np.all(self.e1 <= self.t)
            and np.all(self.e0 <= self.n - self.t)
        )
        if not ok:
            raise ValueError("inconsistent cell counts")

    def copy(self):
        return Table(self.bits, self.n, self.t, self.e1, self.e0)

    def fractions(self):
        P = self.n / self.n.sum()
        e = self.t / self.n
        p1 = self.e1 / self.t
        p0 = self.e0 / (self.n - self.t)
        return P, e, p1, p0

    def marginal_zero(self, j):
        """Rows whose j-th confounder bit is 0."""
        return int(self.n[self.bits[:, j] == 0].sum())

    def functionals(self):
        """Exact n -> infinity value of each estimator on this design."""
        P, e, p1, p0 = self.fractions()
        Z = self.bits.astype(float)
        truth = float(np.sum(P * (p1 - p0)))

        px = float(np.sum(P * e))
        crude = float(np.sum(P * e * p1) / px - np.sum(P * (1 - e) * p0) / (1 - px))

        # Single outcome model: y ~ intercept + x + z, main effects only.
        ones = np.ones((self.k, 1))
        X1 = np.hstack([ones, np.ones((self.k, 1)), Z])
        X0 = np.hstack([ones, np.zeros((self.k, 1)), Z])
        Xg = np.vstack([X1, X0])
        wg = np.concatenate([P * e, P * (1 - e)])
        tg = np.concatenate([p1, p0])
        bg = fit_fractional_logistic(Xg, wg, tg)
        gcomp = float(np.sum(P * (sigmoid(X1 @ bg) - sigmoid(X0 @ bg))))

        # One outcome model per arm: y ~ intercept + z within each arm.
        Xa = np.hstack([ones, Z])
        b1 = fit_fractional_logistic(Xa, P * e, p1)
        b0 = fit_fractional_logistic(Xa, P * (1 - e), p0)
        gcomp2 = float(np.sum(P * (sigmoid(Xa @ b1) - sigmoid(Xa @ b0))))

        # Propensity model: x ~ intercept + z, then the ratio-form weighted means.
        ba = fit_fractional_logistic(Xa, P, e)
        ehat = sigmoid(Xa @ ba)
        w1 = P * e / ehat
        w0 = P * (1 - e) / (1 - ehat)
        mu1 = float(np.sum(w1 * p1) / np.sum(w1))
        mu0 = float(np.sum(w0 * p0) / np.sum(w0))
        iptw = mu1 - mu0

        # Per-row influence variances (n * var of the estimator).
        mu1c = float(np.sum(P * e * p1) / px)
        mu0c = float(np.sum(P * (1 - e) * p0) / (1 - px))
        nvar_crude = float(
            np.sum(P * e * (p1 * (1 - p1) + (p1 - mu1c) ** 2)) / px**2
            + np.sum(P * (1 - e) * (p0 * (1 - p0) + (p0 - mu0c) ** 2)) / (1 - px) ** 2
        )
        rd = p1 - p0
        nvar_bound = float(
            np.sum(P * (p1 * (1 - p1) / e + p0 * (1 - p0) / (1 - e)))
            + np.sum(P * (rd - truth) ** 2)
        )
        W1 = float(np.sum(w1))
        W0 = float(np.sum(w0))
        nvar_iptw = float(
            np.sum(P * e * (p1 * (1 - p1) + (p1 - mu1) ** 2) / ehat**2) / W1**2
            + np.sum(P * (1 - e) * (p0 * (1 - p0) + (p0 - mu0) ** 2) / (1 - ehat) ** 2) / W0**2
        )

        return {
            "truth": truth,
            "crude": crude,
            "gcomp": gcomp,
            "gcomp2": gcomp2,
            "iptw": iptw,
            "nvar_crude": nvar_crude,
            "nvar_bound": nvar_bound,
            "nvar_iptw": nvar_iptw,
            "ehat_min": float(ehat.min()),
            "ehat_max": float(ehat.max()),
        }


# ---------------------------------------------------------------------------
# Integer search
# ---------------------------------------------------------------------------

def propose(tab, rng, max_cell):
    """Mutate a copy of tab by one sum-preserving integer move, or return None.

    Moves preserve total rows, total treated, and the two arm event totals,
    so any quantity that depends only on those stays pinned during the search.
    """
    new = tab.copy()
    n, t, e1, e0 = new.n, new.t, new.e1, new.e0
    kind = int(rng.integers(7))
    k, j = rng.integers(new.k), rng.integers(new.k)
    if k == j:
        return None
    if kind == 0:  # one control in k becomes treated; one treated in j becomes control
        if n[k] - (t[k] + 1) >= max(1, e0[k]) and t[j] - 1 >= max(1, e1[j]):
            t[k] += 1
            t[j] -= 1
        else:
            return None
    elif kind == 1:  # shift a treated-arm event between strata
        if e1[k] >= 1 and e1[j] + 1 <= t[j]:
            e1[k] -= 1
            e1[j] += 1
        else:
            return None
    elif kind == 2:  # shift a control-arm event between strata
        if e0[k] >= 1 and e0[j] + 1 <= n[j] - t[j]:
            e0[k] -= 1
            e0[j] += 1
        else:
            return None
    elif kind == 3:  # move a non-event control row k -> j
        if n[k] - 1 - t[k] >= max(1, e0[k]) and n[j] + 1 <= max_cell:
            n[k] -= 1
            n[j] += 1
        else:
            return None
    elif kind == 4:  # move a non-event treated row k -> j
        if t[k] - 1 >= max(1, e1[k]) and n[j] + 1 <= max_cell:
            n[k] -= 1
            t[k] -= 1
            n[j] += 1
            t[j] += 1
        else:
            return None
    elif kind == 5:  # move a control event row k -> j
        if e0[k] >= 1 and n[j] + 1 <= max_cell:
            n[k] -= 1
            e0[k] -= 1
            n[j] += 1
            e0[j] += 1
        else:
            return None
    else:  # move a treated event row k -> j
        if e1[k] >= 1 and t[k] - 1 >= 1 and n[j] + 1 <= max_cell:
            n[k] -= 1
            t[k] -= 1
            e1[k] -= 1
            n[j] += 1
            t[j] += 1
            e1[j] += 1
        else:
            return None
    return new


def anneal(tab, objective, rng, iters=200000, t0=4.0, t1=1e-3, max_cell=130,
           report_every=None):
    """Simulated annealing over integer cell moves. Returns the best table."""
    cur = tab.copy()
    cur_obj = objective(cur)
    best, best_obj = cur.copy(), cur_obj
    cool = (t1 / t0) ** (1.0 / max(1, iters - 1))
    temp = t0
    for i in range(iters):
        cand = propose(cur, rng, max_cell)
        if cand is not None:
            cand_obj = objective(cand)
            delta = cand_obj - cur_obj
            if delta <= 0 or rng.random() < np.exp(-delta / temp):
                cur, cur_obj = cand, cand_obj
                if cur_obj < best_obj:
                    best, best_obj = cur.copy(), cur_obj
        temp *= cool
        if report_every and (i + 1) % report_every == 0:
            print(f"  iter {i + 1}: current {cur_obj:.3f}, best {best_obj:.3f}")
    return best, best_obj


def hinge(x, lo, hi):
    """Squared distance outside [lo, hi]; zero inside."""
    if x < lo:
        return (lo - x) ** 2
    if x > hi:
        return (x - hi) ** 2
    return 0.0


def largest_remainder(weights, total):
    """Integer allocation of `total` proportional to weights."""
    w = np.asarray(weights, dtype=float)
    raw = w / w.sum() * total
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    order = np.argsort(raw - base)[::-1]
    base[order[:short]] += 1
    return base
