"""Predictive models used by the estimators.

All models share one contract: a factory callable fit(X, y) returning a
fitted object with predict_proba(X) -> probabilities in [0, 1]. Outcome
models receive the layout [x, z_1..z_d]; propensity models receive
[z_1..z_d]. Both in-process learners are deterministic given their inputs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError, SingularMatrixError

MAX_IRLS_ITERATIONS = 25
DEVIANCE_TOL = 1e-8
SEPARATION_COEF = 15.0
_ETA_CLIP = 35.0
_W_FLOOR = 1e-10


@dataclass
class FitDiagnostics:
    converged: bool = False
    iterations: int = 0
    deviance: float = float("nan")
    separation: bool = False
    max_abs_score: float = float("nan")
    warnings: list = field(default_factory=list)


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(eta, -_ETA_CLIP, _ETA_CLIP)))


def _bernoulli_deviance(mu, y, w):
    # -2 * weighted log-likelihood, with 0*log(0) treated as 0
    eps = 1e-300
    ll = w * (y * np.log(mu + eps) + (1.0 - y) * np.log(1.0 - mu + eps))
    return -2.0 * float(ll.sum())


def _collapse(design: np.ndarray, y: np.ndarray):
    """Group identical (row, label) patterns into weighted rows.

    Weighted maximum likelihood on grouped rows is exactly row-level maximum
    likelihood; this keeps bootstrap refits on heavily discrete designs cheap.
    Returns (design_g, y_g, w_g) or None when grouping would not pay off.
    """
    n = design.shape[0]
    if n < 64:
        return None
    stacked = np.column_stack([design, y])
    # Fast integer path for small non-negative integer-valued designs
    if stacked.min() >= 0.0 and stacked.max() <= 64.0 and np.all(stacked == np.floor(stacked)):
        ints = stacked.astype(np.int64)
        base = int(ints.max()) + 1
        if ints.shape[1] * np.log2(max(base, 2)) < 62:
            code = ints[:, 0]
            for j in range(1, ints.shape[1]):
                code = code * base + ints[:, j]
            uniq, inverse = np.unique(code, return_inverse=True)
            if uniq.size > n // 2:
                return None
            w = np.bincount(inverse, minlength=uniq.size).astype(float)
            first = np.full(uniq.size, -1, dtype=np.int64)
            first[inverse[::-1]] = np.arange(n - 1, -1, -1)
            return design[first], y[first].astype(float), w
    uniq, first, inverse = np.unique(stacked, axis=0, return_index=True, return_inverse=True)
    if uniq.shape[0] > n // 2:
        return None
    w = np.bincount(inverse, minlength=uniq.shape[0]).astype(float)
    return design[first], y[first].astype(float), w


class LogisticModel:
    """Main-effects logistic regression fitted by IRLS. Immutable after fit."""

    kind = "logistic"

    def __init__(self, coef: np.ndarray, n_features: int,
                 diagnostics: FitDiagnostics | None = None):
        self.coef = coef  # [intercept, beta_1..beta_p]
        self.n_features = n_features
        self.diagnostics = diagnostics

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise FitError(
                f"predict_proba expects {self.n_features} columns, got "
                f"{X.shape[1] if X.ndim == 2 else 'non-matrix input'}"
            )
        return self.coef[0] + X @ self.coef[1:]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.linear_predictor(X))


def _collinearity_diagnostic(design: np.ndarray):
    # Columns loading on the smallest singular vector are the culprits.
    try:
        _, s, vt = np.linalg.svd(design, full_matrices=False)
    except np.linalg.LinAlgError:
        return []
    v = np.abs(vt[-1])
    return [int(j) for j in np.flatnonzero(v > 0.5 * v.max())]


def fit_logistic(X: np.ndarray, y: np.ndarray) -> LogisticModel:
    """IRLS maximum-likelihood logistic fit with an intercept, main effects only.

    Convergence: |change in deviance| < 1e-8, at most 25 iterations.
    Quasi-separation (any |coefficient| > 15) succeeds with a separation flag.
    Singular weighted normal equations raise with a collinearity diagnostic.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise FitError("X must be a 2-d matrix")
    yv = np.asarray(y, dtype=float).ravel()
    if yv.shape[0] != X.shape[0]:
        raise FitError("X and y row counts differ")
    if X.shape[0] == 0:
        raise FitError("empty data")
    if not np.all(np.isfinite(X)):
        raise FitError("non-finite feature values")

    n, p = X.shape
    design = np.column_stack([np.ones(n), X])
    grouped = _collapse(design, yv)
    if grouped is not None:
        d_fit, y_fit, w_fit = grouped
    else:
        d_fit, y_fit, w_fit = design, yv, np.ones(n)

    beta = np.zeros(p + 1)
    dev = _bernoulli_deviance(np.full_like(y_fit, 0.5), y_fit, w_fit)
    diag = FitDiagnostics()
    for it in range(1, MAX_IRLS_ITERATIONS + 1):
        eta = d_fit @ beta
        mu = _sigmoid(eta)
        w = np.maximum(w_fit * mu * (1.0 - mu), _W_FLOOR)
        score = d_fit.T @ (w_fit * (y_fit - mu))
        hess = (d_fit * w[:, None]).T @ d_fit
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            cols = _collinearity_diagnostic(d_fit * np.sqrt(w)[:, None])
            raise SingularMatrixError(
                "singular weighted normal equations; collinear design columns "
                f"(0 = intercept): {cols}",
                collinear_columns=cols,
            ) from None
        beta = beta + step
        new_dev = _bernoulli_deviance(_sigmoid(d_fit @ beta), y_fit, w_fit)
        diag.iterations = it
        if abs(new_dev - dev) < DEVIANCE_TOL:
            diag.converged = True
            dev = new_dev
            break
        dev = new_dev

    diag.deviance = dev
    diag.separation = bool(np.any(np.abs(beta) > SEPARATION_COEF))
    if diag.separation:
        diag.warnings.append("quasi-separation: |coefficient| > 15")
    mu_rows = _sigmoid(design @ beta)
    diag.max_abs_score = float(np.max(np.abs(design.T @ (yv - mu_rows))))
    return LogisticModel(coef=beta, n_features=p, diagnostics=diag)


# ---------------------------------------------------------------------------
# Gradient-boosted trees (second-order logistic loss)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoostedTreesConfig:
    learning_rate: float = 0.3
    max_depth: int = 6
    rounds: int = 100
    min_child_weight: float = 1.0
    l2_penalty: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise FitError("learning_rate must be in (0, 1]")
        if self.rounds < 1:
            raise FitError("rounds must be >= 1")
        if self.max_depth < 1:
            raise FitError("max_depth must be >= 1")


@dataclass
class _TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


def _leaf_value(g_sum: float, h_sum: float, l2: float) -> float:
    return -g_sum / (h_sum + l2)


def _best_split(X, g, h, idx, cfg):
    """Greedy exact search over (feature, threshold at midpoints of uniques)."""
    g_idx = g[idx]
    h_idx = h[idx]
    g_tot = float(g_idx.sum())
    h_tot = float(h_idx.sum())
    base = g_tot * g_tot / (h_tot + cfg.l2_penalty)
    best = None  # (gain, feature, threshold)
    for j in range(X.shape[1]):
        col = X[idx, j]
        order = np.argsort(col, kind="stable")
        cs = col[order]
        gs = np.cumsum(g_idx[order])
        hs = np.cumsum(h_idx[order])
        # split points: between consecutive distinct values
        cut = np.flatnonzero(cs[1:] != cs[:-1])
        for c in cut:
            hl = float(hs[c])
            hr = h_tot - hl
            if hl < cfg.min_child_weight or hr < cfg.min_child_weight:
                continue
            gl = float(gs[c])
            gr = g_tot - gl
            gain = 0.5 * (
                gl * gl / (hl + cfg.l2_penalty)
                + gr * gr / (hr + cfg.l2_penalty)
                - base
            )
            thr = 0.5 * (float(cs[c]) + float(cs[c + 1]))
            if gain > 1e-12 and (best is None or gain > best[0] + 1e-15):
                best = (gain, j, thr)
    return best


def _grow_tree(X, g, h, idx, depth, cfg):
    split = _best_split(X, g, h, idx, cfg) if depth < cfg.max_depth else None
    if split is None:
        return _TreeNode(value=_leaf_value(float(g[idx].sum()), float(h[idx].sum()), cfg.l2_penalty))
    _, j, thr = split
    mask = X[idx, j] <= thr
    left = _grow_tree(X, g, h, idx[mask], depth + 1, cfg)
    right = _grow_tree(X, g, h, idx[~mask], depth + 1, cfg)
    return _TreeNode(feature=j, threshold=thr, left=left, right=right)


def _apply_tree(node, X, idx, out):
    if node.is_leaf:
        out[idx] = node.value
        return
    mask = X[idx, node.feature] <= node.threshold
    _apply_tree(node.left, X, idx[mask], out)
    _apply_tree(node.right, X, idx[~mask], out)


class BoostedTreesModel:
    """Additive stagewise trees; prediction is sigmoid of summed leaf scores."""

    kind = "boosted-trees"

    def __init__(self, trees, cfg: BoostedTreesConfig, n_features: int, diagnostics: FitDiagnostics):
        self.trees = trees
        self.cfg = cfg
        self.n_features = n_features
        self.diagnostics = diagnostics

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise FitError(f"predict_proba expects {self.n_features} columns")
        score = np.zeros(X.shape[0])
        idx = np.arange(X.shape[0])
        buf = np.zeros(X.shape[0])
        for tree in self.trees:
            _apply_tree(tree, X, idx, buf)
            score += self.cfg.learning_rate * buf
        return score

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_function(X))


def fit_boosted_trees(X: np.ndarray, y: np.ndarray,
                      cfg: BoostedTreesConfig | None = None) -> BoostedTreesModel:
    """Second-order gradient boosting on the logistic loss.

    Per round, with p the current probabilities: g = p - y, h = p(1-p);
    leaves take -G/(H + l2_penalty); splits are exact greedy with gain
    0.5 [G_L^2/(H_L+l2) + G_R^2/(H_R+l2) - G^2/(H+l2)]. No randomness.
    """
    cfg = cfg or BoostedTreesConfig()
    X = np.asarray(X, dtype=float)
    yv = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] == 0:
        raise FitError("empty data")
    if yv.shape[0] != X.shape[0]:
        raise FitError("X and y row counts differ")

    n = X.shape[0]
    score = np.zeros(n)
    idx = np.arange(n)
    buf = np.zeros(n)
    trees = []
    loss_trace = []
    for _ in range(cfg.rounds):
        p = _sigmoid(score)
        g = p - yv
        h = p * (1.0 - p)
        tree = _grow_tree(X, g, h, idx, 0, cfg)
        trees.append(tree)
        _apply_tree(tree, X, idx, buf)
        score = score + cfg.learning_rate * buf
        p_new = _sigmoid(score)
        loss_trace.append(_bernoulli_deviance(p_new, yv, np.ones(n)) / (2.0 * n))

    diag = FitDiagnostics(converged=True, iterations=cfg.rounds,
                          deviance=loss_trace[-1] * 2.0 * n)
    diag.warnings = []
    model = BoostedTreesModel(trees=trees, cfg=cfg, n_features=X.shape[1], diagnostics=diag)
    model.loss_trace = loss_trace  # per-round training log-loss
    return model


# ---------------------------------------------------------------------------
# Timing helper shared by estimator wrappers
# ---------------------------------------------------------------------------

def wall_clock() -> float:
    return time.perf_counter()
