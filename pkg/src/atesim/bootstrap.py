"""Percentile bootstrap with deterministic parallel resampling.

Any point estimator (a closure dataset -> PointEstimate or float) can be
wrapped in a percentile confidence interval. Resample index streams are keyed
by (seed, replicate), so results do not depend on worker count or scheduling.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import BootstrapFailure, EmptyArmError, EstimatorError, FitError, InfiniteWeightError
from .rng import substream

RETRYABLE = (EmptyArmError, InfiniteWeightError, EstimatorError, FitError)


@dataclass(frozen=True)
class BootstrapConfig:
    iterations: int = 599
    level: float = 0.95
    max_redraws: int | None = None  # defaults to 10 x iterations
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must be in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    @property
    def redraw_budget(self) -> int:
        return 10 * self.iterations if self.max_redraws is None else self.max_redraws


@dataclass
class EstimateResult:
    """A point estimate with its interval and bookkeeping.

    kind is "bootstrap-percentile", "native-credible", or "none" (point-only
    paths). lo <= point is NOT required; lo <= hi always holds.
    """

    point: float
    lo: float
    hi: float
    kind: str
    wall_time_s: float = 0.0
    redraw_count: int = 0
    replicate_estimates: np.ndarray | None = None

    def __post_init__(self):
        if not (np.isnan(self.lo) or np.isnan(self.hi)) and self.lo > self.hi:
            raise ValueError(f"interval bounds out of order: [{self.lo}, {self.hi}]")
        if self.wall_time_s < 0:
            raise ValueError("wall_time_s must be >= 0")


def percentile_ranks(iterations: int, level: float):
    """1-indexed order-statistic ranks: k_lo = floor((B+1)a/2), k_hi = B+1-k_lo.

    For B=599, level=0.95 this gives exactly (15, 585). k_lo is clamped to 1
    when (B+1)a/2 < 1 (only possible for small B).
    """
    alpha = 1.0 - level
    # tiny nudge so float rounding cannot pull an exact-integer rank down
    # (e.g. (999+1)*0.05 evaluating to 49.999...)
    k_lo = int(np.floor((iterations + 1) * alpha / 2.0 + 1e-9))
    k_lo = max(k_lo, 1)
    k_hi = iterations + 1 - k_lo
    return k_lo, k_hi


def resample_indices(n: int, seed: int, replicate: int) -> np.ndarray:
    """n i.i.d. uniform indices on [0, n) from substream (seed, replicate)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = substream(seed, replicate)
    return rng.integers(0, n, size=n)


def _point_value(est_output) -> float:
    ate = getattr(est_output, "ate_hat", est_output)
    return float(ate)


def _one_replicate(d, est, cfg, slot, max_attempts):
    """Attempt j of slot b resamples with replicate index b + j*B.

    Keeps redraws schedule-independent: a failed draw in one slot never
    shifts the index streams of other slots.
    """
    last_error = None
    for attempt in range(max_attempts):
        idx = resample_indices(d.n, cfg.seed, slot + attempt * cfg.iterations)
        try:
            return _point_value(est(d.take(idx))), attempt
        except RETRYABLE as exc:
            last_error = exc
    raise BootstrapFailure(
        f"replicate {slot}: {max_attempts} attempts failed (budget "
        f"{cfg.redraw_budget} redraws / {cfg.iterations} replicates); last error: {last_error}",
        replicate=slot,
        attempts=max_attempts,
        last_error=last_error,
    )


_POOL_CTX = None


def _init_pool(d, est, cfg, max_attempts):
    global _POOL_CTX
    _POOL_CTX = (d, est, cfg, max_attempts)


def _pool_replicate(slot):
    d, est, cfg, max_attempts = _POOL_CTX
    return _one_replicate(d, est, cfg, slot, max_attempts)


def bootstrap_ci(d, est, cfg: BootstrapConfig, workers: int = 1,
                 keep_replicates: bool = True) -> EstimateResult:
    """Percentile bootstrap interval around est(d).

    Draws cfg.iterations resamples with replacement; failed resamples
    (EmptyArm / InfiniteWeight / fit failure) are redrawn with fresh index
    streams, counted in redraw_count, bounded by cfg.max_redraws in total
    (1 + max_redraws // iterations attempts per slot). The interval is the
    pair of order statistics at percentile_ranks(B, level). Deterministic
    given (d, cfg.seed) for any worker count.
    """
    t0 = time.perf_counter()
    point = _point_value(est(d))
    b = cfg.iterations
    max_attempts = 1 + cfg.redraw_budget // b
    slots = range(b)

    if workers > 1:
        import multiprocessing as mp

        with mp.Pool(workers, initializer=_init_pool,
                     initargs=(d, est, cfg, max_attempts)) as pool:
            out = pool.map(_pool_replicate, slots,
                           chunksize=max(1, b // (8 * workers)))
    else:
        out = [_one_replicate(d, est, cfg, s, max_attempts) for s in slots]

    estimates = np.array([v for v, _ in out])
    redraws = int(sum(a for _, a in out))
    k_lo, k_hi = percentile_ranks(b, cfg.level)
    ordered = np.sort(estimates)
    lo = float(ordered[k_lo - 1])
    hi = float(ordered[k_hi - 1])
    return EstimateResult(
        point=point,
        lo=lo,
        hi=hi,
        kind="bootstrap-percentile",
        wall_time_s=time.perf_counter() - t0,
        redraw_count=redraws,
        replicate_estimates=estimates if keep_replicates else None,
    )
