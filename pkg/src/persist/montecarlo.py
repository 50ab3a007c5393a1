"""First-passage Monte Carlo for survival curves and E|S_n|.

One trajectory per trial: increments are streamed from the counter-based
generator, ``(S, S2)`` advanced, and the first step at which the barrier is
violated is recorded. Survival at every grid point then follows from a
single histogram of passage times, so the result depends only on
``(spec, grid, trials, master_seed)`` and not on batching or threads.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.stats import norm

from persist._philox import split_seed
from persist.distributions import DistributionSpec, draw_pair

log = logging.getLogger(__name__)

DEFAULT_BUDGET_STEPS = 2 * 10**10
BUDGET_ENV = "PERSIST_BUDGET_STEPS"
MIN_TRIALS = 100
_MOMENT_CHUNK = 1024
_EXACT_SUM_LIMIT = 1 << 20


class BudgetError(ValueError):
    """Requested simulation exceeds the work budget (total increments drawn)."""


def wilson_interval(successes, trials, confidence=0.95):
    """Wilson score interval for a binomial proportion; vectorized over ``successes``."""
    successes = np.asarray(successes, dtype=float)
    z = norm.ppf(0.5 + confidence / 2.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z / denom * np.sqrt(p * (1 - p) / trials + z * z / (4.0 * trials * trials))
    return np.clip(center - half, 0.0, 1.0), np.clip(center + half, 0.0, 1.0)


@dataclass
class SurvivalEstimate:
    grid: np.ndarray
    trials: int
    surv_count: np.ndarray
    target: str = "s2"
    barrier: str = "strict"
    y: float = 0.0
    confidence: float = 0.95
    label: str = ""
    index_name: str = "n"
    p_hat: np.ndarray = field(init=False)
    ci_low: np.ndarray = field(init=False)
    ci_high: np.ndarray = field(init=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        self.surv_count = np.asarray(self.surv_count, dtype=np.int64)
        self.p_hat = self.surv_count / self.trials
        self.ci_low, self.ci_high = self.interval(self.confidence)

    def interval(self, confidence: float):
        return wilson_interval(self.surv_count, self.trials, confidence)

    def at(self, n):
        """p_hat at grid point ``n``."""
        i = int(np.searchsorted(self.grid, n))
        if i >= len(self.grid) or self.grid[i] != n:
            raise KeyError(f"{n} is not on the grid")
        return self.p_hat[i]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.index_name, "trials", "surv_count", "p_hat", "ci_low", "ci_high"])
        for row in zip(self.grid, self.surv_count, self.p_hat, self.ci_low, self.ci_high):
            g, c, p, lo, hi = row
            w.writerow([_num(g), self.trials, int(c), repr(float(p)), repr(float(lo)), repr(float(hi))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "target": self.target,
            "barrier": self.barrier,
            "y": self.y,
            "trials": self.trials,
            "confidence": self.confidence,
            self.index_name: [_num(g) for g in self.grid],
            "surv_count": [int(c) for c in self.surv_count],
            "p_hat": [float(p) for p in self.p_hat],
            "ci_low": [float(v) for v in self.ci_low],
            "ci_high": [float(v) for v in self.ci_high],
        }


@dataclass
class AbsMomentEstimate:
    grid: np.ndarray
    trials: int
    mean_abs: np.ndarray
    stderr: np.ndarray
    label: str = ""

    def at(self, n):
        i = int(np.searchsorted(self.grid, n))
        if i >= len(self.grid) or self.grid[i] != n:
            raise KeyError(f"{n} is not on the grid")
        return self.mean_abs[i], self.stderr[i]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "trials", "mean_abs", "stderr"])
        for g, m, s in zip(self.grid, self.mean_abs, self.stderr):
            w.writerow([int(g), self.trials, repr(float(m)), repr(float(s))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "trials": self.trials,
            "n": [int(g) for g in self.grid],
            "mean_abs": [float(v) for v in self.mean_abs],
            "stderr": [float(v) for v in self.stderr],
        }


def _num(g):
    g = float(g)
    return int(g) if g.is_integer() else g


def dumps(obj) -> str:
    return json.dumps(obj.to_json(), indent=1)


# ---------------------------------------------------------------- budget


def budget_steps(override: int | None = None) -> int:
    if override is not None:
        return int(override)
    env = os.environ.get(BUDGET_ENV)
    return int(float(env)) if env else DEFAULT_BUDGET_STEPS


def expected_path_length(gamma: float, n_max: int) -> float:
    """Work estimate sum_{n<N} min(1, n^-gamma) for a curve decaying like n^-gamma."""
    if n_max <= 0:
        return 0.0
    head = min(n_max, _EXACT_SUM_LIMIT)
    n = np.arange(1, head, dtype=float)
    total = 1.0 + float(np.minimum(1.0, n**-gamma).sum())
    if n_max > head:
        # integral of n^-gamma over [head, n_max]; keeps memory O(1) for huge grids
        a, b = float(head), float(n_max)
        if gamma <= 0:
            total += b - a
        elif gamma == 1.0:
            total += math.log(b / a)
        else:
            total += (b ** (1 - gamma) - a ** (1 - gamma)) / (1 - gamma)
    return total


def check_budget(steps: float, budget: int | None = None) -> None:
    limit = budget_steps(budget)
    if steps > limit:
        raise BudgetError(
            f"simulation needs ~{steps:.3g} increments > budget {limit:.3g}; "
            f"reduce trials or grid, or raise {BUDGET_ENV} / --budget"
        )


# ---------------------------------------------------------------- kernels


@nb.njit(cache=True, inline="always")
def _nsum(total, comp, x):
    t = total + x
    if abs(total) >= abs(x):
        comp += (total - t) + x
    else:
        comp += (x - t) + total
    return t, comp


@nb.njit(cache=True)
def _one_passage(code, params, support, cdf, scale, integer, key0, key1, trial, n_max, target2, weak, y, early):
    """First step k <= n_max whose S_k (or S2_k) violates the barrier; n_max + 1 if none."""
    passage = n_max + 1
    x0 = 0.0
    x1 = 0.0
    if integer:
        s = 0
        s2 = 0
        for step in range(n_max):
            if step & 1 == 0:
                x0, x1 = draw_pair(code, params, support, cdf, key0, key1, trial, step >> 1)
                xi = np.int64(x0)
            else:
                xi = np.int64(x1)
            s += xi
            s2 += s
            v = s2 if target2 else s
            bad = v > y if weak else v >= y
            if bad and passage > n_max:
                passage = step + 1
                if early:
                    break
        return passage
    s = 0.0
    cs = 0.0
    s2 = 0.0
    cs2 = 0.0
    for step in range(n_max):
        if step & 1 == 0:
            x0, x1 = draw_pair(code, params, support, cdf, key0, key1, trial, step >> 1)
            x = x0 * scale
        else:
            x = x1 * scale
        if np.isnan(x):
            return -1
        s, cs = _nsum(s, cs, x)
        s2, cs2 = _nsum(s2, cs2, s + cs)
        v = s2 + cs2 if target2 else s + cs
        bad = v > y if weak else v >= y
        if bad and passage > n_max:
            passage = step + 1
            if early:
                break
    return passage


@nb.njit(cache=True, parallel=True)
def _passage_times(code, params, support, cdf, scale, integer, key0, key1, first, n_max, target2, weak, y, early, out):
    for i in nb.prange(out.shape[0]):
        out[i] = _one_passage(
            code, params, support, cdf, scale, integer, key0, key1, first + i, n_max, target2, weak, y, early
        )


@nb.njit(cache=True, parallel=True)
def _abs_moment_sums(code, params, support, cdf, scale, integer, key0, key1, first, trials, grid, sums, sumsq):
    n_chunks = sums.shape[0]
    n_max = grid[-1]
    for c in nb.prange(n_chunks):
        lo = c * _MOMENT_CHUNK
        hi = min(trials, lo + _MOMENT_CHUNK)
        for t in range(lo, hi):
            s = 0.0
            cs = 0.0
            si = 0
            g = 0
            x0 = 0.0
            x1 = 0.0
            while g < grid.shape[0] and grid[g] == 0:
                g += 1
            for step in range(n_max):
                if step & 1 == 0:
                    x0, x1 = draw_pair(code, params, support, cdf, key0, key1, first + t, step >> 1)
                    x = x0
                else:
                    x = x1
                if integer:
                    si += np.int64(x)
                else:
                    s, cs = _nsum(s, cs, x * scale)
                while g < grid.shape[0] and grid[g] == step + 1:
                    a = abs(float(si)) if integer else abs(s + cs)
                    sums[c, g] += a
                    sumsq[c, g] += a * a
                    g += 1


# ---------------------------------------------------------------- estimators


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(sorted(set(int(g) for g in grid)), dtype=np.int64)
    if grid.size == 0 or grid[0] < 0:
        raise ValueError("grid must be a non-empty set of integers >= 0")
    return grid


def passage_times(
    spec: DistributionSpec,
    n_max: int,
    trials: int,
    master_seed: int,
    target: str = "s2",
    barrier: str = "strict",
    y: float = 0.0,
    early_stop: bool = True,
    first_trial: int = 0,
) -> np.ndarray:
    """Per-trial first passage times in 1..n_max, or n_max + 1 for survivors."""
    if target not in ("s1", "s2"):
        raise ValueError(f"target must be 's1' or 's2', got {target!r}")
    if barrier not in ("strict", "weak"):
        raise ValueError(f"barrier must be 'strict' or 'weak', got {barrier!r}")
    if y < 0 or not math.isfinite(y):
        raise ValueError("threshold y must be finite and >= 0")
    code, params, support, cdf, scale = spec.kernel_args()
    key0, key1 = split_seed(master_seed)
    out = np.empty(trials, dtype=np.int64)
    _passage_times(
        code, params, support, cdf, scale, spec.integer_valued(), key0, key1, first_trial,
        n_max, target == "s2", barrier == "weak", float(y), early_stop, out,
    )
    if (out < 0).any():
        raise FloatingPointError("NaN increment encountered")
    return out


def _batches(trials: int, batch: int | None):
    size = batch or max(1, -(-trials // 16))
    for start in range(0, trials, size):
        yield start, min(size, trials - start)


def estimate_survival(
    spec: DistributionSpec,
    target: str = "s2",
    barrier: str = "strict",
    y: float = 0.0,
    grid=(1,),
    trials: int = 10_000,
    master_seed: int = 0,
    *,
    confidence: float = 0.95,
    budget: int | None = None,
    early_stop: bool = True,
    batch: int | None = None,
    progress: bool = False,
) -> SurvivalEstimate:
    """Survival curve n -> P(max_{k<=n} S_k (or S2_k) below y) on ``grid``."""
    grid = _check_grid(grid)
    if trials < MIN_TRIALS:
        raise ValueError(f"trials must be >= {MIN_TRIALS}")
    n_max = int(grid[-1])
    work = trials * (expected_path_length(spec.decay_exponent(target), n_max) if early_stop else n_max)
    check_budget(work, budget)
    hist = np.zeros(n_max + 2, dtype=np.int64)
    for start, size in _batches(trials, batch):
        times = passage_times(spec, n_max, size, master_seed, target, barrier, y, early_stop, start)
        hist += np.bincount(times, minlength=n_max + 2)
        if progress:
            print(f"  {start + size}/{trials} trials", file=sys.stderr)
    # survivors beyond n = number of passage times > n
    surv = trials - np.cumsum(hist)
    counts = np.where(grid == 0, trials, surv[np.maximum(grid, 0)])
    return SurvivalEstimate(
        grid, trials, counts, target=target, barrier=barrier, y=float(y),
        confidence=confidence, label=spec.label(),
    )


def estimate_abs_moment(
    spec: DistributionSpec,
    grid=(1,),
    trials: int = 10_000,
    master_seed: int = 0,
    *,
    budget: int | None = None,
) -> AbsMomentEstimate:
    """Sample mean of |S_n| at each grid point with its standard error."""
    grid = _check_grid(grid)
    if trials < MIN_TRIALS:
        raise ValueError(f"trials must be >= {MIN_TRIALS}")
    check_budget(trials * float(grid[-1]), budget)
    code, params, support, cdf, scale = spec.kernel_args()
    key0, key1 = split_seed(master_seed)
    n_chunks = -(-trials // _MOMENT_CHUNK)
    sums = np.zeros((n_chunks, grid.size))
    sumsq = np.zeros((n_chunks, grid.size))
    _abs_moment_sums(
        code, params, support, cdf, scale, spec.integer_valued(), key0, key1, 0, trials, grid, sums, sumsq
    )
    total = sums.sum(axis=0)
    total_sq = sumsq.sum(axis=0)
    mean = total / trials
    var = np.maximum(total_sq / trials - mean**2, 0.0) * trials / (trials - 1)
    return AbsMomentEstimate(grid, trials, mean, np.sqrt(var / trials), label=spec.label())
