"""Covariances of Gaussian iterated sums vs integrated Brownian motion,
the comparison ratio f(m, k), and a survival curve for integrated BM.

For standard normal increments, E[S2_k S2_m] = k(k+1)(3m-k+1)/6 and
E[Y(k) Y(m)] = k^2(3m-k)/6 (k <= m). Rescaling Y(k) by
sqrt((1+1/k)(1+1/(2k))) matches the variances, and f(m, k) >= 1 off the
diagonal is what lets a Slepian-type comparison go through.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numba as nb
import numpy as np

from persist._philox import block_bits, split_seed, to_unit
from persist.montecarlo import SurvivalEstimate, check_budget

SCAN_LIMIT = 10**4
DEFAULT_STEP = 0.01


def cov_s2(k: int, m: int) -> Fraction:
    return Fraction(k * (k + 1) * (3 * m - k + 1), 6)


def cov_y(k: int, m: int) -> Fraction:
    return Fraction(k * k * (3 * m - k), 6)


def z_scale_sq(k: int) -> Fraction:
    return (1 + Fraction(1, k)) * (1 + Fraction(1, 2 * k))


@dataclass(frozen=True)
class CovariancePair:
    k: int
    m: int
    cov_S2: Fraction
    cov_Y: Fraction

    @property
    def z_scale_k(self) -> float:
        return math.sqrt(z_scale_sq(self.k))

    @property
    def z_scale_m(self) -> float:
        return math.sqrt(z_scale_sq(self.m))

    @property
    def f(self) -> float:
        return float(self.cov_S2 / self.cov_Y) / math.sqrt(float(z_scale_sq(self.k) * z_scale_sq(self.m)))


def covariances(k: int, m: int) -> CovariancePair:
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= k <= m, got k={k}, m={m}")
    return CovariancePair(k, m, cov_s2(k, m), cov_y(k, m))


def ratio_f(m, k):
    """f(m, k) for arrays of indices with k <= m, in float64."""
    k = np.asarray(k, dtype=float)
    m = np.asarray(m, dtype=float)
    # cov_S2 / cov_Y = (k+1)(3m-k+1) / (k (3m-k))
    r = (k + 1.0) * (3.0 * m - k + 1.0) / (k * (3.0 * m - k))
    zk = (1.0 + 1.0 / k) * (1.0 + 0.5 / k)
    zm = (1.0 + 1.0 / m) * (1.0 + 0.5 / m)
    return r / np.sqrt(zk * zm)


@dataclass
class ScanResult:
    minimum: float
    k: int
    m: int
    pairs: int


def slepian_ratio_scan(k_max: int, m_max: int) -> ScanResult:
    """Minimum of f(m, k) over 1 <= k <= k_max, k < m <= m_max."""
    if not 1 <= k_max <= m_max:
        raise ValueError("need 1 <= k_max <= m_max")
    if m_max > SCAN_LIMIT:
        raise ValueError(f"m_max={m_max} exceeds scan limit {SCAN_LIMIT}")
    best = (math.inf, 0, 0)
    pairs = 0
    for k in range(1, min(k_max, m_max - 1) + 1):
        m = np.arange(k + 1, m_max + 1)
        f = ratio_f(m, k)
        i = int(np.argmin(f))
        pairs += m.size
        if f[i] < best[0]:
            best = (float(f[i]), k, int(m[i]))
    return ScanResult(best[0], best[1], best[2], pairs)


def covariance_table_csv(k_max: int, m_max: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "m", "cov_S2", "cov_Y", "f"])
    for k in range(1, k_max + 1):
        for m in range(k, m_max + 1):
            c = covariances(k, m)
            w.writerow([k, m, str(c.cov_S2), str(c.cov_Y), repr(c.f)])
    return buf.getvalue()


# ---------------------------------------------------------------- integrated BM


@nb.njit(cache=True)
def _ibm_passage(key0, key1, trial, h, n_steps, level):
    """First grid step j with Y(j h) > level; n_steps + 1 if none.

    (B, Y) advance exactly over each step: dB = sqrt(h) z1,
    dY = h B + h^1.5 (z1/2 + z2/(2 sqrt 3)).
    """
    sh = math.sqrt(h)
    h15 = h * sh
    c2 = 0.5 / math.sqrt(3.0)
    b = 0.0
    y = 0.0
    for j in range(n_steps):
        u, v = block_bits(key0, key1, trial, j)
        r = math.sqrt(-2.0 * math.log(to_unit(u)))
        th = 2.0 * math.pi * to_unit(v)
        z1 = r * math.cos(th)
        z2 = r * math.sin(th)
        y += h * b + h15 * (0.5 * z1 + c2 * z2)
        b += sh * z1
        if y > level:
            return j + 1
    return n_steps + 1


@nb.njit(cache=True, parallel=True)
def _ibm_passages(key0, key1, h, n_steps, level, out):
    for i in nb.prange(out.shape[0]):
        out[i] = _ibm_passage(key0, key1, i, h, n_steps, level)


def sinai_curve(T_grid, trials: int, master_seed: int, h: float = DEFAULT_STEP, level: float = 1.0,
                budget: int | None = None, confidence: float = 0.95) -> SurvivalEstimate:
    """Survival curve T -> P(max over the h-grid of Y on [0, T] <= level) for Y = int B."""
    if not 0 < h <= DEFAULT_STEP:
        raise ValueError(f"step h must lie in (0, {DEFAULT_STEP}]")
    T_grid = np.asarray(sorted(set(float(t) for t in T_grid)))
    if T_grid[0] < 0:
        raise ValueError("T must be >= 0")
    steps = np.rint(T_grid / h).astype(np.int64)
    n_steps = int(steps[-1])
    # decay ~ T^-1/4: expected work ~ (4/3) N^(3/4) h^(-1/4) steps per trial
    work = trials * min(n_steps, 1.0 + (4.0 / 3.0) * n_steps**0.75 / h**0.25)
    check_budget(work, budget)
    key0, key1 = split_seed(master_seed)
    out = np.empty(trials, dtype=np.int64)
    _ibm_passages(key0, key1, h, n_steps, level, out)
    hist = np.bincount(out, minlength=n_steps + 2)
    surv = trials - np.cumsum(hist)
    counts = surv[steps]
    return SurvivalEstimate(T_grid, trials, counts, target="ibm", barrier="weak", y=level,
                            confidence=confidence, label=f"integrated-BM(h={h:g})", index_name="T")
