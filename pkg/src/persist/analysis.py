"""Convolution bounds and two-sided bounds for iterated-sum persistence,
and decay-exponent fits.

Every check works on :class:`Band` inputs: a point value with a lower and
upper bound. Exact tables give degenerate bands of Fractions, so comparisons
are exact; Monte Carlo curves give confidence bands and the check returns
``"pass"``, ``"fail"`` or ``"indeterminate"``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import norm

from persist.distributions import DistributionSpec, l1_moment
from persist.exact_oracle import exact_abs_moments
from persist.montecarlo import AbsMomentEstimate, SurvivalEstimate

C1_SYMMETRIC = 2.0
C1_GENERAL = 6.0 * math.sqrt(30.0)
_C1_SQUARED = {C1_SYMMETRIC: Fraction(4), C1_GENERAL: Fraction(1080)}

PASS, FAIL, INDETERMINATE = "pass", "fail", "indeterminate"


class TailTooThinError(ValueError):
    """Not enough surviving trajectories in the fit window."""


@dataclass
class Band:
    value: object
    low: object
    high: object

    @classmethod
    def exact(cls, v):
        return cls(v, v, v)


@dataclass
class BoundReport:
    inequality_id: str
    n: int
    lhs: float
    rhs: float
    constant_used: float
    slack: float
    status: str
    source: str
    regime: str = "proven"

    @property
    def passed(self) -> bool:
        return self.status != FAIL

    def row(self):
        flag = {PASS: "true", FAIL: "false"}.get(self.status, self.status)
        return [self.inequality_id, self.n, repr(self.lhs), repr(self.rhs), repr(self.constant_used),
                repr(self.slack), flag, self.source]


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["inequality_id", "n", "lhs", "rhs", "constant_used", "slack", "pass", "source"])
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def _compare_le(lhs: Band, rhs: Band) -> str:
    if lhs.high <= rhs.low:
        return PASS
    if lhs.low > rhs.high:
        return FAIL
    return INDETERMINATE


def select_c1(symmetric: bool, c1=None) -> float:
    if c1 is None or c1 == "auto":
        return C1_SYMMETRIC if symmetric else C1_GENERAL
    if c1 in ("2", 2, 2.0):
        return C1_SYMMETRIC
    if c1 in ("6sqrt30", C1_GENERAL):
        return C1_GENERAL
    return float(c1)


def _c1_squared(c1: float, exact: bool):
    if exact and c1 in _C1_SQUARED:
        return _C1_SQUARED[c1]
    return c1 * c1


def lower_bound_regime(spec: DistributionSpec) -> str:
    if spec.negative_part_bounded() or spec.finite_variance():
        return "proven"
    return "unproven regime"


# ---------------------------------------------------------------- inputs


def table_curve(seq, n: int) -> list[Band]:
    if len(seq) <= n:
        raise ValueError(f"table has entries up to {len(seq) - 1}, need {n}")
    return [Band.exact(seq[k]) for k in range(n + 1)]


def estimate_curve(est: SurvivalEstimate, n: int, confidence: float = 0.98) -> list[Band]:
    """Bands for k = 0..n from a survival estimate on a (typically dyadic) grid.

    Off-grid values are interpolated geometrically in log k; the band uses
    monotonicity, bracketing p_k between the neighbouring grid CIs.
    """
    grid = np.asarray(est.grid)
    if n > grid[-1]:
        raise ValueError(f"estimate grid ends at {grid[-1]}, need {n}")
    if n >= 1 and grid[0] > 1:
        raise ValueError("estimate grid must start at n <= 1 to interpolate")
    lo, hi = est.interval(confidence)
    out = []
    for k in range(n + 1):
        if k == 0:
            out.append(Band(1.0, 1.0, 1.0))
            continue
        i = int(np.searchsorted(grid, k))
        if grid[i] == k:
            out.append(Band(float(est.p_hat[i]), float(lo[i]), float(hi[i])))
            continue
        a, b = grid[i - 1], grid[i]
        pa, pb = est.p_hat[i - 1], est.p_hat[i]
        if pa > 0 and pb > 0:
            frac = (math.log(k) - math.log(max(a, 1))) / (math.log(b) - math.log(max(a, 1)))
            v = math.exp(math.log(pa) + frac * (math.log(pb) - math.log(pa)))
        else:
            v = float(pb)
        out.append(Band(v, float(lo[i]), float(hi[i - 1])))
    return out


def exact_moment(spec: DistributionSpec, n: int) -> Band | None:
    """E|S_n| in closed form when one is available (lattice, Gaussian)."""
    if spec.is_lattice:
        return Band.exact(exact_abs_moments(spec, n)[n])
    if spec.family == "gaussian":
        sigma = 1.0 if spec.normalize_l1 else spec.params["sigma"]
        scale = math.sqrt(math.pi / 2.0) if spec.normalize_l1 else 1.0
        return Band.exact(sigma * scale * math.sqrt(2.0 * n / math.pi))
    return None


def estimate_moment(est: AbsMomentEstimate, n: int, confidence: float = 0.98) -> Band:
    m, se = est.at(n)
    z = norm.ppf(0.5 + confidence / 2.0)
    return Band(float(m), float(m - z * se), float(m + z * se))


def _l1(spec: DistributionSpec, exact: bool):
    v = l1_moment(spec)
    return v if exact and isinstance(v, Fraction) else float(v)


def _is_exact(*bands) -> bool:
    return all(isinstance(b.value, Fraction) for b in bands)


# ---------------------------------------------------------------- checks


def check_upper_conv(p2, p2bar, moment_next: Band, l1, symmetric: bool, n: int, c1=None, source="exact") -> BoundReport:
    """sum_{k<=n} p2[k] p2bar[n-k] <= c1^2 E|S_{n+1}| / E|X_1|.

    ``p2``, ``p2bar`` are sequences of :class:`Band` for k = 0..n.
    """
    if len(p2) <= n or len(p2bar) <= n:
        raise ValueError(f"need p2 and p2bar entries for k = 0..{n}")
    c1 = select_c1(symmetric, c1)
    exact = _is_exact(moment_next, *p2[: n + 1], *p2bar[: n + 1])
    c1sq = _c1_squared(c1, exact)
    lhs = Band(
        sum(p2[k].value * p2bar[n - k].value for k in range(n + 1)),
        sum(p2[k].low * p2bar[n - k].low for k in range(n + 1)),
        sum(p2[k].high * p2bar[n - k].high for k in range(n + 1)),
    )
    rhs = Band(c1sq * moment_next.value / l1, c1sq * moment_next.low / l1, c1sq * moment_next.high / l1)
    return BoundReport(
        "upper_conv", n, float(lhs.value), float(rhs.value), c1,
        float(rhs.value - lhs.value), _compare_le(lhs, rhs), source,
    )


def check_lower_conv(p2, moment_next: Band, l1, n: int, c2=None, source="exact", regime="proven") -> BoundReport:
    """sum_{k<=n} p2[k] p2[n-k] >= (1/c2) E|S_{n+1}| / E|X_1|, reporting the implied c2(n).

    ``constant_used`` and ``slack`` both hold the implied constant
    (E|S_{n+1}|/E|X_1|) / convolution. With ``c2`` given, the row passes iff
    the inequality holds with that constant.
    """
    if len(p2) <= n:
        raise ValueError(f"need p2 entries for k = 0..{n}")
    conv = Band(
        sum(p2[k].value * p2[n - k].value for k in range(n + 1)),
        sum(p2[k].low * p2[n - k].low for k in range(n + 1)),
        sum(p2[k].high * p2[n - k].high for k in range(n + 1)),
    )
    ratio = Band(moment_next.value / l1, moment_next.low / l1, moment_next.high / l1)
    if conv.value == 0:
        raise ZeroDivisionError("convolution vanished")
    implied = ratio.value / conv.value
    if c2 is None:
        status = PASS
        used = implied
    else:
        used = c2
        status = _compare_le(Band(ratio.value / c2, ratio.low / c2, ratio.high / c2), conv)
    return BoundReport(
        "lower_conv", n, float(conv.value), float(ratio.value), float(used), float(implied), status, source, regime
    )


def check_two_sided(p2: Band, moment_next: Band, l1, n: int, c1: float, c2_proxy=None, source="exact",
                    regime="proven") -> tuple[BoundReport, BoundReport]:
    """c-free form of (1/(4 c1 c2)) r_n <= p2[n] <= c1 r_n with r_n = sqrt(E|S_{n+1}| / ((n+1) E|X_1|)).

    The upper check compares squares so that exact inputs give an exact verdict.
    The lower report carries the implied constant r_n / p2[n] (which must stay
    bounded in n) unless ``c2_proxy`` is supplied.
    """
    exact = _is_exact(p2, moment_next)
    c1sq = _c1_squared(c1, exact)
    base_sq = Band(*(m / ((n + 1) * l1) for m in (moment_next.value, moment_next.low, moment_next.high)))
    upper_sq = Band(c1sq * base_sq.value, c1sq * base_sq.low, c1sq * base_sq.high)
    lhs_sq = Band(p2.value**2, p2.low**2, p2.high**2)
    base = math.sqrt(float(base_sq.value))
    upper = BoundReport(
        "two_sided_upper", n, float(p2.value), c1 * base, c1,
        c1 * base - float(p2.value), _compare_le(lhs_sq, upper_sq), source,
    )
    implied = base / float(p2.value) if p2.value > 0 else math.inf
    if c2_proxy is None:
        lower = BoundReport("two_sided_lower", n, float(p2.value), base, implied, implied,
                            PASS if math.isfinite(implied) else FAIL, source, regime)
    else:
        k = 4.0 * c1 * c2_proxy
        bound = Band(base / k, math.sqrt(max(float(base_sq.low), 0.0)) / k, math.sqrt(float(base_sq.high)) / k)
        lower = BoundReport("two_sided_lower", n, float(p2.value), bound.value, k,
                            float(p2.value) - bound.value, _compare_le(bound, p2), source, regime)
    return upper, lower


def implied_c2_spread(reports) -> float:
    """max/min of the implied c2(n) over lower_conv reports."""
    vals = [r.slack for r in reports if r.inequality_id == "lower_conv"]
    return max(vals) / min(vals)


# ---------------------------------------------------------------- sweeps


def exact_bound_sweep(table, spec: DistributionSpec, ns, c1=None) -> list[BoundReport]:
    """Upper/lower convolution and two-sided reports at each n in ``ns`` from an exact table."""
    ns = list(ns)
    moments = exact_abs_moments(spec, max(ns) + 1)
    l1 = _l1(spec, True)
    sym = spec.symmetric()
    c1v = select_c1(sym, c1)
    regime = lower_bound_regime(spec)
    out = []
    for n in ns:
        p2 = table_curve(table.p2, n)
        p2bar = table_curve(table.p2bar, n)
        m = Band.exact(moments[n + 1])
        out.append(check_upper_conv(p2, p2bar, m, l1, sym, n, c1v))
        out.append(check_lower_conv(p2, m, l1, n, regime=regime))
        out.extend(check_two_sided(p2[n], m, l1, n, c1v, regime=regime))
    return out


def mc_bound_sweep(spec: DistributionSpec, strict: SurvivalEstimate, weak: SurvivalEstimate | None, ns,
                   moments: AbsMomentEstimate | None = None, c1=None, confidence: float = 0.98) -> list[BoundReport]:
    """Bound reports from survival estimates; one-sided bounds at ``(1+confidence)/2``."""
    weak = weak or strict
    sym = spec.symmetric()
    c1v = select_c1(sym, c1)
    l1 = _l1(spec, False)
    regime = lower_bound_regime(spec)
    out = []
    for n in ns:
        m = exact_moment(spec, n + 1)
        if m is None:
            if moments is None:
                raise ValueError(f"no closed-form E|S_n| for {spec.family}; pass MC moments")
            m = estimate_moment(moments, n + 1, confidence)
        m = Band(float(m.value), float(m.low), float(m.high))
        p2 = estimate_curve(strict, n, confidence)
        p2bar = estimate_curve(weak, n, confidence)
        out.append(check_upper_conv(p2, p2bar, m, l1, sym, n, c1v, source="mc"))
        out.append(check_lower_conv(p2, m, l1, n, source="mc", regime=regime))
        out.extend(check_two_sided(p2[n], m, l1, n, c1v, source="mc", regime=regime))
    return out


# ---------------------------------------------------------------- exponent fits


@dataclass
class ExponentFit:
    gamma_hat: float
    stderr: float
    r_squared: float
    intercept: float
    grid: list = field(default_factory=list)
    theoretical_gamma: float = float("nan")
    window: tuple = (None, None)

    def contains(self, lo: float, hi: float) -> bool:
        return lo <= self.gamma_hat <= hi

    def to_json(self) -> dict:
        return {
            "gamma_hat": self.gamma_hat,
            "stderr": self.stderr,
            "r_squared": self.r_squared,
            "intercept": self.intercept,
            "grid": [int(g) if float(g).is_integer() else float(g) for g in self.grid],
            "theoretical_gamma": self.theoretical_gamma,
            "window": list(self.window),
        }


def fit_power_law(n, p, variances=None) -> tuple[float, float, float, float]:
    """Weighted least squares of log p on log n.

    Returns (gamma_hat = -slope, stderr, r_squared, intercept). Without
    ``variances`` the fit is ordinary least squares with residual-based stderr.
    """
    x = np.log(np.asarray(n, dtype=float))
    y = np.log(np.asarray(p, dtype=float))
    if x.size < 2:
        raise ValueError("need at least two points")
    w = np.ones_like(x) if variances is None else 1.0 / np.asarray(variances, dtype=float)
    xb = np.sum(w * x) / np.sum(w)
    yb = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xb) ** 2)
    slope = np.sum(w * (x - xb) * (y - yb)) / sxx
    intercept = yb - slope * xb
    resid = y - intercept - slope * x
    ss_res = np.sum(w * resid**2)
    ss_tot = np.sum(w * (y - yb) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if variances is None:
        dof = max(x.size - 2, 1)
        se = math.sqrt(ss_res / dof / sxx)
    else:
        se = math.sqrt(1.0 / sxx)
    return float(-slope), float(se), float(r2), float(intercept)


DEFAULT_WINDOW = (2**8, None)
MIN_FIT_POINTS = 4
MIN_SURVIVORS = 50


def fit_exponent(est: SurvivalEstimate, window=DEFAULT_WINDOW, theoretical_gamma: float = float("nan")) -> ExponentFit:
    """Decay exponent of a survival curve over ``window`` (inclusive; None = open end).

    Weights are inverse delta-method variances of log p_hat, (1 - p) / (trials p).
    """
    lo, hi = window
    grid = np.asarray(est.grid, dtype=float)
    sel = (grid >= (lo if lo is not None else 1)) & (grid <= (hi if hi is not None else np.inf)) & (grid > 0)
    if sel.sum() < MIN_FIT_POINTS:
        raise TailTooThinError(f"only {int(sel.sum())} grid points in window {window}; need {MIN_FIT_POINTS}")
    counts = est.surv_count[sel]
    if counts.min() < MIN_SURVIVORS:
        raise TailTooThinError(
            f"tail too thin: {int(counts.min())} survivors at n={int(grid[sel][np.argmin(counts)])}, "
            f"need >= {MIN_SURVIVORS}; raise trials or shrink the window"
        )
    p = est.p_hat[sel]
    var = (1.0 - p) / (est.trials * p)
    var = np.maximum(var, 1.0 / (est.trials * est.trials))
    g, se, r2, icpt = fit_power_law(grid[sel], p, var)
    return ExponentFit(g, se, r2, icpt, list(grid[sel]), theoretical_gamma, (lo, hi))
