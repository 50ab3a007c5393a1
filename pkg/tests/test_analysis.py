import math
from fractions import Fraction

import numpy as np
import pytest

from persist.analysis import (
    C1_GENERAL,
    C1_SYMMETRIC,
    FAIL,
    INDETERMINATE,
    PASS,
    Band,
    TailTooThinError,
    check_lower_conv,
    check_two_sided,
    check_upper_conv,
    estimate_curve,
    exact_bound_sweep,
    fit_exponent,
    fit_power_law,
    implied_c2_spread,
    lower_bound_regime,
    mc_bound_sweep,
    reports_to_csv,
    select_c1,
    table_curve,
)
from persist.distributions import DistributionSpec
from persist.exact_oracle import dp_table, exact_abs_moments
from persist.montecarlo import SurvivalEstimate, estimate_survival

RAD = DistributionSpec.rademacher()
SKEW = DistributionSpec.lattice([-2, 1], ["1/3", "2/3"])
GAUSS = DistributionSpec.gaussian(1.0)


@pytest.fixture(scope="module")
def rad_table():
    return dp_table(RAD, 100)


def _rad_inputs(t, n):
    m = Band.exact(exact_abs_moments(RAD, n + 1)[n + 1])
    return table_curve(t.p2, n), table_curve(t.p2bar, n), m


def test_upper_conv_example(rad_table):
    p2, p2bar, m = _rad_inputs(rad_table, 2)
    r = check_upper_conv(p2, p2bar, m, Fraction(1), True, 2)
    assert r.lhs == 1.25 and r.rhs == 6.0 and r.status == PASS
    assert r.constant_used == 2.0 and r.slack == 4.75


def test_upper_conv_zero(rad_table):
    p2, p2bar, m = _rad_inputs(rad_table, 0)
    r = check_upper_conv(p2, p2bar, m, Fraction(1), True, 0)
    assert (r.lhs, r.rhs, r.status) == (1.0, 4.0, PASS)


def test_lower_conv_examples(rad_table):
    p2, _, m = _rad_inputs(rad_table, 2)
    r = check_lower_conv(p2, m, Fraction(1), 2)
    assert r.lhs == 1.25 and r.slack == pytest.approx(1.2, abs=0) and r.status == PASS
    p2, _, m = _rad_inputs(rad_table, 0)
    assert check_lower_conv(p2, m, Fraction(1), 0).slack == 1.0
    # an explicit constant below the implied one is a failure
    assert check_lower_conv(*_rad_inputs(rad_table, 2)[::2], Fraction(1), 2, c2=1.1).status == FAIL
    assert check_lower_conv(*_rad_inputs(rad_table, 2)[::2], Fraction(1), 2, c2=1.3).status == PASS


def test_two_sided_examples(rad_table):
    p2, _, m = _rad_inputs(rad_table, 3)
    up, low = check_two_sided(p2[3], m, Fraction(1), 3, C1_SYMMETRIC)
    assert up.lhs == 0.375 and up.rhs == pytest.approx(2 * math.sqrt(3 / 8), rel=1e-15)
    assert up.status == PASS and low.status == PASS
    p2, _, m = _rad_inputs(rad_table, 0)
    up, _ = check_two_sided(p2[0], m, Fraction(1), 0, C1_SYMMETRIC)
    assert up.rhs == 2.0 and up.status == PASS


def test_exact_comparison_detects_tight_violation():
    # p = c1 * sqrt(m/(n+1)) exactly is a pass; one ulp of rational excess is a fail
    up, _ = check_two_sided(Band.exact(Fraction(2)), Band.exact(Fraction(1)), Fraction(1), 0, C1_SYMMETRIC)
    assert up.status == PASS
    up, _ = check_two_sided(Band.exact(Fraction(2) + Fraction(1, 10**30)), Band.exact(Fraction(1)), Fraction(1), 0,
                            C1_SYMMETRIC)
    assert up.status == FAIL


def test_band_tristate():
    p = [Band(1.0, 1.0, 1.0), Band(0.5, 0.45, 0.55)]
    m = Band(1.0, 0.9, 1.1)
    # lhs in [0.9, 1.1] vs rhs c1^2 * m in c1^2 * [0.9, 1.1]
    assert check_upper_conv(p, p, m, 1.0, True, 1, c1=0.6).status == FAIL
    assert check_upper_conv(p, p, m, 1.0, True, 1, c1=1.0).status == INDETERMINATE
    assert check_upper_conv(p, p, m, 1.0, True, 1, c1=2).status == PASS


def test_c1_selection():
    assert select_c1(True) == 2.0
    assert select_c1(False) == pytest.approx(32.863353450309965)
    assert select_c1(False, "2") == 2.0 and select_c1(True, "6sqrt30") == C1_GENERAL
    assert select_c1(True, 3.5) == 3.5


def test_regime_tags():
    assert lower_bound_regime(RAD) == "proven"
    assert lower_bound_regime(GAUSS) == "proven"
    assert lower_bound_regime(DistributionSpec.pareto(1.5)) == "proven"  # X^- is bounded by 3

    class HeavyBothSides:
        def negative_part_bounded(self):
            return False

        def finite_variance(self):
            return False

    assert lower_bound_regime(HeavyBothSides()) == "unproven regime"


@pytest.mark.parametrize("spec,c1", [(RAD, C1_SYMMETRIC), (SKEW, C1_GENERAL)], ids=["rademacher", "skew"])
def test_exact_sweep_all_pass(spec, c1):
    t = dp_table(spec, 100)
    reports = exact_bound_sweep(t, spec, range(101))
    assert len(reports) == 404
    assert all(r.status == PASS for r in reports)
    assert {r.constant_used for r in reports if r.inequality_id == "upper_conv"} == {c1}


def test_implied_c2_bounded_on_dyadic_grid(rad_table):
    ns = [2**k for k in range(1, 7)]
    reports = exact_bound_sweep(rad_table, RAD, ns)
    assert implied_c2_spread(reports) < 1.5


def test_csv_schema(rad_table):
    reports = exact_bound_sweep(rad_table, RAD, [1, 2])
    lines = reports_to_csv(reports).splitlines()
    assert lines[0] == "inequality_id,n,lhs,rhs,constant_used,slack,pass,source"
    assert lines[1].startswith("upper_conv,1,") and lines[1].endswith(",true,exact")
    assert len(lines) == 9


def test_gaussian_mc_upper_conv_n50():
    grid = list(range(0, 51))
    strict = estimate_survival(GAUSS, "s2", "strict", 0.0, grid, 100_000, 21)
    reports = mc_bound_sweep(GAUSS, strict, None, [50])
    up = [r for r in reports if r.inequality_id == "upper_conv"][0]
    assert up.status == PASS and up.constant_used == 2.0 and up.source == "mc"
    assert all(r.status != FAIL for r in reports)


def test_estimate_curve_brackets_truth_on_dyadic_grid(rad_table):
    grid = [1, 2, 4, 8, 16, 32, 64]
    est = estimate_survival(RAD, "s2", "strict", 0.0, grid, 100_000, 22)
    bands = estimate_curve(est, 64, confidence=0.999)
    for k in range(65):
        assert bands[k].low <= float(rad_table.p2[k]) <= bands[k].high, k


def test_fit_recovers_synthetic_power_law():
    n = np.array([2.0**k for k in range(8, 21)])
    g, se, r2, _ = fit_power_law(n, n**-0.25)
    assert abs(g - 0.25) < 1e-6 and r2 == pytest.approx(1.0)
    g, *_ = fit_power_law(n, 3.0 * n**-0.5, variances=np.linspace(1, 2, n.size))
    assert abs(g - 0.5) < 1e-12


def test_fit_exponent_on_synthetic_estimate():
    grid = np.array([2**k for k in range(8, 17)])
    trials = 10**9
    counts = np.rint(trials * grid**-0.25).astype(np.int64)
    fit = fit_exponent(SurvivalEstimate(grid, trials, counts), window=(2**8, 2**16), theoretical_gamma=0.25)
    assert abs(fit.gamma_hat - 0.25) < 1e-6
    assert fit.contains(0.24, 0.26) and fit.to_json()["grid"][0] == 256


def test_fit_exponent_thin_tail():
    grid = np.array([2**k for k in range(8, 13)])
    with pytest.raises(TailTooThinError):
        fit_exponent(SurvivalEstimate(grid, 1000, np.array([300, 200, 100, 49, 20])))
    with pytest.raises(TailTooThinError):
        fit_exponent(SurvivalEstimate(grid[:3], 1000, np.array([300, 200, 100])))


def test_gaussian_s1_exponent():
    grid = [2**k for k in range(8, 17)]
    est = estimate_survival(GAUSS, "s1", "strict", 0.0, grid, 100_000, 23)
    fit = fit_exponent(est, window=(2**8, 2**16))
    assert abs(fit.gamma_hat - 0.5) < 0.03
