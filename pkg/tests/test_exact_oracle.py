import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from persist.distributions import DistributionSpec, SpecError
from persist.exact_oracle import (
    PersistenceTable,
    SizeError,
    argmax_law,
    brute_force_table,
    double_factorial_p1,
    dp2_cells,
    dp_p2_float,
    dp_table,
    exact_abs_moment,
    exact_abs_moments,
    generating_function_residual,
    identity_residual,
)

RAD = DistributionSpec.rademacher()
SKEW = DistributionSpec.lattice([-2, 1], ["1/3", "2/3"])
LAZY = DistributionSpec.lattice([-1, 0, 1], ["1/4", "1/2", "1/4"])
WIDE = DistributionSpec.lattice([-2, -1, 0, 1, 2], ["1/6", "1/6", "1/3", "1/6", "1/6"])
GAPPED = DistributionSpec.lattice([-3, 3], ["1/2", "1/2"])
LOPSIDED = DistributionSpec.lattice([-3, 1, 2], ["1/3", "1/3", "1/3"])
SYMMETRIC = [RAD, LAZY, WIDE, GAPPED, DistributionSpec.lattice([-2, -1, 1, 2], ["1/10", "2/5", "2/5", "1/10"])]


def naive_table(spec, n_max):
    """Straight dictionary recursion on (S, S2) states with Fractions."""
    support, probs = spec.lattice_pmf()
    out = {}
    for name, use_s2, strict in [("p1", False, True), ("p1bar", False, False), ("p2", True, True), ("p2bar", True, False)]:
        states = {(0, 0): Fraction(1)}
        seq = [Fraction(1)]
        for _ in range(n_max):
            nxt = {}
            for (s, s2), w in states.items():
                for x, q in zip(support, probs):
                    a, b = s + x, s2 + s + x
                    v = b if use_s2 else a
                    if v < 0 or (v == 0 and not strict):
                        nxt[(a, b)] = nxt.get((a, b), 0) + w * q
            states = nxt
            seq.append(sum(states.values(), Fraction(0)))
        out[name] = seq
    return out


def test_rademacher_examples():
    t = brute_force_table(RAD, 3)
    assert t.p2[2] == Fraction(1, 2)
    assert t.p2[3] == Fraction(3, 8)
    assert t.p1[1] == t.p1bar[1] == Fraction(1, 2)
    d = dp_table(RAD, 3)
    assert d.p1[2] == Fraction(1, 4) and d.p1bar[2] == Fraction(1, 2)
    assert dp_table(SKEW, 1).p1[1] == Fraction(1, 3)


@pytest.mark.parametrize("spec,n", [(RAD, 12), (SKEW, 10), (LAZY, 9), (WIDE, 6), (GAPPED, 10), (LOPSIDED, 9)],
                         ids=["rad", "skew", "lazy", "wide", "gapped", "lopsided"])
def test_dp_matches_brute_force_and_naive(spec, n):
    bf = brute_force_table(spec, n)
    dp = dp_table(spec, n)
    ref = naive_table(spec, n)
    for key in ("p1", "p1bar", "p2", "p2bar"):
        assert getattr(dp, key) == getattr(bf, key) == ref[key], key


def test_dp_matches_naive_beyond_brute_force():
    ref = naive_table(SKEW, 24)
    dp = dp_table(SKEW, 24)
    assert dp.p2 == ref["p2"] and dp.p2bar == ref["p2bar"]


def test_zero_horizon():
    for t in (brute_force_table(RAD, 0), dp_table(RAD, 0)):
        assert t.p1 == t.p1bar == t.p2 == t.p2bar == [1]


@pytest.mark.parametrize("n,value", [(0, Fraction(1)), (1, Fraction(1, 2)), (3, Fraction(5, 16)), (4, Fraction(35, 128))])
def test_double_factorial_values(n, value):
    assert double_factorial_p1(n) == value


def test_double_factorial_is_central_binomial():
    for n in range(60):
        assert double_factorial_p1(n) == Fraction(math.comb(2 * n, n), 4**n)


@pytest.mark.parametrize("spec", SYMMETRIC, ids=lambda s: s.label())
def test_identity_and_sandwich(spec):
    t = dp_table(spec, 30)
    for n in range(31):
        assert identity_residual(t, n) == 0
        assert t.p1[n] <= double_factorial_p1(n) <= t.p1bar[n]


def test_identity_hand_value():
    t = dp_table(RAD, 2)
    assert 1 * t.p1bar[2] + t.p1[1] * t.p1bar[1] + t.p1[2] * 1 - 1 == identity_residual(t, 2) == 0


def test_identity_fails_for_asymmetric_law():
    t = dp_table(SKEW, 6)
    assert any(identity_residual(t, n) != 0 for n in range(1, 7))


def test_generating_function_residual():
    t = dp_table(RAD, 40)
    for x in (Fraction(1, 2), Fraction(9, 10)):
        assert generating_function_residual(t, x) == -(x**41)
    assert abs(generating_function_residual(t, Fraction(1, 2))) < Fraction(1, 10**12)


def test_rademacher_p1_closed_form():
    # known: P(S_1..S_2n <= 0) = C(2n, n) / 4^n for simple random walk
    t = dp_table(RAD, 40)
    for n in range(1, 21):
        assert t.p1bar[2 * n] == Fraction(math.comb(2 * n, n), 4**n)


@pytest.mark.parametrize("spec", [RAD, SKEW, LAZY, LOPSIDED], ids=lambda s: s.label())
def test_monotone(spec):
    t = dp_table(spec, 40)
    for seq in (t.p1, t.p1bar, t.p2, t.p2bar):
        assert all(a >= b for a, b in zip(seq, seq[1:]))
    for n in range(41):
        assert t.p1[n] <= t.p1bar[n] and t.p2[n] <= t.p2bar[n]
    m = exact_abs_moments(spec, 60)
    assert all(a <= b for a, b in zip(m, m[1:]))


def test_argmax_examples():
    assert argmax_law(RAD, 1).mass == [Fraction(1, 2), Fraction(1, 2)]
    assert argmax_law(RAD, 2).mass == [Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)]
    assert sum(argmax_law(SKEW, 2).mass) == 1


def test_argmax_against_enumeration():
    support, probs = LOPSIDED.lattice_pmf()
    n = 5
    mass = [Fraction(0)] * (n + 1)
    for idx in itertools.product(range(len(support)), repeat=n):
        path = [0] + list(itertools.accumulate(support[i] for i in idx))
        mass[path.index(max(path))] += math.prod(probs[i] for i in idx)
    assert argmax_law(LOPSIDED, n).mass == mass


@pytest.mark.parametrize("spec,n", [(RAD, 10), (LAZY, 8), (WIDE, 6)], ids=["rad", "lazy", "wide"])
def test_argmax_product_law(spec, n):
    t = dp_table(spec, n)
    law = argmax_law(spec, n)
    assert law.mass == [t.p1[k] * t.p1bar[n - k] for k in range(n + 1)]


def test_abs_moment_examples():
    assert exact_abs_moment(RAD, 1) == 1
    assert exact_abs_moment(RAD, 2) == 1
    assert exact_abs_moment(RAD, 4) == Fraction(3, 2)
    with pytest.raises(ValueError):
        exact_abs_moment(RAD, 0)


def test_abs_moments_against_binomial_sums():
    rad = exact_abs_moments(RAD, 50)
    skew = exact_abs_moments(SKEW, 50)
    for n in range(51):
        assert rad[n] == Fraction(sum(math.comb(n, k) * abs(n - 2 * k) for k in range(n + 1)), 2**n)
        # j steps of -2 and n-j steps of +1
        assert skew[n] == sum(
            math.comb(n, j) * Fraction(1, 3) ** j * Fraction(2, 3) ** (n - j) * abs(n - 3 * j) for j in range(n + 1)
        )


def test_abs_moments_normalized():
    spec = DistributionSpec.lattice([-2, 1], ["1/3", "2/3"], normalize_l1=True)
    assert exact_abs_moments(spec, 5)[5] == exact_abs_moments(SKEW, 5)[5] / Fraction(4, 3)


def test_size_guards():
    with pytest.raises(SizeError):
        brute_force_table(WIDE, 12)
    with pytest.raises(SizeError):
        argmax_law(RAD, 30)
    with pytest.raises(SizeError):
        dp_table(RAD, 2000)
    with pytest.raises(SizeError):
        exact_abs_moments(WIDE, 10_000)
    with pytest.raises(SpecError):
        dp_table(DistributionSpec.gaussian(), 3)
    assert dp2_cells(RAD, 512) > 0


def test_serialization_round_trip():
    t = dp_table(SKEW, 8)
    back = PersistenceTable.from_json(json.loads(t.dumps()))
    assert back.p2 == t.p2 and back.p1bar == t.p1bar and back.spec == SKEW
    lines = t.to_csv().splitlines()
    assert lines[0] == "n,p1,p1bar,p2,p2bar"
    assert lines[1] == "0,1/1,1/1,1/1,1/1"
    assert lines[2] == "1,1/3,1/3,1/3,1/3"
    assert len(lines) == 10


@pytest.mark.parametrize("spec", [RAD, SKEW, LAZY], ids=lambda s: s.label())
def test_float_recursion_matches_exact(spec):
    t = dp_table(spec, 60)
    fs, fw = dp_p2_float(spec, 60)
    np.testing.assert_allclose(fs, [float(v) for v in t.p2], rtol=1e-12)
    np.testing.assert_allclose(fw, [float(v) for v in t.p2bar], rtol=1e-12)
