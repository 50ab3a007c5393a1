"""Exact persistence probabilities for integer-valued increments.

Probabilities are carried as integer path weights over a common
denominator ``W**n`` (``W`` = lcm of the pmf denominators), so every result
is an exact :class:`fractions.Fraction`.

* :func:`brute_force_table` enumerates every increment tuple; it is the
  ground-truth oracle and shares no code with the recursions.
* :func:`dp_table` runs a 1-D recursion over ``S_k`` for the partial-sum
  tables and a 2-D recursion over ``(S_k, S2_k)`` for the iterated ones.
  The 2-D recursion is done modulo several 31-bit primes in compiled code
  and lifted back with the Chinese remainder theorem.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numba as nb
import numpy as np

from persist.distributions import DistributionSpec, SpecError

BRUTE_FORCE_LIMIT = 10**8
"""Maximum number of increment tuples ``s**n`` enumerated by the brute-force oracle."""

DP2_CELL_LIMIT = 40_000_000
"""Maximum cells per state array of the 2-D recursion (four such arrays are allocated).

Rademacher reaches n_max = 560 under this limit; the exact (modular) run is the
slow one there, roughly one pass per 31 bits of ``n_max * log2(W)``."""

CONV_CELL_LIMIT = 50_000_000
"""Maximum ``n * range(S_n)`` work for the exact E|S_n| convolution."""

_CHUNK = 1 << 18


class SizeError(ValueError):
    """Requested exact computation exceeds a documented size guard."""


@dataclass
class PersistenceTable:
    n_max: int
    p1: list
    p1bar: list
    p2: list
    p2bar: list
    spec: DistributionSpec | None = None

    def rows(self):
        for n in range(self.n_max + 1):
            yield n, self.p1[n], self.p1bar[n], self.p2[n], self.p2bar[n]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "p1", "p1bar", "p2", "p2bar"])
        for n, *vals in self.rows():
            w.writerow([n, *(_ratstr(v) for v in vals)])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "n_max": self.n_max,
            "spec": self.spec.to_json() if self.spec else None,
            **{k: [_ratstr(v) for v in getattr(self, k)] for k in ("p1", "p1bar", "p2", "p2bar")},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PersistenceTable":
        spec = DistributionSpec.from_json(obj["spec"]) if obj.get("spec") else None
        return cls(
            obj["n_max"],
            *([Fraction(v) for v in obj[k]] for k in ("p1", "p1bar", "p2", "p2bar")),
            spec=spec,
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


@dataclass
class ArgmaxLaw:
    n: int
    mass: list = field(default_factory=list)


def _ratstr(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def integer_pmf(spec: DistributionSpec) -> tuple[np.ndarray, np.ndarray, int]:
    """Support, integer weights and their common denominator ``W``."""
    if not spec.is_lattice:
        raise SpecError(f"exact computations need a lattice family, got {spec.family!r}")
    support, probs = spec.lattice_pmf()
    denom = math.lcm(*(q.denominator for q in probs))
    weights = [int(q * denom) for q in probs]
    return np.array(support, dtype=np.int64), np.array(weights, dtype=np.int64), denom


# ---------------------------------------------------------------- brute force


def _enumerate(spec: DistributionSpec, n: int):
    """Yield (increment matrix, integer weight vector) chunks over all ``s**n`` tuples."""
    support, weights, denom = integer_pmf(spec)
    s = len(support)
    total = s**n
    if total > BRUTE_FORCE_LIMIT:
        raise SizeError(f"brute force needs {s}^{n} = {total} tuples > limit {BRUTE_FORCE_LIMIT}")
    exact_int64 = denom**n < 2**62
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        digits = np.empty((idx.size, n), dtype=np.int64)
        rem = idx.copy()
        for j in range(n):
            rem, digits[:, j] = np.divmod(rem, s)
        x = support[digits]
        if exact_int64:
            w = np.prod(weights[digits], axis=1)
        else:
            w = np.prod(weights[digits].astype(object), axis=1)
        yield x, w


def brute_force_table(spec: DistributionSpec, n_max: int) -> PersistenceTable:
    """All four persistence sequences by summing over every increment tuple of length ``n_max``."""
    _, _, denom = integer_pmf(spec)
    if n_max == 0:
        one = [Fraction(1)]
        return PersistenceTable(0, one, one[:], one[:], one[:], spec)
    acc = {k: [0] * n_max for k in ("p1", "p1bar", "p2", "p2bar")}
    for x, w in _enumerate(spec, n_max):
        s1 = np.cumsum(x, axis=1)
        s2 = np.cumsum(s1, axis=1)
        alive = {
            "p1": np.logical_and.accumulate(s1 < 0, axis=1),
            "p1bar": np.logical_and.accumulate(s1 <= 0, axis=1),
            "p2": np.logical_and.accumulate(s2 < 0, axis=1),
            "p2bar": np.logical_and.accumulate(s2 <= 0, axis=1),
        }
        for key, mask in alive.items():
            for m in range(n_max):
                acc[key][m] += int(w[mask[:, m]].sum())
    full = denom**n_max
    out = {k: [Fraction(1)] + [Fraction(v, full) for v in acc[k]] for k in acc}
    return PersistenceTable(n_max, out["p1"], out["p1bar"], out["p2"], out["p2bar"], spec)


def argmax_law(spec: DistributionSpec, n: int) -> ArgmaxLaw:
    """Exact law of the first index attaining max(S_0=0, S_1, ..., S_n)."""
    _, _, denom = integer_pmf(spec)
    if n == 0:
        return ArgmaxLaw(0, [Fraction(1)])
    counts = [0] * (n + 1)
    for x, w in _enumerate(spec, n):
        path = np.concatenate([np.zeros((x.shape[0], 1), dtype=np.int64), np.cumsum(x, axis=1)], axis=1)
        first = np.argmax(path, axis=1)
        for k in range(n + 1):
            counts[k] += int(w[first == k].sum())
    full = denom**n
    return ArgmaxLaw(n, [Fraction(c, full) for c in counts])


# ---------------------------------------------------------------- recursions


def dp_p1(spec: DistributionSpec, n_max: int) -> tuple[list, list]:
    """p1[n], p1bar[n] for n = 0..n_max via the recursion over S_k alone."""
    support, weights, denom = integer_pmf(spec)
    lo = int(support.min())
    if lo >= 0:
        raise SpecError("zero-mean lattice law must have negative support")
    width = n_max * -lo + 1
    # index i <-> S = -i; strict keeps S <= -1, weak keeps S <= 0
    strict = np.zeros(width, dtype=object)
    weak = np.zeros(width, dtype=object)
    strict[0] = weak[0] = 1
    p1, p1bar = [Fraction(1)], [Fraction(1)]
    for k in range(1, n_max + 1):
        new_s = np.zeros(width, dtype=object)
        new_w = np.zeros(width, dtype=object)
        reach = (k - 1) * -lo + 1
        for x, wt in zip(support.tolist(), weights.tolist()):
            _shift_add(new_s, strict[:reach], -x, wt, first_alive=1)
            _shift_add(new_w, weak[:reach], -x, wt, first_alive=0)
        strict, weak = new_s, new_w
        full = denom**k
        p1.append(Fraction(int(strict.sum()), full))
        p1bar.append(Fraction(int(weak.sum()), full))
    return p1, p1bar


def _shift_add(dst, src, offset, wt, first_alive):
    # dst[i + offset] += wt * src[i], dropping targets below first_alive
    lo = max(0, first_alive - offset)
    hi = min(src.shape[0], dst.shape[0] - offset)
    if hi > lo:
        dst[lo + offset : hi + offset] += src[lo:hi] * wt


@lru_cache(maxsize=1)
def _primes() -> tuple[int, ...]:
    out = []
    c = (1 << 31) - 1
    while len(out) < 256:
        if _is_prime(c):
            out.append(c)
        c -= 2
    return tuple(out)


def _is_prime(n: int) -> bool:
    if n % 2 == 0:
        return n == 2
    for d in range(3, math.isqrt(n) + 1, 2):
        if n % d == 0:
            return False
    return True


@nb.njit(cache=True)
def _dp2(offsets, weights, g, lo, n_max, modulus, out_s, out_w, cur_s, cur_w, new_s, new_w, rlo, rhi, nrlo, nrhi):
    """Surviving path weight for S2 < 0 (``out_s``) and S2 <= 0 (``out_w``), k = 1..n_max.

    Row i, column j at step k hold S = k*lo + g*i and S2 = T_k + g*j with
    T_k = lo*k*(k+1)/2, the only residues reachable on the sub-lattice.
    Arithmetic is modulo ``modulus`` when it is positive, plain otherwise.
    Row occupancy is tracked in [rlo[i], rhi[i]].
    """
    dmax = offsets.max()
    cur_s[0, 0] = 1
    cur_w[0, 0] = 1
    rlo[0] = 0
    rhi[0] = 0
    for k in range(1, n_max + 1):
        t_k = lo * k * (k + 1) // 2
        jw = (-t_k) // g
        js = (-t_k - 1) // g
        rows_prev = (k - 1) * dmax + 1
        rows_new = k * dmax + 1
        for i2 in range(rows_new):
            nrlo[i2] = jw + 1
            nrhi[i2] = -1
        for i in range(rows_prev):
            if rhi[i] < rlo[i]:
                continue
            for q in range(offsets.shape[0]):
                i2 = i + offsets[q]
                a = rlo[i] + i2
                b = min(rhi[i] + i2, jw)
                if a <= b:
                    nrlo[i2] = min(nrlo[i2], a)
                    nrhi[i2] = max(nrhi[i2], b)
        for i2 in range(rows_new):
            for j in range(nrlo[i2], nrhi[i2] + 1):
                new_s[i2, j] = 0
                new_w[i2, j] = 0
        for i in range(rows_prev):
            for j in range(rlo[i], rhi[i] + 1):
                vs = cur_s[i, j]
                vw = cur_w[i, j]
                if vw == 0 and vs == 0:
                    continue
                for q in range(offsets.shape[0]):
                    i2 = i + offsets[q]
                    j2 = j + i2
                    if j2 > jw:
                        continue
                    wt = weights[q]
                    if modulus > 0:
                        new_w[i2, j2] = (new_w[i2, j2] + vw * wt) % modulus
                        if j2 <= js:
                            new_s[i2, j2] = (new_s[i2, j2] + vs * wt) % modulus
                    else:
                        new_w[i2, j2] += vw * wt
                        if j2 <= js:
                            new_s[i2, j2] += vs * wt
        tot_s = out_s[0] * 0
        tot_w = out_w[0] * 0
        for i2 in range(rows_new):
            for j in range(nrlo[i2], nrhi[i2] + 1):
                tot_s += new_s[i2, j]
                tot_w += new_w[i2, j]
            if modulus > 0:
                tot_s %= modulus
                tot_w %= modulus
        out_s[k] = tot_s
        out_w[k] = tot_w
        cur_s, new_s = new_s, cur_s
        cur_w, new_w = new_w, cur_w
        rlo, nrlo = nrlo, rlo
        rhi, nrhi = nrhi, rhi


def _dp2_layout(spec: DistributionSpec, n_max: int):
    support, weights, denom = integer_pmf(spec)
    lo = int(support.min())
    if lo >= 0:
        raise SpecError("zero-mean lattice law must have negative support")
    g = math.gcd(*(int(x) - lo for x in support))
    offsets = (support - lo) // g
    rows = n_max * int(offsets.max()) + 1
    cols = (-lo * n_max * (n_max + 1) // 2) // g + 1
    return support, weights, denom, lo, g, offsets, rows, cols


def dp2_cells(spec: DistributionSpec, n_max: int) -> int:
    """Cells per state array of the 2-D recursion (four arrays are allocated)."""
    *_, rows, cols = _dp2_layout(spec, n_max)
    return rows * cols


def _run_dp2(spec, n_max, modulus, dtype, weights_override=None):
    support, weights, denom, lo, g, offsets, rows, cols = _dp2_layout(spec, n_max)
    if rows * cols > DP2_CELL_LIMIT:
        raise SizeError(
            f"2-D recursion for n_max={n_max} needs {rows * cols} cells > DP2_CELL_LIMIT={DP2_CELL_LIMIT}"
        )
    bufs = [np.zeros((rows, cols), dtype=dtype) for _ in range(4)]
    ranges = [np.zeros(rows, dtype=np.int64) for _ in range(4)]
    w = weights if weights_override is None else weights_override
    out_s = np.zeros(n_max + 1, dtype=dtype)
    out_w = np.zeros(n_max + 1, dtype=dtype)
    _dp2(offsets, w, g, lo, n_max, modulus, out_s, out_w, *bufs, *ranges)
    return out_s, out_w


def dp_p2(spec: DistributionSpec, n_max: int) -> tuple[list, list]:
    """p2[n], p2bar[n] for n = 0..n_max via the (S_k, S2_k) recursion, exactly."""
    _, _, denom = integer_pmf(spec)
    if n_max == 0:
        return [Fraction(1)], [Fraction(1)]
    bits_needed = n_max * math.log2(denom) + 2
    primes = []
    modulus = 1
    while math.log2(modulus) < bits_needed:
        p = _primes()[len(primes)]
        primes.append(p)
        modulus *= p
    residues_s, residues_w = [], []
    for p in primes:
        out_s, out_w = _run_dp2(spec, n_max, p, np.int64)
        residues_s.append(out_s)
        residues_w.append(out_w)
    p2, p2bar = [Fraction(1)], [Fraction(1)]
    for k in range(1, n_max + 1):
        full = denom**k
        p2.append(Fraction(_crt([int(r[k]) for r in residues_s], primes), full))
        p2bar.append(Fraction(_crt([int(r[k]) for r in residues_w], primes), full))
    return p2, p2bar


def dp_p2_float(spec: DistributionSpec, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Same recursion in float64 for n beyond exact reach.

    All terms are non-negative, so the relative error stays within a few
    ulps times n; nothing underflows while probabilities exceed ~1e-300.
    """
    support, probs = spec.lattice_pmf()
    out_s, out_w = _run_dp2(spec, n_max, 0, np.float64, np.array([float(q) for q in probs]))
    out_s[0] = out_w[0] = 1.0
    return out_s, out_w


def _crt(residues: list[int], moduli: list[int]) -> int:
    x, m = 0, 1
    for r, p in zip(residues, moduli):
        # solve x + m*t = r (mod p)
        t = ((r - x) * pow(m, -1, p)) % p
        x += m * t
        m *= p
    return x


def dp_table(spec: DistributionSpec, n_max: int) -> PersistenceTable:
    """All four persistence sequences for n = 0..n_max by the recursions."""
    cells = dp2_cells(spec, n_max)
    if cells > DP2_CELL_LIMIT:
        raise SizeError(f"2-D recursion for n_max={n_max} needs {cells} cells > DP2_CELL_LIMIT={DP2_CELL_LIMIT}")
    p1, p1bar = dp_p1(spec, n_max)
    p2, p2bar = dp_p2(spec, n_max)
    return PersistenceTable(n_max, p1, p1bar, p2, p2bar, spec)


# ---------------------------------------------------------------- identities


def double_factorial_p1(n: int) -> Fraction:
    """(2n-1)!! / (2n)!!, with the value 1 at n = 0."""
    if n < 0:
        raise ValueError("n must be >= 0")
    odd = math.prod(range(1, 2 * n, 2))
    even = math.prod(range(2, 2 * n + 1, 2))
    return Fraction(odd, even)


def identity_residual(table: PersistenceTable, n: int) -> Fraction:
    """sum_k p1[k] * p1bar[n-k] - 1; zero for symmetric laws."""
    if n > table.n_max:
        raise ValueError(f"n={n} exceeds table n_max={table.n_max}")
    return sum((table.p1[k] * table.p1bar[n - k] for k in range(n + 1)), Fraction(0)) - 1


def generating_function_residual(table: PersistenceTable, x: Fraction, order: int | None = None) -> Fraction:
    """(1 - x) * sum_{n<=order} x^n (p1 * p1bar)_n - 1.

    For symmetric laws the convolution is identically 1, so this equals
    ``-x**(order+1)`` and tends to 0, i.e. P(x) Pbar(x) (1 - x) -> 1.
    """
    x = Fraction(x)
    if not 0 <= x < 1:
        raise ValueError("x must lie in [0, 1)")
    order = table.n_max if order is None else order
    total = sum((x**n * (identity_residual(table, n) + 1) for n in range(order + 1)), Fraction(0))
    return (1 - x) * total - 1


def exact_abs_moments(spec: DistributionSpec, n_max: int) -> list:
    """[E|S_0|, E|S_1|, ..., E|S_n_max|] by exact convolution of the pmf."""
    support, weights, denom = integer_pmf(spec)
    lo, hi = int(support.min()), int(support.max())
    width = n_max * (hi - lo) + 1
    if n_max * width > CONV_CELL_LIMIT:
        raise SizeError(f"convolution for n={n_max} needs {n_max * width} cell updates > {CONV_CELL_LIMIT}")
    off = -n_max * lo
    values = np.arange(width, dtype=np.int64) - off
    absval = np.abs(values).astype(object)
    dist = np.zeros(width, dtype=object)
    dist[off] = 1
    out = [Fraction(0)]
    scale = spec.l1_moment() if spec.normalize_l1 else Fraction(1)
    for k in range(1, n_max + 1):
        new = np.zeros(width, dtype=object)
        a, b = off + (k - 1) * lo, off + (k - 1) * hi + 1
        for x, wt in zip(support.tolist(), weights.tolist()):
            new[a + x : b + x] += dist[a:b] * wt
        dist = new
        out.append(Fraction(int((dist * absval).sum()), denom**k) / scale)
    return out


def exact_abs_moment(spec: DistributionSpec, n: int) -> Fraction:
    """E|S_n| for a lattice law."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return exact_abs_moments(spec, n)[n]
