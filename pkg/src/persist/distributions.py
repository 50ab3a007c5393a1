"""Increment laws and their reproducible samplers.

Every sample is a pure function of ``(spec, master_seed, trial_index, step)``:
step ``j`` (0-based) reads Philox block ``j // 2`` keyed by the master seed,
with the trial index in the high counter words.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numba as nb
import numpy as np

from persist._philox import block_bits, split_seed, to_unit

FAMILIES = ("rademacher", "gaussian", "laplace", "uniform", "pareto", "lattice")

RADEMACHER, GAUSSIAN, LAPLACE, UNIFORM, PARETO, LATTICE = range(6)

_TWO_PI = 2.0 * math.pi
_TWO_M52 = 2.0**-52


class SpecError(ValueError):
    """Invalid distribution description."""


def _fraction(value: Any) -> Fraction:
    if isinstance(value, float):
        # floats are only accepted when they are exact dyadic values
        return Fraction(value)
    return Fraction(value)


@dataclass(frozen=True)
class DistributionSpec:
    """Declarative description of a zero-mean i.i.d. increment law.

    ``params`` holds the family's parameters: ``sigma`` (gaussian), ``scale``
    (laplace), ``halfwidth`` (uniform), ``alpha`` (pareto), or ``support`` and
    ``probs`` (lattice, probs as exact fractions).
    """

    family: str
    params: dict = field(default_factory=dict)
    normalize_l1: bool = False

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise SpecError(f"unknown family {fam!r}; expected one of {', '.join(FAMILIES)}")
        p = dict(self.params)
        if fam == "gaussian":
            _positive(p, "sigma", 1.0)
        elif fam == "laplace":
            _positive(p, "scale", 1.0)
        elif fam == "uniform":
            _positive(p, "halfwidth", 1.0)
        elif fam == "pareto":
            alpha = p.get("alpha")
            if alpha is None:
                raise SpecError("pareto requires params.alpha")
            alpha = float(Fraction(alpha)) if isinstance(alpha, str) else float(alpha)
            if not 1.0 < alpha < 2.0:
                raise SpecError(f"pareto alpha must lie in (1, 2), got {alpha}")
            p["alpha"] = alpha
        elif fam == "lattice":
            support = p.get("support")
            probs = p.get("probs")
            if support is None or probs is None:
                raise SpecError("lattice requires params.support and params.probs")
            if len(support) != len(probs) or not support:
                raise SpecError("lattice support and probs must be non-empty and of equal length")
            if any(int(s) != s for s in support):
                raise SpecError("lattice support must be integers")
            pairs = {}
            for s, q in zip(support, probs):
                q = _fraction(q)
                if q < 0:
                    raise SpecError(f"negative probability {q} at {s}")
                pairs[int(s)] = pairs.get(int(s), Fraction(0)) + q
            pairs = {s: q for s, q in sorted(pairs.items()) if q != 0}
            total = sum(pairs.values(), Fraction(0))
            if total != 1:
                raise SpecError(f"lattice probs sum to {total}, not 1")
            mean = sum((s * q for s, q in pairs.items()), Fraction(0))
            if mean != 0:
                raise SpecError(f"lattice mean is {mean}, not 0")
            if len(pairs) < 2:
                raise SpecError("lattice law is degenerate")
            p["support"] = tuple(pairs)
            p["probs"] = tuple(pairs.values())
        object.__setattr__(self, "params", p)

    # constructors

    @classmethod
    def rademacher(cls, normalize_l1=False):
        return cls("rademacher", {}, normalize_l1)

    @classmethod
    def gaussian(cls, sigma=1.0, normalize_l1=False):
        return cls("gaussian", {"sigma": sigma}, normalize_l1)

    @classmethod
    def laplace(cls, scale=1.0, normalize_l1=False):
        return cls("laplace", {"scale": scale}, normalize_l1)

    @classmethod
    def uniform(cls, halfwidth=1.0, normalize_l1=False):
        return cls("uniform", {"halfwidth": halfwidth}, normalize_l1)

    @classmethod
    def pareto(cls, alpha, normalize_l1=False):
        return cls("pareto", {"alpha": alpha}, normalize_l1)

    @classmethod
    def lattice(cls, support, probs, normalize_l1=False):
        return cls("lattice", {"support": list(support), "probs": list(probs)}, normalize_l1)

    # properties

    @property
    def is_lattice(self) -> bool:
        return self.family in ("rademacher", "lattice")

    def lattice_pmf(self) -> tuple[tuple[int, ...], tuple[Fraction, ...]]:
        """Integer support and exact probabilities; lattice families only."""
        if self.family == "rademacher":
            return (-1, 1), (Fraction(1, 2), Fraction(1, 2))
        if self.family == "lattice":
            return self.params["support"], self.params["probs"]
        raise SpecError(f"{self.family} is not a lattice family")

    def symmetric(self) -> bool:
        if self.family == "pareto":
            return False
        if self.family == "lattice":
            pmf = dict(zip(*self.lattice_pmf()))
            return all(pmf.get(-s) == q for s, q in pmf.items())
        return True

    def finite_variance(self) -> bool:
        return self.family != "pareto"

    def negative_part_bounded(self) -> bool:
        return self.family in ("rademacher", "lattice", "uniform", "pareto")

    def l1_moment(self):
        """E|X_1| before any normalization: exact Fraction for lattice laws."""
        fam = self.family
        if fam == "rademacher":
            return Fraction(1)
        if fam == "lattice":
            support, probs = self.lattice_pmf()
            return sum((abs(s) * q for s, q in zip(support, probs)), Fraction(0))
        if fam == "gaussian":
            return self.params["sigma"] * math.sqrt(2.0 / math.pi)
        if fam == "laplace":
            return float(self.params["scale"])
        if fam == "uniform":
            return self.params["halfwidth"] / 2.0
        # X = Y - m with m = a/(a-1); E|X| = 2 E X^+ = 2 * int_m^inf y^-a dy
        a = self.params["alpha"]
        m = a / (a - 1.0)
        return 2.0 * m ** (1.0 - a) / (a - 1.0)

    def scale_factor(self) -> float:
        return 1.0 / float(self.l1_moment()) if self.normalize_l1 else 1.0

    def integer_valued(self) -> bool:
        """True when samples are integers, so barrier tests can be done exactly."""
        return self.is_lattice and (not self.normalize_l1 or self.l1_moment() == 1)

    def decay_exponent(self, target: str) -> float:
        """Theoretical persistence exponent for ``target`` in {'s1', 's2'}."""
        if target == "s1":
            return 0.5
        if self.family == "pareto":
            return (1.0 - 1.0 / self.params["alpha"]) / 2.0
        return 0.25

    def label(self) -> str:
        if self.family in ("rademacher",):
            return self.family
        if self.family == "lattice":
            s, q = self.lattice_pmf()
            return "lattice(" + ",".join(f"{a}:{b}" for a, b in zip(s, q)) + ")"
        (k, v), = self.params.items()
        return f"{self.family}({k}={v:g})"

    # serialization

    def to_json(self) -> dict:
        params = dict(self.params)
        if self.family == "lattice":
            params = {"support": list(params["support"]), "probs": [str(q) for q in params["probs"]]}
        return {"family": self.family, "params": params, "normalize_l1": self.normalize_l1}

    @classmethod
    def from_json(cls, obj: dict | str) -> "DistributionSpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            family = obj["family"]
        except (KeyError, TypeError):
            raise SpecError("distribution JSON needs a 'family' key") from None
        return cls(family, dict(obj.get("params", {})), bool(obj.get("normalize_l1", False)))

    # numba-side view

    def kernel_args(self):
        """(family code, float params, support, cdf, scale) consumed by the compiled samplers."""
        code = FAMILIES.index(self.family)
        params = np.zeros(2)
        support = np.zeros(1, dtype=np.int64)
        cdf = np.ones(1)
        if self.family == "gaussian":
            params[0] = self.params["sigma"]
        elif self.family == "laplace":
            params[0] = self.params["scale"]
        elif self.family == "uniform":
            params[0] = self.params["halfwidth"]
        elif self.family == "pareto":
            a = self.params["alpha"]
            params[0] = a
            params[1] = a / (a - 1.0)
        elif self.family == "lattice":
            s, q = self.lattice_pmf()
            support = np.array(s, dtype=np.int64)
            acc = Fraction(0)
            cdf = np.empty(len(q))
            for i, qi in enumerate(q):
                acc += qi
                cdf[i] = float(acc)
            cdf[-1] = 1.0
        return code, params, support, cdf, self.scale_factor()


def _positive(p: dict, key: str, default: float) -> None:
    value = float(p.get(key, default))
    if not (value > 0 and math.isfinite(value)):
        raise SpecError(f"{key} must be positive and finite, got {value}")
    p[key] = value


PRESETS = {
    "rademacher": DistributionSpec.rademacher,
    "gaussian": DistributionSpec.gaussian,
    "laplace": DistributionSpec.laplace,
    "uniform": DistributionSpec.uniform,
    "pareto": lambda: DistributionSpec.pareto(1.5),
    "lazy": lambda: DistributionSpec.lattice([-1, 0, 1], ["1/4", "1/2", "1/4"]),
    "skew": lambda: DistributionSpec.lattice([-2, 1], ["1/3", "2/3"]),
}


def parse_distribution(text: str) -> DistributionSpec:
    """Resolve a preset name (``pareto:4/3``, ``gaussian:2``), inline JSON, or a JSON file path."""
    text = text.strip()
    if text.startswith("{"):
        return DistributionSpec.from_json(text)
    name, _, arg = text.partition(":")
    if name in PRESETS:
        if not arg:
            return PRESETS[name]()
        if name in ("rademacher", "lazy", "skew"):
            raise SpecError(f"preset {name!r} takes no parameter")
        value = float(Fraction(arg))
        return {
            "gaussian": DistributionSpec.gaussian,
            "laplace": DistributionSpec.laplace,
            "uniform": DistributionSpec.uniform,
            "pareto": DistributionSpec.pareto,
        }[name](value)
    try:
        with open(text) as fh:
            return DistributionSpec.from_json(json.load(fh))
    except FileNotFoundError:
        raise SpecError(
            f"unknown distribution {text!r}: not a preset ({', '.join(PRESETS)}) nor a JSON file"
        ) from None


@dataclass(frozen=True)
class RngContract:
    master_seed: int
    trial_index: int

    def __post_init__(self):
        for name in ("master_seed", "trial_index"):
            v = getattr(self, name)
            if not 0 <= v < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")


@nb.njit(cache=True)
def draw_pair(code, params, support, cdf, key0, key1, trial, block):
    """Increments for steps ``2*block`` and ``2*block + 1`` of one trial."""
    a, b = block_bits(key0, key1, trial, block)
    if code == GAUSSIAN:
        r = params[0] * np.sqrt(-2.0 * np.log(to_unit(a)))
        theta = _TWO_PI * to_unit(b)
        return r * np.cos(theta), r * np.sin(theta)
    x0 = _draw_one(code, params, support, cdf, a)
    x1 = _draw_one(code, params, support, cdf, b)
    return x0, x1


@nb.njit(cache=True, inline="always")
def _draw_one(code, params, support, cdf, bits):
    if code == RADEMACHER:
        return 1.0 if (bits >> 52) & 1 else -1.0
    if code == LAPLACE:
        mag = -params[0] * np.log(((bits >> 1) + 1) * _TWO_M52)
        return mag if bits & 1 else -mag
    if code == UNIFORM:
        return params[0] * (2.0 * to_unit(bits) - 1.0 - 2.0**-53)
    if code == PARETO:
        return to_unit(bits) ** (-1.0 / params[0]) - params[1]
    u = to_unit(bits)
    for i in range(cdf.shape[0]):
        if u <= cdf[i]:
            return float(support[i])
    return float(support[cdf.shape[0] - 1])


@nb.njit(cache=True)
def _fill_stream(code, params, support, cdf, scale, key0, key1, trial, start, out):
    for j in range(out.shape[0]):
        step = start + j
        x0, x1 = draw_pair(code, params, support, cdf, key0, key1, trial, step >> 1)
        out[j] = (x0 if step & 1 == 0 else x1) * scale


def sample_stream(spec: DistributionSpec, rng: RngContract, length: int, start: int = 0) -> np.ndarray:
    """Increments X_{start+1} .. X_{start+length} of trial ``rng.trial_index``."""
    if length < 1:
        raise ValueError("length must be >= 1")
    code, params, support, cdf, scale = spec.kernel_args()
    key0, key1 = split_seed(rng.master_seed)
    out = np.empty(length)
    _fill_stream(code, params, support, cdf, scale, key0, key1, np.int64(_as_i64(rng.trial_index)), start, out)
    return out


def _as_i64(x: int) -> int:
    return x - 2**64 if x >= 2**63 else x


def l1_moment(spec: DistributionSpec):
    """E|X_1| of the (possibly normalized) increment: exact when available."""
    m = spec.l1_moment()
    if spec.normalize_l1:
        return Fraction(1) if isinstance(m, Fraction) else 1.0
    return m
