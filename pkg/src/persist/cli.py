"""Command-line entry point: ``persist <mode> [options]``.

Modes: exact, mc, bounds, exponent, identity, argmax, gauss. Every mode writes
its CSV/JSON/SVG artifacts under ``--out`` and prints one summary line.

Exit status: 0 on success, 2 when a bound (or identity) check fails,
1 on usage, configuration or size/budget errors.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from persist import analysis, exact_oracle, gaussian_compare, montecarlo
from persist.distributions import DistributionSpec, SpecError, parse_distribution
from persist.reporting import loglog_svg, write_json, write_text

MODES = ("exact", "mc", "bounds", "exponent", "identity", "argmax", "gauss")
LATTICE_MODES = ("exact", "identity", "argmax")

_EPILOG = f"""\
size guards:
  brute force / argmax     s^n <= {exact_oracle.BRUTE_FORCE_LIMIT:.0e} increment tuples
  2-D recursion (p2)       <= {exact_oracle.DP2_CELL_LIMIT:.0e} cells per state array
                           (Rademacher: n <= 560)
  E|S_n| convolution       n * range(S_n) <= {exact_oracle.CONV_CELL_LIMIT:.0e} cell updates
  Monte Carlo work         <= {montecarlo.DEFAULT_BUDGET_STEPS:.0e} increments (override with
                           --budget or ${montecarlo.BUDGET_ENV})
grid syntax: "2^4..2^20" (dyadic), "1..50" (every integer), "1,2,8" (list); terms
can be mixed with commas.
"""


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_grid(text: str) -> list[int]:
    """Expand "2^a..2^b", "a..b" and comma lists into a sorted list of integers."""
    out = set()
    for term in text.split(","):
        term = term.strip()
        if not term:
            continue
        m = re.fullmatch(r"2\^(\d+)\.\.2\^(\d+)", term)
        if m:
            a, b = int(m[1]), int(m[2])
            out.update(2**e for e in range(a, b + 1))
            continue
        m = re.fullmatch(r"(\d+)\.\.(\d+)", term)
        if m:
            out.update(range(int(m[1]), int(m[2]) + 1))
            continue
        m = re.fullmatch(r"2\^(\d+)", term)
        if m:
            out.add(2 ** int(m[1]))
            continue
        if not term.isdigit():
            raise ConfigError(f"bad grid term {term!r}")
        out.add(int(term))
    if not out:
        raise ConfigError("empty grid")
    return sorted(out)


@dataclass
class ExperimentConfig:
    distribution: DistributionSpec
    mode: str
    grid: list = field(default_factory=lambda: parse_grid("2^0..2^10"))
    trials: int = 100_000
    master_seed: int = 0
    out: str = "out"
    nmax: int = 30
    target: str = "s2"
    barrier: str = "strict"
    y: float = 0.0
    source: str = "exact"
    c1: str = "auto"
    budget: int | None = None
    window: tuple = (2**8, None)
    check_identity: bool = False
    moments: bool = False
    h: float = gaussian_compare.DEFAULT_STEP
    confidence: float = 0.95

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        lattice_needed = self.mode in LATTICE_MODES or (self.mode == "bounds" and self.source == "exact")
        if lattice_needed and not self.distribution.is_lattice:
            raise ConfigError(
                f"mode {self.mode!r}{' with --source exact' if self.mode == 'bounds' else ''} needs a lattice "
                f"family (rademacher or lattice), got {self.distribution.family!r}"
            )
        if self.target not in ("s1", "s2"):
            raise ConfigError("--target must be s1 or s2")
        if self.barrier not in ("strict", "weak"):
            raise ConfigError("--barrier must be strict or weak")
        if self.source not in ("exact", "mc"):
            raise ConfigError("--source must be exact or mc")
        if self.c1 not in ("auto", "2", "6sqrt30"):
            raise ConfigError("--c1 must be auto, 2 or 6sqrt30")
        if self.nmax < 0:
            raise ConfigError("--nmax must be >= 0")
        if self.mode == "argmax" and self.nmax > 16:
            raise ConfigError("argmax mode enumerates paths; --nmax must be <= 16")
        if self.y < 0:
            raise ConfigError("--y must be >= 0")

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        dist = obj.pop("distribution")
        dist = parse_distribution(dist) if isinstance(dist, str) else DistributionSpec.from_json(dist)
        if isinstance(obj.get("grid"), str):
            obj["grid"] = parse_grid(obj["grid"])
        if "window" in obj:
            obj["window"] = tuple(obj["window"])
        return cls(distribution=dist, **obj)

    def to_json(self) -> dict:
        d = asdict(self)
        d["distribution"] = self.distribution.to_json()
        d["window"] = list(self.window)
        return d


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="persist", description=__doc__.split("\n\n")[0], epilog=_EPILOG,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", help="JSON file with ExperimentConfig fields; flags given explicitly override it")
    p.add_argument("--dist", help="preset (rademacher, gaussian[:sigma], laplace[:b], uniform[:a], pareto[:alpha], "
                                  "lazy, skew), inline JSON, or a JSON file")
    p.add_argument("--target", choices=("s1", "s2"))
    p.add_argument("--barrier", choices=("strict", "weak"))
    p.add_argument("--y", type=float, help="threshold (default 0)")
    p.add_argument("--grid", help="n grid, e.g. 2^4..2^20")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, dest="master_seed")
    p.add_argument("--nmax", type=int)
    p.add_argument("--out")
    p.add_argument("--source", choices=("exact", "mc"))
    p.add_argument("--c1", choices=("auto", "2", "6sqrt30"))
    p.add_argument("--budget", type=float, help="Monte Carlo work budget in increments")
    p.add_argument("--window", help="exponent fit window 'lo,hi' (hi may be empty)")
    p.add_argument("--h", type=float, help="integrated-BM step (gauss mode)")
    p.add_argument("--confidence", type=float)
    p.add_argument("--check-identity", action="store_true", default=None)
    p.add_argument("--moments", action="store_true", default=None, help="also estimate E|S_n| (mc mode)")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    base["mode"] = args.mode
    for key in ("target", "barrier", "y", "trials", "master_seed", "nmax", "out", "source", "c1", "h",
                "confidence", "check_identity", "moments"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    if args.budget is not None:
        base["budget"] = int(args.budget)
    if args.grid is not None:
        base["grid"] = args.grid
    if args.window is not None:
        lo, _, hi = args.window.partition(",")
        base["window"] = (int(lo), int(hi) if hi.strip() else None)
    if args.dist is not None:
        base["distribution"] = args.dist
    if "distribution" not in base:
        base["distribution"] = "gaussian" if args.mode == "gauss" else "rademacher"
    return ExperimentConfig.from_json(base)


# ---------------------------------------------------------------- modes


def _survival_svg(est, gammas, title):
    return loglog_svg([(est.label or "p_hat", list(est.grid), list(est.p_hat))], gammas, title,
                      xlabel=est.index_name, ylabel="survival")


def run_exact(cfg: ExperimentConfig, out: Path) -> int:
    spec = cfg.distribution
    table = exact_oracle.dp_table(spec, cfg.nmax)
    write_text(out / "table.csv", table.to_csv())
    write_text(out / "table.json", table.dumps() + "\n")
    status = 0
    msg = f"exact {spec.label()} n<={cfg.nmax}: p2[{cfg.nmax}]={float(table.p2[cfg.nmax]):.6g}"
    if cfg.check_identity:
        status, note = _identity_artifacts(spec, table, out)
        msg += "; " + note
    print(msg)
    return status


def _identity_artifacts(spec, table, out: Path) -> tuple[int, str]:
    rows = ["n,residual,double_factorial,p1_le_df,df_le_p1bar"]
    bad = 0
    sym = spec.symmetric()
    for n in range(table.n_max + 1):
        r = exact_oracle.identity_residual(table, n)
        df = exact_oracle.double_factorial_p1(n)
        lo_ok = table.p1[n] <= df
        hi_ok = df <= table.p1bar[n]
        if sym and (r != 0 or not lo_ok or not hi_ok):
            bad += 1
        rows.append(f"{n},{r.numerator}/{r.denominator},{df.numerator}/{df.denominator},"
                    f"{str(lo_ok).lower()},{str(hi_ok).lower()}")
    write_text(out / "identity.csv", "\n".join(rows) + "\n")
    if not sym:
        return 0, "law is asymmetric: identity and sandwich reported, not asserted"
    if bad:
        return 2, f"identity/sandwich FAILED at {bad} n"
    return 0, f"identity residuals all 0/1 for n<={table.n_max}; sandwich holds"


def run_identity(cfg: ExperimentConfig, out: Path) -> int:
    spec = cfg.distribution
    p1, p1bar = exact_oracle.dp_p1(spec, cfg.nmax)
    table = exact_oracle.PersistenceTable(cfg.nmax, p1, p1bar, p1, p1bar, spec)
    status, note = _identity_artifacts(spec, table, out)
    gf = exact_oracle.generating_function_residual(table, Fraction(1, 2))
    write_json(out / "generating_function.json",
               {"x": "1/2", "order": cfg.nmax, "residual": f"{gf.numerator}/{gf.denominator}"})
    print(f"identity {spec.label()}: {note}")
    return status


def run_argmax(cfg: ExperimentConfig, out: Path) -> int:
    spec = cfg.distribution
    n = cfg.nmax
    law = exact_oracle.argmax_law(spec, n)
    p1, p1bar = exact_oracle.dp_p1(spec, n)
    sym = spec.symmetric()
    rows = ["k,mass,product,equal"]
    bad = 0
    for k, m in enumerate(law.mass):
        prod = p1[k] * p1bar[n - k]
        eq = m == prod
        bad += sym and not eq
        rows.append(f"{k},{m.numerator}/{m.denominator},{prod.numerator}/{prod.denominator},{str(eq).lower()}")
    write_text(out / "argmax.csv", "\n".join(rows) + "\n")
    total = sum(law.mass, Fraction(0))
    if total != 1:
        print(f"argmax {spec.label()} n={n}: total mass {total} != 1")
        return 2
    if sym:
        print(f"argmax {spec.label()} n={n}: product law {'holds' if not bad else 'FAILED'} at all k")
        return 2 if bad else 0
    print(f"argmax {spec.label()} n={n}: total mass 1 (asymmetric, product law not asserted)")
    return 0


def run_mc(cfg: ExperimentConfig, out: Path) -> int:
    spec = cfg.distribution
    est = montecarlo.estimate_survival(spec, cfg.target, cfg.barrier, cfg.y, cfg.grid, cfg.trials,
                                       cfg.master_seed, confidence=cfg.confidence, budget=cfg.budget,
                                       progress=True)
    write_text(out / "survival.csv", est.to_csv())
    write_json(out / "survival.json", est.to_json())
    write_text(out / "survival.svg", _survival_svg(est, [spec.decay_exponent(cfg.target)],
                                                   f"{spec.label()} {cfg.target} {cfg.barrier}"))
    if cfg.moments:
        mom = montecarlo.estimate_abs_moment(spec, cfg.grid, cfg.trials, cfg.master_seed + 1, budget=cfg.budget)
        write_text(out / "moments.csv", mom.to_csv())
        write_json(out / "moments.json", mom.to_json())
    print(f"mc {spec.label()} {cfg.target}/{cfg.barrier} trials={cfg.trials}: "
          f"p_hat[{int(est.grid[-1])}]={est.p_hat[-1]:.6g}")
    return 0


def run_exponent(cfg: ExperimentConfig, out: Path) -> int:
    spec = cfg.distribution
    est = montecarlo.estimate_survival(spec, cfg.target, cfg.barrier, cfg.y, cfg.grid, cfg.trials,
                                       cfg.master_seed, confidence=cfg.confidence, budget=cfg.budget,
                                       progress=True)
    theory = spec.decay_exponent(cfg.target)
    fit = analysis.fit_exponent(est, cfg.window, theory)
    write_text(out / "survival.csv", est.to_csv())
    write_json(out / "fit.json", fit.to_json())
    write_text(out / "survival.svg", _survival_svg(est, [theory, fit.gamma_hat],
                                                   f"{spec.label()} {cfg.target}: gamma_hat={fit.gamma_hat:.4f}"))
    print(f"exponent {spec.label()} {cfg.target}: gamma_hat={fit.gamma_hat:.4f} +/- {fit.stderr:.4f} "
          f"(theory {theory:.4f}, r2={fit.r_squared:.4f})")
    return 0


def run_bounds(cfg: ExperimentConfig, out: Path) -> int:
    spec = cfg.distribution
    c1 = None if cfg.c1 == "auto" else cfg.c1
    if cfg.source == "exact":
        table = exact_oracle.dp_table(spec, cfg.nmax)
        reports = analysis.exact_bound_sweep(table, spec, range(cfg.nmax + 1), c1)
    else:
        grid = sorted(set(cfg.grid) | {1})
        strict = montecarlo.estimate_survival(spec, "s2", "strict", 0.0, grid, cfg.trials, cfg.master_seed,
                                              budget=cfg.budget, progress=True)
        weak = strict
        if spec.is_lattice:
            weak = montecarlo.estimate_survival(spec, "s2", "weak", 0.0, grid, cfg.trials, cfg.master_seed,
                                                budget=cfg.budget, progress=True)
        moments = None
        if analysis.exact_moment(spec, 1) is None:
            moments = montecarlo.estimate_abs_moment(spec, [g + 1 for g in grid], cfg.trials,
                                                     cfg.master_seed + 1, budget=cfg.budget)
        reports = analysis.mc_bound_sweep(spec, strict, weak, [g for g in grid if g >= 0], moments, c1)
        write_text(out / "survival.csv", strict.to_csv())
    write_text(out / "bounds.csv", analysis.reports_to_csv(reports))
    up = [r for r in reports if r.inequality_id == "two_sided_upper" and r.lhs > 0]
    if up:
        write_text(out / "bounds.svg", loglog_svg(
            [("p2", [r.n + 1 for r in up], [r.lhs for r in up]),
             ("c1 bound", [r.n + 1 for r in up], [r.rhs for r in up])],
            [0.25], f"{spec.label()}: two-sided upper bound", xlabel="n+1", ylabel="p2"))
    fails = sum(1 for r in reports if r.status == analysis.FAIL)
    indet = sum(1 for r in reports if r.status == analysis.INDETERMINATE)
    print(f"bounds {spec.label()} source={cfg.source}: {len(reports)} rows, {fails} fail, {indet} indeterminate")
    return 2 if fails else 0


def run_gauss(cfg: ExperimentConfig, out: Path) -> int:
    kmax = max(cfg.nmax, 2)
    scan = gaussian_compare.slepian_ratio_scan(kmax, kmax)
    write_json(out / "slepian.json", {"k_max": kmax, "m_max": kmax, "min_f": scan.minimum, "at_k": scan.k,
                                      "at_m": scan.m, "pairs": scan.pairs})
    small = min(kmax, 20)
    write_text(out / "covariances.csv", gaussian_compare.covariance_table_csv(small, small))
    ok = scan.minimum >= 1 - 1e-12
    msg = f"gauss: min f(m,k) over k<m<={kmax} is {scan.minimum:.15g} at ({scan.k},{scan.m})"
    if cfg.trials:
        est = gaussian_compare.sinai_curve(cfg.grid, cfg.trials, cfg.master_seed, h=cfg.h, budget=cfg.budget,
                                           confidence=cfg.confidence)
        write_text(out / "sinai.csv", est.to_csv())
        write_json(out / "sinai.json", est.to_json())
        write_text(out / "sinai.svg", _survival_svg(est, [0.25], "integrated BM: P(max Y <= 1)"))
        msg += f"; sinai p_hat[T={est.grid[-1]:g}]={est.p_hat[-1]:.4g}"
    print(msg)
    return 0 if ok else 2


_RUNNERS = {
    "exact": run_exact, "mc": run_mc, "bounds": run_bounds, "exponent": run_exponent,
    "identity": run_identity, "argmax": run_argmax, "gauss": run_gauss,
}


def run(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", cfg.to_json())
    return _RUNNERS[cfg.mode](cfg, out)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        return run(cfg)
    except (ConfigError, SpecError, exact_oracle.SizeError, montecarlo.BudgetError,
            analysis.TailTooThinError, OSError, json.JSONDecodeError) as exc:
        print(f"persist: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
