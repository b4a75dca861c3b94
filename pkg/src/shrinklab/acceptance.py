"""The acceptance suite: ten numbered criteria with fixed tolerances.

Each criterion returns a :class:`CriterionResult` holding the measured
values, the pass/fail status (value check and wall-time budget) and the CSV
artifacts it produced.  ``quick=True`` shrinks the problem sizes for smoke
runs; quick results are labelled as such and do not enforce budgets.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import mpmath
import numpy as np
from scipy import integrate

from .artifacts import csv_text
from .interval_maps import make_builtin
from .rng import make_rng
from .shrinking_targets import (RadiusSequence, ball_pair_energy, box_counting_dimension,
                                dimension_formula, energy_scan, intersection_experiment,
                                random_point)
from .statistics import (BVObservable, correlation_series, decay_profile,
                         return_sum_exponent)
from .thermodynamics import (Potential, ball_scaling_check, gibbs_model, pressure,
                             s0_estimate, stationary_density, ulam_matrix)

__all__ = ["CriterionResult", "CRITERIA", "run_criterion", "run_acceptance",
           "quadrature_pair_energy", "parry_density"]


@dataclass
class CriterionResult:
    number: int
    title: str
    value_ok: bool
    measured: dict
    runtime: float
    budget: float
    quick: bool = False
    artifacts: dict = field(default_factory=dict, repr=False)

    @property
    def runtime_ok(self) -> bool:
        return self.quick or self.runtime < self.budget

    @property
    def passed(self) -> bool:
        return self.value_ok and self.runtime_ok

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        mode = " quick" if self.quick else ""
        return (f"[{status}] criterion {self.number:2d} {self.title}: {shown} "
                f"({self.runtime:.1f} s / {self.budget:g} s{mode})")

    def summary(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "value_ok": self.value_ok, "runtime_ok": self.runtime_ok,
                "runtime_s": self.runtime, "budget_s": self.budget, "quick": self.quick,
                "measured": self.measured}


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


# -- oracles ----------------------------------------------------------------

def quadrature_pair_energy(b1, b2, s: float, epsrel: float = 1e-11) -> float:
    """Nested adaptive quadrature of the normalised pair energy (clipped balls).

    The inner integral uses QUADPACK's algebraic-weight rule for the
    ``|x-y|^-s`` endpoint singularity when ``x`` lies inside the second ball.
    """
    lo1, hi1 = max(b1[0] - b1[1], 0.0), min(b1[0] + b1[1], 1.0)
    lo2, hi2 = max(b2[0] - b2[1], 0.0), min(b2[0] + b2[1], 1.0)
    one = lambda y: 1.0

    def kernel_integral(x):
        if x <= lo2:
            return integrate.quad(lambda y: (y - x) ** -s, lo2, hi2, epsabs=0.0,
                                  epsrel=epsrel, limit=200)[0]
        if x >= hi2:
            return integrate.quad(lambda y: (x - y) ** -s, lo2, hi2, epsabs=0.0,
                                  epsrel=epsrel, limit=200)[0]
        left = integrate.quad(one, lo2, x, weight="alg", wvar=(0.0, -s))[0]
        right = integrate.quad(one, x, hi2, weight="alg", wvar=(-s, 0.0))[0]
        return left + right

    inner_breaks = [p for p in (lo2, hi2) if lo1 < p < hi1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        total = integrate.quad(kernel_integral, lo1, hi1, points=inner_breaks or None,
                               epsabs=0.0, epsrel=epsrel, limit=200)[0]
    return total / ((hi1 - lo1) * (hi2 - lo2))


def parry_density(beta, x, terms: int = 200) -> np.ndarray:
    """Normalised ``Σ_n β^-n [x < T^n 1]`` from a high-precision orbit of 1."""
    with mpmath.workdps(60):
        b = mpmath.mpf(beta)
        orbit = [mpmath.mpf(1)]
        for _ in range(terms - 1):
            nxt = mpmath.frac(b * orbit[-1])
            orbit.append(nxt)
            if nxt == 0:
                break
        weights = [b ** -n for n in range(len(orbit))]
        norm = float(mpmath.fsum(w * t for w, t in zip(weights, orbit)))
        cuts = np.array([float(t) for t in orbit])
        w = np.array([float(v) for v in weights])
    x = np.asarray(x, dtype=float)
    return (x[..., None] < cuts).astype(float) @ w / norm


# -- criteria ---------------------------------------------------------------

def _c1(seed, quick):
    alphas = (1.0, 1.25, 2.0, 4.0)
    got = [dimension_formula(RadiusSequence.power(a), cap=1.0) for a in alphas]
    expo = dimension_formula(RadiusSequence.exponential(1.0), cap=1.0)
    err = max(abs(g - 1.0 / a) for g, a in zip(got, alphas))
    rows = [("power", a, g) for a, g in zip(alphas, got)] + [("exponential", 1.0, expo)]
    ok = err <= 1e-9 and expo == 0.0
    return ok, {"max_error": err, "exponential": expo}, {
        "c01_dimension_formula.csv": csv_text(("kind", "parameter", "formula_s"), rows)}


def _c2(seed, quick):
    rng = make_rng(seed, 2)
    count = 20 if quick else 100
    s_values = np.round(np.arange(1, 10) / 10, 1)
    rows, worst = [], 0.0
    for i in range(count):
        s = float(s_values[i % s_values.size])
        r1, r2 = 10.0 ** rng.uniform(-4, -0.7, 2)
        c1, c2 = rng.uniform(0, 1, 2)
        closed = ball_pair_energy((c1, r1), (c2, r2), s)
        quad = quadrature_pair_energy((c1, r1), (c2, r2), s)
        rel = abs(closed - quad) / abs(quad)
        worst = max(worst, rel)
        rows.append((i, s, c1, r1, c2, r2, closed, quad, rel))
    return worst <= 1e-8, {"pairs": count, "max_rel_error": worst}, {
        "c02_kernel_oracle.csv": csv_text(
            ("pair", "s", "c1", "r1", "c2", "r2", "closed_form", "quadrature", "rel_error"), rows)}


def _c3(seed, quick):
    tmap = make_builtin("doubling")
    radius = RadiusSequence.power(2.0)
    points = 4 if quick else 20
    top = 10 if quick else 13
    schedule = [2 ** k for k in range(6, top + 1)]
    rng = make_rng(seed, 3)
    slopes = {0.4: [], 0.6: []}
    rows = []
    for i in range(points):
        x = random_point(tmap, schedule[-1], rng, min_bits=1024)
        scan = energy_scan(tmap, x, radius, [0.4, 0.6], schedule)
        for s, slope in zip(scan.s_grid, scan.slopes):
            slopes[float(s)].append(float(slope))
        rows += [(i,) + row for row in scan.rows()]
    med_low = float(np.median(slopes[0.4]))
    med_high = float(np.median(slopes[0.6]))
    ok = med_low <= 0.05 and med_high >= 0.1
    return ok, {"median_slope_s0.4": med_low, "median_slope_s0.6": med_high,
                "points": points, "n_max": schedule[-1]}, {
        "c03_energy_scan.csv": csv_text(("point", "s", "n", "I_s", "slope", "verdict"), rows)}


def _c4(seed, quick):
    tmap = make_builtin("doubling")
    radius = RadiusSequence.power(2.0)
    N = 2 ** 12 if quick else 2 ** 16
    K = 2 ** 6 if quick else 2 ** 8
    rng = make_rng(seed, 4)
    x1 = random_point(tmap, N, rng)
    x2 = random_point(tmap, N, rng)
    box = box_counting_dimension(tmap, x1, radius, K, N)
    both = intersection_experiment(tmap, x1, x2, radius, K, N)
    ok = abs(box.slope - 0.5) <= 0.08 and both.slope >= 0.40
    header = ("level", "delta", "count", "used")
    return ok, {"box_slope": box.slope, "intersection_slope": both.slope,
                "levels_used": [int(g) for g in box.levels[box.used]]}, {
        "c04_box_count.csv": csv_text(header, [r + (bool(u),) for r, u in zip(box.rows(), box.used)]),
        "c04_intersection.csv": csv_text(header, [r + (bool(u),) for r, u in zip(both.rows(), both.used)])}


def _density_l1(edges, values, exact: Callable, sub: int = 16):
    widths = np.diff(edges)
    frac = (np.arange(sub) + 0.5) / sub
    xs = edges[:-1, None] + widths[:, None] * frac[None, :]
    return float(np.sum(np.abs(values[:, None] - exact(xs)).mean(axis=1) * widths))


def _c5(seed, quick):
    bins = 2 ** 12
    doubling = stationary_density(ulam_matrix(make_builtin("doubling"), bins))
    l1_doubling = _density_l1(doubling.edges, doubling.values, np.ones_like)
    golden = make_builtin("beta_map", beta="golden")
    parry = stationary_density(ulam_matrix(golden, bins))
    phi = (1 + 5 ** 0.5) / 2
    l1_golden = _density_l1(parry.edges, parry.values, lambda x: parry_density(phi, x))
    pieces = (float(parry_density(phi, 0.25)), float(parry_density(phi, 0.9)))
    ok = l1_doubling <= 1e-3 and l1_golden <= 2e-2
    rows = [("doubling",) + r for r in doubling.rows()] + [("golden",) + r for r in parry.rows()]
    return ok, {"l1_doubling": l1_doubling, "l1_golden": l1_golden,
                "parry_pieces": list(pieces)}, {
        "c05_densities.csv": csv_text(("map", "bin_left", "bin_right", "density"), rows)}


def _c6(seed, quick):
    tmap = make_builtin("doubling")
    p_zero = pressure(tmap, Potential.zero()).value
    p_geo = pressure(tmap, Potential.geometric_potential(1.0)).value
    base = Potential.bernoulli(0.25)
    p_base = pressure(tmap, base).value
    p_shift = pressure(tmap, base.shifted(0.37)).value
    errs = {"P0_minus_log2": p_zero - math.log(2.0), "P_geometric": p_geo,
            "shift_error": (p_shift - p_base) - 0.37}
    ok = abs(errs["P0_minus_log2"]) <= 1e-6 and abs(p_geo) <= 1e-6 and abs(errs["shift_error"]) <= 1e-8
    rows = [("zero", p_zero), ("geometric(1)", p_geo), ("bernoulli(0.25)", p_base),
            ("bernoulli(0.25)+0.37", p_shift)]
    return ok, errs, {"c06_pressure.csv": csv_text(("potential", "pressure"), rows)}


def _c7(seed, quick):
    tmap = make_builtin("doubling")
    pot = Potential.bernoulli(0.25)
    P = pressure(tmap, pot).value
    m = 12 if quick else 20
    est = s0_estimate(tmap, pot, P, [m])
    target = math.log(4.0 / 3.0) / math.log(2.0)
    model = gibbs_model(tmap, pot, bins=2 ** 12 if quick else 2 ** 14)
    low = ball_scaling_check(model.mu, 0.41, seed=seed)
    high = ball_scaling_check(model.mu, 0.6, seed=seed)
    ok = abs(est.value - target) <= 0.02 and low.bounded and not high.bounded
    rows = [(0.41, low.excess, low.c_s, low.bounded), (0.6, high.excess, high.c_s, high.bounded)]
    return ok, {"s0": est.value, "target": target, "excess_s0.41": low.excess,
                "excess_s0.6": high.excess}, {
        "c07_ball_scaling.csv": csv_text(("s", "excess", "c_s", "bounded"), rows)}


def _c8(seed, quick):
    runs = 3 if quick else 10
    N = 1000 if quick else 10_000
    seeds = [int(v) for v in make_rng(seed, 8).integers(0, 2 ** 63, runs)]
    rows, med = [], {}
    for beta in (1.5, 3.0):
        tmap = make_builtin("manneville_pomeau", beta=beta)
        gammas = []
        for sub in seeds:
            res = return_sum_exponent(tmap, N_returns=N, seed=sub)
            gammas.append(res.gamma)
            rows.append((beta, sub, res.gamma, res.skipped_starts,
                         int(res.series.partial_sums[-1])))
        med[beta] = float(np.median(gammas))
    ok = 0.95 <= med[1.5] <= 1.15 and 1.6 <= med[3.0] <= 2.4
    return ok, {"median_gamma_1.5": med[1.5], "median_gamma_3": med[3.0], "returns": N}, {
        "c08_return_times.csv": csv_text(("beta", "seed", "gamma", "skipped_starts", "sum_R"), rows)}


def _c9(seed, quick):
    tmap = make_builtin("doubling")
    ident = BVObservable.expression("x")
    series = correlation_series(tmap, ident, ident, 20, estimator="exact_dyadic")
    exact = [Fraction(1, 12 * 2 ** n) for n in range(21)]
    err = max(abs(v - float(e)) for v, e in zip(series.values, exact))
    profile = decay_profile(series)
    rate_err = profile.fit_rate + math.log(2.0)
    ok = err <= 1e-12 and abs(rate_err) <= 1e-6 and math.isfinite(profile.C_sum)
    return ok, {"max_abs_error": err, "rate_error": rate_err, "C_sum": profile.C_sum}, {
        "c09_correlations.csv": csv_text(("lag", "correlation", "noise_floor"), series.rows())}


def _c10(seed, quick):
    rows, ok = [], True
    for number in range(1, 10):
        first = run_criterion(number, seed, quick=True).artifacts
        second = run_criterion(number, seed, quick=True).artifacts
        same = first.keys() == second.keys() and all(
            first[k].encode() == second[k].encode() for k in first)
        ok &= same
        for name in sorted(first):
            rows.append((number, name, len(first[name].encode()), same))
    return ok, {"criteria_compared": 9, "identical": ok}, {
        "c10_determinism.csv": csv_text(("criterion", "artifact", "bytes", "identical"), rows)}


CRITERIA = {
    1: ("dimension formula", 1.0, _c1),
    2: ("kernel oracle", 30.0, _c2),
    3: ("energy dichotomy", 300.0, _c3),
    4: ("empirical dimension", 120.0, _c4),
    5: ("invariant density", 30.0, _c5),
    6: ("pressure identities", 30.0, _c6),
    7: ("Gibbs s0", 60.0, _c7),
    8: ("return times", 180.0, _c8),
    9: ("correlation decay", 10.0, _c9),
    10: ("determinism", math.inf, _c10),
}


def run_criterion(number: int, seed: int = 0, quick: bool = False) -> CriterionResult:
    title, budget, fn = CRITERIA[number]
    start = time.perf_counter()
    ok, measured, artifacts = fn(seed, quick)
    elapsed = time.perf_counter() - start
    return CriterionResult(number, title, bool(ok), measured, elapsed, budget, quick, artifacts)


def run_acceptance(seed: int = 0, quick: bool = False, numbers=None,
                   report: Callable[[str], None] | None = None) -> list[CriterionResult]:
    results = []
    for number in (numbers or sorted(CRITERIA)):
        result = run_criterion(number, seed, quick)
        if report is not None:
            report(result.line())
        results.append(result)
    return results
