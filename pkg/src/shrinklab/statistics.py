"""Decay of correlations for BV observables and intermittent return times."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import expressions as ex
from ._kernels import mp_return_times
from .errors import (
    CapExceeded,
    ConfigError,
    EstimatorMismatch,
    InsufficientPrecision,
    InsufficientSignal,
    VariationUnbounded,
)
from .interval_maps import GUARD_BITS, PartitionedMap, required_bits
from .measures import DiscreteMeasure
from .precise import PrecisePoint
from .rng import make_rng
from .thermodynamics import stationary_density, ulam_matrix

__all__ = [
    "BVObservable",
    "BVNorm",
    "bv_norm",
    "ESTIMATORS",
    "CorrelationEstimate",
    "CorrelationSeries",
    "DecayProfile",
    "estimate_correlation",
    "correlation",
    "correlation_series",
    "decay_profile",
    "decay_transfer_bound",
    "FirstReturn",
    "ReturnTimeSeries",
    "ReturnSumResult",
    "first_return",
    "return_sum_exponent",
    "fit_growth_exponent",
]

ESTIMATORS = ("exact_dyadic", "quadrature", "monte_carlo")


# -- observables ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BVObservable:
    """Piecewise closed-form function: ``pieces[i] = (a, b, expr)`` on ``[a, b)``."""

    pieces: tuple[tuple[Fraction, Fraction, ex.Expr], ...]
    name: str = ""

    def __post_init__(self):
        if not self.pieces:
            raise ConfigError("an observable needs at least one piece")
        if self.pieces[0][0] != 0 or self.pieces[-1][1] != 1:
            raise ConfigError("observable pieces must cover [0, 1)")
        for (a, b, _), nxt in zip(self.pieces, self.pieces[1:] + ((None, None, None),)):
            if not a < b:
                raise ConfigError("observable pieces must be nonempty and ordered")
            if nxt[0] is not None and nxt[0] != b:
                raise ConfigError("observable pieces must be contiguous")

    @classmethod
    def expression(cls, text, params=None) -> "BVObservable":
        return cls(((Fraction(0), Fraction(1), ex.parse(text, params)),), str(text))

    @classmethod
    def constant(cls, c) -> "BVObservable":
        return cls(((Fraction(0), Fraction(1), ex.const(c)),), f"{c}")

    @classmethod
    def indicator(cls, a, b) -> "BVObservable":
        a, b = Fraction(a), Fraction(b)
        if not 0 <= a < b <= 1:
            raise ConfigError("indicator needs 0 <= a < b <= 1")
        parts = [(Fraction(0), a, ex.ZERO), (a, b, ex.ONE), (b, Fraction(1), ex.ZERO)]
        return cls(tuple(p for p in parts if p[0] < p[1]), f"1[{a},{b})")

    @classmethod
    def piecewise(cls, pieces: Sequence, params=None) -> "BVObservable":
        return cls(tuple((Fraction(a), Fraction(b), ex.parse(e, params)) for a, b, e in pieces))

    @cached_property
    def _compiled(self):
        return [(float(a), float(b), ex.to_numpy(e)) for a, b, e in self.pieces]

    @cached_property
    def _lefts(self):
        return np.array([float(a) for a, _, _ in self.pieces])

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self._lefts, x, side="right") - 1, 0, len(self.pieces) - 1)
        out = np.empty_like(x)
        for i, (_, _, f) in enumerate(self._compiled):
            sel = idx == i
            if np.any(sel):
                out[sel] = f(x[sel])
        return out

    @cached_property
    def polynomials(self):
        """Exact ``(a, b, coefficients)`` per piece, or ``None`` if some piece is not polynomial."""
        out = []
        for a, b, e in self.pieces:
            p = ex.to_polynomial(e)
            if p is None:
                return None
            out.append((a, b, p))
        return tuple(out)

    def _critical_points(self, i: int) -> list[float]:
        """Endpoints and interior sign changes of the derivative of piece ``i``."""
        a, b, e = self.pieces[i]
        fa, fb = float(a), float(b)
        pts = [fa, fb]
        try:
            d = ex.to_numpy(ex.derivative(e))
        except ConfigError:
            return list(np.linspace(fa, fb, 4097))
        if not ex.depends_on_x(ex.derivative(e)):
            return pts
        grid = np.linspace(fa, fb, 513)
        vals = d(grid)
        for k in range(len(grid) - 1):
            if vals[k] == 0 and 0 < k:
                pts.append(float(grid[k]))
            elif vals[k] * vals[k + 1] < 0:
                pts.append(brentq(lambda t: float(d(np.array([t]))[0]), grid[k], grid[k + 1]))
        return sorted(pts)

    @cached_property
    def variation(self) -> float:
        total = 0.0
        prev_end = None
        for i, (_, _, f) in enumerate(self._compiled):
            pts = np.array(self._critical_points(i))
            vals = f(pts)
            if not np.all(np.isfinite(vals)):
                raise VariationUnbounded(f"piece {i} of {self.name or 'observable'} is unbounded")
            total += float(np.sum(np.abs(np.diff(vals))))
            if prev_end is not None:
                total += abs(float(vals[0]) - prev_end)
            prev_end = float(vals[-1])
        return total

    def _roots(self, i: int) -> list[float]:
        a, b, _ = self.pieces[i]
        f = self._compiled[i][2]
        grid = np.linspace(float(a), float(b), 513)
        vals = f(grid)
        out = []
        for k in range(len(grid) - 1):
            if vals[k] * vals[k + 1] < 0:
                out.append(brentq(lambda t: float(f(np.array([t]))[0]), grid[k], grid[k + 1]))
        return out

    def cuts(self, extra=(), with_roots: bool = False) -> np.ndarray:
        pts = [float(a) for a, _, _ in self.pieces] + [1.0]
        if with_roots:
            for i in range(len(self.pieces)):
                pts.extend(self._roots(i))
        pts.extend(np.asarray(extra, dtype=float).tolist())
        return np.unique(np.clip(pts, 0.0, 1.0))

    def cell_integrals(self, edges, absolute: bool = False, nodes: int = 10) -> np.ndarray:
        """``∫_{cell} g dx`` (or ``|g|``) for each grid cell, split at breakpoints."""
        edges = np.asarray(edges, dtype=float)
        pts = self.cuts(edges, with_roots=absolute)
        u, v = pts[:-1], pts[1:]
        t, w = np.polynomial.legendre.leggauss(nodes)
        mid, half = 0.5 * (u + v), 0.5 * (v - u)
        vals = self(mid[:, None] + half[:, None] * t[None, :])
        if absolute:
            vals = np.abs(vals)
        piece = half * (vals @ w)
        cell = np.clip(np.searchsorted(edges, mid, side="right") - 1, 0, len(edges) - 2)
        return np.bincount(cell, weights=piece, minlength=len(edges) - 1)

    def l1_norm(self, measure: DiscreteMeasure | None = None) -> float:
        if measure is None:
            return float(self.cell_integrals([0.0, 1.0], absolute=True, nodes=20)[0])
        return float(np.sum(measure.density * self.cell_integrals(measure.edges, absolute=True)))

    def mean(self, measure: DiscreteMeasure | None = None) -> float:
        if measure is None:
            return float(self.cell_integrals([0.0, 1.0], nodes=20)[0])
        return float(np.sum(measure.density * self.cell_integrals(measure.edges)))


@dataclass(frozen=True)
class BVNorm:
    l1: float
    variation: float

    @property
    def combined(self) -> float:
        return self.l1 + self.variation


def bv_norm(g: BVObservable, measure: DiscreteMeasure | None = None) -> BVNorm:
    """``‖g‖₁``, ``var g`` and their sum (reference measure defaults to Lebesgue)."""
    return BVNorm(g.l1_norm(measure), g.variation)


# -- exact dyadic correlations ---------------------------------------------

@lru_cache(maxsize=None)
def _bernoulli(m: int) -> Fraction:
    if m == 0:
        return Fraction(1)
    return -sum(math.comb(m + 1, i) * _bernoulli(i) for i in range(m)) / (m + 1)


def _power_sum(j: int, count: int) -> Fraction:
    """``Σ_{k=0}^{count-1} k^j``."""
    return sum(math.comb(j + 1, i) * _bernoulli(i) * Fraction(count) ** (j + 1 - i)
               for i in range(j + 1)) / (j + 1)


def _poly_integral(p, a, b) -> Fraction:
    return sum(c * (Fraction(b) ** (i + 1) - Fraction(a) ** (i + 1)) / (i + 1)
               for i, c in enumerate(p))


def _compose_shift(p, k, scale):
    """Coefficients in ``u`` of ``p((u + k) / scale)``."""
    out = [Fraction(0)] * len(p)
    for d, c in enumerate(p):
        if c:
            factor = c / Fraction(scale) ** d
            for e in range(d + 1):
                out[e] += factor * math.comb(d, e) * Fraction(k) ** (d - e)
    return out


def _summed_shift(p, k1, k2, scale):
    """Coefficients in ``u`` of ``Σ_{k=k1}^{k2} p((u + k) / scale)``."""
    out = [Fraction(0)] * len(p)
    sums = [_power_sum(j, k2 + 1) - _power_sum(j, k1) for j in range(len(p))]
    for d, c in enumerate(p):
        if c:
            factor = c / Fraction(scale) ** d
            for e in range(d + 1):
                out[e] += factor * math.comb(d, e) * sums[d - e]
    return out


def exact_dyadic_covariance(f: BVObservable, g: BVObservable, lag: int) -> Fraction:
    """``∫ f∘T^n g dx - ∫f ∫g`` for the doubling map, in exact rationals."""
    fp, gp = f.polynomials, g.polynomials
    if fp is None or gp is None:
        raise EstimatorMismatch("exact_dyadic needs piecewise polynomial observables")
    N = 2 ** lag
    total = Fraction(0)
    for fa, fb, F in fp:
        for ga, gb, G in gp:
            A, B = ga * N, gb * N
            kmin = max(math.floor(A - fb) + 1, 0)
            kmax = min(math.ceil(B - fa) - 1, N - 1)
            if kmin > kmax:
                continue
            k1 = max(math.ceil(A - fa), kmin)
            k2 = min(math.floor(B - fb), kmax)
            if k1 <= k2:
                H = _summed_shift(G, k1, k2, N)
                total += _poly_integral(ex.poly_mul(F, tuple(H)), fa, fb)
                partial = list(range(kmin, k1)) + list(range(k2 + 1, kmax + 1))
            else:
                partial = range(kmin, kmax + 1)
            for k in partial:
                lo, hi = max(fa, A - k), min(fb, B - k)
                if lo < hi:
                    H = _compose_shift(G, k, N)
                    total += _poly_integral(ex.poly_mul(F, tuple(H)), lo, hi)
    mean_f = sum(_poly_integral(P, a, b) for a, b, P in fp)
    mean_g = sum(_poly_integral(P, a, b) for a, b, P in gp)
    return total / N - mean_f * mean_g


# -- correlation estimators -------------------------------------------------

@dataclass(frozen=True)
class CorrelationEstimate:
    value: float
    signed: float
    noise_floor: float
    estimator: str
    samples: int = 0


@dataclass(frozen=True, eq=False)
class CorrelationSeries:
    lags: np.ndarray
    values: np.ndarray
    estimator: str
    noise_floor: np.ndarray

    def rows(self):
        return [(int(k), float(v), float(e))
                for k, v, e in zip(self.lags, self.values, self.noise_floor)]


def _check_estimator(estimator, tmap, measure):
    if estimator not in ESTIMATORS:
        raise ConfigError(f"estimator must be one of {ESTIMATORS}")
    if estimator == "exact_dyadic":
        if tmap.name != "doubling":
            raise EstimatorMismatch("exact_dyadic is only available for the doubling map")
        if measure is not None:
            raise EstimatorMismatch("exact_dyadic integrates against Lebesgue measure only")


def _default_measure(tmap, bins):
    return stationary_density(ulam_matrix(tmap, bins)).measure


def _quadrature_series(tmap, f, g, max_lag, measure, bins):
    if measure is None:
        measure = _default_measure(tmap, bins)
    if measure.bins != bins or not np.allclose(measure.edges, np.linspace(0, 1, bins + 1)):
        raise ConfigError("quadrature needs the measure on the uniform grid of `bins` cells")
    pt = ulam_matrix(tmap, bins).matrix.T.tocsr()
    widths = measure.widths
    q = measure.density * g.cell_integrals(measure.edges)
    fbar = f.cell_integrals(measure.edges) / widths
    mean_f = float(measure.masses @ fbar)
    mean_g = float(q.sum())
    out = np.empty(max_lag + 1)
    for n in range(max_lag + 1):
        if n:
            q = pt @ q
        out[n] = float(q @ fbar) - mean_f * mean_g
    return out


def _transported(tmap, x, cells, offsets, measure, lag, rng):
    """Images ``T^lag`` of the sample points, exactly when floats would not do."""
    if lag * math.log2(max(tmap.max_derivative, 1.0)) <= 40:
        y = x.copy()
        for _ in range(lag):
            y = tmap(y)
        return y
    bits = required_bits(tmap, lag)
    full = 1 << bits
    out = np.empty_like(x)
    for i, (c, a, w) in enumerate(zip(cells, measure.edges[cells], measure.widths[cells])):
        raw = int.from_bytes(rng.bytes((bits + 7) // 8), "little") >> (8 * ((bits + 7) // 8) - bits)
        num = min(math.floor(Fraction(float(a)) * full + Fraction(float(w)) * raw), full - 1)
        for _ in range(lag):
            num = tmap.step(num, bits)
        out[i] = (num >> (bits - 53)) * 2.0 ** -53
    return out


def _monte_carlo_series(tmap, f, g, lags, measure, samples, seed, bins):
    if measure is None:
        measure = _default_measure(tmap, bins)
    rng = make_rng(seed)
    cells, offsets = measure.sample_cells(rng, samples)
    x = measure.edges[cells] + offsets * measure.widths[cells]
    gx = g(x)
    gc = gx - gx.mean()
    values, floors = [], []
    for lag in lags:
        fy = f(_transported(tmap, x, cells, offsets, measure, int(lag), rng))
        prod = (fy - fy.mean()) * gc
        values.append(float(prod.mean()))
        floors.append(2.0 * float(prod.std()) / math.sqrt(samples))
    return np.array(values), np.array(floors)


def estimate_correlation(tmap: PartitionedMap, f: BVObservable, g: BVObservable, lag: int,
                         measure: DiscreteMeasure | None = None,
                         estimator: str = "quadrature", *, samples: int = 100_000,
                         seed: int = 0, bins: int = 4096) -> CorrelationEstimate:
    """``|∫ f∘T^n g dμ - ∫f dμ ∫g dμ|`` with its noise floor.

    ``measure`` defaults to the Ulam stationary density of the map.  The
    quadrature floor is the change when the grid is halved; the Monte Carlo
    floor is two standard errors.
    """
    _check_estimator(estimator, tmap, measure)
    if lag < 0:
        raise ConfigError("lag must be nonnegative")
    if estimator == "exact_dyadic":
        cov = float(exact_dyadic_covariance(f, g, lag))
        return CorrelationEstimate(abs(cov), cov, 0.0, estimator)
    if estimator == "quadrature":
        fine = _quadrature_series(tmap, f, g, lag, measure, bins)[-1]
        coarse_measure = None if measure is None else _coarsen(measure)
        coarse = _quadrature_series(tmap, f, g, lag, coarse_measure, bins // 2)[-1]
        return CorrelationEstimate(abs(fine), fine, abs(fine - coarse), estimator)
    vals, floors = _monte_carlo_series(tmap, f, g, [lag], measure, samples, seed, bins)
    return CorrelationEstimate(abs(vals[0]), vals[0], floors[0], estimator, samples)


def correlation(tmap, f, g, lag, measure=None, estimator="quadrature", **kwargs) -> float:
    return estimate_correlation(tmap, f, g, lag, measure, estimator, **kwargs).value


def _coarsen(measure: DiscreteMeasure) -> DiscreteMeasure:
    if measure.bins % 2:
        raise ConfigError("grid refinement check needs an even number of bins")
    return DiscreteMeasure(measure.edges[::2], measure.masses.reshape(-1, 2).sum(axis=1))


def correlation_series(tmap: PartitionedMap, f: BVObservable, g: BVObservable, max_lag: int,
                       measure: DiscreteMeasure | None = None,
                       estimator: str = "quadrature", *, samples: int = 100_000,
                       seed: int = 0, bins: int = 4096) -> CorrelationSeries:
    """Correlations at lags ``0..max_lag`` (Monte Carlo reuses one sample set)."""
    _check_estimator(estimator, tmap, measure)
    lags = np.arange(max_lag + 1)
    if estimator == "exact_dyadic":
        signed = np.array([float(exact_dyadic_covariance(f, g, int(n))) for n in lags])
        floors = np.zeros(lags.size)
    elif estimator == "quadrature":
        signed = _quadrature_series(tmap, f, g, max_lag, measure, bins)
        coarse_measure = None if measure is None else _coarsen(measure)
        coarse = _quadrature_series(tmap, f, g, max_lag, coarse_measure, bins // 2)
        floors = np.abs(signed - coarse)
    else:
        signed, floors = _monte_carlo_series(tmap, f, g, lags, measure, samples, seed, bins)
    return CorrelationSeries(lags, np.abs(signed), estimator, floors)


@dataclass(frozen=True)
class DecayProfile:
    fit_rate: float
    intercept: float
    C_sum: float
    usable_lags: tuple[int, ...]


def decay_profile(series: CorrelationSeries, min_lags: int = 5) -> DecayProfile:
    """Exponential rate fitted above the noise floor and the summed decay.

    ``C_sum`` adds the observed values and a geometric tail continued from
    the last usable lag at the fitted rate (infinite if the rate is not
    negative).
    """
    lags = np.asarray(series.lags)
    vals = np.asarray(series.values, dtype=float)
    floor = np.broadcast_to(np.asarray(series.noise_floor, dtype=float), vals.shape)
    ok = (vals > floor) & (vals > 0) & np.isfinite(vals)
    if ok.sum() < min_lags:
        raise InsufficientSignal(f"only {int(ok.sum())} lags above the noise floor")
    rate, intercept = np.polyfit(lags[ok], np.log(vals[ok]), 1)
    rate = float(rate)
    if rate >= 0:
        c_sum = math.inf
    else:
        last = int(lags[ok][-1])
        anchor = float(vals[ok][-1]) * math.exp(rate * (int(lags[-1]) - last + 1))
        c_sum = float(vals.sum()) + anchor / -math.expm1(rate)
    return DecayProfile(rate, float(intercept), c_sum, tuple(int(k) for k in lags[ok]))


def decay_transfer_bound(D: float, E: float, p_n: float) -> float:
    """``E + (D + E) p_n``."""
    if min(D, E, p_n) < 0:
        raise ConfigError("D, E and p_n must be nonnegative")
    return E + (D + E) * p_n


# -- return times -----------------------------------------------------------

@dataclass(frozen=True)
class FirstReturn:
    R: int
    landing: PrecisePoint
    bits_lost: float


@dataclass(frozen=True, eq=False)
class ReturnTimeSeries:
    times: np.ndarray
    partial_sums: np.ndarray
    base_interval: tuple[float, float] = (0.5, 1.0)

    def rows(self):
        return [(k + 1, int(r), int(s))
                for k, (r, s) in enumerate(zip(self.times, self.partial_sums))]


@dataclass(frozen=True, eq=False)
class ReturnSumResult:
    series: ReturnTimeSeries
    gamma: float
    skipped_starts: int
    start: float
    fit_points: np.ndarray = field(repr=False)


def _require_mp(tmap):
    if tmap.name != "manneville_pomeau":
        raise ConfigError("return times are defined for the manneville_pomeau map")


def _return_from(tmap, num, bits, max_steps, budget):
    half = tmap.thresholds(bits)[1]
    shift = bits - 53
    left = tmap.branches[0]
    lost = 0.0
    steps = 0
    while True:
        if num < half:
            y = (num >> shift) * 2.0 ** -53
            lost += math.log2(float(left.df(np.array([y]))[0]))
        else:
            lost += 1.0
        if lost > budget:
            raise InsufficientPrecision(
                f"first return needs more than {bits} bits (lost {lost:.0f} so far)")
        num = tmap.step(num, bits)
        steps += 1
        if num >= half:
            return steps, num, lost
        if num == 0:
            raise CapExceeded("orbit reached the neutral fixed point 0", skipped=1)
        if steps >= max_steps:
            raise CapExceeded(f"no return within {max_steps} steps", skipped=1)


def first_return(tmap: PartitionedMap, x, max_steps: int = 10 ** 6) -> FirstReturn:
    """First return of ``x ∈ [1/2, 1)`` to ``[1/2, 1)``, on the grid of ``x``.

    The accumulated ``log2|T'|`` along the excursion is charged against the
    spare bits (``bits - 64``); ``InsufficientPrecision`` is raised before
    the result could be corrupted.
    """
    _require_mp(tmap)
    x = x if isinstance(x, PrecisePoint) else PrecisePoint.from_value(x)
    if x.num < tmap.thresholds(x.bits)[1]:
        raise ConfigError("first_return needs x in [1/2, 1)")
    R, num, lost = _return_from(tmap, x.num, x.bits, max_steps, x.bits - GUARD_BITS)
    return FirstReturn(R, PrecisePoint(num, x.bits), lost)


def fit_growth_exponent(partial_sums, points: int = 64):
    """Slope of ``log S_n`` against ``log n`` over the last decade of ``n``.

    Uses up to ``points`` log-spaced ``n`` in ``[N/10, N]``, so each factor
    of ``n`` carries equal weight.
    """
    sums = np.asarray(partial_sums, dtype=float)
    N = sums.size
    if N < 10:
        raise InsufficientSignal("need at least 10 returns to fit an exponent")
    ns = np.unique(np.geomspace(max(N // 10, 1), N, points).round().astype(np.int64))
    slope = np.polyfit(np.log(ns), np.log(sums[ns - 1]), 1)[0]
    return float(slope), ns


def return_sum_exponent(tmap: PartitionedMap, x=None, N_returns: int = 10_000, *,
                        seed: int = 0, max_steps: int = 10 ** 9,
                        arithmetic: str = "float", bits: int = 1024,
                        max_restarts: int = 100) -> ReturnSumResult:
    """``R_1..R_N`` along one orbit and the growth exponent of their partial sums.

    With ``x=None`` the start is drawn uniformly from ``[1/2, 1)``; a start
    whose orbit exceeds ``max_steps`` on some excursion is discarded and
    counted in ``skipped_starts``.  ``arithmetic="float"`` follows a float64
    pseudo-orbit; ``"fixed"`` follows the exact orbit of ``x`` on its grid
    (random starts get ``bits`` bits), roughly one bit is consumed per step.
    """
    _require_mp(tmap)
    if N_returns < 1000:
        raise ConfigError("N_returns must be at least 1000")
    if arithmetic not in ("float", "fixed"):
        raise ConfigError("arithmetic must be 'float' or 'fixed'")
    beta = float(dict(tmap.params)["beta"])
    rng = make_rng(seed)
    skipped = 0
    while True:
        if x is None:
            start = PrecisePoint.random(rng, bits, 0.5, 1.0) if arithmetic == "fixed" \
                else 0.5 + 0.5 * rng.random()
        else:
            start = x
        try:
            times = _returns(tmap, start, beta, N_returns, max_steps, arithmetic)
            break
        except CapExceeded as exc:
            skipped += 1
            if x is not None or skipped > max_restarts:
                raise CapExceeded(f"{exc} (skipped starts: {skipped})", skipped=skipped) from None
    sums = np.cumsum(times)
    gamma, ns = fit_growth_exponent(sums)
    return ReturnSumResult(ReturnTimeSeries(times, sums), gamma, skipped, float(start), ns)


def _returns(tmap, start, beta, count, max_steps, arithmetic):
    if arithmetic == "float":
        x0 = float(start)
        if not 0.5 <= x0 < 1.0:
            raise ConfigError("start must lie in [1/2, 1)")
        out = np.zeros(count, dtype=np.int64)
        done, _ = mp_return_times(x0, beta, count, max_steps, out)
        if done < count:
            raise CapExceeded(f"return {done + 1} exceeded {max_steps} steps", skipped=1)
        return out
    point = start if isinstance(start, PrecisePoint) else PrecisePoint.from_value(start)
    if point.num < tmap.thresholds(point.bits)[1]:
        raise ConfigError("start must lie in [1/2, 1)")
    budget = point.bits - GUARD_BITS
    num = point.num
    out = np.zeros(count, dtype=np.int64)
    for k in range(count):
        R, num, lost = _return_from(tmap, num, point.bits, max_steps, budget)
        budget -= lost
        out[k] = R
    return out
