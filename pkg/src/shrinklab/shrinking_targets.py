"""Radius sequences, orbit-ball measures, Riesz energies and dimension estimates.

A finite stage of the shrinking-target set is the union of the balls
``B(T^k x, r_k)`` for ``m(n) <= k <= n``; the orbit-ball measure spreads
unit mass uniformly over those balls (each clipped to [0, 1]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from ._kernels import energy_sum, pair_energy
from .errors import ConfigError, NonIntegrableKernel, NoScalingWindow, Undecidable
from .interval_maps import PartitionedMap, orbit_floats, required_bits
from .precise import DEFAULT_BITS, PrecisePoint

__all__ = [
    "RadiusSequence",
    "RADIUS_KINDS",
    "radius_from_config",
    "sqrt_window",
    "m_rule_from_config",
    "random_point",
    "TargetStage",
    "OrbitBallMeasure",
    "target_stage",
    "dimension_formula",
    "ball_pair_energy",
    "riesz_energy",
    "EnergyScan",
    "energy_scan",
    "energy_bound_predictor",
    "BoxCount",
    "box_counting_dimension",
    "hit_count",
    "intersection_experiment",
    "DimensionEstimate",
    "estimate_dimension",
]

BOUNDED_SLOPE = 0.05
DIVERGENT_SLOPE = 0.1
SATURATION = 0.5
SPARSE_COUNT = 32


# -- radii ------------------------------------------------------------------

RADIUS_KINDS = {
    "power": "power(alpha): r_n = n^-alpha",
    "scaled_power": "scaled_power(c, alpha): r_n = (c n)^-alpha",
    "exponential": "exponential(kappa): r_n = exp(-kappa n)",
    "table": "table(values): r_n = values[n-1], positive and nonincreasing",
}


@dataclass(frozen=True)
class RadiusSequence:
    kind: str
    alpha: float | None = None
    c: float | None = None
    kappa: float | None = None
    table: tuple[float, ...] | None = field(default=None, repr=False)

    @classmethod
    def power(cls, alpha: float) -> "RadiusSequence":
        if not alpha > 0:
            raise ConfigError("alpha must be positive")
        return cls("power", alpha=float(alpha))

    @classmethod
    def scaled_power(cls, c: float, alpha: float) -> "RadiusSequence":
        if not (alpha > 0 and c > 0):
            raise ConfigError("c and alpha must be positive")
        return cls("scaled_power", alpha=float(alpha), c=float(c))

    @classmethod
    def exponential(cls, kappa: float) -> "RadiusSequence":
        if not kappa > 0:
            raise ConfigError("kappa must be positive")
        return cls("exponential", kappa=float(kappa))

    @classmethod
    def from_table(cls, values: Sequence[float]) -> "RadiusSequence":
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ConfigError("radius table must be a nonempty list")
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
            raise ConfigError("radii must be positive")
        if np.any(np.diff(arr) > 0):
            raise ConfigError("radii must be nonincreasing")
        return cls("table", table=tuple(arr.tolist()))

    def values(self, n_max: int) -> np.ndarray:
        """``(r_1, ..., r_{n_max})``."""
        n = np.arange(1, n_max + 1, dtype=float)
        if self.kind == "power":
            return n ** -self.alpha
        if self.kind == "scaled_power":
            return (self.c * n) ** -self.alpha
        if self.kind == "exponential":
            return np.exp(-self.kappa * n)
        if n_max > len(self.table):
            raise ConfigError(f"radius table has {len(self.table)} entries, {n_max} requested")
        return np.array(self.table[:n_max])

    def log_values(self, n_max: int) -> np.ndarray:
        n = np.arange(1, n_max + 1, dtype=float)
        if self.kind == "power":
            return -self.alpha * np.log(n)
        if self.kind == "scaled_power":
            return -self.alpha * np.log(self.c * n)
        if self.kind == "exponential":
            return -self.kappa * n
        return np.log(self.values(n_max))

    def r(self, n: int) -> float:
        if n < 1:
            raise ConfigError("radii are indexed from 1")
        if self.kind == "table":
            if n > len(self.table):
                raise ConfigError(f"radius table has {len(self.table)} entries, {n} requested")
            return self.table[n - 1]
        return float(self._closed(n))

    def _closed(self, n):
        if self.kind == "power":
            return n ** -self.alpha
        if self.kind == "scaled_power":
            return (self.c * n) ** -self.alpha
        return math.exp(-self.kappa * n)

    def describe(self) -> dict:
        out = {"kind": self.kind}
        for key in ("alpha", "c", "kappa"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.table is not None:
            out["table_length"] = len(self.table)
        return out


def radius_from_config(cfg) -> RadiusSequence:
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    try:
        if kind == "power":
            out = RadiusSequence.power(cfg.pop("alpha"))
        elif kind == "scaled_power":
            out = RadiusSequence.scaled_power(cfg.pop("c"), cfg.pop("alpha"))
        elif kind == "exponential":
            out = RadiusSequence.exponential(cfg.pop("kappa"))
        elif kind == "table":
            out = RadiusSequence.from_table(cfg.pop("values"))
        else:
            raise ConfigError(f"unknown radius kind {kind!r}; choose from {sorted(RADIUS_KINDS)}")
    except KeyError as exc:
        raise ConfigError(f"radius kind {kind!r} needs {exc.args[0]!r}") from None
    if cfg:
        raise ConfigError(f"unknown radius keys: {sorted(cfg)}")
    return out


def sqrt_window(n: int) -> int:
    """Default window start ``m(n) = ceil(sqrt(n))``."""
    return math.isqrt(n - 1) + 1 if n > 0 else 0


def m_rule_from_config(text: str | None) -> tuple[Callable[[int], int], str]:
    """``"sqrt"`` (default) or ``"fraction:c"`` for ``m(n) = ceil(c n)``, ``c < 1/2``."""
    if text in (None, "sqrt"):
        return sqrt_window, "sqrt"
    if isinstance(text, str) and text.startswith("fraction:"):
        c = float(text.split(":", 1)[1])
        if not 0 < c < 0.5:
            raise ConfigError("fraction window needs 0 < c < 1/2")
        return (lambda n: max(1, math.ceil(c * n))), text
    raise ConfigError(f"unknown m-rule {text!r}")


def random_point(tmap: PartitionedMap, n: int, rng: np.random.Generator,
                 min_bits: int = DEFAULT_BITS) -> PrecisePoint:
    """Uniform random point with enough random bits for ``n`` exact steps."""
    return PrecisePoint.random(rng, max(min_bits, required_bits(tmap, n)))


# -- stages and measures ----------------------------------------------------

def _clip_balls(centers, radii):
    lo = np.maximum(centers - radii, 0.0)
    hi = np.minimum(centers + radii, 1.0)
    return lo, hi


@dataclass(frozen=True, eq=False)
class TargetStage:
    """Balls ``B(T^k x, r_k)``, ``m <= k <= n``."""

    n: int
    m: int
    centers: np.ndarray
    radii: np.ndarray
    x: PrecisePoint | None = None

    @property
    def count(self) -> int:
        return self.n - self.m + 1

    @cached_property
    def clipped(self) -> tuple[np.ndarray, np.ndarray]:
        return _clip_balls(self.centers, self.radii)

    @property
    def balls(self) -> list[tuple[float, float]]:
        return list(zip(self.centers.tolist(), self.radii.tolist()))


def target_stage(tmap: PartitionedMap, x, r: RadiusSequence, n: int,
                 m_rule: Callable[[int], int] = sqrt_window,
                 orbit: np.ndarray | None = None) -> TargetStage:
    """Stage ``n``; pass a precomputed float ``orbit`` to avoid recomputation."""
    m = int(m_rule(n))
    if not 1 <= m < n / 2:
        raise ConfigError(f"window start m({n}) = {m} violates 1 <= m < n/2")
    if orbit is None:
        orbit = orbit_floats(tmap, x, n)
    centers = np.asarray(orbit[m:n + 1], dtype=float)
    radii = r.values(n)[m - 1:]
    return TargetStage(n, m, centers, radii, x if isinstance(x, PrecisePoint) else None)


@dataclass(frozen=True, eq=False)
class OrbitBallMeasure:
    """Equal-weight mixture of normalised Lebesgue measure on each clipped ball."""

    stage: TargetStage

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.stage.count, 1.0 / self.stage.count)

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    @cached_property
    def centers_halfwidths(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.stage.clipped
        return 0.5 * (lo + hi), 0.5 * (hi - lo)


# -- formula ---------------------------------------------------------------

def _table_growth_slope(log_r: np.ndarray, t: float, decades: float = 2.0) -> float:
    n = np.arange(1, log_r.size + 1, dtype=float)
    log_partial = np.logaddexp.accumulate(-t * log_r)
    N = log_r.size
    ns = np.unique(np.geomspace(max(1, N / 10 ** decades), N, 64).round().astype(np.int64))
    y = log_partial[ns - 1] - 2.0 * np.log(n[ns - 1])
    return float(np.polyfit(np.log(ns), y, 1)[0])


def dimension_formula(r: RadiusSequence, cap: float = 1.0, N_check: int = 10 ** 6,
                      tolerance: float = 0.01) -> float:
    """Largest ``t <= cap`` with ``n^-2 Σ_{j<=n} r_j^-t`` bounded.

    Closed-form kinds use the exact exponent; tables use the fitted growth
    slope over the last two decades of ``n <= N_check`` as the boundedness
    test (slope ``<= tolerance``), bisected in ``t``.
    """
    if not 0 < cap <= 1:
        raise ConfigError("cap must lie in (0, 1]")
    if r.kind in ("power", "scaled_power"):
        return min(cap, 1.0 / r.alpha)
    if r.kind == "exponential":
        return 0.0
    N = min(len(r.table), N_check)
    if N < 1000:
        raise Undecidable(f"table of {N} radii spans fewer than 3 decades")
    log_r = r.log_values(N)
    bounded = lambda t: _table_growth_slope(log_r, t) <= tolerance
    if bounded(cap):
        return cap
    lo, hi = 0.0, cap
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if bounded(mid):
            lo = mid
        else:
            hi = mid
    return lo


# -- energies ---------------------------------------------------------------

def _check_s(s):
    if not 0 < s < 1:
        raise NonIntegrableKernel(f"s = {s} must lie in (0, 1)")


def _clipped_ball(ball):
    c, rad = ball
    lo, hi = max(c - rad, 0.0), min(c + rad, 1.0)
    if not hi > lo:
        raise ConfigError(f"ball {ball} is degenerate after clipping to [0, 1]")
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


def ball_pair_energy(b1, b2, s: float) -> float:
    """``(1/(|B1||B2|)) ∫_{B1}∫_{B2} |x-y|^-s dx dy`` for balls ``(centre, radius)``.

    Balls are clipped to [0, 1] first.  Well-separated pairs use a series in
    the radius/distance ratios, moderately separated pairs 12x12
    Gauss-Legendre, and close or overlapping pairs the exact second
    antiderivative ``|u|^(2-s)/((1-s)(2-s))``.
    """
    _check_s(s)
    c1, h1 = _clipped_ball(b1)
    c2, h2 = _clipped_ball(b2)
    return float(pair_energy(c1, h1, c2, h2, float(s)))


def riesz_energy(mu: OrbitBallMeasure, s: float) -> float:
    """``I_s(μ)``: exact double sum of pair energies."""
    _check_s(s)
    centers, halves = mu.centers_halfwidths
    if np.any(halves <= 0):
        raise ConfigError("degenerate ball in stage")
    return float(energy_sum(np.ascontiguousarray(centers), np.ascontiguousarray(halves), float(s)))


def energy_bound_predictor(r: RadiusSequence, s: float, C: float, C2: float, n: int) -> float:
    """``C2 + (C C2 / n^2) Σ_{j<=n} r_j^-s``."""
    if C < 0 or C2 < 0:
        raise ConfigError("constants must be nonnegative")
    total = float(np.exp(np.logaddexp.reduce(-s * r.log_values(n))))
    return C2 + C * C2 * total / n ** 2


def _verdict(slope, bounded, divergent):
    if slope <= bounded:
        return "bounded"
    if slope >= divergent:
        return "divergent"
    return "indeterminate"


@dataclass(frozen=True, eq=False)
class EnergyScan:
    s_grid: np.ndarray
    n_schedule: np.ndarray
    energies: np.ndarray       # shape (len(s_grid), len(n_schedule))
    slopes: np.ndarray
    verdicts: tuple[str, ...]
    predictor_slopes: np.ndarray
    bounded_slope: float = BOUNDED_SLOPE
    divergent_slope: float = DIVERGENT_SLOPE

    def rows(self):
        out = []
        for i, s in enumerate(self.s_grid):
            for j, n in enumerate(self.n_schedule):
                out.append((float(s), int(n), float(self.energies[i, j]),
                            float(self.slopes[i]), self.verdicts[i]))
        return out


def _loglog_slope(n, values):
    return float(np.polyfit(np.log(n), np.log(values), 1)[0])


def energy_scan(tmap: PartitionedMap, x, r: RadiusSequence, s_grid: Sequence[float],
                n_schedule: Sequence[int], m_rule: Callable[[int], int] = sqrt_window,
                bounded_slope: float = BOUNDED_SLOPE,
                divergent_slope: float = DIVERGENT_SLOPE) -> EnergyScan:
    """``I_s(μ_{n,x})`` along ``n_schedule`` and its log-log growth per ``s``."""
    s_grid = np.asarray(s_grid, dtype=float)
    n_schedule = np.asarray(n_schedule, dtype=np.int64)
    if n_schedule.size < 2:
        raise ConfigError("n_schedule needs at least two stages")
    for s in s_grid:
        _check_s(s)
    orbit = orbit_floats(tmap, x, int(n_schedule.max()))
    energies = np.empty((s_grid.size, n_schedule.size))
    for j, n in enumerate(n_schedule):
        mu = OrbitBallMeasure(target_stage(tmap, x, r, int(n), m_rule, orbit))
        for i, s in enumerate(s_grid):
            energies[i, j] = riesz_energy(mu, s)
    slopes = np.array([_loglog_slope(n_schedule, row) for row in energies])
    predictor = np.array([
        _loglog_slope(n_schedule, [energy_bound_predictor(r, s, 1.0, 1.0, int(n)) for n in n_schedule])
        for s in s_grid])
    verdicts = tuple(_verdict(v, bounded_slope, divergent_slope) for v in slopes)
    return EnergyScan(s_grid, n_schedule, energies, slopes, verdicts, predictor,
                      bounded_slope, divergent_slope)


# -- box counting -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoxCount:
    """Dyadic cell counts and the fitted scaling exponent."""

    levels: np.ndarray
    counts: np.ndarray
    used: np.ndarray
    slope: float
    intercept: float
    stderr: float
    r_squared: float

    @property
    def deltas(self) -> np.ndarray:
        return 2.0 ** -self.levels.astype(float)

    def rows(self):
        return [(int(g), float(d), int(c)) for g, d, c in zip(self.levels, self.deltas, self.counts)]


def _cell_ranges(lo, hi, level):
    """Merged half-open integer ranges of dyadic cells meeting the open balls."""
    scale = float(2 ** level)
    start = np.floor(lo * scale).astype(np.int64)
    end = np.ceil(hi * scale).astype(np.int64)
    np.clip(start, 0, 2 ** level, out=start)
    np.clip(end, 0, 2 ** level, out=end)
    order = np.argsort(start, kind="stable")
    start, end = start[order], end[order]
    reach = np.maximum.accumulate(end)
    new = np.ones(start.size, dtype=bool)
    new[1:] = start[1:] > reach[:-1]
    group = np.cumsum(new) - 1
    starts = start[new]
    ends = np.zeros(starts.size, dtype=np.int64)
    np.maximum.at(ends, group, end)
    return starts, ends


def _covered_before(starts, ends, t):
    """Number of covered cells below ``t`` for disjoint sorted ranges."""
    lengths = ends - starts
    cum = np.concatenate(([0], np.cumsum(lengths)))
    k = np.searchsorted(starts, t, side="right")
    prev = np.maximum(k - 1, 0)
    inside = np.where(k > 0, np.minimum(t - starts[prev], lengths[prev]), 0)
    return cum[np.maximum(k - 1, 0)] * (k > 0) + np.maximum(inside, 0)


def _fit_counts(levels, counts, window):
    levels = np.asarray(levels, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64)
    if window == "all":
        used = counts > 0
    elif window == "auto":
        used = (counts >= SPARSE_COUNT) & (counts <= SATURATION * 2.0 ** levels)
    else:
        raise ConfigError("window must be 'auto' or 'all'")
    if used.sum() < 2:
        raise NoScalingWindow("fewer than two levels are neither saturated nor sparse")
    x = levels[used] * math.log(2.0)
    y = np.log(counts[used].astype(float))
    (slope, intercept), cov = np.polyfit(x, y, 1, cov=True) if used.sum() > 2 else (
        np.polyfit(x, y, 1), np.zeros((2, 2)))
    resid = y - (slope * x + intercept)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return BoxCount(levels, counts, used, float(slope), float(intercept),
                    float(math.sqrt(max(cov[0, 0], 0.0))), r2)


def _stage_union(tmap, x, r, K_start, N_balls):
    if N_balls < 2 ** 10:
        raise ConfigError("N_balls must be at least 2^10")
    if not 1 <= K_start <= N_balls:
        raise ConfigError("need 1 <= K_start <= N_balls")
    orbit = orbit_floats(tmap, x, N_balls)
    centers = orbit[K_start:N_balls + 1]
    radii = r.values(N_balls)[K_start - 1:]
    return _clip_balls(centers, radii)


def default_levels(r: RadiusSequence, K_start: int, N_balls: int) -> np.ndarray:
    """Resolutions between the largest and the smallest radius of the union."""
    log_r = r.log_values(N_balls) / math.log(2.0)
    top = max(1, math.floor(-min(log_r[K_start - 1], 0.0)))
    bottom = max(top + 1, math.ceil(-log_r[-1]))
    return np.arange(top, min(bottom, 52) + 1)


def box_counting_dimension(tmap: PartitionedMap, x, r: RadiusSequence, K_start: int,
                           N_balls: int, grid_levels: Sequence[int] | None = None,
                           window: str = "auto") -> BoxCount:
    """Box-counting slope of ``⋃_{k=K_start}^{N} B(T^k x, r_k)``.

    ``window="auto"`` fits only levels whose count is neither saturated
    (``> 0.5/δ``) nor sparse (``< 32``); ``"all"`` fits every nonzero level.
    """
    lo, hi = _stage_union(tmap, x, r, K_start, N_balls)
    levels = np.asarray(default_levels(r, K_start, N_balls) if grid_levels is None
                        else grid_levels, dtype=np.int64)
    counts = []
    for g in levels:
        starts, ends = _cell_ranges(lo, hi, int(g))
        counts.append(int(np.sum(ends - starts)))
    return _fit_counts(levels, counts, window)


def intersection_experiment(tmap: PartitionedMap, x1, x2, r: RadiusSequence, K_start: int,
                            N_balls: int, grid_levels: Sequence[int] | None = None,
                            window: str = "auto") -> BoxCount:
    """Box-counting slope of the cells hit by both finite-stage unions."""
    lo1, hi1 = _stage_union(tmap, x1, r, K_start, N_balls)
    lo2, hi2 = _stage_union(tmap, x2, r, K_start, N_balls)
    levels = np.asarray(default_levels(r, K_start, N_balls) if grid_levels is None
                        else grid_levels, dtype=np.int64)
    counts = []
    for g in levels:
        s1, e1 = _cell_ranges(lo1, hi1, int(g))
        s2, e2 = _cell_ranges(lo2, hi2, int(g))
        both = _covered_before(s2, e2, e1) - _covered_before(s2, e2, s1)
        counts.append(int(np.sum(both)))
    return _fit_counts(levels, counts, window)


def hit_count(tmap: PartitionedMap, x, y: float, r: RadiusSequence, N: int) -> int:
    """``#{1 <= n <= N : |T^n x - y| < r_n}``."""
    orbit = orbit_floats(tmap, x, N)[1:]
    return int(np.sum(np.abs(orbit - float(y)) < r.values(N)))


# -- summary ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DimensionEstimate:
    formula_s: float
    cap: float
    empirical_box: BoxCount | None = None
    energy_dichotomy: EnergyScan | None = None

    def summary(self) -> dict:
        out = {"formula_s": self.formula_s, "cap": self.cap}
        if self.empirical_box is not None:
            b = self.empirical_box
            out["empirical_box"] = {"slope": b.slope, "stderr": b.stderr, "r_squared": b.r_squared,
                                    "levels_used": [int(g) for g in b.levels[b.used]]}
        if self.energy_dichotomy is not None:
            e = self.energy_dichotomy
            out["energy_dichotomy"] = [
                {"s": float(s), "slope": float(k), "verdict": v}
                for s, k, v in zip(e.s_grid, e.slopes, e.verdicts)]
        return out


def estimate_dimension(tmap: PartitionedMap, x, r: RadiusSequence, cap: float = 1.0,
                       N_check: int = 10 ** 6, box: dict | None = None,
                       energy: dict | None = None) -> DimensionEstimate:
    """Formula value plus optional box-count (``box`` kwargs) and energy scan
    (``energy`` kwargs) for the orbit of ``x``."""
    s = dimension_formula(r, cap, N_check)
    box_result = box_counting_dimension(tmap, x, r, **box) if box else None
    scan = energy_scan(tmap, x, r, **energy) if energy else None
    return DimensionEstimate(s, cap, box_result, scan)
