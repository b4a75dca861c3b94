"""Transfer operators, invariant densities, pressure and Gibbs measures.

Everything is discretised on a uniform grid of ``bins`` cells (Ulam's
method).  For a potential φ the weighted matrix is

    W[i, j] = (1/|I_i|) ∫_{I_i} e^{φ(x)} |T'(x)| 1{T(x) ∈ I_j} dx,

which makes ``g -> g W`` the cell-average discretisation of the transfer
operator ``L_φ g(y) = Σ_{Tx=y} e^{φ(x)} g(x)``.  Without a potential the
factor ``e^φ |T'|`` is dropped and ``W`` is the row-stochastic Ulam matrix
of Lebesgue-measure transitions.

On a uniform grid the measure ν with ``L_φ^* ν = λ ν`` is the right
eigenvector (cell masses) and the density ``h`` with ``L_φ h = λ h`` the left
one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import expressions as ex
from ._kernels import riesz_potential
from .errors import BracketTooWide, ConfigError, IndifferentMap, NoConvergence
from .interval_maps import PartitionedMap, cylinder_endpoints
from .measures import DiscreteMeasure
from .rng import make_rng

__all__ = [
    "Potential",
    "POTENTIALS",
    "potential_from_config",
    "UlamOperator",
    "InvariantDensity",
    "Pressure",
    "ContractionCheck",
    "GibbsModel",
    "CylinderStatistics",
    "S0Estimate",
    "BallScaling",
    "RieszPotentialCheck",
    "ulam_matrix",
    "stationary_density",
    "pressure",
    "check_contracting_potential",
    "gibbs_model",
    "conformal_check",
    "cylinder_statistics",
    "theta_m",
    "s0_estimate",
    "ball_scaling_check",
    "riesz_potential_bound",
]

POWER_TOL = 1e-12
POWER_MAX_ITER = 100_000
BRACKET_TOL = 1e-3


# -- potentials -------------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """``φ(x) = pieces[branch(x)](x) - geometric·log|T'(x)| + shift``.

    ``pieces`` may be empty (no piecewise part).  ``bv_bound`` is a declared
    bound on the variation of ``e^φ``, carried for reporting.
    """

    pieces: tuple[ex.Expr, ...] = ()
    geometric: float = 0.0
    shift: float = 0.0
    bv_bound: float | None = None
    name: str = "custom"

    @classmethod
    def zero(cls) -> "Potential":
        return cls(name="zero", bv_bound=0.0)

    @classmethod
    def constant(cls, c: float) -> "Potential":
        return cls(shift=float(c), name=f"constant({c})", bv_bound=0.0)

    @classmethod
    def geometric_potential(cls, t: float = 1.0) -> "Potential":
        """``-t log|T'|``; ``t = 1`` gives the Lebesgue-type potential."""
        return cls(geometric=float(t), name=f"geometric({t})")

    @classmethod
    def bernoulli(cls, p: float) -> "Potential":
        """``log p`` on the first branch and ``log(1-p)`` on the second."""
        if not 0 < p < 1:
            raise ConfigError("bernoulli potential needs 0 < p < 1")
        pieces = (ex.const(math.log(p)), ex.const(math.log1p(-p)))
        return cls(pieces=pieces, name=f"bernoulli({p})", bv_bound=abs(1 - 2 * p))

    @classmethod
    def from_pieces(cls, pieces: Sequence, params=None, bv_bound=None) -> "Potential":
        return cls(pieces=tuple(ex.parse(p, params) for p in pieces), bv_bound=bv_bound)

    def shifted(self, c: float) -> "Potential":
        return replace(self, shift=self.shift + float(c), name=f"{self.name}+{c}")

    def values(self, tmap: PartitionedMap, x, branch=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.shift)
        if self.pieces:
            if len(self.pieces) != len(tmap.branches):
                raise ConfigError(
                    f"potential has {len(self.pieces)} pieces, map has {len(tmap.branches)} branches")
            idx = tmap.branch_index(x) if branch is None else np.broadcast_to(branch, x.shape)
            for i, piece in enumerate(self.pieces):
                sel = idx == i
                if np.any(sel):
                    out[sel] += ex.to_numpy(piece)(x[sel])
        if self.geometric:
            out -= self.geometric * np.log(np.abs(_branch_deriv(tmap, x, branch)))
        return out

    def describe(self) -> dict:
        return {
            "name": self.name,
            "pieces": [str(p) for p in self.pieces],
            "geometric": self.geometric,
            "shift": self.shift,
            "bv_bound": self.bv_bound,
        }


def _branch_deriv(tmap, x, branch=None):
    if branch is None:
        return tmap.deriv(x)
    if np.ndim(branch) == 0:
        return tmap.branches[int(branch)].df(x)
    out = np.empty_like(x)
    for i, br in enumerate(tmap.branches):
        sel = branch == i
        if np.any(sel):
            out[sel] = br.df(x[sel])
    return out


POTENTIALS = {
    "zero": "zero: φ ≡ 0",
    "constant": "constant(c): φ ≡ c",
    "geometric": "geometric(t): φ = -t log|T'|  (t = 1 gives the absolutely continuous case)",
    "bernoulli": "bernoulli(p): log p on the first branch, log(1-p) on the second",
    "pieces": "pieces: one expression per branch, e.g. pieces = [\"10\", \"0\"]",
}


def potential_from_config(cfg) -> Potential:
    cfg = dict(cfg)
    kind = cfg.pop("builtin", None)
    if kind == "zero":
        pot = Potential.zero()
    elif kind == "constant":
        pot = Potential.constant(float(cfg.pop("c")))
    elif kind == "geometric":
        pot = Potential.geometric_potential(float(cfg.pop("t", 1.0)))
    elif kind == "bernoulli":
        pot = Potential.bernoulli(float(cfg.pop("p")))
    elif kind is None and "pieces" in cfg:
        pot = Potential.from_pieces(cfg.pop("pieces"), cfg.pop("params", None),
                                    cfg.pop("bv_bound", None))
        pot = replace(pot, geometric=float(cfg.pop("geometric", 0.0)))
    else:
        raise ConfigError(f"unknown potential {kind!r}; choose from {sorted(POTENTIALS)}")
    if "shift" in cfg:
        pot = pot.shifted(float(cfg.pop("shift")))
    if cfg:
        raise ConfigError(f"unknown potential keys: {sorted(cfg)}")
    return pot


# -- Ulam operator ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UlamOperator:
    bins: int
    matrix: sp.csr_matrix
    weighted: bool
    potential: Potential | None = None

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.bins + 1)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def ulam_matrix(tmap: PartitionedMap, bins: int, potential: Potential | None = None,
                nodes: int = 8) -> UlamOperator:
    """Ulam discretisation of the (weighted) transfer operator.

    Each branch is cut at the grid points and at exact preimages of grid
    points, so every elementary piece lies in one source cell and maps into
    one target cell.  Weighted pieces are integrated with ``nodes``-point
    Gauss-Legendre quadrature.
    """
    bins = int(bins)
    if bins < 2:
        raise ConfigError("bins must be at least 2")
    edges = np.linspace(0.0, 1.0, bins + 1)
    gl_t, gl_w = np.polynomial.legendre.leggauss(nodes)
    rows, cols, vals = [], [], []
    for index, br in enumerate(tmap.branches):
        lo, hi = br.image
        cuts = [np.array([br.a, br.b]), edges[(edges > br.a) & (edges < br.b)]]
        targets = edges[(edges > lo) & (edges < hi)]
        if targets.size:
            cuts.append(br.inverse(targets))
        pts = np.unique(np.concatenate(cuts))
        u, v = pts[:-1], pts[1:]
        keep = v > u
        u, v = u[keep], v[keep]
        mid = 0.5 * (u + v)
        src = np.minimum((mid * bins).astype(np.int64), bins - 1)
        y = br.f(mid)
        y -= np.floor(y)
        dst = np.minimum((y * bins).astype(np.int64), bins - 1)
        if potential is None:
            weight = v - u
        else:
            half = 0.5 * (v - u)
            xs = mid[:, None] + half[:, None] * gl_t[None, :]
            phi = potential.values(tmap, xs.ravel(), branch=index).reshape(xs.shape)
            dens = np.exp(phi) * np.abs(br.df(xs.ravel()).reshape(xs.shape))
            weight = half * (dens @ gl_w)
        rows.append(src)
        cols.append(dst)
        vals.append(weight * bins)
    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(bins, bins)).tocsr()
    matrix.sum_duplicates()
    return UlamOperator(bins, matrix, potential is not None, potential)


# -- invariant density ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InvariantDensity:
    edges: np.ndarray
    values: np.ndarray
    c_h: float
    iterations: int
    residual: float

    @property
    def measure(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.edges, self.values * np.diff(self.edges))

    def rows(self):
        return self.measure.rows()


def _power_left(matrix_t, start, tol, max_iter):
    """Iterate ``p <- p W`` (given ``W^T``) with L1 normalisation."""
    p = start / start.sum()
    for it in range(1, max_iter + 1):
        q = matrix_t @ p
        np.clip(q, 0.0, None, out=q)
        norm = q.sum()
        if not norm > 0:
            raise NoConvergence("power iteration collapsed to zero")
        q /= norm
        residual = float(np.abs(q - p).sum())
        p = q
        if residual <= tol:
            return p, norm, it, residual
    raise NoConvergence(f"power iteration did not reach {tol} in {max_iter} steps "
                        f"(residual {residual:.3g})")


def stationary_density(op: UlamOperator, tol: float = POWER_TOL,
                       max_iter: int = POWER_MAX_ITER) -> InvariantDensity:
    """Fixed vector of the unweighted Ulam matrix, as a density."""
    if op.weighted:
        raise ConfigError("stationary_density needs the unweighted Ulam operator")
    p, _, it, residual = _power_left(op.matrix.T.tocsr(), np.ones(op.bins), tol, max_iter)
    h = p * op.bins
    low = h.min()
    c_h = float(max(h.max(), 1.0 / low)) if low > 0 else math.inf
    return InvariantDensity(op.edges, h, c_h, it, residual)


# -- pressure ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Pressure:
    """``value = n^-1 log inf L^n 1`` at ``n = n_max``; ``upper`` uses sup."""

    value: float
    lower: float
    upper: float
    n: int
    bins: int
    lower_sequence: np.ndarray = field(repr=False)
    upper_sequence: np.ndarray = field(repr=False)

    @property
    def bracket(self) -> float:
        return self.upper - self.lower


def _iterate_ones(op: UlamOperator, n: int):
    wt = op.matrix.T.tocsr()
    g = np.ones(op.bins)
    log_scale = 0.0
    lower = np.empty(n)
    upper = np.empty(n)
    for k in range(1, n + 1):
        g = wt @ g
        top = g.max()
        if not top > 0:
            raise NoConvergence("transfer operator annihilated the constant function")
        log_scale += math.log(top)
        g /= top
        low = g.min()
        lower[k - 1] = (log_scale + math.log(low)) / k if low > 0 else -math.inf
        upper[k - 1] = log_scale / k
    return g, log_scale, lower, upper


def pressure(tmap: PartitionedMap, potential: Potential, n_max: int = 2000,
             bins: int = 4096, bracket_tol: float = BRACKET_TOL) -> Pressure:
    """Pressure from the growth of ``L_φ^n 1`` on the Ulam grid.

    Raises ``BracketTooWide`` when the sup-based and inf-based rates differ by
    more than ``bracket_tol`` at ``n_max``.
    """
    if n_max < 2:
        raise ConfigError("n_max must be at least 2")
    op = ulam_matrix(tmap, bins, potential)
    _, _, lower, upper = _iterate_ones(op, n_max)
    result = Pressure(float(lower[-1]), float(lower[-1]), float(upper[-1]), n_max, bins,
                      lower, upper)
    if not result.bracket <= bracket_tol:
        raise BracketTooWide(
            f"pressure bracket {result.bracket:.3g} exceeds {bracket_tol}; raise n_max or bins",
            result.lower, result.upper)
    return result


@dataclass(frozen=True)
class ContractionCheck:
    holds: bool
    sup_exp_birkhoff: float
    inf_transfer: float

    @property
    def gap(self) -> float:
        return self.inf_transfer - self.sup_exp_birkhoff


def _birkhoff_sums(tmap, potential, x, m):
    """``S_m φ`` and ``log|(T^m)'|`` along float orbits of the points ``x``."""
    y = np.array(x, dtype=float)
    s = np.zeros_like(y)
    logd = np.zeros_like(y)
    for _ in range(m):
        idx = tmap.branch_index(y)
        if potential is not None:
            s += potential.values(tmap, y, branch=idx)
        logd += np.log(np.abs(_branch_deriv(tmap, y, idx)))
        y = tmap(y)
    return s, logd


def check_contracting_potential(tmap: PartitionedMap, potential: Potential, n0: int,
                                bins: int = 4096, samples_per_cell: int = 4) -> ContractionCheck:
    """Compare ``sup e^{S_n0 φ}`` with ``inf L_φ^n0 1`` on the Ulam grid."""
    if n0 < 1:
        raise ConfigError("n0 must be at least 1")
    frac = (np.arange(samples_per_cell) + 0.5) / samples_per_cell
    xs = ((np.arange(bins)[:, None] + frac[None, :]) / bins).ravel()
    s, _ = _birkhoff_sums(tmap, potential, xs, n0)
    lhs = float(np.exp(s.max()))
    g, log_scale, _, _ = _iterate_ones(ulam_matrix(tmap, bins, potential), n0)
    rhs = float(math.exp(log_scale) * g.min())
    return ContractionCheck(lhs < rhs, lhs, rhs)


# -- Gibbs measures ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GibbsModel:
    """Discretised conformal measure, density and Gibbs measure of a potential."""

    potential: Potential
    pressure: float
    nu: DiscreteMeasure
    h_phi: np.ndarray
    mu: DiscreteMeasure
    h_bounds: tuple[float, float]
    bins: int
    s0: float | None = None

    def summary(self) -> dict:
        return {
            "potential": self.potential.describe(),
            "pressure": self.pressure,
            "h_min": self.h_bounds[0],
            "h_max": self.h_bounds[1],
            "bins": self.bins,
            "s0": self.s0,
        }


def gibbs_model(tmap: PartitionedMap, potential: Potential, bins: int = 4096,
                tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER,
                s0_schedule: Sequence[int] | None = None) -> GibbsModel:
    """Leading eigendata of the weighted Ulam matrix.

    ``nu`` solves ``W ν = e^P ν`` (masses), ``h_phi`` solves ``h W = e^P h``,
    scaled so that ``Σ h_i ν_i = 1``; ``mu`` has masses ``h_i ν_i``.
    """
    op = ulam_matrix(tmap, bins, potential)
    nu, lam, _, _ = _power_left(op.matrix.tocsr(), np.ones(bins), tol, max_iter)
    h, _, _, _ = _power_left(op.matrix.T.tocsr(), np.ones(bins), tol, max_iter)
    h = h / float(h @ nu)
    mu_masses = h * nu
    edges = op.edges
    positive = h[nu > 0]
    s0 = None
    if s0_schedule is not None:
        s0 = s0_estimate(tmap, potential, math.log(lam), s0_schedule).value
    return GibbsModel(potential, math.log(lam), DiscreteMeasure(edges, nu), h,
                      DiscreteMeasure(edges, mu_masses / mu_masses.sum()),
                      (float(positive.min()), float(positive.max())), bins, s0)


def conformal_check(model: GibbsModel, tmap: PartitionedMap,
                    cylinders: Sequence[tuple[float, float]], nodes: int = 8) -> float:
    """Max relative violation of ``ν(TA) = ∫_A e^{P-φ} dν`` over the sets ``A``."""
    nu = model.nu
    bins = nu.bins
    gl_t, gl_w = np.polynomial.legendre.leggauss(nodes)
    worst = 0.0
    for a, b in cylinders:
        index = int(tmap.branch_index(np.array([a]))[0])
        br = tmap.branches[index]
        if b > br.b + 1e-15 or a < br.a - 1e-15:
            raise ConfigError(f"[{a}, {b}) is not inside one partition element")
        ya, yb = br.f(np.array([a, b]))
        lhs = float(nu.interval_mass(min(ya, yb), max(ya, yb)))
        cuts = np.unique(np.concatenate(([a, b], nu.edges[(nu.edges > a) & (nu.edges < b)])))
        u, v = cuts[:-1], cuts[1:]
        mid = 0.5 * (u + v)
        half = 0.5 * (v - u)
        cell = np.minimum((mid * bins).astype(np.int64), bins - 1)
        xs = mid[:, None] + half[:, None] * gl_t[None, :]
        phi = model.potential.values(tmap, xs.ravel(), branch=index).reshape(xs.shape)
        integrand = np.exp(model.pressure - phi) @ gl_w
        rhs = float(np.sum(nu.density[cell] * half * integrand))
        worst = max(worst, abs(lhs - rhs) / lhs)
    return worst


# -- cylinder exponents -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class CylinderStatistics:
    """Per-cylinder sups and midpoint quotients at generation ``m``."""

    m: int
    lo: np.ndarray
    hi: np.ndarray
    sup_birkhoff: np.ndarray      # sup over samples of S_mφ - mP
    sup_log_derivative: np.ndarray  # sup over samples of log|(T^m)'|
    midpoint_quotient: np.ndarray  # (S_mφ - mP) / (-log|(T^m)'|) at midpoints
    distortion: float              # max over cylinders of sup/inf |(T^m)'|

    @property
    def theta(self) -> float:
        return (math.log(2.0) + float(self.sup_birkhoff.max())) / -float(self.sup_log_derivative.max())


def cylinder_statistics(tmap: PartitionedMap, potential: Potential, P: float, m: int,
                        subdivision: int = 3) -> CylinderStatistics:
    if tmap.is_indifferent:
        raise IndifferentMap("cylinder exponents need a uniformly expanding map")
    if m < 1 or subdivision < 1:
        raise ConfigError("m and subdivision must be positive")
    ends = cylinder_endpoints(tmap, m)
    lo, hi = ends[:-1], ends[1:]
    frac = (np.arange(subdivision) + 0.5) / subdivision
    xs = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    s, logd = _birkhoff_sums(tmap, potential, xs.ravel(), m)
    s = s.reshape(xs.shape) - m * P
    logd = logd.reshape(xs.shape)
    s_mid, logd_mid = _birkhoff_sums(tmap, potential, 0.5 * (lo + hi), m)
    quotient = (s_mid - m * P) / -logd_mid
    distortion = float(np.exp(np.max(logd.max(axis=1) - logd.min(axis=1))))
    return CylinderStatistics(m, lo, hi, s.max(axis=1), logd.max(axis=1), quotient, distortion)


def theta_m(tmap: PartitionedMap, potential: Potential, P: float, m: int,
            subdivision: int = 3) -> float:
    """``(log 2 + sup(S_mφ - mP)) / (-log sup|(T^m)'|)`` over generation-m cylinders."""
    return cylinder_statistics(tmap, potential, P, m, subdivision).theta


@dataclass(frozen=True)
class S0Estimate:
    value: float
    inf_quotients: dict
    thetas: dict
    distortion: dict


def s0_estimate(tmap: PartitionedMap, potential: Potential, P: float,
                m_schedule: Sequence[int], subdivision: int = 3) -> S0Estimate:
    """Max over the schedule of the inf over cylinders of the midpoint quotient."""
    infs, thetas, dist = {}, {}, {}
    for m in m_schedule:
        stats = cylinder_statistics(tmap, potential, P, int(m), subdivision)
        infs[int(m)] = float(stats.midpoint_quotient.min())
        thetas[int(m)] = stats.theta
        dist[int(m)] = stats.distortion
    return S0Estimate(max(infs.values()), infs, thetas, dist)


# -- Frostman-type checks ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class BallScaling:
    """Worst ratios ``μ(I)/|I|^s``.

    ``excess`` is the fitted growth of the per-generation dyadic worst ratio,
    in units of the exponent (slope of its log against ``g log 2``); it
    estimates ``s`` minus the local scaling exponent of the measure.
    """

    s: float
    c_s: float
    per_generation: np.ndarray
    random_worst: float
    excess: float
    bounded: bool
    threshold: float


def ball_scaling_check(measure: DiscreteMeasure, s: float, samples: int = 2000,
                       seed: int = 0, threshold: float = 0.01) -> BallScaling:
    """Test ``μ(I) ≤ c_s |I|^s`` on dyadic intervals of every resolved generation
    and on ``samples`` random intervals.

    ``bounded`` is true when the worst dyadic ratio does not grow with the
    generation, i.e. ``excess <= threshold``.
    """
    if not 0 < s <= 1:
        raise ConfigError("s must lie in (0, 1]")
    top = int(math.floor(math.log2(measure.bins)))
    per_gen = np.empty(top + 1)
    for g in range(top + 1):
        masses = np.diff(measure.cdf(np.linspace(0.0, 1.0, 2 ** g + 1)))
        per_gen[g] = masses.max() * 2.0 ** (g * s)
    rng = make_rng(seed)
    a = rng.random(samples)
    length = 10.0 ** rng.uniform(-math.log10(measure.bins), 0.0, samples)
    b = np.minimum(a + length, 1.0)
    random_worst = float(np.max(measure.interval_mass(a, b) / (b - a) ** s)) if samples else 0.0
    start = top // 2
    gens = np.arange(start, top + 1)
    if gens.size >= 2:
        slope = np.polyfit(gens, np.log(per_gen[start:]), 1)[0]
        excess = float(slope / math.log(2.0))
    else:
        excess = 0.0
    return BallScaling(s, float(max(per_gen.max(), random_worst)), per_gen, random_worst,
                       excess, excess <= threshold, threshold)


@dataclass(frozen=True)
class RieszPotentialCheck:
    """Grid sup of ``∫|x-y|^-t dμ(y)`` against two bounds.

    ``stated_bound`` is ``t c_s/(s-t)``.  ``layer_cake_bound`` is
    ``1 + 2^s c_s t/(s-t)``, which also counts the mass at distance ≥ 1 and
    the diameter-versus-radius factor of ``μ(B(x,ρ)) ≤ c_s (2ρ)^s``.
    """

    sup_value: float
    argmax: float
    stated_bound: float
    layer_cake_bound: float
    slack: float

    @property
    def within_stated(self) -> bool:
        return self.sup_value <= self.stated_bound + self.slack

    @property
    def within_layer_cake(self) -> bool:
        return self.sup_value <= self.layer_cake_bound + self.slack


def riesz_potential_bound(measure: DiscreteMeasure, t: float, s: float, c_s: float,
                          grid=None) -> RieszPotentialCheck:
    if not 0 < t < s:
        raise ConfigError("need 0 < t < s")
    edges = measure.edges
    if grid is None:
        mids = 0.5 * (edges[:-1] + edges[1:])
        grid = np.sort(np.concatenate((edges, mids)))
    grid = np.asarray(grid, dtype=float)
    dens = measure.density
    values = riesz_potential(grid, edges, dens, float(t))
    k = int(np.argmax(values))
    coarse = riesz_potential(grid[::2], edges, dens, float(t))
    slack = float(abs(values.max() - coarse.max()))
    return RieszPotentialCheck(float(values[k]), float(grid[k]), t * c_s / (s - t),
                               1.0 + 2.0 ** s * c_s * t / (s - t), slack)
