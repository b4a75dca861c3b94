"""Piecewise monotone expanding maps of the unit interval.

A :class:`PartitionedMap` is an ordered tuple of branches, each a monotone
formula on a half-open domain ``[a, b)``.  Values are reduced modulo 1, so
a branch may be written either as ``2*x - 1`` or as ``2*x mod 1``.

Orbits are computed exactly on fixed-point grids (:class:`PrecisePoint`).
Builtin maps carry integer fast paths; user formulas fall back to mpmath
with 64 guard bits.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterator, Mapping

import mpmath
import numpy as np

from . import expressions as ex
from .errors import (
    AtPartitionPoint,
    ConfigError,
    HitsDiscontinuity,
    InsufficientPrecision,
    NonInvertibleBranch,
)
from .precise import DEFAULT_BITS, PrecisePoint

__all__ = [
    "INDIFFERENT",
    "Branch",
    "PartitionedMap",
    "BUILTIN_MAPS",
    "make_builtin",
    "map_from_config",
    "evaluate",
    "derivative",
    "iterate_orbit",
    "orbit_floats",
    "required_bits",
    "cylinder_of",
    "cylinder_endpoints",
]

INDIFFERENT = "indifferent-at-0"
COVERING_MODES = ("none", "weakly_covering", "covering")
GUARD_BITS = 64


def _to_float(e: ex.Expr) -> float:
    if isinstance(e, ex.Const):
        return float(e.value)
    with mpmath.workprec(113):
        return float(ex.eval_mp(e, mpmath.mpf(0)))


@dataclass(frozen=True)
class Branch:
    """One monotone piece ``x -> formula(x) mod 1`` on ``[left, right)``.

    ``inverse_formula``, when given, inverts ``formula`` on its image and is
    written in terms of ``x``.  ``fixed_step`` is an optional exact integer
    evaluator ``(num, bits) -> num'`` already reduced to ``[0, 2**bits)``.
    """

    left: ex.Expr
    right: ex.Expr
    formula: ex.Expr
    derivative_formula: ex.Expr
    inverse_formula: ex.Expr | None = None
    label: str = ""
    fixed_step: Callable[[int, int], int] | None = field(default=None, compare=False, repr=False)

    @cached_property
    def a(self) -> float:
        return _to_float(self.left)

    @cached_property
    def b(self) -> float:
        return _to_float(self.right)

    @cached_property
    def f(self):
        return ex.to_numpy(self.formula)

    @cached_property
    def df(self):
        return ex.to_numpy(self.derivative_formula)

    @cached_property
    def increasing(self) -> bool:
        mid = 0.5 * (self.a + self.b)
        return bool(self.df(np.array([mid]))[0] > 0)

    @cached_property
    def image(self) -> tuple[float, float]:
        """Raw (unreduced) image interval ``[lo, hi]``."""
        ya, yb = self.f(np.array([self.a, self.b]))
        return (float(min(ya, yb)), float(max(ya, yb)))

    def inverse(self, y) -> np.ndarray:
        """Preimage in ``[a, b]`` of raw image values ``y``."""
        y = np.asarray(y, dtype=float)
        if self.inverse_formula is not None:
            return np.clip(ex.to_numpy(self.inverse_formula)(y), self.a, self.b)
        lo = np.full(y.shape, self.a)
        hi = np.full(y.shape, self.b)
        sign = 1.0 if self.increasing else -1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            above = sign * (self.f(mid) - y) > 0
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
            if np.all(hi - lo <= 4 * np.spacing(np.maximum(np.abs(hi), 1e-300))):
                break
        else:
            raise NonInvertibleBranch(f"bisection did not settle on branch {self.label!r}")
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class PartitionedMap:
    """Piecewise monotone map of ``[0, 1)`` with a finite branch partition.

    ``expansion_lambda`` is the uniform expansion constant, or the marker
    ``INDIFFERENT`` for maps with a neutral fixed point at 0.  The flags
    ``distortion_flag``, ``covering_mode`` and ``markov_flag`` are declared
    metadata and are not verified.
    """

    name: str
    branches: tuple[Branch, ...]
    expansion_lambda: float | str
    distortion_flag: bool = True
    covering_mode: str = "none"
    markov_flag: bool = False
    params: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        if not self.branches:
            raise ConfigError("a map needs at least one branch")
        if self.covering_mode not in COVERING_MODES:
            raise ConfigError(f"covering_mode must be one of {COVERING_MODES}")
        lam = self.expansion_lambda
        if lam != INDIFFERENT and not (isinstance(lam, (int, float)) and lam > 1):
            raise ConfigError("expansion_lambda must exceed 1 or be 'indifferent-at-0'")
        with mpmath.workprec(256):
            ends = [(ex.eval_mp(br.left, 0), ex.eval_mp(br.right, 0)) for br in self.branches]
            tol = mpmath.mpf(2) ** -200
            if abs(ends[0][0]) > tol or abs(ends[-1][1] - 1) > tol:
                raise ConfigError("branch domains must start at 0 and end at 1")
            for (a, b), nxt in zip(ends, ends[1:] + [None]):
                if not a < b:
                    raise ConfigError("branch domains must be nonempty and ordered")
                if nxt is not None and abs(b - nxt[0]) > tol:
                    raise ConfigError("branch domains must tile [0, 1) without gaps")

    @property
    def is_indifferent(self) -> bool:
        return self.expansion_lambda == INDIFFERENT

    @cached_property
    def lefts(self) -> np.ndarray:
        return np.array([br.a for br in self.branches])

    @cached_property
    def interior_points(self) -> tuple[Fraction | None, ...]:
        """Exact interior partition points (``None`` where irrational)."""
        out = []
        for br in self.branches[1:]:
            out.append(br.left.value if isinstance(br.left, ex.Const) else None)
        return tuple(out)

    @cached_property
    def max_derivative(self) -> float:
        """Numerical sup of ``|T'|`` over the branches (sampled, with endpoints)."""
        best = 0.0
        for br in self.branches:
            if isinstance(br.derivative_formula, ex.Const):
                best = max(best, abs(float(br.derivative_formula.value)))
                continue
            # sampled sups get a small safety factor
            xs = np.linspace(br.a, br.b, 4097)
            best = max(best, float(np.max(np.abs(br.df(xs)))) * (1 + 1e-9))
        return best

    def describe(self) -> dict:
        return {
            "name": self.name,
            "params": {k: (str(v) if isinstance(v, ex.Expr) else v) for k, v in self.params},
            "branches": [
                {"left": str(b.left), "right": str(b.right), "formula": str(b.formula)}
                for b in self.branches
            ],
            "expansion_lambda": self.expansion_lambda,
            "covering_mode": self.covering_mode,
            "markov_flag": self.markov_flag,
        }

    # -- float evaluation (vectorised) --------------------------------------

    def branch_index(self, x) -> np.ndarray:
        idx = np.searchsorted(self.lefts, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(idx, 0, len(self.branches) - 1)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = self.branch_index(x)
        out = np.empty_like(x)
        for i, br in enumerate(self.branches):
            sel = idx == i
            if np.any(sel):
                out[sel] = br.f(x[sel])
        out -= np.floor(out)
        return out

    def deriv(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = self.branch_index(x)
        out = np.empty_like(x)
        for i, br in enumerate(self.branches):
            sel = idx == i
            if np.any(sel):
                out[sel] = br.df(x[sel])
        return out

    # -- fixed-point evaluation --------------------------------------------

    @cached_property
    def _threshold_cache(self) -> dict:
        return {}

    def thresholds(self, bits: int) -> tuple[int, ...]:
        """``ceil(left * 2**bits)`` for each branch."""
        cached = self._threshold_cache.get(bits)
        if cached is None:
            cached = self._threshold_cache[bits] = _thresholds(self.branches, bits)
        return cached

    def branch_of(self, num: int, bits: int) -> int:
        return bisect.bisect_right(self.thresholds(bits), num) - 1

    def step(self, num: int, bits: int) -> int:
        """One exact step on the grid of width ``bits``."""
        br = self.branches[self.branch_of(num, bits)]
        if br.fixed_step is not None:
            return br.fixed_step(num, bits)
        full = 1 << bits
        with mpmath.workprec(bits + GUARD_BITS):
            y = ex.eval_mp(br.formula, mpmath.ldexp(mpmath.mpf(num), -bits))
            raw = int(mpmath.floor(mpmath.ldexp(y, bits)))
        return raw % full


def _thresholds(branches, bits: int) -> tuple[int, ...]:
    out = []
    for br in branches:
        if isinstance(br.left, ex.Const):
            out.append(math.ceil(br.left.value * (1 << bits)))
        else:
            with mpmath.workprec(bits + GUARD_BITS):
                out.append(int(mpmath.ceil(mpmath.ldexp(ex.eval_mp(br.left, 0), bits))))
    return tuple(out)


# -- builtins ---------------------------------------------------------------

BUILTIN_MAPS = {
    "doubling": "doubling: x -> 2x mod 1, branches [0,1/2), [1/2,1)",
    "beta_map": "beta_map(beta): x -> beta*x mod 1, beta > 1 (beta = 'golden' accepted)",
    "manneville_pomeau": "manneville_pomeau(beta): x + 2^(beta-1) x^beta on [0,1/2), 2x-1 on [1/2,1), beta > 1",
    "bernoulli_markov": "bernoulli_markov(k): folded k-branch linear map, slopes +k/-k alternating, k >= 2",
}

_GOLDEN = "(1 + 5**(1/2))/2"


def _linear_step(slope: int, offset: int):
    """Fixed step for ``slope*x + offset`` with integer coefficients."""

    def step(num, bits):
        full = 1 << bits
        raw = slope * num + offset * full
        if raw == full:
            return 0
        return min(max(raw, 0), full - 1)

    return step


def _beta_step(beta: ex.Expr, offset: int):
    cache = {}

    def step(num, bits):
        guard = bits + GUARD_BITS
        scaled = cache.get(bits)
        if scaled is None:
            with mpmath.workprec(guard + 64):
                scaled = int(mpmath.floor(mpmath.ldexp(ex.eval_mp(beta, 0), guard)))
            cache[bits] = scaled
        full = 1 << bits
        raw = ((scaled * num) >> guard) - offset * full
        return min(max(raw, 0), full - 1)

    return step


def _mp_left_step(beta: Fraction):
    if beta.denominator == 1:
        k = int(beta)
        coeff = 1 << (k - 1)

        def step(num, bits):
            raw = num + ((coeff * num ** k) >> (bits * (k - 1)))
            return min(raw, (1 << bits) - 1)

        return step
    if beta.denominator == 2:
        k = int(beta - Fraction(1, 2))

        def step(num, bits):
            # 2^(beta-1) x^beta = 2^(k-1) x^k sqrt(2x)
            root = math.isqrt((2 * num) << bits)
            raw = num + (((num ** k * root) << (k - 1)) >> (bits * k))
            return min(raw, (1 << bits) - 1)

        return step
    return None


def make_builtin(name: str, **params) -> PartitionedMap:
    """Construct one of the builtin maps listed in ``BUILTIN_MAPS``."""
    half = ex.const(Fraction(1, 2))
    zero, one = ex.ZERO, ex.ONE
    x = ex.X

    def unexpected(allowed):
        extra = set(params) - set(allowed)
        if extra:
            raise ConfigError(f"unknown parameter(s) for {name}: {sorted(extra)}")

    if name == "doubling":
        unexpected(())
        branches = (
            Branch(zero, half, 2 * x, ex.const(2), x / 2, "left", _linear_step(2, 0)),
            Branch(half, one, 2 * x - 1, ex.const(2), (x + 1) / 2, "right", _linear_step(2, -1)),
        )
        return PartitionedMap("doubling", branches, 2.0, True, "covering", True)

    if name == "beta_map":
        unexpected(("beta",))
        if "beta" not in params:
            raise ConfigError("beta_map needs beta")
        raw = params["beta"]
        golden = isinstance(raw, str) and raw.strip().lower() == "golden"
        beta = ex.parse(_GOLDEN if golden else raw)
        if ex.depends_on_x(beta):
            raise ConfigError("beta must be a constant")
        bval = _to_float(beta)
        if not bval > 1:
            raise ConfigError("β must exceed 1")
        count = math.ceil(bval - 1e-12)
        branches = []
        for i in range(count):
            left = ex.const(i) / beta if i else zero
            right = ex.const(i + 1) / beta if i + 1 < count else one
            if isinstance(beta, ex.Const) and beta.value.denominator == 1:
                step = _linear_step(int(beta.value), -i)
            else:
                step = _beta_step(beta, i)
            branches.append(Branch(left, right, beta * x - i, beta, (x + i) / beta,
                                   f"branch{i}", step))
        integer = isinstance(beta, ex.Const) and beta.value.denominator == 1
        return PartitionedMap("beta_map", tuple(branches), bval, True, "covering",
                              integer or golden, (("beta", "golden" if golden else beta),))

    if name == "manneville_pomeau":
        unexpected(("beta",))
        if "beta" not in params:
            raise ConfigError("manneville_pomeau needs beta")
        beta = ex.parse(params["beta"])
        if not isinstance(beta, ex.Const):
            raise ConfigError("beta must be a numeric constant")
        if not beta.value > 1:
            raise ConfigError("β must exceed 1")
        coeff = ex.const(2) ** (beta - 1)
        left = Branch(zero, half, x + coeff * x ** beta,
                      1 + beta * coeff * x ** (beta - 1), None, "left",
                      _mp_left_step(beta.value))
        right = Branch(half, one, 2 * x - 1, ex.const(2), (x + 1) / 2, "right",
                       _linear_step(2, -1))
        return PartitionedMap("manneville_pomeau", (left, right), INDIFFERENT, True,
                              "covering", True, (("beta", float(beta.value)),))

    if name == "bernoulli_markov":
        unexpected(("k",))
        k = params.get("k", 2)
        if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 2:
            raise ConfigError("bernoulli_markov needs an integer k >= 2")
        k = int(k)
        branches = []
        for i in range(k):
            lo = ex.const(Fraction(i, k))
            hi = ex.const(Fraction(i + 1, k))
            if i % 2 == 0:
                br = Branch(lo, hi, k * x - i, ex.const(k), (x + i) / k, f"up{i}",
                            _linear_step(k, -i))
            else:
                br = Branch(lo, hi, (i + 1) - k * x, ex.const(-k), ((i + 1) - x) / k,
                            f"down{i}", _linear_step(-k, i + 1))
            branches.append(br)
        return PartitionedMap("bernoulli_markov", tuple(branches), float(k), True,
                              "covering", True, (("k", k),))

    raise ConfigError(f"unknown builtin map {name!r}; choose from {sorted(BUILTIN_MAPS)}")


def map_from_config(cfg: Mapping) -> PartitionedMap:
    """Build a map from a config table.

    Either ``{builtin = "name", <params>}`` or an explicit branch list::

        branches = [{left = "0", right = "1/2", formula = "2*x"}, ...]
        expansion = 2.0            # or "indifferent-at-0"
        params = {c = 2}           # optional named constants

    ``derivative`` and ``inverse`` may be supplied per branch; the
    derivative defaults to the symbolic one.
    """
    cfg = dict(cfg)
    if "builtin" in cfg:
        name = cfg.pop("builtin")
        return make_builtin(str(name), **cfg)
    if "branches" not in cfg:
        raise ConfigError("map config needs 'builtin' or 'branches'")
    consts = cfg.get("params", {}) or {}
    branches = []
    for i, item in enumerate(cfg["branches"]):
        try:
            left = ex.parse(item["left"], consts)
            right = ex.parse(item["right"], consts)
            formula = ex.parse(item["formula"], consts)
        except KeyError as exc:
            raise ConfigError(f"branch {i} is missing {exc.args[0]!r}") from None
        if isinstance(formula, ex.BinOp) and formula.op == "%" and formula.right == ex.ONE:
            formula = formula.left
        deriv = (ex.parse(item["derivative"], consts) if "derivative" in item
                 else ex.derivative(formula))
        inverse = ex.parse(item["inverse"], consts) if "inverse" in item else None
        br = Branch(left, right, formula, deriv, inverse, item.get("label", f"b{i}"))
        # fold the "mod 1" into the formula so every raw image lies in [0, 1]
        lo, hi = br.image
        shift = math.floor(lo + 1e-12)
        if hi > shift + 1 + 1e-12:
            raise ConfigError(f"branch {i} wraps around [0, 1) more than once")
        if shift:
            offset = ex.const(shift)
            shifted_inverse = None if inverse is None else ex.substitute(inverse, ex.X + offset)
            br = Branch(left, right, ex.sub(formula, offset), deriv, shifted_inverse, br.label)
        branches.append(br)
    expansion = cfg.get("expansion")
    tmap = PartitionedMap(
        cfg.get("name", "custom"),
        tuple(branches),
        expansion if expansion is not None else 2.0,
        bool(cfg.get("distortion", True)),
        cfg.get("covering", "none"),
        bool(cfg.get("markov", False)),
        tuple(sorted((str(k), v) for k, v in consts.items())),
    )
    if expansion is None:
        lam = min(float(np.min(np.abs(br.df(np.linspace(br.a, br.b, 1025)))))
                  for br in tmap.branches)
        if not lam > 1:
            raise ConfigError("branches are not uniformly expanding; set expansion explicitly")
        tmap = PartitionedMap(tmap.name, tmap.branches, lam, tmap.distortion_flag,
                              tmap.covering_mode, tmap.markov_flag, tmap.params)
    return tmap


# -- orbits -----------------------------------------------------------------

def _as_point(x, bits: int = DEFAULT_BITS) -> PrecisePoint:
    return x if isinstance(x, PrecisePoint) else PrecisePoint.from_value(x, bits)


def evaluate(tmap: PartitionedMap, x) -> PrecisePoint:
    """``T(x)`` on the fixed-point grid of ``x``."""
    x = _as_point(x)
    return PrecisePoint(tmap.step(x.num, x.bits), x.bits)


def derivative(tmap: PartitionedMap, x) -> float:
    """``T'(x)``; raises ``AtPartitionPoint`` at a branch endpoint."""
    x = _as_point(x)
    value = x.to_fraction()
    if value == 0 or value in tmap.interior_points:
        raise AtPartitionPoint(f"x = {value} is a branch endpoint")
    br = tmap.branches[tmap.branch_of(x.num, x.bits)]
    return float(br.df(np.array([float(x)]))[0])


def required_bits(tmap: PartitionedMap, n: int) -> int:
    """Bit width needed for ``n`` exact steps: ``n log2 sup|T'| + 64``."""
    return math.ceil(n * math.log2(max(tmap.max_derivative, 1.0))) + GUARD_BITS


def _check_precision(tmap, x: PrecisePoint, n: int):
    need = required_bits(tmap, n)
    if x.bits < need:
        raise InsufficientPrecision(
            f"{n} steps of {tmap.name} need at least {need} bits, point has {x.bits}")


def _orbit_nums(tmap, x: PrecisePoint, n: int) -> Iterator[int]:
    num, bits = x.num, x.bits
    yield num
    step = tmap.step
    for _ in range(n):
        num = step(num, bits)
        yield num


def iterate_orbit(tmap: PartitionedMap, x, n: int) -> list[PrecisePoint]:
    """``(x, Tx, ..., T^n x)`` computed exactly on the grid of ``x``."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    x = _as_point(x)
    _check_precision(tmap, x, n)
    return [PrecisePoint(v, x.bits) for v in _orbit_nums(tmap, x, n)]


def orbit_floats(tmap: PartitionedMap, x, n: int) -> np.ndarray:
    """Float images of the exact orbit ``x, ..., T^n x`` (length ``n + 1``)."""
    x = _as_point(x)
    _check_precision(tmap, x, n)
    out = np.empty(n + 1)
    shift = max(x.bits - 53, 0)
    scale = 2.0 ** -(x.bits - shift)
    for k, v in enumerate(_orbit_nums(tmap, x, n)):
        out[k] = (v >> shift) * scale
    return out


def _push(br: Branch, y: float) -> float:
    return float(br.f(np.array([y]))[0])


def _pull(br: Branch, y: float) -> float:
    return float(br.inverse(np.array([y]))[0])


def cylinder_of(tmap: PartitionedMap, x, n: int) -> tuple[float, float]:
    """Cylinder of generation ``n`` containing ``x`` as a half-open ``(lo, hi)``.

    Raises ``HitsDiscontinuity`` if ``T^k x`` lands on an interior partition
    point for some ``k < n``.
    """
    if n < 1:
        raise ConfigError("generation must be at least 1")
    x = _as_point(x)
    bits = x.bits
    if n > 1:
        bits = max(bits, required_bits(tmap, n - 1))
        x = x.with_bits(bits)
    thresholds = tmap.thresholds(bits)
    exact = [(i, p) for i, p in enumerate(tmap.interior_points, start=1) if p is not None]
    nums = list(_orbit_nums(tmap, x, n - 1))
    itinerary = []
    for k, num in enumerate(nums):
        for i, p in exact:
            if num == thresholds[i] and Fraction(num, 1 << bits) == p:
                raise HitsDiscontinuity(f"T^{k} x hits the partition point {p}")
        itinerary.append(tmap.branch_of(num, bits))
    first = tmap.branches[itinerary[0]]
    lo, hi = first.a, first.b
    img = sorted((_push(first, lo), _push(first, hi)))
    for k in range(1, n):
        br = tmap.branches[itinerary[k]]
        cut_lo, cut_hi = max(img[0], br.a), min(img[1], br.b)
        if (cut_lo, cut_hi) != (img[0], img[1]):
            ends = [cut_lo, cut_hi]
            for j in reversed(range(k)):
                ends = [_pull(tmap.branches[itinerary[j]], e) for e in ends]
            lo, hi = min(ends), max(ends)
        img = sorted((_push(br, cut_lo), _push(br, cut_hi)))
    return (lo, hi)


def cylinder_endpoints(tmap: PartitionedMap, m: int, merge_tol: float = 1e-13) -> np.ndarray:
    """Sorted endpoints of all generation-``m`` cylinders.

    These are the preimages ``T^{-k}`` (``k < m``) of the partition points.
    """
    if m < 1:
        raise ConfigError("generation must be at least 1")
    base = np.unique(np.append(tmap.lefts, 1.0))
    pts = base
    for _ in range(m - 1):
        parts = [base]
        for br in tmap.branches:
            lo, hi = br.image
            sel = pts[(pts > lo) & (pts < hi)]
            if sel.size:
                parts.append(br.inverse(sel))
        pts = np.sort(np.concatenate(parts))
        keep = np.concatenate(([True], np.diff(pts) > merge_tol))
        pts = pts[keep]
    return pts
