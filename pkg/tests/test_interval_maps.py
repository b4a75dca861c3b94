from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from shrinklab.errors import AtPartitionPoint, ConfigError, HitsDiscontinuity, InsufficientPrecision
from shrinklab.interval_maps import (cylinder_of, derivative, evaluate, iterate_orbit,
                                     make_builtin, map_from_config, orbit_floats, required_bits)
from shrinklab.precise import PrecisePoint

GOLDEN = (1 + 5 ** 0.5) / 2

BUILTINS = [
    ("doubling", {}),
    ("beta_map", {"beta": "golden"}),
    ("beta_map", {"beta": 2.5}),
    ("manneville_pomeau", {"beta": 2}),
    ("manneville_pomeau", {"beta": 1.5}),
    ("bernoulli_markov", {"k": 3}),
]


def _fraction_mp_orbit(x, n):
    """Exact rational iteration of x + 2x^2 / 2x - 1."""
    out = [x]
    for _ in range(n):
        x = x + 2 * x * x if x < Fraction(1, 2) else 2 * x - 1
        out.append(x)
    return out


# -- construction -----------------------------------------------------------

def test_doubling_branches():
    d = make_builtin("doubling")
    assert [(b.a, b.b) for b in d.branches] == [(0.0, 0.5), (0.5, 1.0)]
    assert [str(b.formula) for b in d.branches] == ["2 * x", "2 * x - 1"]


def test_manneville_pomeau_formulas():
    mp = make_builtin("manneville_pomeau", beta=2)
    left, right = mp.branches
    xs = np.linspace(0, 0.5, 7)
    np.testing.assert_allclose(left.f(xs), xs + 2 * xs ** 2, rtol=1e-15)
    assert str(right.formula) == "2 * x - 1"
    assert mp.is_indifferent


def test_golden_partition():
    g = make_builtin("beta_map", beta="golden")
    assert g.branches[1].a == pytest.approx(1 / GOLDEN, rel=1e-15)
    assert g(np.array([0.7]))[0] == pytest.approx(GOLDEN * 0.7 - 1, rel=1e-14)


@pytest.mark.parametrize("name,params", [("manneville_pomeau", {"beta": 1}),
                                         ("beta_map", {"beta": 0.9}),
                                         ("bernoulli_markov", {"k": 1}),
                                         ("doubling", {"beta": 2}),
                                         ("no_such_map", {})])
def test_rejects_bad_builtins(name, params):
    with pytest.raises(ConfigError):
        make_builtin(name, **params)


def test_beta_message():
    with pytest.raises(ConfigError, match="β must exceed 1"):
        make_builtin("manneville_pomeau", beta=0.5)


def test_config_branches_with_mod_match_builtin():
    cfg = {"branches": [{"left": "0", "right": "1/2", "formula": "2*x mod 1"},
                         {"left": "1/2", "right": "1", "formula": "2*x mod 1"}]}
    m = map_from_config(cfg)
    d = make_builtin("doubling")
    x = PrecisePoint.random(np.random.default_rng(1), 256)
    assert [p.num for p in iterate_orbit(m, x, 150)] == [p.num for p in iterate_orbit(d, x, 150)]
    assert cylinder_of(m, 0.3, 3) == pytest.approx(cylinder_of(d, 0.3, 3), abs=1e-15)


def test_config_rejects_gaps_and_wrapping():
    with pytest.raises(ConfigError):
        map_from_config({"branches": [{"left": "0", "right": "0.4", "formula": "2*x"},
                                      {"left": "1/2", "right": "1", "formula": "2*x-1"}]})
    with pytest.raises(ConfigError):
        map_from_config({"branches": [{"left": "0", "right": "1", "formula": "3*x"}]})


# -- evaluation -------------------------------------------------------------

def test_evaluate_examples():
    d = make_builtin("doubling")
    assert float(evaluate(d, PrecisePoint.from_value("0.3"))) == pytest.approx(0.6, abs=1e-15)
    mp = make_builtin("manneville_pomeau", beta=2)
    assert evaluate(mp, PrecisePoint.from_value("1/4")).to_fraction() == Fraction(3, 8)
    g = make_builtin("beta_map", beta="golden")
    assert float(evaluate(g, PrecisePoint.from_value("0.7"))) == pytest.approx(0.13262, abs=1e-5)


@pytest.mark.parametrize("name,params", BUILTINS)
def test_images_stay_in_unit_interval(name, params, rng):
    tmap = make_builtin(name, **params)
    xs = rng.random(10_000)
    ys = tmap(xs)
    assert np.all((ys >= 0) & (ys < 1))
    for x in xs[:50]:
        y = evaluate(tmap, PrecisePoint.from_value(float(x), 256))
        assert 0 <= y.num < 1 << 256


@pytest.mark.parametrize("name,params", BUILTINS)
def test_fast_path_matches_mpmath_fallback(name, params, rng):
    """Builtin integer steps agree with the generic mpmath evaluation."""
    tmap = make_builtin(name, **params)
    bits = 512
    full = 1 << bits
    for _ in range(200):
        num = int(rng.integers(0, 2 ** 62)) << (bits - 62)
        br = tmap.branches[tmap.branch_of(num, bits)]
        with mpmath.workprec(bits + 64):
            from shrinklab import expressions as ex
            y = ex.eval_mp(br.formula, mpmath.ldexp(mpmath.mpf(num), -bits))
            want = int(mpmath.floor(mpmath.ldexp(y, bits))) % full
        got = tmap.step(num, bits)
        assert abs(got - want) <= 1


def test_derivative_examples():
    d = make_builtin("doubling")
    mp = make_builtin("manneville_pomeau", beta=2)
    assert derivative(d, 0.37) == 2.0
    assert derivative(mp, 0.25) == 2.0
    assert derivative(mp, 1e-12) == pytest.approx(1.0, abs=1e-11)
    with pytest.raises(AtPartitionPoint):
        derivative(d, 0.5)
    with pytest.raises(AtPartitionPoint):
        derivative(mp, 0.0)


@pytest.mark.parametrize("name,params", BUILTINS)
def test_derivative_matches_finite_differences(name, params, rng):
    tmap = make_builtin(name, **params)
    h = 1e-8
    for br in tmap.branches:
        margin = 1e-6
        xs = rng.uniform(br.a + margin, br.b - margin, 1000)
        fd = (br.f(xs + h) - br.f(xs - h)) / (2 * h)
        np.testing.assert_allclose(tmap.deriv(xs), fd, rtol=1e-6)


# -- orbits -----------------------------------------------------------------

def test_orbit_examples():
    d = make_builtin("doubling")
    third = iterate_orbit(d, PrecisePoint.from_value("1/3"), 4)
    np.testing.assert_allclose([float(p) for p in third], [1/3, 2/3, 1/3, 2/3, 1/3], atol=1e-15)
    np.testing.assert_allclose(orbit_floats(d, "0.3", 2), [0.3, 0.6, 0.2], atol=1e-15)


def test_manneville_pomeau_orbit_against_rationals():
    mp = make_builtin("manneville_pomeau", beta=2)
    want = [float(v) for v in _fraction_mp_orbit(Fraction(3, 5), 4)]
    np.testing.assert_allclose(orbit_floats(mp, "0.6", 4), want, atol=1e-14)
    assert want[-1] == pytest.approx(0.81838848, abs=1e-12)


def test_doubling_orbit_is_a_bit_shift(rng):
    d = make_builtin("doubling")
    x = PrecisePoint.random(rng, 1024)
    orbit = iterate_orbit(d, x, 500)
    mask = (1 << 1024) - 1
    assert all(p.num == (x.num << k) & mask for k, p in enumerate(orbit))


def test_precision_rule_is_enforced():
    d = make_builtin("doubling")
    assert required_bits(d, 960) == 1024
    iterate_orbit(d, PrecisePoint.from_value("0.3"), 960)
    with pytest.raises(InsufficientPrecision):
        iterate_orbit(d, PrecisePoint.from_value("0.3"), 961)


# -- cylinders --------------------------------------------------------------

def _brute_force_cylinder(tmap, x, n, grid=1_000_000):
    ys = (np.arange(grid) + 0.5) / grid
    itin = []
    z = ys.copy()
    for _ in range(n):
        itin.append(tmap.branch_index(z))
        z = tmap(z)
    itin = np.array(itin)
    k = int(x * grid)
    same = np.all(itin == itin[:, [k]], axis=0)
    lo = k
    while lo > 0 and same[lo - 1]:
        lo -= 1
    hi = k
    while hi < grid - 1 and same[hi + 1]:
        hi += 1
    return lo / grid, (hi + 1) / grid


def test_cylinder_examples():
    d = make_builtin("doubling")
    assert cylinder_of(d, 0.3, 2) == (0.25, 0.5)
    assert cylinder_of(d, 0.3, 1) == (0.0, 0.5)


def test_golden_cylinder_against_grid_scan():
    g = make_builtin("beta_map", beta="golden")
    lo, hi = cylinder_of(g, "0.9", 2)
    blo, bhi = _brute_force_cylinder(g, 0.9, 2)
    assert lo == pytest.approx(blo, abs=2e-6) and hi == pytest.approx(bhi, abs=2e-6)
    assert lo == pytest.approx(1 / GOLDEN, abs=1e-12) and hi == pytest.approx(1.0)


def test_cylinder_flags_partition_hits():
    with pytest.raises(HitsDiscontinuity):
        cylinder_of(make_builtin("doubling"), "1/4", 3)


@pytest.mark.parametrize("name,params", [b for b in BUILTINS if b[0] != "manneville_pomeau"])
@given(x=st.floats(min_value=0.001, max_value=0.999), n=st.integers(1, 19))
def test_cylinders_nest_and_shrink(name, params, x, n):
    tmap = make_builtin(name, **params)
    try:
        outer = cylinder_of(tmap, x, n)
        inner = cylinder_of(tmap, x, n + 1)
    except HitsDiscontinuity:
        return
    tol = 1e-12
    assert outer[0] - tol <= inner[0] <= x <= inner[1] <= outer[1] + tol
    assert inner[1] - inner[0] <= tmap.expansion_lambda ** -(n + 1) * (1 + 1e-9) + tol
