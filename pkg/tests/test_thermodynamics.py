import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shrinklab.errors import BracketTooWide, ConfigError, IndifferentMap
from shrinklab.interval_maps import make_builtin
from shrinklab.measures import DiscreteMeasure
from shrinklab.thermodynamics import (Potential, ball_scaling_check, check_contracting_potential,
                                      conformal_check, gibbs_model, potential_from_config,
                                      pressure, riesz_potential_bound, s0_estimate,
                                      stationary_density, theta_m, ulam_matrix)

GOLDEN = (1 + 5 ** 0.5) / 2
BERNOULLI_S0 = math.log(4 / 3) / math.log(2)


def parry_two_step(x):
    """Golden-mean Parry density: proportional to 1 + 1/β on [0, 1/β) and 1 after."""
    norm = 1 + GOLDEN ** -2
    return np.where(np.asarray(x) < 1 / GOLDEN, (1 + 1 / GOLDEN) / norm, 1 / norm)


# -- Ulam matrices and densities -------------------------------------------

def test_ulam_small_grids(doubling):
    np.testing.assert_allclose(ulam_matrix(doubling, 2).matrix.toarray(), [[.5, .5], [.5, .5]])
    want = [[.5, .5, 0, 0], [0, 0, .5, .5], [.5, .5, 0, 0], [0, 0, .5, .5]]
    np.testing.assert_allclose(ulam_matrix(doubling, 4).matrix.toarray(), want, atol=1e-15)


@pytest.mark.parametrize("name,params", [("doubling", {}), ("beta_map", {"beta": "golden"}),
                                         ("beta_map", {"beta": 2.5}),
                                         ("manneville_pomeau", {"beta": 1.5}),
                                         ("bernoulli_markov", {"k": 3})])
def test_unweighted_rows_are_stochastic(name, params):
    op = ulam_matrix(make_builtin(name, **params), 256)
    assert op.matrix.data.min() >= 0
    np.testing.assert_allclose(op.row_sums(), 1.0, atol=1e-12)


def test_ulam_rejects_tiny_grid(doubling):
    with pytest.raises(ConfigError):
        ulam_matrix(doubling, 1)


@pytest.mark.parametrize("name,params", [("doubling", {}), ("bernoulli_markov", {"k": 2})])
def test_lebesgue_is_invariant(name, params):
    dens = stationary_density(ulam_matrix(make_builtin(name, **params), 1024))
    np.testing.assert_allclose(dens.values, 1.0, atol=1e-12)
    assert dens.c_h == pytest.approx(1.0, abs=1e-12)


def test_golden_density_matches_parry(golden):
    dens = stationary_density(ulam_matrix(golden, 2 ** 12))
    mids = 0.5 * (dens.edges[:-1] + dens.edges[1:])
    l1 = np.sum(np.abs(dens.values - parry_two_step(mids)) * np.diff(dens.edges))
    assert l1 < 2e-2
    assert dens.values[100] == pytest.approx(1.17082, abs=3e-3)
    assert dens.values[-100] == pytest.approx(0.72361, abs=3e-3)


def test_density_is_a_normalised_fixed_point(golden):
    op = ulam_matrix(golden, 2 ** 10)
    dens = stationary_density(op)
    p = dens.values * np.diff(dens.edges)
    assert abs(p.sum() - 1) < 1e-10
    assert np.abs(op.matrix.T @ p - p).sum() <= 1e-10
    assert dens.measure.total == pytest.approx(1.0, abs=1e-10)


def test_ulam_density_converges_with_refinement():
    tmap = make_builtin("beta_map", beta=2.5)
    dens = [stationary_density(ulam_matrix(tmap, 2 ** k)) for k in range(6, 12)]

    def l1(a, b):
        fine = np.repeat(a.values, 2)
        return float(np.sum(np.abs(fine - b.values)) / b.values.size)

    gaps = [l1(a, b) for a, b in zip(dens, dens[1:])]
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))


def test_golden_density_error_shrinks(golden):
    def err(k):
        dens = stationary_density(ulam_matrix(golden, 2 ** k))
        mids = 0.5 * (dens.edges[:-1] + dens.edges[1:])
        return float(np.sum(np.abs(dens.values - parry_two_step(mids)) * np.diff(dens.edges)))

    assert err(6) > err(9) > err(12)


# -- pressure ---------------------------------------------------------------

def test_pressure_examples(doubling):
    assert pressure(doubling, Potential.zero()).value == pytest.approx(math.log(2), abs=1e-6)
    assert pressure(doubling, Potential.geometric_potential(1.0)).value == pytest.approx(0, abs=1e-6)
    assert pressure(doubling, Potential.bernoulli(0.3)).value == pytest.approx(0, abs=1e-6)


def test_pressure_bracket_is_reported(golden):
    p = pressure(golden, Potential.zero(), n_max=2000, bins=4096)
    assert p.lower <= p.upper
    assert p.value == pytest.approx(math.log(GOLDEN), abs=2e-3)


def test_pressure_bracket_too_wide(golden):
    with pytest.raises(BracketTooWide) as info:
        pressure(golden, Potential.zero(), n_max=3, bins=64)
    assert info.value.lower < info.value.upper


@settings(max_examples=15)
@given(c=st.floats(min_value=-3, max_value=3), p=st.floats(min_value=0.05, max_value=0.95))
def test_pressure_shift(c, p):
    tmap = make_builtin("doubling")
    base = Potential.bernoulli(p)
    diff = pressure(tmap, base.shifted(c), n_max=200, bins=256).value \
        - pressure(tmap, base, n_max=200, bins=256).value
    assert diff == pytest.approx(c, abs=1e-8)


def test_pressure_shift_by_037(golden):
    pot = Potential.from_pieces(["x", "1 - x"])
    a = pressure(golden, pot, n_max=600, bins=2048).value
    b = pressure(golden, pot.shifted(0.37), n_max=600, bins=2048).value
    assert b - a == pytest.approx(0.37, abs=1e-8)


@settings(max_examples=15)
@given(st.lists(st.floats(min_value=-2, max_value=2), min_size=2, max_size=2),
       st.lists(st.floats(min_value=0, max_value=1), min_size=2, max_size=2))
def test_pressure_is_monotone(a, bump):
    tmap = make_builtin("doubling")
    low = Potential.from_pieces([repr(v) for v in a])
    high = Potential.from_pieces([repr(v + w) for v, w in zip(a, bump)])
    assert pressure(tmap, low, 200, 256).value <= pressure(tmap, high, 200, 256).value + 1e-8


# -- contracting potentials -------------------------------------------------

def test_contracting_examples(doubling):
    assert check_contracting_potential(doubling, Potential.zero(), 1).holds
    bern = check_contracting_potential(doubling, Potential.bernoulli(0.25), 1)
    assert bern.holds
    assert bern.sup_exp_birkhoff == pytest.approx(0.75)
    assert bern.inf_transfer == pytest.approx(1.0)


def test_contracting_large_step_potential(doubling):
    """Both sides evaluated directly: sup e^φ = e^10 and L_φ1 = e^10 + 1."""
    pot = potential_from_config({"pieces": ["10", "0"]})
    check = check_contracting_potential(doubling, pot, 1)
    assert check.sup_exp_birkhoff == pytest.approx(math.exp(10), rel=1e-12)
    assert check.inf_transfer == pytest.approx(math.exp(10) + 1, rel=1e-12)
    assert check.holds == (math.exp(10) < math.exp(10) + 1)
    assert check.gap == pytest.approx(1.0, rel=1e-6)


# -- Gibbs measures ---------------------------------------------------------

def test_gibbs_bernoulli(doubling):
    model = gibbs_model(doubling, Potential.bernoulli(0.25), bins=2 ** 12)
    assert model.pressure == pytest.approx(0, abs=1e-10)
    assert model.mu.total == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(model.mu.masses, model.nu.masses / model.nu.total, atol=1e-12)
    assert model.nu.interval_mass(0, 0.5) == pytest.approx(0.25, abs=1e-9)
    lo, hi = model.h_bounds
    assert 0 < lo <= hi < np.inf


def test_conformal_examples(doubling, golden):
    p = 0.25
    bern = gibbs_model(doubling, Potential.bernoulli(p), bins=2 ** 12)
    assert conformal_check(bern, doubling, [(0.0, 0.25)]) < 1e-9
    leb = gibbs_model(doubling, Potential.geometric_potential(1.0), bins=2 ** 10)
    assert conformal_check(leb, doubling, [(0.5, 0.75)]) < 1e-12
    gold = gibbs_model(golden, Potential.geometric_potential(1.0), bins=2 ** 14)
    assert conformal_check(gold, golden, [(0.0, GOLDEN ** -2)]) < 1e-3


def test_conformal_violation_shrinks_with_bins(doubling):
    sets = [(0.1, 0.3), (0.55, 0.8)]
    pot = Potential.bernoulli(0.25)
    v = [conformal_check(gibbs_model(doubling, pot, bins=2 ** k), doubling, sets)
         for k in (8, 10, 12)]
    assert v[0] > v[1] > v[2]


def test_conformal_rejects_sets_crossing_branches(doubling):
    model = gibbs_model(doubling, Potential.zero(), bins=64)
    with pytest.raises(ConfigError):
        conformal_check(model, doubling, [(0.4, 0.6)])


# -- cylinder exponents -----------------------------------------------------

@pytest.mark.parametrize("m", [1, 2, 5, 12])
def test_theta_lebesgue_closed_form(doubling, m):
    assert theta_m(doubling, Potential.geometric_potential(1.0), 0.0, m) == pytest.approx(
        (m - 1) / m, abs=1e-12)
    assert theta_m(doubling, Potential.zero(), math.log(2), m) == pytest.approx(
        (m - 1) / m, abs=1e-12)


def test_theta_bernoulli_hand_formula(doubling):
    want = (math.log(2) + 20 * math.log(0.75)) / (-20 * math.log(2))
    assert theta_m(doubling, Potential.bernoulli(0.25), 0.0, 20) == pytest.approx(want, abs=1e-10)
    assert want == pytest.approx(0.365, abs=1e-3)


def test_theta_rejects_indifferent_map():
    with pytest.raises(IndifferentMap):
        theta_m(make_builtin("manneville_pomeau", beta=2), Potential.zero(), 0.0, 3)


@pytest.mark.parametrize("pot,want", [(Potential.geometric_potential(1.0), 1.0),
                                      (Potential.bernoulli(0.25), BERNOULLI_S0),
                                      (Potential.bernoulli(0.5), 1.0)])
def test_s0_examples(doubling, pot, want):
    P = pressure(doubling, pot, n_max=200, bins=256).value
    est = s0_estimate(doubling, pot, P, [10, 20])
    assert est.value == pytest.approx(want, abs=1e-8)
    assert set(est.thetas) == {10, 20}


# -- Frostman-type checks ---------------------------------------------------

def test_ball_scaling_lebesgue():
    check = ball_scaling_check(DiscreteMeasure.lebesgue(1024), 1.0)
    assert check.c_s == pytest.approx(1.0, abs=1e-9)
    assert check.bounded


def test_ball_scaling_bernoulli(doubling):
    mu = gibbs_model(doubling, Potential.bernoulli(0.25), bins=2 ** 14).mu
    at = ball_scaling_check(mu, 0.415)
    assert at.bounded and at.per_generation.max() < 1.5
    above = ball_scaling_check(mu, 0.6)
    assert not above.bounded
    assert above.excess == pytest.approx(0.6 - BERNOULLI_S0, abs=0.01)
    gens = np.arange(above.per_generation.size)
    np.testing.assert_allclose(above.per_generation[1:],
                               0.75 ** gens[1:] * 2.0 ** (0.6 * gens[1:]), rtol=1e-9)


def test_riesz_potential_lebesgue():
    check = riesz_potential_bound(DiscreteMeasure.lebesgue(512), 0.5, 0.99, 1.0)
    assert check.sup_value == pytest.approx(2 * math.sqrt(2), rel=1e-12)
    assert check.argmax == pytest.approx(0.5)
    assert check.stated_bound == pytest.approx(0.5 / 0.49)
    assert not check.within_stated
    assert check.within_layer_cake


def test_riesz_potential_half_interval_at_one():
    half = DiscreteMeasure.uniform_on(0.0, 0.5, bins=64)
    check = riesz_potential_bound(half, 0.5, 0.9, 2.0, grid=[1.0])
    # 2 ∫_0^{1/2} (1-y)^{-1/2} dy = 4 (1 - sqrt(1/2))
    assert check.sup_value == pytest.approx(4 * (1 - math.sqrt(0.5)), rel=1e-12)


def test_riesz_potential_small_t_tends_to_mass():
    check = riesz_potential_bound(DiscreteMeasure.lebesgue(128), 1e-9, 0.5, 1.0)
    assert check.sup_value == pytest.approx(1.0, abs=1e-7)
