import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from shrinklab.errors import ConfigError, EstimatorMismatch, InsufficientSignal
from shrinklab.interval_maps import iterate_orbit, make_builtin
from shrinklab.measures import DiscreteMeasure
from shrinklab.precise import PrecisePoint
from shrinklab.statistics import (BVObservable, CorrelationSeries, bv_norm, correlation,
                                  correlation_series, decay_profile, decay_transfer_bound,
                                  estimate_correlation, exact_dyadic_covariance, first_return,
                                  fit_growth_exponent, return_sum_exponent)

IDENTITY = BVObservable.expression("x")


def quad_doubling_covariance(f, g, lag):
    """Oracle: on each cell [k, k+1)/2^n the n-th doubling iterate is 2^n x - k."""
    N = 2 ** lag
    total = 0.0
    for k in range(N):
        a, b = k / N, (k + 1) / N
        brk = [float(p[0]) for p in g.pieces if a < p[0] < b]
        brk += [(float(p[0]) + k) / N for p in f.pieces if 0 < p[0] < 1]
        total += quad(lambda x: f(np.array([N * x - k]))[0] * g(np.array([x]))[0], a, b,
                      points=brk or None, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    mean_f = quad(lambda x: f(np.array([x]))[0], 0, 1, limit=200)[0]
    mean_g = quad(lambda x: g(np.array([x]))[0], 0, 1, limit=200)[0]
    return total - mean_f * mean_g


def random_observable(rng):
    cuts = sorted({Fraction(int(c), 16) for c in rng.integers(1, 16, rng.integers(0, 3))})
    ends = [Fraction(0)] + cuts + [Fraction(1)]
    pieces = []
    for a, b in zip(ends, ends[1:]):
        c0, c1, c2 = (round(float(v), 3) for v in rng.uniform(-1, 1, 3))
        pieces.append((a, b, f"{c0} + {c1}*x + {c2}*x^2"))
    return BVObservable.piecewise(pieces)


# -- BV norms ---------------------------------------------------------------

@pytest.mark.parametrize("g,l1,var", [(BVObservable.indicator(0, "1/2"), 0.5, 1.0),
                                      (IDENTITY, 0.5, 1.0),
                                      (BVObservable.indicator("1/4", "3/4"), 0.5, 2.0)])
def test_bv_norm_examples(g, l1, var):
    norm = bv_norm(g)
    assert norm.l1 == pytest.approx(l1, abs=1e-12)
    assert norm.variation == pytest.approx(var, abs=1e-12)
    assert norm.combined == pytest.approx(l1 + var, abs=1e-12)


def test_variation_counts_interior_turns_and_jumps():
    g = BVObservable.piecewise([(0, "1/2", "(x - 1/4)^2"), ("1/2", 1, "3")])
    # down 1/16, up 1/16, then a jump from 1/16 to 3
    assert g.variation == pytest.approx(1 / 8 + (3 - 1 / 16), abs=1e-12)


def test_l1_against_weighted_measure():
    half = DiscreteMeasure.uniform_on(0.5, 1.0, bins=64)
    assert bv_norm(IDENTITY, half).l1 == pytest.approx(0.75, abs=1e-12)


# -- correlations -----------------------------------------------------------

def test_exact_dyadic_examples(doubling):
    ind = BVObservable.indicator(0, "1/2")
    for n in range(1, 6):
        assert exact_dyadic_covariance(ind, ind, n) == 0
    assert exact_dyadic_covariance(IDENTITY, IDENTITY, 2) == Fraction(1, 48)
    assert correlation(doubling, IDENTITY, IDENTITY, 2, estimator="exact_dyadic") == 1 / 48


@pytest.mark.parametrize("n", range(0, 9))
def test_identity_covariance_closed_form(n):
    assert exact_dyadic_covariance(IDENTITY, IDENTITY, n) == Fraction(1, 12 * 2 ** n)


def test_exact_dyadic_matches_quadrature_oracle():
    rng = np.random.default_rng(5)
    for _ in range(8):
        f, g = random_observable(rng), random_observable(rng)
        for n in (0, 1, 3):
            want = quad_doubling_covariance(f, g, n)
            assert float(exact_dyadic_covariance(f, g, n)) == pytest.approx(want, abs=1e-11)


def test_exact_and_monte_carlo_agree_within_three_sigma(doubling):
    rng = np.random.default_rng(11)
    lebesgue = DiscreteMeasure.lebesgue(1024)
    for i in range(20):
        f, g = random_observable(rng), random_observable(rng)
        n = int(rng.integers(0, 4))
        exact = float(exact_dyadic_covariance(f, g, n))
        mc = estimate_correlation(doubling, f, g, n, lebesgue, "monte_carlo",
                                  samples=20_000, seed=i)
        assert abs(mc.signed - exact) <= 1.5 * mc.noise_floor


def test_quadrature_matches_exact(doubling):
    lebesgue = DiscreteMeasure.lebesgue(4096)
    series = correlation_series(doubling, IDENTITY, IDENTITY, 8, lebesgue, bins=4096)
    want = np.array([1 / (12 * 2 ** n) for n in range(9)])
    np.testing.assert_allclose(series.values[:4], want[:4], rtol=1e-5)
    # the grid-halving floor bounds the discretisation error
    assert np.all(np.abs(series.values - want) <= series.noise_floor)


def test_variance_at_lag_zero(doubling):
    lebesgue = DiscreteMeasure.lebesgue(2048)
    assert correlation(doubling, IDENTITY, IDENTITY, 0, lebesgue, bins=2048) == pytest.approx(
        1 / 12, rel=1e-6)


@pytest.mark.parametrize("estimator", ["quadrature", "monte_carlo"])
def test_constant_observable_decorrelates(golden, estimator):
    est = estimate_correlation(golden, IDENTITY, BVObservable.constant(3), 2,
                               estimator=estimator, samples=5000, bins=1024)
    assert est.value <= max(est.noise_floor, 1e-12)


def test_exact_dyadic_rejects_other_maps(golden, doubling):
    with pytest.raises(EstimatorMismatch):
        correlation(golden, IDENTITY, IDENTITY, 1, estimator="exact_dyadic")
    with pytest.raises(EstimatorMismatch):
        correlation(doubling, BVObservable.expression("x^0.5"), IDENTITY, 1,
                    estimator="exact_dyadic")
    with pytest.raises(ConfigError):
        correlation(doubling, IDENTITY, IDENTITY, 1, estimator="bogus")


def test_series_values_nonnegative_and_exact_floor_zero(doubling):
    s = correlation_series(doubling, IDENTITY, BVObservable.expression("x^2"), 6,
                           estimator="exact_dyadic")
    assert np.all(s.values >= 0)
    assert np.all(s.noise_floor == 0)


# -- decay profiles ---------------------------------------------------------

def _series(values, floor=0.0):
    values = np.asarray(values, dtype=float)
    return CorrelationSeries(np.arange(values.size), values, "synthetic",
                             np.full(values.size, floor))


def test_decay_profile_geometric():
    prof = decay_profile(_series(2.0 ** -np.arange(60)))
    assert prof.fit_rate == pytest.approx(-math.log(2), abs=1e-9)
    assert prof.C_sum == pytest.approx(2.0, abs=1e-9)


@settings(max_examples=30)
@given(rate=st.floats(min_value=0.05, max_value=3.0), scale=st.floats(min_value=1e-3, max_value=1e3))
def test_decay_profile_recovers_exact_rate(rate, scale):
    prof = decay_profile(_series(scale * np.exp(-rate * np.arange(12))))
    assert prof.fit_rate == pytest.approx(-rate, abs=1e-9)


def test_decay_profile_doubling_exact(doubling):
    s = correlation_series(doubling, IDENTITY, IDENTITY, 20, estimator="exact_dyadic")
    assert decay_profile(s).fit_rate == pytest.approx(-math.log(2), abs=1e-6)


def test_decay_profile_polynomial_sum():
    lags = np.arange(1, 101)
    series = CorrelationSeries(lags, lags ** -2.0, "synthetic", np.zeros(lags.size))
    assert decay_profile(series).C_sum == pytest.approx(math.pi ** 2 / 6, rel=0.05)


def test_decay_profile_needs_signal():
    with pytest.raises(InsufficientSignal):
        decay_profile(_series([1, 0.5, 0.25, 1e-9, 1e-9, 1e-9], floor=1e-6))


def test_decay_transfer_bound():
    assert decay_transfer_bound(0, 1, 0) == 1
    assert decay_transfer_bound(2, 1, 0.5) == 2.5
    with pytest.raises(ConfigError):
        decay_transfer_bound(-1, 1, 0)


# -- return times -----------------------------------------------------------

@pytest.fixture(scope="module")
def mp2():
    return make_builtin("manneville_pomeau", beta=2)


def test_first_return_examples(mp2):
    assert first_return(mp2, "0.75").R == 1
    r = first_return(mp2, "0.6")
    assert r.R == 4
    assert float(r.landing) == pytest.approx(0.81838848, abs=1e-12)
    assert first_return(mp2, "0.999").R == 1


def test_first_return_rejects_left_half(mp2):
    with pytest.raises(ConfigError):
        first_return(mp2, "0.3")
    with pytest.raises(ConfigError):
        first_return(make_builtin("doubling"), "0.6")


@settings(max_examples=25)
@given(u=st.integers(min_value=2 ** 50, max_value=2 ** 60 - 1))
def test_two_returns_compose(u):
    tmap = make_builtin("manneville_pomeau", beta=2)
    bits = 2048
    # keep x at least 2^-10 above 1/2 so the excursion near 0 stays short
    x = PrecisePoint((1 << (bits - 1)) + (u << (bits - 61)) + 1, bits)
    first = first_return(tmap, x)
    second = first_return(tmap, first.landing)
    orbit = iterate_orbit(tmap, x, first.R + second.R)
    assert orbit[-1].num == second.landing.num
    assert orbit[first.R].num == first.landing.num


def test_growth_exponent_of_exact_squares():
    k = np.arange(1, 10_001)
    gamma, _ = fit_growth_exponent(np.cumsum(2 * k - 1))
    assert gamma == pytest.approx(2.0, abs=1e-3)


def test_return_sum_exponent_integrable_case():
    r = return_sum_exponent(make_builtin("manneville_pomeau", beta=1.5), N_returns=10_000, seed=0)
    assert 0.95 <= r.gamma <= 1.15
    assert np.all(r.series.times >= 1)
    assert np.all(np.diff(r.series.partial_sums) > 0)


def test_return_sum_exponent_heavy_tail():
    r = return_sum_exponent(make_builtin("manneville_pomeau", beta=3), N_returns=10_000, seed=0)
    assert abs(r.gamma - 2.0) <= 0.4


def test_fixed_and_float_orbits_agree_early():
    tmap = make_builtin("manneville_pomeau", beta=1.5)
    x = PrecisePoint.from_value("0.7182818", 8192)
    fixed = return_sum_exponent(tmap, x, 1000, arithmetic="fixed")
    float_ = return_sum_exponent(tmap, 0.7182818, 1000)
    head = 8
    np.testing.assert_array_equal(fixed.series.times[:head], float_.series.times[:head])
    assert 0.95 <= fixed.gamma <= 1.15


def test_mean_return_time_stabilises_or_grows():
    light = return_sum_exponent(make_builtin("manneville_pomeau", beta=1.5),
                                N_returns=40_000, seed=0).series.partial_sums
    means = [light[n - 1] / n for n in (10_000, 20_000, 40_000)]
    assert abs(means[2] - means[1]) < 0.1 * means[1]
    heavy = return_sum_exponent(make_builtin("manneville_pomeau", beta=3),
                                N_returns=40_000, seed=0).series.partial_sums
    means = [heavy[n - 1] / n for n in (1000, 10_000, 40_000)]
    assert means[0] < means[1] < means[2]


def test_return_sum_validates_inputs(mp2):
    with pytest.raises(ConfigError):
        return_sum_exponent(mp2, N_returns=100)
    with pytest.raises(ConfigError):
        return_sum_exponent(make_builtin("doubling"))
