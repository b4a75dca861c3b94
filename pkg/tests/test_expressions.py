from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shrinklab import expressions as ex
from shrinklab.errors import ConfigError


def test_parse_reads_literals_exactly():
    e = ex.parse("0.1*x + 1/3")
    assert ex.eval_exact(e, Fraction(0)) == Fraction(1, 3)
    assert ex.eval_exact(e, Fraction(1)) == Fraction(1, 10) + Fraction(1, 3)


def test_caret_and_pow_and_mod():
    assert ex.eval_exact(ex.parse("x^2"), Fraction(3, 2)) == Fraction(9, 4)
    assert ex.eval_exact(ex.parse("pow(x, 3)"), Fraction(1, 2)) == Fraction(1, 8)
    assert ex.eval_exact(ex.parse("(3*x) mod 1"), Fraction(1, 2)) == Fraction(1, 2)


def test_named_parameters():
    e = ex.parse("x + 2**(beta - 1) * x**beta", {"beta": 2})
    assert ex.eval_exact(e, Fraction(1, 4)) == Fraction(3, 8)


@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "sin(x)", "lambda: 1", "y + 1", "x +"])
def test_rejects_anything_outside_the_grammar(text):
    with pytest.raises(ConfigError):
        ex.parse(text)


def test_polynomial_extraction():
    assert ex.to_polynomial(ex.parse("(x + 1)*(x - 1)")) == (Fraction(-1), Fraction(0), Fraction(1))
    assert ex.to_polynomial(ex.parse("x**0.5")) is None


def test_numpy_compilation_matches_exact():
    e = ex.parse("3*x**2 - x/7 + 2")
    xs = np.linspace(0, 1, 11)
    got = ex.to_numpy(e)(xs)
    want = [float(ex.eval_exact(e, Fraction(v).limit_denominator(10))) for v in xs]
    np.testing.assert_allclose(got, want, rtol=1e-14)


def test_constant_compiles_to_writable_array():
    out = ex.to_numpy(ex.parse("5"))(np.zeros(4))
    out[0] = 1.0
    assert out.tolist() == [1.0, 5.0, 5.0, 5.0]


coeffs = st.lists(st.fractions(min_value=-5, max_value=5, max_denominator=20), min_size=1, max_size=5)


@given(coeffs, st.fractions(min_value=0, max_value=1, max_denominator=50))
def test_derivative_of_polynomial_is_exact(cs, x):
    poly = ex.ZERO
    for k, c in enumerate(cs):
        poly = ex.add(poly, ex.mul(ex.const(c), ex.power(ex.X, ex.const(k))))
    d = ex.derivative(poly)
    want = sum(k * c * x ** (k - 1) for k, c in enumerate(cs) if k > 0)
    assert ex.eval_exact(d, x) == want
