import math

import numpy as np
import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from spatial_tsr.errors import DomainError
from spatial_tsr.specfun import bessel_k, ln_gamma, log_bessel_k, trigamma, trigamma_diff


@pytest.mark.parametrize("x, expected", [(1.0, 0.0), (0.5, 0.5 * math.log(math.pi)), (10.0, math.log(362880.0))])
def test_ln_gamma_known_values(x, expected):
    assert ln_gamma(x) == pytest.approx(expected, abs=1e-13)


def test_ln_gamma_rejects_nonpositive():
    with pytest.raises(DomainError):
        ln_gamma(0.0)
    with pytest.raises(DomainError):
        ln_gamma(np.array([1.0, -2.0]))


def test_trigamma_closed_forms():
    assert trigamma(1.0) == pytest.approx(math.pi**2 / 6, rel=1e-14)
    assert trigamma(0.5) == pytest.approx(math.pi**2 / 2, rel=1e-14)
    # 1/x + 1/(2x^2) + 1/(6x^3) - 1/(30x^5) at x = 100; 0.0100503358 is not it
    assert trigamma(100.0) == pytest.approx(mpmath.psi(1, 100), rel=1e-15)
    assert trigamma(100.0) == pytest.approx(0.01 + 0.5e-4 + 1 / 6e6 - 1 / 3e11, rel=1e-13)


def test_trigamma_against_oracle(oracle):
    for x, expected in oracle["trigamma"]:
        assert trigamma(x) == pytest.approx(expected, rel=2e-14), x


def test_trigamma_vectorized_and_validation():
    x = np.array([0.3, 5.0, 50.0])
    np.testing.assert_allclose(trigamma(x), special.polygamma(1, x), rtol=1e-13)
    with pytest.raises(DomainError):
        trigamma(-1.0)
    with pytest.raises(DomainError):
        trigamma(float("nan"))


def test_trigamma_diff_against_oracle(oracle):
    for x, h, expected in oracle["trigamma_diff"]:
        assert trigamma_diff(x, h) == pytest.approx(expected, rel=1e-11), (x, h)


@given(st.floats(0.05, 1e4), st.floats(0.01, 200))
@settings(max_examples=200, deadline=None)
def test_trigamma_recurrence_and_monotone(x, h):
    # psi1(x) - psi1(x + 1) = 1 / x^2
    assert trigamma(x) - trigamma(x + 1) == pytest.approx(1 / x**2, rel=1e-9)
    d = trigamma_diff(x, h)
    assert d < 0
    assert d == pytest.approx(trigamma(x + h) - trigamma(x), rel=1e-7, abs=1e-300)


def test_bessel_k_half_integer_forms():
    assert bessel_k(0.5, 1.0) == pytest.approx(math.sqrt(math.pi / 2) * math.exp(-1), rel=1e-14)
    x = 2.0
    k32 = math.sqrt(math.pi / (2 * x)) * math.exp(-x) * (1 + 1 / x)
    assert bessel_k(1.5, x) == pytest.approx(k32, rel=1e-14)


def test_bessel_k_against_oracle(oracle):
    for v, x, expected in oracle["bessel_k"]:
        assert bessel_k(v, x) == pytest.approx(expected, rel=1e-12), (v, x)
    for v, x, expected in oracle["log_bessel_k"]:
        assert log_bessel_k(v, x) == pytest.approx(expected, rel=1e-13), (v, x)


def test_bessel_k_domain():
    with pytest.raises(DomainError):
        bessel_k(0.5, 0.0)
    with pytest.raises(DomainError):
        log_bessel_k(0.5, -1.0)


@given(st.floats(0.0, 5.0), st.floats(0.05, 30))
@settings(max_examples=100, deadline=None)
def test_bessel_k_recurrence(v, x):
    # K_{v+1}(x) = K_{v-1}(x) + (2v/x) K_v(x), with K_{-v} = K_v
    lhs = bessel_k(v + 1, x)
    rhs = bessel_k(abs(v - 1), x) + 2 * v / x * bessel_k(v, x)
    assert lhs == pytest.approx(rhs, rel=1e-10)
