import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pbktrace.numkernel import (ComplexValue, DomainError, Estimate, NonConvergence, QuadratureSpec,
                                bessel_i_imag, bessel_i_imag_scaled, bessel_j1, bessel_j1_array,
                                bessel_k_cosine_integral, bessel_k_imag, bessel_k_imag_scaled,
                                composite_nodes, gauss_panels, integrate)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(method="simpson")
    with pytest.raises(ValueError):
        QuadratureSpec(abs_tol=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(rel_tol=float("nan"))
    with pytest.raises(ValueError):
        QuadratureSpec(max_nodes=3)
    assert QuadratureSpec(abs_tol=1e-12, rel_tol=1e-6).tol_for(10.0) == pytest.approx(1e-5)


def test_complex_value():
    z = ComplexValue.of(3 + 4j)
    assert abs(z) == 5.0
    assert complex(z) == 3 + 4j
    assert z.to_dict() == {"re": 3.0, "im": 4.0}
    with pytest.raises(ValueError):
        ComplexValue(float("inf"), 0.0)


def test_estimate_require():
    Estimate(1.0, 0.0, True, 3).require()
    with pytest.raises(NonConvergence):
        Estimate(1.0, 1.0, False, 3).require("test")


@pytest.mark.parametrize("method", ["adaptive-Gauss", "tanh-sinh", "truncated-infinite"])
def test_polynomial_and_endpoint_singularity(method):
    spec = QuadratureSpec(method=method)
    assert integrate(lambda x: x * x, (0.0, 1.0), spec).value == pytest.approx(1 / 3, abs=1e-12)
    # integrable endpoint singularity
    assert integrate(lambda x: 1 / math.sqrt(x), (0.0, 1.0), spec).value == pytest.approx(2.0, abs=1e-8)


@pytest.mark.parametrize("method", ["adaptive-Gauss", "tanh-sinh", "truncated-infinite"])
def test_infinite_ranges(method):
    spec = QuadratureSpec(method=method)
    env = lambda X: math.exp(-X)
    assert integrate(lambda x: math.exp(-x), (0.0, math.inf), spec, envelope=env).value == pytest.approx(1.0, abs=1e-10)
    env2 = lambda X: math.exp(-X * X)
    v = integrate(lambda x: math.exp(-x * x), (-math.inf, math.inf), spec, envelope=env2).value
    assert v == pytest.approx(math.sqrt(math.pi), abs=1e-10)


def test_rectangle():
    v = integrate(lambda x, y: x * math.cos(y), ((0.0, 1.0), (0.0, math.pi / 2)))
    assert v.value == pytest.approx(0.5, abs=1e-12)


def test_breakpoints_capture_narrow_peak():
    spec = QuadratureSpec(method="tanh-sinh")
    f = lambda x: 1.0 / math.cosh((x - 150.0) / 0.5)
    v = integrate(f, (0.0, 300.0), spec, breakpoints=[140.0, 150.0, 160.0])
    assert v.value == pytest.approx(0.5 * math.pi, rel=1e-10)


def test_gauss_panels():
    est = gauss_panels(lambda x: np.cos(5 * x), 0.0, 3.0)
    assert est.value == pytest.approx(math.sin(15.0) / 5, abs=1e-13)
    x, w = composite_nodes([0.0, 1.0, 2.0], 8)
    assert w.sum() == pytest.approx(2.0)


@pytest.mark.parametrize("x", [0.0, 1e-8, 0.3, 1.0, 3.999, 4.0, 4.001, 7.5, 30.0, 400.0, -2.5])
def test_j1_against_mpmath(x):
    assert bessel_j1(x) == pytest.approx(float(mp.besselj(1, x)), abs=1e-15, rel=1e-13)


def test_j1_array_matches_scalar():
    xs = np.linspace(-10, 60, 301)
    assert np.allclose(bessel_j1_array(xs), [bessel_j1(x) for x in xs], rtol=0, atol=1e-16)


@pytest.mark.parametrize("t,x", [(0.0, 1.0), (0.3, 0.5), (1.0, 5.0), (5.0, 0.5), (20.0, 10.0),
                                 (40.0, 1e-3), (100.0, 0.5), (3.0, 60.0)])
def test_k_imag_against_mpmath(t, x):
    mp.mp.dps = 40
    ref = mp.besselk(2j * t, x).real * mp.exp(mp.pi * t)
    mp.mp.dps = 15
    val, err = bessel_k_imag_scaled(t, x)
    assert val == pytest.approx(float(ref), rel=1e-9, abs=1e-14)
    assert err < 1e-8 * max(1.0, abs(val))


def test_k_two_routes_small_order():
    for t, x in [(0.0, 1.0), (0.5, 2.0), (2.0, 3.0)]:
        assert bessel_k_cosine_integral(t, x).value == pytest.approx(bessel_k_imag(t, x), abs=1e-12)


def test_k_known_value():
    assert bessel_k_imag(0.0, 1.0) == pytest.approx(0.42102443824070834, rel=1e-14)


@pytest.mark.parametrize("t,x", [(0.0, 1.0), (0.7, 0.5), (3.0, 2.0), (12.0, 5.0), (50.0, 1.0)])
def test_i_imag_against_mpmath(t, x):
    ref = complex(mp.besseli(2j * t, x))
    got = complex(bessel_i_imag(t, x))
    assert abs(got - ref) <= 1e-12 * abs(ref) + 1e-300


def test_domain_errors():
    with pytest.raises(DomainError):
        bessel_k_imag(1.0, 0.0)
    with pytest.raises(DomainError):
        bessel_i_imag_scaled([1.0], -1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 8.0), st.floats(0.0, 20.0))
def test_k_positive_decreasing_beyond_turning_point(t, dx):
    # K_{2it}(x) oscillates for x < 2|t|; past the turning point it is positive and decreasing
    x = 2 * t + 1.0 + dx
    a, b = bessel_k_imag(t, x), bessel_k_imag(t, x * 1.1)
    assert a > 0 and b > 0 and b < a


@settings(max_examples=60, deadline=None)
@given(st.floats(-200.0, 200.0))
def test_j1_bounds(x):
    v = bessel_j1(x)
    assert abs(v) <= 0.5 * abs(x) + 1e-15
    assert abs(v) <= 0.5819
    assert bessel_j1(-x) == -v
