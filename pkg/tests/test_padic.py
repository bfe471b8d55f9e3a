import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pbktrace.padic import (EXACT, FAST, BudgetExceeded, GlobalTestFunction, KloostermanValue,
                            LocalTestFunction, NEWFORM, PAdicMatrix, UnsupportedVariant,
                            admissible_moduli, divisor_count, in_z_k0, kloosterman_classical,
                            kloosterman_fast, kloosterman_generalized, l_pi_one,
                            local_diagonal_integral, local_orbital_integral, local_weight_delta_p, nu,
                            projective_line_size, split_modulus, trivial_bound, validate_fast_path, vp,
                            weil_bound)
from pbktrace.numkernel import ComplexValue


def test_nu_and_valuation():
    assert nu(1) == 1 and nu(11) == 12 and nu(4) == 6 and nu(12) == 24
    assert vp(Fraction(1, 121), 11) == -2
    assert vp(Fraction(18, 5), 3) == 2
    assert vp(0, 5) == math.inf


def test_in_z_k0_examples():
    p = 5
    assert in_z_k0(PAdicMatrix(1, 0, 0, 1, p), 3)
    assert not in_z_k0(PAdicMatrix(0, -1, 1, 0, p), 1)
    assert in_z_k0(PAdicMatrix(p, 0, 0, p, p), 0)
    assert in_z_k0(PAdicMatrix(1, Fraction(1, 7), p * p, 1, p), 2)
    assert not in_z_k0(PAdicMatrix(1, Fraction(1, p), 0, 1, p), 0)


def test_local_test_function_validation():
    with pytest.raises(ValueError):
        LocalTestFunction(4, 1)
    with pytest.raises(ValueError):
        LocalTestFunction(3, -1)
    with pytest.raises(UnsupportedVariant):
        local_orbital_integral(LocalTestFunction(3, 1, NEWFORM), 1, 1, Fraction(1, 9))


def test_orbital_integral_examples():
    one = LocalTestFunction(7, 0)
    assert complex(local_orbital_integral(one, 3, 5, Fraction(4, 9))) == pytest.approx(1.0)
    assert complex(local_orbital_integral(LocalTestFunction(2, 0), 1, 1, Fraction(1, 4))) == pytest.approx(1.0)
    assert complex(local_orbital_integral(LocalTestFunction(3, 0), 1, 1, Fraction(1, 9))) == pytest.approx(-1.0)


@pytest.mark.parametrize("p,r", [(2, 0), (2, 1), (2, 2), (3, 0), (3, 1), (5, 1), (7, 0)])
@pytest.mark.parametrize("c_exp", [0, 1, 2])
def test_enumeration_equals_reduced_form(p, r, c_exp):
    fp = LocalTestFunction(p, r)
    mu = Fraction(1, (p ** c_exp * 13) ** 2)
    for m, n in [(1, 1), (2, 3), (-1, 4), (5, -7)]:
        a = complex(local_orbital_integral(fp, m, n, mu, method="enumerate"))
        b = complex(local_orbital_integral(fp, m, n, mu, method="reduced"))
        assert abs(a - b) < 1e-9


@pytest.mark.parametrize("p,r,c_exp", [(2, 1, 1), (2, 0, 2), (3, 1, 1), (3, 0, 1), (5, 1, 1)])
def test_depth_stability(p, r, c_exp):
    fp = LocalTestFunction(p, r)
    mu = Fraction(1, p ** (2 * c_exp))
    base = complex(local_orbital_integral(fp, 1, 2, mu))
    deeper_D = complex(local_orbital_integral(fp, 1, 2, mu, depth_D=1))
    deeper_A = complex(local_orbital_integral(fp, 1, 2, mu, depth_A=c_exp + 1))
    assert abs(base - deeper_D) < 1e-12
    assert abs(base - deeper_A) < 1e-12


def test_budget():
    with pytest.raises(BudgetExceeded):
        local_orbital_integral(LocalTestFunction(101, 0), 1, 1, Fraction(1, 101 ** 4), budget=1000)


def test_diagonal_integral_examples():
    assert complex(local_diagonal_integral(LocalTestFunction(5, 0), 1)) == pytest.approx(1.0)
    assert complex(local_diagonal_integral(LocalTestFunction(11, 1), 1)) == pytest.approx(12.0)
    assert complex(local_diagonal_integral(LocalTestFunction(2, 2), 3)) == pytest.approx(6.0)


@pytest.mark.parametrize("p", [2, 3, 5, 7, 11, 13])
@pytest.mark.parametrize("r", [0, 1, 2])
def test_delta_p_matches_diagonal_route(p, r):
    fp = LocalTestFunction(p, r)
    assert projective_line_size(p, r) == nu(p ** r)
    for m in (1, 2, 3):
        if m % p == 0:
            continue
        depth = 2 if p ** 2 <= 200 else 1
        assert local_weight_delta_p(fp) == pytest.approx(complex(local_diagonal_integral(fp, m, depth_A=depth)).real)
    assert local_weight_delta_p(fp) == float(nu(p ** r))


def test_l_pi_one():
    assert l_pi_one("conductor-1", 0, 11) == pytest.approx(11 / 12)
    assert l_pi_one("conductor-ge2", 0, 2) == pytest.approx(0.5)
    direct = (1 - 1 / 9) / ((1 + 1 / 3) * (1 - 1 / 3) * (1 + 1 / 3))
    assert l_pi_one("unramified", math.pi / 2, 3) == pytest.approx(direct)
    with pytest.raises(ValueError):
        l_pi_one("unramified", 4.0, 3)
    with pytest.raises(ValueError):
        l_pi_one("unramified", 1j * math.log(3) * 0.7, 3)


def test_classical_examples():
    assert kloosterman_classical(5, 7, 1) == 1.0
    assert kloosterman_classical(1, 1, 2) == pytest.approx(1.0)
    assert kloosterman_classical(1, 1, 3) == pytest.approx(-1.0)


def test_fast_classical_agrees_with_direct():
    for c in range(1, 80):
        for m, n in [(1, 1), (2, 5), (-3, 7), (6, 4)]:
            assert float(kloosterman_fast(m, n, c)) == pytest.approx(kloosterman_classical(m, n, c), abs=1e-10)


def test_fast_vector_form():
    ns = np.arange(1, 20)
    vec = kloosterman_fast(3, ns, 84)
    assert np.allclose(vec, [kloosterman_classical(3, int(n), 84) for n in ns], atol=1e-10)


def test_level_11_vanishes_off_multiples():
    f = GlobalTestFunction.of_level(11)
    for c in range(1, 45):
        v = abs(complex(kloosterman_generalized(f, 1, 2, c, path=EXACT).value))
        if c % 11:
            assert v == 0.0
    assert abs(complex(kloosterman_generalized(f, 1, 2, 11, path=EXACT).value)) > 1


@pytest.mark.parametrize("N", [1, 11, 12])
def test_fast_path_validated(N):
    assert validate_fast_path(GlobalTestFunction.of_level(N))


def test_exact_and_fast_agree_level_12():
    f = GlobalTestFunction.of_level(12)
    for c in (12, 24, 36, 60, 72):
        for m, n in [(1, 1), (5, 7), (-1, 5)]:
            a = kloosterman_generalized(f, m, n, c, path=EXACT).value
            b = kloosterman_generalized(f, m, n, c, path=FAST).value
            assert abs(complex(a) - complex(b)) < 1e-9


def test_kloosterman_value_record():
    with pytest.raises(ValueError):
        KloostermanValue(1, 1, 3, ComplexValue(1.0, 0.5), FAST)
    v = kloosterman_generalized(GlobalTestFunction.of_level(1), 1, 1, 3)
    d = v.to_dict()
    assert d["c"] == 3 and d["re"] == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        kloosterman_generalized(GlobalTestFunction.of_level(1), 1, 1, 0)


def test_split_modulus():
    assert split_modulus(11 * 11 * 6, 11) == (6, 121)
    assert split_modulus(72 * 5, 12) == (5, 72)
    assert split_modulus(35, 1) == (35, 1)


def test_admissible_moduli():
    rep = admissible_moduli(GlobalTestFunction.of_level(1), 10, [(1, 1), (1, 2), (2, 3), (1, 3)])
    assert rep.admissible == list(range(1, 11)) and rep.conductor_estimate == 1
    rep = admissible_moduli(GlobalTestFunction.of_level(11), 50, [(1, 1), (1, 2)], threads=3)
    assert set(rep.admissible) <= {11, 22, 33, 44} and rep.conductor_estimate == 11
    assert all(isinstance(c, int) and c > 0 for c in rep.admissible)
    assert rep.to_dict()["conductor_estimate"] == 11
    with pytest.raises(ValueError):
        admissible_moduli(GlobalTestFunction.of_level(1), 5, [])


def test_twisted_weight_counts():
    assert divisor_count(12) == 6 and divisor_count(1) == 1
    assert weil_bound(1, 1, 9) == pytest.approx(3 * 3)
    assert trivial_bound(GlobalTestFunction.of_level(11), 22) == 22 * 11 * 12


@settings(max_examples=60, deadline=None)
@given(st.integers(-30, 30), st.integers(-30, 30), st.integers(1, 40), st.integers(1, 40))
def test_twisted_multiplicativity(m, n, q, r):
    if math.gcd(q, r) != 1:
        return
    rb = pow(r, -1, q) if q > 1 else 0
    qb = pow(q, -1, r) if r > 1 else 0
    lhs = kloosterman_classical(m, n, q * r)
    rhs = kloosterman_classical(m * rb, n * rb, q) * kloosterman_classical(m * qb, n * qb, r)
    assert lhs == pytest.approx(rhs, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(-50, 50), st.integers(-50, 50), st.integers(1, 120))
def test_weil_and_symmetry(m, n, c):
    s = kloosterman_classical(m, n, c)
    assert abs(s) <= weil_bound(m, n, c) + 1e-9
    assert s == pytest.approx(kloosterman_classical(n, m, c), abs=1e-9)
    assert s == pytest.approx(kloosterman_classical(-m, -n, c), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(-30, 30), st.integers(1, 8))
def test_generalized_trivial_bound_level_12(m, n, k):
    f = GlobalTestFunction.of_level(12)
    c = 12 * k
    v = abs(complex(kloosterman_generalized(f, m, n, c).value))
    assert v <= trivial_bound(f, c) + 1e-9


def test_repeatable():
    f = GlobalTestFunction.of_level(11)
    a = [kloosterman_generalized(f, 2, 3, c, path=EXACT).value for c in (11, 22, 121)]
    b = [kloosterman_generalized(f, 2, 3, c, path=EXACT).value for c in (11, 22, 121)]
    assert a == b
