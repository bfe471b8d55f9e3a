import math

import pytest

from pbktrace.archimedean import ArchTestFunction
from pbktrace.formula import (M_WEIGHTED, IllConditioned, PreconditionError, bk_opposite_geometric,
                              diagonal_constant, divisor_summatory, divisor_tail_bound, h_matrix,
                              parity_bound_demo, petersson2_geometric, petersson_tail_majorant,
                              petersson_term_majorant, verify_weight2_level11)
from pbktrace.padic import EXACT, GlobalTestFunction, divisor_count, kloosterman_generalized

F11 = GlobalTestFunction.of_level(11)


def test_divisor_summatory():
    for X in (1, 2, 10, 57, 1000):
        assert divisor_summatory(X) == sum(divisor_count(d) for d in range(1, X + 1))


@pytest.mark.parametrize("X", [1, 5, 40, 300, 2000])
def test_divisor_tail_bound_dominates(X):
    partial = math.fsum(divisor_count(d) * d ** -1.5 for d in range(X + 1, 200_000))
    assert divisor_tail_bound(X) >= partial


def test_diagonal_level11():
    r = petersson2_geometric(F11, 1, 1, 11)
    assert r.diagonal_term == pytest.approx(12 / (4 * math.pi))
    assert diagonal_constant(F11) == pytest.approx(12.0)
    r2 = petersson2_geometric(F11, 2, 2, 11, diagonal_normalization=M_WEIGHTED)
    assert r2.diagonal_term == pytest.approx(2 * 12 / (4 * math.pi))
    assert petersson2_geometric(F11, 1, 2, 11).diagonal_term == 0.0


def test_terms_sum_to_value_and_respect_majorant():
    r = petersson2_geometric(F11, 2, 3, 3000)
    assert r.value == pytest.approx(r.diagonal_term + math.fsum(t[3] for t in r.partial_terms), abs=1e-15)
    for c, h, k, term in r.partial_terms:
        assert c % 11 == 0
        assert abs(term) <= petersson_term_majorant(F11, 2, 3, c) * (1 + 1e-12)


def test_fast_matrix_matches_exact():
    cs = [11, 22, 121, 242, 363]
    H = h_matrix(F11, 1, [1, 2, 5], cs)
    for i, c in enumerate(cs):
        for j, n in enumerate([1, 2, 5]):
            assert H[i, j] == pytest.approx(kloosterman_generalized(F11, 1, n, c, path=EXACT).value.re, abs=1e-9)


def test_tail_majorant_decay():
    shrink = [petersson_tail_majorant(F11, 1, 1, c) / petersson_tail_majorant(F11, 1, 1, 2 * c)
              for c in (1000, 10_000, 100_000, 1_000_000)]
    assert all(1.25 < s < math.sqrt(2) + 0.05 for s in shrink)
    assert shrink == sorted(shrink)


def test_tail_bounds_truncation_error():
    far = petersson2_geometric(F11, 1, 2, 40_000).value
    near = petersson2_geometric(F11, 1, 2, 2_000)
    assert abs(far - near.value) <= near.tail_majorant


def test_thread_invariance():
    a = petersson2_geometric(F11, 1, 3, 5000, threads=1)
    b = petersson2_geometric(F11, 1, 3, 5000, threads=5)
    assert a.value == b.value and a.partial_terms == b.partial_terms


def test_preconditions():
    with pytest.raises(PreconditionError):
        petersson2_geometric(F11, 1, 22, 100)
    with pytest.raises(PreconditionError):
        petersson2_geometric(F11, 1, 2, 5)
    with pytest.raises(PreconditionError):
        bk_opposite_geometric(F11, ArchTestFunction.family2(5.0), 1, 2, 100)
    with pytest.raises(PreconditionError):
        verify_weight2_level11([2, 11], c_max=100)
    with pytest.raises(PreconditionError):
        parity_bound_demo(F11, ArchTestFunction.family2(5.0), 11)


def test_ill_conditioned_guard():
    with pytest.raises(IllConditioned):
        verify_weight2_level11([2], c_max=200)


def test_signs_before_tight_tolerance():
    rep = verify_weight2_level11([2, 4], c_max=60_000, tol=0.05)
    lam = {r.m: r.lambda_computed for r in rep.rows}
    assert lam[2] < 0 < lam[4]


def test_ratio_one_and_stability():
    a = verify_weight2_level11([1, 2, 3], c_max=60_000, tol=1.0)
    b = verify_weight2_level11([1, 2, 3], c_max=120_000, tol=1.0)
    assert a.rows[0].lambda_computed == 1.0
    for ra, rb in zip(a.rows, b.rows):
        assert abs(ra.lambda_computed - rb.lambda_computed) < ra.ratio_error_bound + rb.ratio_error_bound
    d = a.to_dict()
    assert set(d["rows"][0]) == {"m", "lambda_computed", "lambda_oracle", "abs_error", "tail_majorant",
                                 "ratio_error_bound", "passed"}


def test_bk_opposite_side():
    h = ArchTestFunction.family2(5.0)
    r = bk_opposite_geometric(F11, h, -1, 2, 330)
    assert r.diagonal_term == 0.0
    assert r.value == pytest.approx(math.fsum(t[3] for t in r.partial_terms))
    assert math.isfinite(r.tail_majorant) and r.tail_majorant > 0
    longer = bk_opposite_geometric(F11, h, -1, 2, 1100)
    assert abs(longer.value - r.value) <= r.tail_majorant
    assert longer.tail_majorant < r.tail_majorant
    zero = bk_opposite_geometric(F11, ArchTestFunction.zero(), -1, 2, 330)
    assert zero.value == 0.0 and zero.tail_majorant == 0.0
    assert r.to_dict(with_terms=False)["kind"] == "bk-opposite"


def test_parity_demo_report():
    rep = parity_bound_demo(F11, ArchTestFunction.family2(10.0), 1, c_max=220)
    assert rep.conductor == 11
    assert rep.main_term == pytest.approx(0.5 * rep.f_infty_one * 12)
    assert rep.constant * rep.shape >= abs(rep.geometric_side)
