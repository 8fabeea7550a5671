import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmlab import CovarianceModel, HermiteSeries, RankError, TruncationWarning
from bmlab.exceptions import HermiteOverflowError
from bmlab.hermite import (
    abs_centered_coeffs,
    abs_op_A,
    catalog,
    derivative,
    eval_hermite,
    eval_series,
    gauss_hermite,
    hermite_product,
    hermite_table,
    lemma33_criterion,
    project,
    shift_T,
    sigma_sq,
    truncated_power,
)

coeff_lists = st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=9)


def test_eval_hermite_values():
    assert eval_hermite(0, 3.7) == 1.0
    assert eval_hermite(3, 1.0) == -2.0
    assert eval_hermite(4, 2.0) == -5.0


def test_eval_hermite_matches_explicit_polynomials():
    x = np.linspace(-3, 3, 13)
    assert np.allclose(eval_hermite(4, x), x ** 4 - 6 * x ** 2 + 3)
    assert np.allclose(eval_hermite(5, x), x ** 5 - 10 * x ** 3 + 15 * x)


def test_eval_hermite_guards():
    with pytest.raises(ValueError):
        eval_hermite(65, 1.0)
    with pytest.raises(HermiteOverflowError):
        eval_hermite(64, 1e300)


def test_eval_series_examples():
    assert eval_series(HermiteSeries.monomial(2), 2.0) == 3.0
    x0 = 1.7
    assert eval_series(HermiteSeries([1.0, 0.0, 1.0]), x0) == pytest.approx(x0 ** 2)
    s = catalog("abs_centered", 40)
    # 40-term partial sum from a 40-digit mpmath evaluation; it sits 2.4e-3
    # away from |1| - sqrt(2/pi) because the series converges slowly
    assert eval_series(s, 1.0) == pytest.approx(0.2045556567, abs=1e-9)
    assert abs(eval_series(s, 1.0) - (1 - math.sqrt(2 / math.pi))) < 3e-3


def test_orthogonality_by_quadrature():
    x, w = gauss_hermite(48)
    T = hermite_table(20, x)
    gram = (T * w) @ T.T
    expect = np.diag([float(math.factorial(q)) for q in range(21)])
    assert np.allclose(gram / np.sqrt(np.outer(np.diag(expect), np.diag(expect))),
                       np.eye(21), atol=1e-10)


def test_project_examples():
    s = project(lambda x: x ** 2 - 1, 8)
    assert s.rank == 2
    assert np.allclose(s.coeffs, [0, 0, 1, 0, 0, 0, 0, 0, 0], atol=1e-12)
    s = project(lambda x: x ** 2, 8)
    assert s.coeffs[0] == pytest.approx(1) and s.coeffs[2] == pytest.approx(1)
    assert s.rank == 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        s = project(lambda x: np.abs(x) - math.sqrt(2 / math.pi), 12, breakpoints=[0.0])
    assert s.coeffs[2] == pytest.approx(0.3989423, abs=1e-6)
    assert s.coeffs[4] == pytest.approx(-0.0332452, abs=1e-6)
    assert np.all(s.coeffs[1::2] == 0)
    assert s.rank == 2


def test_abs_centered_exact_coefficients_agree_with_quadrature():
    exact = abs_centered_coeffs(12)
    f = lambda x: np.abs(x) - math.sqrt(2 / math.pi)  # noqa: E731
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        adaptive = project(f, 12, breakpoints=[0.0])
        gauss = project(f, 12, quad_order=2000)
    assert np.allclose(exact, adaptive.coeffs, atol=1e-10)
    # plain Gauss-Hermite only converges algebraically across the kink
    assert np.allclose(exact, gauss.coeffs, atol=5e-4)


def test_project_rank_zero_and_tail_warning():
    with pytest.raises(RankError):
        project(lambda x: np.ones_like(x), 4)
    with pytest.warns(TruncationWarning):
        project(np.abs, 4)


@given(coeff_lists)
@settings(max_examples=50, deadline=None)
def test_project_roundtrip(coeffs):
    s = HermiteSeries(coeffs)
    if s.rank == 0:
        return
    back = project(s, s.q_max, zero_tol=0.0, require_rank=False)
    scale = max(1.0, float(np.max(np.abs(coeffs))))
    assert np.allclose(back.coeffs, s.coeffs, atol=1e-9 * scale)


def test_shift_examples():
    assert shift_T(HermiteSeries.monomial(2), 1) == HermiteSeries.monomial(1)
    s = shift_T(HermiteSeries([0, 0, 1, 0, 2]), 2)
    assert list(s.coeffs) == [1, 0, 2] and s.rank == 0
    with pytest.raises(RankError):
        shift_T(HermiteSeries.monomial(2), 3)


@given(coeff_lists)
@settings(max_examples=50, deadline=None)
def test_shift_composes(coeffs):
    s = HermiteSeries([0.0, 0.0, 1.0] + coeffs)
    assert shift_T(shift_T(s, 1), 1) == shift_T(s, 2)


@given(coeff_lists)
@settings(max_examples=50, deadline=None)
def test_abs_op_preserves_norm_and_rank(coeffs):
    s = HermiteSeries(coeffs)
    a = abs_op_A(s)
    assert a.rank == s.rank
    assert a.norm() == pytest.approx(s.norm(), rel=1e-12, abs=1e-300)
    assert abs_op_A(a) == a


def test_abs_op_example():
    assert list(abs_op_A(HermiteSeries([0, 0, 1, 0, -3])).coeffs) == [0, 0, 1, 0, 3]


def test_derivative_examples_and_finite_difference():
    assert derivative(HermiteSeries.monomial(2), 1) == HermiteSeries([0, 2.0])
    assert derivative(HermiteSeries.monomial(4), 2) == HermiteSeries([0, 0, 12.0])
    assert derivative(HermiteSeries.monomial(2), 3).is_zero
    s = HermiteSeries([0.1, -0.3, 0.5, 0.2, -0.05])
    x = np.linspace(-2, 2, 9)
    h = 1e-5
    fd = (eval_series(s, x + h) - eval_series(s, x - h)) / (2 * h)
    assert np.allclose(eval_series(derivative(s, 1), x), fd, atol=1e-6)


def test_sigma_sq_examples():
    assert sigma_sq(HermiteSeries.monomial(2), CovarianceModel.iid()).value == pytest.approx(2.0)
    ar = CovarianceModel.ar1(0.5)
    assert abs(sigma_sq(HermiteSeries.monomial(2), ar).value - 10 / 3) < 1e-9
    assert abs(sigma_sq(HermiteSeries.monomial(3), ar).value - 54 / 7) < 1e-9
    assert sigma_sq(HermiteSeries.monomial(2), ar).summable


def test_sigma_sq_flags_long_memory():
    res = sigma_sq(HermiteSeries.monomial(2), CovarianceModel.power_tail(0.4), lag_cutoff=2000)
    assert not res.summable


def test_truncated_power_examples():
    assert np.allclose(truncated_power(HermiteSeries.monomial(1), 2, 1).coeffs, [1, 0, 1])
    assert np.allclose(truncated_power(HermiteSeries.monomial(2), 2, 2).coeffs, [2, 0, 4, 0, 1])
    s = HermiteSeries([0.3, 0.1, -0.4])
    assert truncated_power(s, 1, 2) == s


@given(coeff_lists, coeff_lists)
@settings(max_examples=30, deadline=None)
def test_hermite_product_pointwise(a, b):
    A, B = HermiteSeries(a), HermiteSeries(b)
    x = np.linspace(-2.5, 2.5, 11)
    lhs = eval_series(hermite_product(A, B), x)
    rhs = eval_series(A, x) * eval_series(B, x)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_hermite_product_high_order_log_space():
    p = hermite_product(HermiteSeries.monomial(25), HermiteSeries.monomial(25))
    # E[He_25^2] = 25! is the constant coefficient
    assert p.coeffs[0] == pytest.approx(math.factorial(25), rel=1e-12)


def test_lemma33_examples():
    poly = lemma33_criterion(HermiteSeries([0, 0, 1, 0, 0.5]), ell=2, M=4, finite=True)
    assert poly.classification == "saturating"
    assert poly.partial_sums[-1] == poly.partial_sums[4]
    inv = HermiteSeries([0.0] + [1 / math.factorial(q) for q in range(1, 40)])
    assert lemma33_criterion(inv, ell=2, M=4).classification == "saturating"
    ones = HermiteSeries(np.ones(40))
    assert lemma33_criterion(ones, ell=2, M=4).classification == "growing"


def test_series_json_roundtrip():
    s = catalog("abs_centered", 10)
    assert HermiteSeries.from_json(s.to_json()) == s
    assert s.to_dict()["convention"] == "probabilist"


def test_explicit_rank_validation():
    with pytest.raises(RankError):
        HermiteSeries([0, 1.0, 1.0], rank=2)
