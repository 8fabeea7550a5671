import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmlab.covariance import CovarianceModel
from bmlab.diagrams import (
    A_n_beta,
    A_n_beta_loop,
    ContractionDiagram,
    dump_diagrams,
    enumerate_bounded_family,
    enumerate_diagrams,
    exact_third_moment,
    exact_var_DFu,
    hermite_product_cov,
    max_A_over_family,
    mutate_weights,
    pairs,
    product_moment,
    summation_inequality_check,
)
from bmlab.exceptions import BudgetExceeded, RankError
from bmlab.hermite import HermiteSeries
from bmlab.oracles import (
    gaussian_moment,
    hermite_monomial_coeffs,
    isserlis_product_moment,
    random_rational_correlation,
)

AR = CovarianceModel.ar1(0.5)
H2 = HermiteSeries.monomial(2)


def _brute_diagrams(q):
    prs = pairs(len(q))
    out = []
    for beta in itertools.product(range(max(q) + 1), repeat=len(prs)):
        deg = [0] * len(q)
        for (j, k), b in zip(prs, beta):
            deg[j] += b
            deg[k] += b
        if tuple(deg) == tuple(q):
            out.append(beta)
    return sorted(out)


def test_small_diagrams():
    (d,) = enumerate_diagrams((2, 2, 2))
    assert d.beta == (1, 1, 1) and d.weight == 8
    (d,) = enumerate_diagrams((2, 2))
    assert d.weight == 2
    assert enumerate_diagrams((1, 2)) == []
    assert enumerate_diagrams((3, 1, 1, 1)) != []
    assert len(enumerate_diagrams((2, 2, 2, 2))) == len(_brute_diagrams((2, 2, 2, 2)))


@pytest.mark.parametrize("q", [(2, 2, 2, 2), (3, 1, 2, 2), (4, 2, 2, 0), (3, 3, 3, 3)])
def test_enumeration_matches_brute_force(q):
    assert sorted(d.beta for d in enumerate_diagrams(q)) == _brute_diagrams(q)


def test_enumeration_constraints_and_budget():
    q = (2, 2, 2, 2)
    every = enumerate_diagrams(q)
    crossing = enumerate_diagrams(q, cross=((0, 1), (2, 3)))
    assert 0 < len(crossing) < len(every)
    for d in crossing:
        B = d.matrix()
        assert B[:2, 2:].sum() > 0
    forced = enumerate_diagrams(q, min_beta={(0, 1): 2})
    assert all(d.matrix()[0, 1] == 2 for d in forced)
    with pytest.raises(BudgetExceeded):
        enumerate_diagrams((4, 4, 4, 4), max_count=3)
    with pytest.raises(BudgetExceeded):
        enumerate_diagrams((13, 13))


def test_diagram_serialization():
    d = ContractionDiagram((2, 2, 2), (1, 1, 1))
    assert dump_diagrams([d]) == [{"beta": [[1, 2, 1], [1, 3, 1], [2, 3, 1]],
                                   "C_num": 8, "C_den": 1}]


def test_bounded_family():
    fam, truncated = enumerate_bounded_family(3, max_entry=2, min_degree=2)
    assert not truncated
    assert all(min(d.q) >= 2 and max(d.beta) <= 2 for d in fam)
    assert len(fam) == sum(1 for beta in itertools.product(range(3), repeat=3)
                           if min(beta[0] + beta[1], beta[0] + beta[2], beta[1] + beta[2]) >= 2)
    _, truncated = enumerate_bounded_family(4, max_count=5)
    assert truncated


def test_oracle_pieces():
    assert hermite_monomial_coeffs(3) == [0, -3, 0, 1]
    assert hermite_monomial_coeffs(4) == [3, 0, -6, 0, 1]
    one = [[Fraction(1)]]
    assert gaussian_moment((4,), one) == 3
    assert gaussian_moment((6,), one) == 15
    r = Fraction(1, 3)
    corr = [[1, r], [r, 1]]
    assert gaussian_moment((2, 2), corr) == 1 + 2 * r * r
    C = random_rational_correlation(4, seed=5)
    assert all(C[i][i] == 1 and C[i][j] == C[j][i] for i in range(4) for j in range(4))
    assert all(isinstance(C[i][j], Fraction) for i in range(4) for j in range(4))
    assert np.linalg.eigvalsh(np.array(C, dtype=float)).min() > -1e-12


def test_product_moment_closed_forms():
    r = Fraction(2, 5)
    corr = [[1, r, r], [r, 1, r], [r, r, 1]]
    assert product_moment((2, 2, 2), corr, exact=True) == 8 * r ** 3
    assert product_moment((3, 3), [[1, r], [r, 1]], exact=True) == 6 * r ** 3
    assert product_moment((2, 2, 2), np.array(corr, dtype=float)) == pytest.approx(8 * 0.4 ** 3)
    with pytest.raises(ValueError):
        product_moment((1, 1), [[1, 0.2], [0.3, 1]])


@given(st.integers(0, 10_000), st.lists(st.integers(0, 4), min_size=2, max_size=4))
@settings(max_examples=60, deadline=None)
def test_product_moment_matches_isserlis(seed, q):
    corr = random_rational_correlation(len(q), seed)
    assert product_moment(q, corr, exact=True) == isserlis_product_moment(q, corr)


def test_product_moment_float_high_order():
    corr = random_rational_correlation(3, seed=2)
    for q in [(8, 6, 4), (7, 7, 6), (8, 8, 8)]:
        exact = float(isserlis_product_moment(q, corr))
        approx = product_moment(q, np.array(corr, dtype=float))
        assert approx == pytest.approx(exact, rel=1e-9, abs=1e-9)


def test_factorization_over_uncorrelated_blocks():
    a = random_rational_correlation(2, seed=1)
    b = random_rational_correlation(2, seed=2)
    Z = Fraction(0)
    corr = [[a[0][0], a[0][1], Z, Z], [a[1][0], a[1][1], Z, Z],
            [Z, Z, b[0][0], b[0][1]], [Z, Z, b[1][0], b[1][1]]]
    for q in [(2, 2, 3, 3), (1, 3, 2, 4), (4, 2, 1, 1)]:
        lhs = product_moment(q, corr, exact=True)
        assert lhs == product_moment(q[:2], a, exact=True) * product_moment(q[2:], b, exact=True)


def test_covariance_plus_disconnected_term():
    corr = random_rational_correlation(4, seed=9)
    for q in [(2, 2, 2, 2), (1, 3, 2, 2), (3, 3, 1, 1)]:
        disconnected = (product_moment(q[:2], [r[:2] for r in corr[:2]], exact=True)
                        * product_moment(q[2:], [r[2:] for r in corr[2:]], exact=True))
        assert hermite_product_cov(q, corr, exact=True) + disconnected == \
            product_moment(q, corr, exact=True)


def test_mutation_breaks_oracle_agreement():
    corr = random_rational_correlation(3, seed=4)
    with mutate_weights(1.01):
        assert product_moment((2, 2, 2), corr, exact=True) != isserlis_product_moment((2, 2, 2), corr)
    assert product_moment((2, 2, 2), corr, exact=True) == isserlis_product_moment((2, 2, 2), corr)


def test_exact_var_DFu_iid_and_methods():
    for n in (1, 5, 20):
        # <DF,u> = (2/n) sum X_i^2 for H2 under iid
        assert exact_var_DFu(H2, CovarianceModel.iid(), n) == pytest.approx(8 / n)
    for s in (H2, HermiteSeries([0, 0.5, 1.0, 0.3])):
        for model in (AR, CovarianceModel.power_tail(0.75), CovarianceModel.custom([1, 0.4, -0.2])):
            lag = exact_var_DFu(s, model, 20)
            loop = exact_var_DFu(s, model, 20, method="loop")
            assert lag == pytest.approx(loop, rel=1e-10)
    with pytest.raises(BudgetExceeded):
        exact_var_DFu(HermiteSeries.monomial(9), AR, 10)
    with pytest.raises(BudgetExceeded):
        exact_var_DFu(H2, AR, 65, method="loop")
    with pytest.raises(RankError):
        exact_var_DFu(HermiteSeries([1.0]), AR, 5)


def test_exact_third_moment():
    for n in (1, 4, 9):
        assert exact_third_moment(H2, CovarianceModel.iid(), n) == pytest.approx(8 / math.sqrt(n))
    assert exact_third_moment(H2, AR, 1) == 8
    assert exact_third_moment(HermiteSeries.monomial(3), AR, 16) == 0.0
    s = HermiteSeries([0, 0, 1.0, 0.4, 0.2])
    for n in (5, 24):
        assert exact_third_moment(s, AR, n) == pytest.approx(
            exact_third_moment(s, AR, n, method="loop"), rel=1e-10)


def test_A_n_beta():
    cycle = np.array([[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]])
    for model in (AR, CovarianceModel.power_tail(0.75)):
        assert A_n_beta(model, 10, cycle, 2) == pytest.approx(A_n_beta_loop(model, 10, cycle, 2))
    # under iid every connected component collapses onto one index
    assert A_n_beta(CovarianceModel.iid(), 12, cycle, 1) == pytest.approx(1.0)
    single = np.zeros((3, 3), dtype=int)
    single[0, 1] = single[1, 0] = 2
    assert A_n_beta(CovarianceModel.iid(), 7, single, 0) == pytest.approx(7 * 7)
    more = cycle.copy()
    more[0, 2] = more[2, 0] = 1
    assert A_n_beta(AR, 16, more, 2) <= A_n_beta(AR, 16, cycle, 2)
    fam, truncated = enumerate_bounded_family(3, max_entry=1, min_degree=1)
    best, arg, flag = max_A_over_family(AR, 8, fam, 1.5, truncated)
    assert flag is truncated and best == max(A_n_beta(AR, 8, d, 1.5) for d in fam)
    with pytest.raises(BudgetExceeded):
        A_n_beta_loop(AR, 100, cycle, 2)


def test_summation_inequality_traces():
    delta = lambda k: (np.asarray(k) == 0).astype(float)  # noqa: E731
    tr = summation_inequality_check(delta, 3, (1, 1, 1), K_grid=(5, 50))
    assert tr.kind == "i" and tr.ratio == [1.0, 1.0]
    f = lambda k: (1.0 + np.abs(k)) ** -0.6  # noqa: E731
    tr = summation_inequality_check(f, 3, (1, 1, 0), (0, 1, 1), K_grid=(50, 200, 800))
    assert tr.kind == "iii" and max(tr.ratio) / min(tr.ratio) < 3
    assert summation_inequality_check(f, 2, (1, 0), K_grid=(20,)).kind == "ii"
    with pytest.raises(ValueError):
        summation_inequality_check(f, 3, (1, 2, 0))
    with pytest.raises(ValueError):
        summation_inequality_check(f, 3, (1, 1, 0), (2, 2, 0))
