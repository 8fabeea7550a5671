"""Contraction diagrams and exact moments of Hermite functionals.

A diagram on ``M`` vertices of orders ``q_1..q_M`` assigns a multiplicity
``beta[j,k] >= 0`` to every pair ``j < k`` such that the multiplicities
touching vertex ``l`` add up to ``q_l``.  For jointly Gaussian unit-variance
``X_1..X_M`` with correlations ``r_jk``::

    E[prod He_{q_i}(X_i)] = sum_beta C(q, beta) prod r_jk^beta_jk,
    C(q, beta) = prod q_i! / prod beta_jk!

Stationary index sums over ``(i_1, .., i_M)`` are reduced to sums over lag
vectors weighted by the number of index tuples realising each lag vector.
"""
from __future__ import annotations

import contextlib
import functools
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .covariance import lag_cutoff
from .exceptions import BudgetExceeded, RankError

__all__ = [
    "ContractionDiagram",
    "pairs",
    "enumerate_diagrams",
    "enumerate_bounded_family",
    "product_moment",
    "hermite_product_cov",
    "exact_var_DFu",
    "exact_third_moment",
    "A_n_beta",
    "A_n_beta_loop",
    "max_A_over_family",
    "summation_inequality_check",
    "dump_diagrams",
    "mutate_weights",
]

MAX_VERTICES = 8
MAX_ORDER = 12
DEFAULT_MAX_DIAGRAMS = 200_000
MAX_GRID = 60_000_000

_weight_factor = Fraction(1)


@contextlib.contextmanager
def mutate_weights(factor):
    """Development-only: scale every diagram weight by ``factor`` so that
    oracle checks can be shown to fail."""
    global _weight_factor
    old = _weight_factor
    _weight_factor = Fraction(factor)
    try:
        yield
    finally:
        _weight_factor = old


@functools.lru_cache(maxsize=None)
def pairs(M):
    """Vertex pairs ``(j, k)``, ``j < k``, in lexicographic order."""
    return tuple(itertools.combinations(range(M), 2))


@dataclass(frozen=True)
class ContractionDiagram:
    q: tuple
    beta: tuple  # one entry per pair, in ``pairs(M)`` order

    @property
    def M(self):
        return len(self.q)

    @property
    def weight(self):
        num = math.prod(math.factorial(v) for v in self.q)
        den = math.prod(math.factorial(b) for b in self.beta)
        return Fraction(num, den) * _weight_factor

    def matrix(self):
        B = np.zeros((self.M, self.M), dtype=int)
        for (j, k), b in zip(pairs(self.M), self.beta):
            B[j, k] = B[k, j] = b
        return B

    def edges(self):
        return {(j, k): b for (j, k), b in zip(pairs(self.M), self.beta) if b}

    def to_dict(self):
        w = self.weight
        return {"beta": [[j + 1, k + 1, b] for (j, k), b in self.edges().items()],
                "C_num": w.numerator, "C_den": w.denominator}

    def value(self, corr):
        """``prod corr[j,k]^beta_jk``."""
        out = 1
        for (j, k), b in self.edges().items():
            out = out * corr[j][k] ** b
        return out


def _check_orders(q):
    if len(q) > MAX_VERTICES:
        raise BudgetExceeded(f"at most {MAX_VERTICES} vertices supported")
    if any(v < 0 for v in q):
        raise ValueError("orders must be nonnegative")
    if any(v > MAX_ORDER for v in q):
        raise BudgetExceeded(f"orders above {MAX_ORDER} are not supported")


def _normalize_constraints(M, min_beta, cross):
    mb = tuple(sorted(((min(j, k), max(j, k)), int(v))
                      for (j, k), v in (min_beta or {}).items()))
    cr = None
    if cross is not None:
        cr = (tuple(sorted(cross[0])), tuple(sorted(cross[1])))
    return mb, cr


def enumerate_diagrams(q, min_beta=None, cross=None, max_count=DEFAULT_MAX_DIAGRAMS):
    """All diagrams with vertex orders ``q``.

    Parameters
    ----------
    q : sequence of int
    min_beta : dict, optional
        Lower bounds ``{(j, k): b}`` on chosen multiplicities (0-based).
    cross : pair of vertex sets, optional
        Keep only diagrams with at least one edge between the two sets.
    max_count : int
        Raise :class:`BudgetExceeded` beyond this many diagrams.
    """
    q = tuple(int(v) for v in q)
    _check_orders(q)
    mb, cr = _normalize_constraints(len(q), min_beta, cross)
    return list(_enumerate(q, mb, cr, max_count))


@functools.lru_cache(maxsize=4096)
def _enumerate(q, min_beta, cross, max_count):
    M = len(q)
    if sum(q) % 2:
        return ()
    prs = pairs(M)
    lows = dict(min_beta)
    last_pair = {}
    for idx, (j, k) in enumerate(prs):
        last_pair[j] = idx
        last_pair[k] = idx
    out = []
    rem = list(q)
    beta = [0] * len(prs)

    def rec(idx):
        if idx == len(prs):
            if any(rem):
                return
            if cross is not None:
                A, B = cross
                if not any(beta[prs.index((min(a, b), max(a, b)))]
                           for a in A for b in B):
                    return
            out.append(ContractionDiagram(q, tuple(beta)))
            if len(out) > max_count:
                raise BudgetExceeded(
                    f"more than {max_count} diagrams for q={q}")
            return
        j, k = prs[idx]
        lo = lows.get((j, k), 0)
        hi = min(rem[j], rem[k])
        forced = []
        if last_pair[j] == idx:
            forced.append(rem[j])
        if last_pair[k] == idx:
            forced.append(rem[k])
        if forced:
            if len(set(forced)) > 1:
                return
            lo = max(lo, forced[0])
            hi = min(hi, forced[0])
        for b in range(lo, hi + 1):
            beta[idx] = b
            rem[j] -= b
            rem[k] -= b
            rec(idx + 1)
            rem[j] += b
            rem[k] += b
        beta[idx] = 0

    if M == 1:
        return (ContractionDiagram(q, ()),) if q[0] == 0 else ()
    rec(0)
    return tuple(out)


def enumerate_bounded_family(M, max_entry=2, min_degree=2, min_beta=None,
                             cross=None, max_count=DEFAULT_MAX_DIAGRAMS):
    """Diagrams with entries ``<= max_entry`` and every vertex degree
    ``>= min_degree`` (orders are read off the degrees).

    Returns ``(diagrams, truncated)``; ``truncated`` is set when the
    ``max_count`` cap stopped the enumeration.
    """
    prs = pairs(M)
    mb = dict(min_beta or {})
    ranges = [range(mb.get(p, 0), max_entry + 1) for p in prs]
    out = []
    for beta in itertools.product(*ranges):
        deg = [0] * M
        for (j, k), b in zip(prs, beta):
            deg[j] += b
            deg[k] += b
        if min(deg) < min_degree:
            continue
        if cross is not None and not any(
                beta[prs.index((min(a, b), max(a, b)))] for a in cross[0] for b in cross[1]):
            continue
        out.append(ContractionDiagram(tuple(deg), tuple(beta)))
        if len(out) >= max_count:
            return out, True
    return out, False


def dump_diagrams(diagrams):
    """JSON-ready list ``[{beta: [[j,k,b]], C_num, C_den}]`` (1-based)."""
    return [d.to_dict() for d in diagrams]


def product_moment(q, corr, exact=False):
    """``E[prod He_{q_i}(X_i)]`` for unit-variance Gaussians with
    correlation matrix ``corr``.

    With ``exact=True`` the entries of ``corr`` are converted to
    :class:`fractions.Fraction` and the result is exact.
    """
    corr = _check_corr(corr, len(q), exact)
    diagrams = enumerate_diagrams(q)
    if exact:
        return sum((d.weight * d.value(corr) for d in diagrams), Fraction(0))
    return float(sum(float(d.weight) * d.value(corr) for d in diagrams))


def _check_corr(corr, M, exact):
    if exact:
        C = [[Fraction(corr[i][j]) for j in range(M)] for i in range(M)]
    else:
        C = np.asarray(corr, dtype=float)
    for i in range(M):
        if C[i][i] != 1:
            raise ValueError("correlation matrix must have unit diagonal")
        for j in range(i):
            if C[i][j] != C[j][i]:
                raise ValueError("correlation matrix must be symmetric")
    return C


def hermite_product_cov(q, corr, exact=False):
    """``Cov(He_{q1}(X1) He_{q2}(X2), He_{q3}(X3) He_{q4}(X4))`` as the sum
    over diagrams with at least one edge between ``{1,2}`` and ``{3,4}``."""
    if len(q) != 4:
        raise ValueError("hermite_product_cov takes four orders")
    corr = _check_corr(corr, 4, exact)
    diagrams = enumerate_diagrams(q, cross=((0, 1), (2, 3)))
    if exact:
        return sum((d.weight * d.value(corr) for d in diagrams), Fraction(0))
    return float(sum(float(d.weight) * d.value(corr) for d in diagrams))


# ---------------------------------------------------------------------------
# stationary index sums

def _multiplicity(n, *offsets):
    lo = hi = 0
    for o in offsets:
        lo = np.minimum(lo, o)
        hi = np.maximum(hi, o)
    return np.maximum(0.0, n - (hi - lo))


def _support(s, N, low=1):
    c = s.coeffs[:N + 1]
    return [(q, float(c[q])) for q in range(low, c.size) if c[q] != 0]


def _var_dfu_terms(s, N):
    """Exponent tuples ``(e12, e13, e14, e23, e24, e34)`` with their total
    coefficient in ``n^2 Var(Phi_{n,N})``."""
    terms = {}
    supp = _support(s, N)
    for (q1, c1), (q2, c2), (q3, c3), (q4, c4) in itertools.product(supp, repeat=4):
        orders = (q1 - 1, q2 - 1, q3 - 1, q4 - 1)
        coef = q1 * q3 * c1 * c2 * c3 * c4
        for d in enumerate_diagrams(orders, cross=((0, 1), (2, 3))):
            b12, b13, b14, b23, b24, b34 = d.beta
            e = (b12 + 1, b13, b14, b23, b24, b34 + 1)
            terms[e] = terms.get(e, 0.0) + coef * float(d.weight)
    return terms


def exact_var_DFu(s, model, n, N=None, method="lag", max_order=8, max_grid=MAX_GRID):
    """Exact variance of ``<DF_n, u_n> = n^{-1} sum_{i,j} g'(X_i) g_1(X_j) rho(i-j)``
    for the series truncated at order ``N``.

    ``method="lag"`` sums over lag vectors ``(i1-i2, i3-i4, i1-i3)`` with
    their multiplicities; ``method="loop"`` performs the literal four-fold
    index sum (``n <= 64``).
    """
    N = s.q_max if N is None else N
    if s.rank < 1:
        raise RankError("rank >= 1 required")
    if N > max_order:
        raise BudgetExceeded(f"truncation N={N} exceeds {max_order}")
    terms = _var_dfu_terms(s, N)
    if not terms:
        return 0.0
    if method == "loop":
        if n > 64:
            raise BudgetExceeded("literal loop limited to n <= 64")
        idx = np.arange(n)
        Rm = model.rho(idx[:, None] - idx[None, :])
        total = 0.0
        for (e12, e13, e14, e23, e24, e34), coef in terms.items():
            total += coef * np.einsum("ab,ac,ad,bc,bd,cd->", Rm ** e12, Rm ** e13,
                                      Rm ** e14, Rm ** e23, Rm ** e24, Rm ** e34,
                                      optimize=False)
        return float(total) / n ** 2
    if method != "lag":
        raise ValueError(f"unknown method {method!r}")
    L = lag_cutoff(model, n)
    Lc = min(n - 1, 3 * L)
    size = (2 * L + 1) ** 2 * (2 * Lc + 1)
    if size > max_grid:
        raise BudgetExceeded(f"lag grid of {size} points exceeds budget {max_grid}")
    a = np.arange(-L, L + 1)[:, None, None]
    b = np.arange(-L, L + 1)[None, :, None]
    c = np.arange(-Lc, Lc + 1)[None, None, :]
    mult = _multiplicity(n, -a, -c, -c - b)
    base = [model.rho(a), model.rho(c), model.rho(c + b), model.rho(c - a),
            model.rho(c + b - a), model.rho(b)]
    total = 0.0
    for e, coef in sorted(terms.items()):
        prod = mult
        for arr, p in zip(base, e):
            if p:
                prod = prod * arr ** p
        total += coef * float(np.sum(prod))
    return total / n ** 2


def _third_moment_terms(s, N):
    terms = {}
    supp = _support(s, N)
    for (q1, c1), (q2, c2), (q3, c3) in itertools.product(supp, repeat=3):
        for d in enumerate_diagrams((q1, q2, q3)):
            terms[d.beta] = terms.get(d.beta, 0.0) + c1 * c2 * c3 * float(d.weight)
    return terms


def exact_third_moment(s, model, n, N=None, method="lag", max_grid=MAX_GRID):
    """Exact ``E[F_n^3]`` for the series truncated at order ``N`` (the
    constant coefficient is ignored, i.e. ``g`` is taken centred)."""
    N = s.q_max if N is None else N
    if N > MAX_ORDER:
        raise BudgetExceeded(f"truncation N={N} exceeds {MAX_ORDER}")
    terms = _third_moment_terms(s, N)
    if not terms:
        return 0.0
    if method == "loop":
        if n > 256:
            raise BudgetExceeded("literal loop limited to n <= 256")
        idx = np.arange(n)
        Rm = model.rho(idx[:, None] - idx[None, :])
        total = sum(coef * np.einsum("ab,ac,bc->", Rm ** e12, Rm ** e13, Rm ** e23)
                    for (e12, e13, e23), coef in terms.items())
        return float(total) / n ** 1.5
    L = min(n - 1, 2 * lag_cutoff(model, n))
    if (2 * L + 1) ** 2 > max_grid:
        raise BudgetExceeded("lag grid exceeds budget")
    a = np.arange(-L, L + 1)[:, None]
    b = np.arange(-L, L + 1)[None, :]
    mult = _multiplicity(n, -a, -b)
    base = [model.rho(a), model.rho(b), model.rho(b - a)]
    total = 0.0
    for e, coef in sorted(terms.items()):
        prod = mult
        for arr, p in zip(base, e):
            if p:
                prod = prod * arr ** p
        total += coef * float(np.sum(prod))
    return total / n ** 1.5


_LETTERS = "abcdefghijklmnop"


def _beta_edges(beta):
    if isinstance(beta, ContractionDiagram):
        return beta.M, beta.edges()
    B = np.asarray(beta)
    M = B.shape[0]
    return M, {(j, k): int(B[j, k]) for j, k in pairs(M) if B[j, k]}


def A_n_beta(model, n, beta, exponent, max_flops=2e10):
    """``n^{-exponent} sum_{i_1..i_M} prod_{j<k} |rho(i_j - i_k)|^{beta_jk}``.

    The index sum is evaluated exactly as a tensor contraction of the
    ``n x n`` matrices ``|rho(i - j)|^beta``; isolated vertices contribute a
    factor ``n``.
    """
    M, edges = _beta_edges(beta)
    idx = np.arange(n)
    absR = np.abs(model.rho(idx[:, None] - idx[None, :]))
    used = sorted({v for e in edges for v in e})
    operands, subs = [], []
    for (j, k), b in edges.items():
        operands.append(absR ** b)
        subs.append(_LETTERS[j] + _LETTERS[k])
    isolated = M - len(used)
    if not operands:
        return float(n) ** M / n ** exponent
    expr = ",".join(subs) + "->"
    path, info = np.einsum_path(expr, *operands, optimize="optimal" if len(operands) <= 8 else "greedy")
    flops = float(info.split("Optimized FLOP count:")[1].split()[0])
    if flops > max_flops:
        raise BudgetExceeded(f"diagram sum needs ~{flops:.2e} flops")
    total = np.einsum(expr, *operands, optimize=path)
    return float(total) * float(n) ** isolated / n ** exponent


def A_n_beta_loop(model, n, beta, exponent, max_terms=5_000_000):
    """Literal index-loop reference for :func:`A_n_beta` (small ``n``)."""
    M, edges = _beta_edges(beta)
    if n ** M > max_terms:
        raise BudgetExceeded(f"literal loop over {n}^{M} index tuples exceeds budget")
    total = 0.0
    for tup in itertools.product(range(n), repeat=M):
        term = 1.0
        for (j, k), b in edges.items():
            term *= abs(model.rho(tup[j] - tup[k])) ** b
        total += term
    return total / n ** exponent


def max_A_over_family(model, n, diagrams, exponent, truncated=False):
    """Largest ``A_{n,beta}`` over an enumerated family.

    Returns ``(value, diagram, truncated)``; ``truncated`` echoes whether
    the family was cut by an enumeration budget, in which case the maximum
    is over the enumerated part only.
    """
    best, arg = -math.inf, None
    for d in diagrams:
        v = A_n_beta(model, n, d, exponent)
        if v > best:
            best, arg = v, d
    return best, arg, truncated


# ---------------------------------------------------------------------------
# summation inequalities

@dataclass
class RatioTrace:
    kind: str
    K: list
    lhs: list
    rhs: list
    ratio: list


def _fvals(f, k):
    v = np.asarray(f(np.asarray(k)), dtype=float)
    if np.any(v < 0):
        raise ValueError("f must be nonnegative")
    return v


def _signed(fk, sign):
    return fk if sign > 0 else fk[::-1]


def _lhs_single(f, M, v, K):
    k = np.arange(-K, K + 1)
    fk = _fvals(f, k)
    dist = np.ones(1)
    lo = 0
    scale = 1.0
    for vj in v:
        if vj == 0:
            scale *= fk.sum()
        else:
            dist = np.convolve(dist, _signed(fk, vj))
            lo -= K
    s = np.arange(lo, lo + dist.size)
    return scale * float(np.dot(dist, _fvals(f, s)))


def _lhs_double(f, M, v, w, K, max_grid):
    k = np.arange(-K, K + 1)
    fk = _fvals(f, k)
    elim = next((c for c in range(M) if v[c] * w[c] == 0), None)
    if elim is None:
        if (2 * K + 1) ** M > max_grid:
            raise BudgetExceeded("no coordinate can be summed out; grid too large")
        rest, h_on, h = list(range(M)), None, None
    else:
        rest = [j for j in range(M) if j != elim]
        vc, wc = v[elim], w[elim]
        if vc == 0 and wc == 0:
            h_on, h = None, fk.sum()
        else:
            # h(x) = sum_kc f(kc) f(x + sgn * kc) over the coordinate's range
            sgn = vc if vc != 0 else wc
            h_on = "v" if vc != 0 else "w"
            span = sum(abs(v[j] if h_on == "v" else w[j]) for j in rest) * K
            x = np.arange(-span, span + 1)
            xs = np.arange(-span - K, span + K + 1)
            corr = np.correlate(_fvals(f, xs), fk, mode="valid") if sgn > 0 else \
                np.correlate(_fvals(f, xs), fk[::-1], mode="valid")
            h = (x, corr)
        if (2 * K + 1) ** len(rest) > max_grid:
            raise BudgetExceeded("remaining summation grid too large")
    first, others = rest[0], rest[1:]
    grids = np.meshgrid(*[k] * len(others), indexing="ij") if others else []
    prod_others = np.ones(grids[0].shape) if others else np.ones(())
    for g in grids:
        prod_others = prod_others * _fvals(f, g)
    total = 0.0
    for k1, f1 in zip(k, fk):
        sv = v[first] * k1 + sum(v[j] * g for j, g in zip(others, grids))
        sw = w[first] * k1 + sum(w[j] * g for j, g in zip(others, grids))
        term = f1 * prod_others
        if h_on is None:
            term = term * _fvals(f, sv) * _fvals(f, sw)
            if h is not None:
                term = term * h
        else:
            x, hv = h
            if h_on == "v":
                term = term * hv[np.asarray(sv) - x[0]] * _fvals(f, sw)
            else:
                term = term * hv[np.asarray(sw) - x[0]] * _fvals(f, sv)
        total += float(np.sum(term))
    return total


def summation_inequality_check(f, M, v, w=None, K_grid=(200, 2000), kind=None,
                               max_grid=MAX_GRID):
    """Ratio of both sides of the lattice summation inequalities.

    ``kind="i"``: ``sum_k f(k.v) prod f(k_j)`` vs ``(sum f^{1+1/M})^M``;
    ``kind="ii"``: same left side vs ``(sum f)^{M-1}``;
    ``kind="iii"``: ``sum_k f(k.v) f(k.w) prod f(k_j)`` vs ``(sum f)^{M-2}``.
    Sums over ``k`` run over ``[-K, K]^M``; the right-hand sums over
    ``|k| <= K``.  The unknown constant makes this a diagnostic only.
    """
    v = [int(x) for x in v]
    if len(v) != M or any(x not in (-1, 0, 1) for x in v):
        raise ValueError("v must have M components in {-1, 0, 1}")
    if w is not None:
        w = [int(x) for x in w]
        if len(w) != M or any(x not in (-1, 0, 1) for x in w):
            raise ValueError("w must have M components in {-1, 0, 1}")
        if np.linalg.matrix_rank(np.array([v, w])) < 2:
            raise ValueError("v and w must be linearly independent")
    if kind is None:
        kind = "iii" if w is not None else ("i" if all(x != 0 for x in v) else "ii")
    if kind == "iii" and (w is None or M < 3):
        raise ValueError("kind 'iii' needs w and M >= 3")
    out = RatioTrace(kind, [], [], [], [])
    for K in K_grid:
        fk = _fvals(f, np.arange(-K, K + 1))
        if kind == "i":
            lhs = _lhs_single(f, M, v, K)
            rhs = float(np.sum(fk ** (1 + 1 / M))) ** M
        elif kind == "ii":
            lhs = _lhs_single(f, M, v, K)
            rhs = float(np.sum(fk)) ** (M - 1)
        elif kind == "iii":
            lhs = _lhs_double(f, M, v, w, K, max_grid)
            rhs = float(np.sum(fk)) ** (M - 2)
        else:
            raise ValueError(f"unknown kind {kind!r}")
        out.K.append(int(K))
        out.lhs.append(lhs)
        out.rhs.append(rhs)
        out.ratio.append(lhs / rhs)
    return out
