"""Independent brute-force oracles for Gaussian moment identities.

These routines share no code with the diagram engine: Hermite polynomials
are expanded into monomials and Gaussian moments are evaluated by Wick's
pairing recursion, all in exact rational arithmetic.
"""
from __future__ import annotations

import random
from fractions import Fraction
from math import factorial

__all__ = [
    "hermite_monomial_coeffs",
    "gaussian_moment",
    "isserlis_product_moment",
    "random_rational_correlation",
]


def hermite_monomial_coeffs(q):
    """Integer coefficients ``a_j`` with ``He_q(x) = sum_j a_j x^j``.

    ``He_q(x) = sum_k (-1)^k q! / (k! (q-2k)! 2^k) x^{q-2k}``.
    """
    a = [0] * (q + 1)
    for k in range(q // 2 + 1):
        a[q - 2 * k] = (-1) ** k * factorial(q) // (factorial(k) * factorial(q - 2 * k) * 2 ** k)
    return a


def gaussian_moment(counts, corr, _memo=None):
    """``E[prod_i X_i^{counts_i}]`` for a centred Gaussian vector with
    covariance ``corr`` (exact when ``corr`` holds Fractions).

    Wick recursion: pair one copy of the first variable with every other
    remaining copy.
    """
    memo = {} if _memo is None else _memo
    M = len(counts)

    def rec(c):
        if sum(c) % 2:
            return 0
        if not any(c):
            return 1
        if c in memo:
            return memo[c]
        i = next(k for k in range(M) if c[k])
        base = list(c)
        base[i] -= 1
        total = 0
        for j in range(M):
            if base[j] == 0 or corr[i][j] == 0:
                continue
            nxt = list(base)
            nxt[j] -= 1
            total += base[j] * corr[i][j] * rec(tuple(nxt))
        memo[c] = total
        return total

    return rec(tuple(counts))


def isserlis_product_moment(q, corr):
    """``E[prod_i He_{q_i}(X_i)]`` by monomial expansion and Wick's theorem."""
    M = len(q)
    corr = [[Fraction(corr[i][j]) for j in range(M)] for i in range(M)]
    coeffs = [hermite_monomial_coeffs(qi) for qi in q]
    memo = {}
    total = Fraction(0)

    def walk(idx, powers, weight):
        nonlocal total
        if idx == M:
            total += weight * gaussian_moment(tuple(powers), corr, memo)
            return
        for j, a in enumerate(coeffs[idx]):
            if a:
                walk(idx + 1, powers + [j], weight * a)

    walk(0, [], 1)
    return total


def _rational_unit_vector(rng, dim, scale=6):
    # inverse stereographic projection maps rational points to rational
    # points of the unit sphere
    t = [Fraction(rng.randint(-scale, scale), rng.randint(1, scale)) for _ in range(dim - 1)]
    s = sum(x * x for x in t)
    return [2 * x / (s + 1) for x in t] + [(s - 1) / (s + 1)]


def random_rational_correlation(M, seed, dim=None):
    """A random ``M x M`` correlation matrix with rational entries, built as
    the Gram matrix of rational unit vectors (so positive semidefinite)."""
    rng = random.Random(seed)
    dim = dim or max(M, 2)
    vecs = [_rational_unit_vector(rng, dim) for _ in range(M)]
    return [[Fraction(1) if i == j else sum(a * b for a, b in zip(vecs[i], vecs[j]))
             for j in range(M)] for i in range(M)]
