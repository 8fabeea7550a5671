"""Probabilists' Hermite polynomials and truncated Hermite series.

All polynomials follow the probabilists' convention ``He_q`` that is
orthogonal against the standard Gaussian measure, ``E[He_p(Z) He_q(Z)] =
q! [p == q]``.  The physicists' polynomials ``H_q`` used by
``numpy.polynomial.hermite`` differ by a rescaling of the argument by
``sqrt(2)``; mixing the two silently produces wrong coefficients, so every
routine here goes through ``numpy.polynomial.hermite_e``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import hermite_e
from scipy.special import roots_hermitenorm

from .exceptions import (
    HermiteOverflowError,
    NumericalError,
    RankError,
    TruncationWarning,
)

__all__ = [
    "HermiteSeries",
    "eval_hermite",
    "hermite_table",
    "eval_series",
    "gauss_hermite",
    "project",
    "shift_T",
    "abs_op_A",
    "derivative",
    "sigma_sq",
    "SigmaSq",
    "hermite_product",
    "truncated_power",
    "lemma33_criterion",
    "Lemma33Trace",
    "catalog",
    "abs_centered_coeffs",
]

MAX_ORDER = 64
RANK_TOL = 1e-10


def _log_factorial(q):
    return math.lgamma(q + 1.0)


@dataclass(eq=False)
class HermiteSeries:
    """Finite Hermite expansion ``sum_q coeffs[q] He_q``.

    Parameters
    ----------
    coeffs : array_like
        Coefficients ``c_0 .. c_Qmax``.
    rank : int, optional
        Hermite rank.  By default the smallest ``q >= 1`` with a nonzero
        coefficient (0 for constants and the zero series).  Operators that
        lower the rank, such as :func:`shift_T`, set it explicitly.
    """

    coeffs: np.ndarray
    rank: int | None = None
    convention: str = field(default="probabilist", repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float, copy=True).ravel()
        if c.size == 0:
            c = np.zeros(1)
        if not np.all(np.isfinite(c)):
            raise NumericalError("Hermite coefficients must be finite")
        c.setflags(write=False)
        self.coeffs = c
        if self.rank is None:
            nz = np.flatnonzero(c[1:])
            self.rank = int(nz[0] + 1) if nz.size else 0
        else:
            self.rank = int(self.rank)
            if self.rank > 0:
                if np.any(c[1:self.rank] != 0):
                    raise RankError(
                        f"coefficients below rank {self.rank} must vanish")
                if self.rank >= c.size or c[self.rank] == 0:
                    raise RankError(f"coefficient at rank {self.rank} is zero")

    @property
    def q_max(self):
        return self.coeffs.size - 1

    @property
    def is_zero(self):
        return not np.any(self.coeffs)

    def norm(self):
        """L2(gamma) norm, ``sqrt(sum q! c_q^2)``."""
        return math.sqrt(_norm_sq(self.coeffs))

    def truncate(self, N):
        """Return ``sum_{q <= N} c_q He_q``."""
        c = self.coeffs[:N + 1]
        nz = np.flatnonzero(c[1:])
        rank = None if nz.size or self.rank == 0 else 0
        return HermiteSeries(c, rank=rank)

    def __call__(self, x):
        return eval_series(self, x)

    def __add__(self, other):
        a, b = self.coeffs, other.coeffs
        n = max(a.size, b.size)
        return HermiteSeries(np.pad(a, (0, n - a.size)) + np.pad(b, (0, n - b.size)))

    def __mul__(self, scalar):
        return HermiteSeries(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, HermiteSeries):
            return NotImplemented
        n = max(self.coeffs.size, other.coeffs.size)
        a = np.pad(self.coeffs, (0, n - self.coeffs.size))
        b = np.pad(other.coeffs, (0, n - other.coeffs.size))
        return self.rank == other.rank and np.array_equal(a, b)

    def to_dict(self):
        return {"coeffs": [float(v) for v in self.coeffs], "rank": self.rank,
                "convention": "probabilist"}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data):
        conv = data.get("convention", "probabilist")
        if conv != "probabilist":
            raise ValueError(f"unsupported Hermite convention {conv!r}")
        return cls(data["coeffs"], rank=data.get("rank"))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def monomial(cls, q, scale=1.0):
        """The single-chaos series ``scale * He_q``."""
        c = np.zeros(q + 1)
        c[q] = scale
        return cls(c)


def _norm_sq(c):
    q = np.arange(c.size)
    nz = c != 0
    if not np.any(nz):
        return 0.0
    logs = 2.0 * np.log(np.abs(c[nz])) + np.array([_log_factorial(k) for k in q[nz]])
    return float(np.sum(np.exp(logs)))


def hermite_table(q_max, x):
    """Values ``He_0(x) .. He_{q_max}(x)`` stacked along the first axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty((q_max + 1,) + x.shape)
    out[0] = 1.0
    if q_max >= 1:
        out[1] = x
    for q in range(1, q_max):
        out[q + 1] = x * out[q] - q * out[q - 1]
    return out


def eval_hermite(q, x, max_order=MAX_ORDER):
    """Evaluate ``He_q(x)`` by the three-term recurrence.

    Raises
    ------
    HermiteOverflowError
        If the value leaves the double range.
    """
    if q < 0:
        raise ValueError("Hermite order must be nonnegative")
    if q > max_order:
        raise ValueError(f"Hermite order {q} exceeds configured maximum {max_order}")
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        prev, cur = np.ones_like(x), x.copy()
        if q == 0:
            cur = prev
        for k in range(1, q):
            prev, cur = cur, x * cur - k * prev
    if not np.all(np.isfinite(cur)):
        raise HermiteOverflowError(f"He_{q}(x) overflows double precision")
    return float(cur) if cur.ndim == 0 else cur


def eval_series(s, x):
    """Evaluate a Hermite series at ``x`` (Clenshaw recurrence)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        val = hermite_e.hermeval(x, s.coeffs)
    if not np.all(np.isfinite(val)):
        raise HermiteOverflowError("series evaluation overflows double precision")
    return float(val) if np.ndim(val) == 0 else val


def gauss_hermite(order):
    """Nodes and weights integrating against the standard Gaussian measure."""
    x, w = roots_hermitenorm(order)
    return x, w / math.sqrt(2.0 * math.pi)


def _adaptive_moments(f, q_max, breakpoints):
    # piecewise adaptive quadrature; accurate for kinks and jumps at the breakpoints
    from scipy.integrate import IntegrationWarning, quad

    edges = [-np.inf] + sorted(float(b) for b in breakpoints) + [np.inf]
    phi = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)  # noqa: E731

    def integral(g):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            return sum(quad(g, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
                       for a, b in zip(edges[:-1], edges[1:]))

    f0 = lambda x: float(np.asarray(f(np.array([x])), dtype=float).reshape(-1)[0])  # noqa: E731
    raw = np.array([integral(lambda x, q=q: f0(x) * float(eval_hermite(q, x)) * phi(x))
                    for q in range(q_max + 1)])
    total = integral(lambda x: f0(x) ** 2 * phi(x))
    return raw, total


def project(f, q_max, quad_order=None, zero_tol=RANK_TOL, tail_tol=1e-6,
            require_rank=True, breakpoints=None):
    """Hermite coefficients ``c_q = E[f(Z) He_q(Z)] / q!`` for ``q <= q_max``.

    By default Gauss-Hermite quadrature of ``quad_order`` nodes is used.  It
    converges slowly for non-smooth ``f``; passing ``breakpoints`` (points
    where ``f`` has a kink or jump) switches to adaptive quadrature on the
    pieces between them.

    Coefficients below ``zero_tol * ||f||`` are set to zero so that the
    detected rank is not polluted by quadrature noise.  A
    :class:`TruncationWarning` is issued when the quadrature estimate of
    the discarded tail mass ``E[f^2] - sum q! c_q^2`` exceeds ``tail_tol``.
    """
    if breakpoints is not None:
        raw, total = _adaptive_moments(f, q_max, breakpoints)
    else:
        if quad_order is None:
            quad_order = 2 * q_max + 8
        if quad_order < q_max + 4:
            raise ValueError("quad_order must be at least q_max + 4")
        x, w = gauss_hermite(quad_order)
        fx = np.asarray(f(x), dtype=float)
        if fx.shape != x.shape:
            fx = np.broadcast_to(fx, x.shape)
        raw = hermite_table(q_max, x) @ (w * fx)
        total = float(np.sum(w * fx * fx))
    c = raw / np.array([math.factorial(q) for q in range(q_max + 1)], dtype=float)
    scale = math.sqrt(max(total, 0.0))
    c[np.abs(c) <= zero_tol * max(scale, 1e-300)] = 0.0
    s = HermiteSeries(c)
    tail = total - _norm_sq(c)
    if tail > tail_tol * max(total, 1.0):
        warnings.warn(
            f"estimated Hermite tail mass {tail:.3e} beyond order {q_max}",
            TruncationWarning, stacklevel=2)
    if require_rank and s.rank == 0:
        raise RankError("projected function has Hermite rank 0 (constant); rank >= 1 required")
    return s


def shift_T(s, k):
    """``T_k``: move every coefficient ``c_m`` to index ``m - k``."""
    if k < 0:
        raise ValueError("shift must be nonnegative")
    if k == 0:
        return s
    if s.rank == 0 or k > s.rank:
        raise RankError(f"T_{k} is defined only for 1 <= k <= rank (rank={s.rank})")
    c = np.zeros(s.q_max - k + 1)
    c[:] = s.coeffs[k:]
    return HermiteSeries(c, rank=s.rank - k)


def abs_op_A(s):
    """Replace each coefficient by its absolute value."""
    return HermiteSeries(np.abs(s.coeffs), rank=s.rank)


def derivative(s, order=1):
    """Derivative of the series, using ``He_q' = q He_{q-1}``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    c = s.coeffs
    if c.size <= order:
        return HermiteSeries(np.zeros(1))
    q = np.arange(order, c.size)
    falling = np.ones(q.size)
    for j in range(order):
        falling *= q - j
    return HermiteSeries(c[order:] * falling)


@dataclass
class SigmaSq:
    value: float
    tail_estimate: float
    lag_cutoff: int
    summable: bool

    def __float__(self):
        return self.value


def sigma_sq(s, model, lag_cutoff=10_000):
    """Limiting variance ``sum_q q! c_q^2 sum_k rho(k)^q`` truncated at
    ``|k| <= lag_cutoff``.

    ``tail_estimate`` is the change produced by doubling the lag cutoff;
    ``summable`` reports whether ``sum |rho|^d`` has saturated.
    """
    from .covariance import summability

    if s.rank < 1:
        raise RankError("sigma_sq requires Hermite rank >= 1")

    def partial(L):
        k = np.arange(1, L + 1)
        r = model.rho(k)
        total = 0.0
        for q in range(max(s.rank, 1), s.q_max + 1):
            cq = s.coeffs[q]
            if cq == 0:
                continue
            total += math.factorial(q) * cq * cq * (1.0 + 2.0 * np.sum(r ** q))
        return total

    value = partial(lag_cutoff)
    tail = abs(partial(2 * lag_cutoff) - value)
    _, saturated = summability(model, s.rank, lag_cutoff)
    if not value > 1e-12:
        raise NumericalError(f"sigma^2 = {value:.3e} is not positive")
    return SigmaSq(value, tail, lag_cutoff, saturated)


def _product_weight_log(p, q, r):
    return (_log_factorial(p) + _log_factorial(q) - _log_factorial(r)
            - _log_factorial(p - r) - _log_factorial(q - r))


def hermite_product(a, b):
    """Coefficients of the product of two Hermite series.

    Uses ``He_p He_q = sum_r C(p,r) C(q,r) r! He_{p+q-2r}``.  Weights are
    exact integers for orders up to 20 and are otherwise combined with the
    coefficients in log space, so large factorials never overflow.
    """
    ca, cb = a.coeffs, b.coeffs
    out = np.zeros(ca.size + cb.size - 1)
    for p in np.flatnonzero(ca):
        for q in np.flatnonzero(cb):
            small = p <= 20 and q <= 20
            sign = math.copysign(1.0, ca[p] * cb[q])
            logc = math.log(abs(ca[p])) + math.log(abs(cb[q]))
            for r in range(min(p, q) + 1):
                if small:
                    term = ca[p] * cb[q] * (math.comb(p, r) * math.comb(q, r)
                                            * math.factorial(r))
                else:
                    term = sign * math.exp(logc + _product_weight_log(p, q, r))
                out[p + q - 2 * r] += term
    return HermiteSeries(out)


def truncated_power(s, M, N):
    """Hermite coefficients of ``(g^{(N)})^M`` where ``g^{(N)}`` keeps
    orders ``0..N``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if N > s.q_max:
        raise ValueError("truncation N exceeds the available order")
    base = HermiteSeries(s.coeffs[:N + 1])
    out = base
    for _ in range(M - 1):
        out = hermite_product(out, base)
    return out


@dataclass
class Lemma33Trace:
    terms: np.ndarray
    partial_sums: np.ndarray
    classification: str
    note: str = ("sufficient condition only: a 'growing' trace does not show "
                 "that A(g) fails the regularity requirement")


def lemma33_criterion(s, ell, M, finite=False, rel_tol=1e-6):
    """Partial sums of ``sum |c_q| q^{ell/2 - 1/4} sqrt(q!) (M-1)^{q/2}``.

    The classification is ``"saturating"`` when the series is a polynomial
    (``finite=True`` or trailing zero coefficients) or when its trailing
    terms decrease below ``rel_tol`` of the partial sum; otherwise
    ``"growing"``.
    """
    if M < 3:
        raise ValueError("M must be >= 3")
    if ell < 0:
        raise ValueError("ell must be >= 0")
    c = s.coeffs
    terms = np.zeros(c.size)
    for q in np.flatnonzero(c):
        log_t = (math.log(abs(c[q])) + (ell / 2 - 0.25) * math.log(max(q, 1))
                 + 0.5 * _log_factorial(q) + 0.5 * q * math.log(M - 1))
        terms[q] = math.exp(log_t) if log_t < 700 else math.inf
    partial = np.cumsum(terms)
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return Lemma33Trace(terms, partial, "saturating")
    last = nz[-1]
    polynomial = finite or last < c.size - 1 - max(2, c.size // 4)
    if polynomial:
        label = "saturating"
    else:
        tail = terms[nz[nz >= max(nz[0], int(0.75 * last))]]
        decreasing = np.all(np.diff(tail) <= 0)
        small = np.isfinite(partial[-1]) and terms[last] <= rel_tol * partial[-1]
        label = "saturating" if decreasing and small else "growing"
    return Lemma33Trace(terms, partial, label)


def abs_centered_coeffs(q_max):
    """Exact Hermite coefficients of ``|x| - sqrt(2/pi)``.

    ``c_{2m} = 2 phi(0) (-1)^(m-1) (2m-3)!! / (2m)!`` for ``m >= 1``; odd
    coefficients vanish.
    """
    c = np.zeros(q_max + 1)
    phi0 = 1.0 / math.sqrt(2.0 * math.pi)
    for m in range(1, q_max // 2 + 1):
        q = 2 * m
        log_df = _log_factorial(2 * m - 2) - (m - 1) * math.log(2) - _log_factorial(m - 1)
        c[q] = (-1) ** (m - 1) * 2 * phi0 * math.exp(log_df - _log_factorial(q))
    return c


def _sign_power_fn(p):
    mean = 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
    return lambda x: np.abs(x) ** p - mean


def catalog(name, q_max=40, quad_order=None):
    """Built-in functions.

    ``"H<q>"`` (e.g. ``"H2"``), ``"square"`` (``x^2``, rank 2 with
    ``c_0 = 1``), ``"abs_centered"`` (``|x| - sqrt(2/pi)``, exact
    coefficients) and ``"sign_power:<p>"`` (``|x|^p - E|Z|^p``, projected
    by adaptive quadrature split at the origin).
    """
    if name.startswith("H") and name[1:].isdigit():
        return HermiteSeries.monomial(int(name[1:]))
    if name == "square":
        return HermiteSeries([1.0, 0.0, 1.0])
    if name == "abs_centered":
        return HermiteSeries(abs_centered_coeffs(q_max))
    if name.startswith("sign_power:"):
        p = float(name.split(":", 1)[1])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            if quad_order is not None:
                return project(_sign_power_fn(p), q_max, quad_order=quad_order)
            return project(_sign_power_fn(p), q_max, breakpoints=[0.0])
    raise KeyError(f"unknown catalog function {name!r}")


CATALOG_FUNCTIONS = {
    "abs_centered": lambda x: np.abs(x) - math.sqrt(2.0 / math.pi),
    "square": lambda x: np.asarray(x, dtype=float) ** 2,
}
