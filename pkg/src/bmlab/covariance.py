"""Stationary covariance models for unit-variance Gaussian sequences."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CovarianceModel", "rho", "summability", "lag_cutoff"]

FAMILIES = ("iid", "ar1", "fgn_increment", "power_tail", "custom")


@dataclass(frozen=True)
class CovarianceModel:
    """Covariance ``rho(k) = E[X_0 X_k]`` of a stationary Gaussian sequence.

    Families and parameters:

    - ``iid``: ``rho(k) = [k == 0]``
    - ``ar1`` (``r``): ``r^|k|``, ``|r| < 1``
    - ``fgn_increment`` (``H``): fractional Gaussian noise,
      ``(|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2``
    - ``power_tail`` (``alpha``, optional ``table_cutoff``):
      ``(1 + |k|)^{-alpha}``, set to zero beyond ``table_cutoff``
    - ``custom`` (``table``): ``rho(k) = table[|k|]``, zero past the table
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown covariance family {self.family!r}")
        p = dict(self.params)
        if self.family == "ar1":
            if not abs(p["r"]) < 1:
                raise ValueError("ar1 requires |r| < 1")
        elif self.family == "fgn_increment":
            if not 0 < p["H"] < 1:
                raise ValueError("fgn_increment requires 0 < H < 1")
        elif self.family == "power_tail":
            if not p["alpha"] > 0:
                raise ValueError("power_tail requires alpha > 0")
            p.setdefault("table_cutoff", None)
        elif self.family == "custom":
            table = tuple(float(v) for v in p["table"])
            if not table or abs(table[0] - 1.0) > 1e-12:
                raise ValueError("custom table must start with rho(0) = 1")
            if any(abs(v) > 1 + 1e-12 for v in table):
                raise ValueError("custom table entries must satisfy |rho| <= 1")
            p["table"] = table
        object.__setattr__(self, "params", p)

    # constructors ---------------------------------------------------------
    @classmethod
    def iid(cls):
        return cls("iid")

    @classmethod
    def ar1(cls, r):
        return cls("ar1", {"r": float(r)})

    @classmethod
    def fgn(cls, H):
        return cls("fgn_increment", {"H": float(H)})

    @classmethod
    def power_tail(cls, alpha, table_cutoff=None):
        return cls("power_tail", {"alpha": float(alpha), "table_cutoff": table_cutoff})

    @classmethod
    def custom(cls, table):
        return cls("custom", {"table": table})

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        family = d.pop("family")
        return cls(family, d)

    def to_dict(self):
        out = {"family": self.family}
        for k, v in self.params.items():
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def __hash__(self):
        return hash((self.family, tuple(sorted(
            (k, v) for k, v in self.params.items()))))

    def rho(self, k):
        """Covariance at integer lag(s) ``k`` (symmetric in ``k``)."""
        k = np.abs(np.asarray(k))
        kf = k.astype(float)
        f = self.family
        if f == "iid":
            out = (k == 0).astype(float)
        elif f == "ar1":
            out = self.params["r"] ** kf
        elif f == "fgn_increment":
            h2 = 2.0 * self.params["H"]
            out = 0.5 * (np.abs(kf + 1) ** h2 - 2 * kf ** h2 + np.abs(kf - 1) ** h2)
        elif f == "power_tail":
            out = (1.0 + kf) ** (-self.params["alpha"])
            cut = self.params.get("table_cutoff")
            if cut is not None:
                out = np.where(k <= cut, out, 0.0)
        else:
            table = np.asarray(self.params["table"])
            padded = np.append(table, 0.0)
            out = padded[np.minimum(k, table.size)]
        return float(out) if out.ndim == 0 else out


def rho(model, k):
    return model.rho(k)


def summability(model, p, n, rtol=1e-9):
    """``S_p(n) = sum_{|k| <= n} |rho(k)|^p`` and a saturation flag.

    The flag is set when ``S_p(2n) - S_p(n)`` is below ``rtol * S_p(n)``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if p < 1:
        raise ValueError("p must be >= 1")
    k = np.arange(1, 2 * n + 1)
    a = np.abs(model.rho(k)) ** p if k.size else np.zeros(0)
    s_n = 1.0 + 2.0 * float(np.sum(a[:n]))
    s_2n = 1.0 + 2.0 * float(np.sum(a))
    return s_n, bool(s_2n - s_n <= rtol * s_n)


def lag_cutoff(model, n, tol=1e-12):
    """Lag ``L < n`` with ``|rho(k)| <= tol`` for every ``k > L``.

    Lags beyond ``L`` are treated as exact zeros by the accelerated sums.
    The cutoff may include one lag below ``tol``.
    """
    if n <= 1:
        return 0
    f = model.family
    if f == "iid":
        return 0
    if f == "ar1":
        r = abs(model.params["r"])
        if r == 0:
            return 0
        L = int(math.ceil(math.log(tol) / math.log(r)))
        return min(n - 1, L)
    if f == "custom":
        table = np.abs(np.asarray(model.params["table"]))
        nz = np.flatnonzero(table > tol)
        return min(n - 1, int(nz[-1]))
    if f == "power_tail":
        cut = model.params.get("table_cutoff")
        L = int(math.ceil(tol ** (-1.0 / model.params["alpha"])))
        if cut is not None:
            L = min(L, cut)
        return min(n - 1, L)
    return n - 1
