"""Unit-constant rate bounds, exponent tables and log-log rate fitting."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .covariance import summability
from .exceptions import DegeneratePoints

__all__ = [
    "S",
    "bound_tv_d2",
    "bound_tv_dge3",
    "bound_w_d2",
    "bound_tv_optimal_d2",
    "bound_hermite_optimal",
    "bound_npy",
    "rate_classifier",
    "rate_fit",
    "RateFit",
    "BoundReport",
    "bound_terms",
]


def S(model, p, n):
    """``S_p(n) = sum_{|k| <= n} |rho(k)|^p``."""
    return summability(model, p, int(n))[0]


def bound_tv_d2(model, n):
    """TV bound for rank 2: ``n^{-1/2} S_1^{1/2}`` and ``n^{-1/2} S_{4/3}^{3/2}``."""
    r = 1.0 / math.sqrt(n)
    return {"term1": r * S(model, 1, n) ** 0.5,
            "term2": r * S(model, 4 / 3, n) ** 1.5}


def bound_tv_dge3(model, n, d):
    """TV bound for rank ``d >= 3``."""
    if d < 3:
        raise ValueError("bound_tv_dge3 requires d >= 3")
    r = 1.0 / math.sqrt(n)
    s2 = S(model, 2, n)
    return {"term1": r * S(model, d - 1, n) * s2 ** 0.5,
            "term2": r * s2 ** 0.5 * S(model, 1, n) ** 0.5}


def bound_w_d2(model, n):
    """Wasserstein bound for rank 2."""
    r = 1.0 / math.sqrt(n)
    return {"term1": r * S(model, 1, n) ** 0.5,
            "term2": r * S(model, 1.5, n) ** 2}


def bound_tv_optimal_d2(model, n):
    """Single-term rank-2 TV bound ``n^{-1/2} S_{3/2}^2``."""
    return {"term1": S(model, 1.5, n) ** 2 / math.sqrt(n)}


def bound_hermite_optimal(model, n, d):
    """Bound for ``g = H_d``; the second term is present only for even ``d``."""
    if d < 2:
        raise ValueError("d must be >= 2")
    term2 = S(model, 0.75 * d, n) ** 2 / math.sqrt(n) if d % 2 == 0 else 0.0
    return {"term1": S(model, d - 1, n) ** 2 * S(model, 2, n) / n, "term2": term2}


def bound_npy(model, n):
    """``n^{-1/2} S_1^{3/2}``."""
    return {"term1": S(model, 1, n) ** 1.5 / math.sqrt(n)}


BOUNDS = {
    "tv_d2": lambda m, n, d: bound_tv_d2(m, n),
    "tv_dge3": lambda m, n, d: bound_tv_dge3(m, n, d),
    "w_d2": lambda m, n, d: bound_w_d2(m, n),
    "tv_optimal_d2": lambda m, n, d: bound_tv_optimal_d2(m, n),
    "hermite_optimal": lambda m, n, d: bound_hermite_optimal(m, n, d),
    "npy": lambda m, n, d: bound_npy(m, n),
}
RANK2_ONLY = {"tv_d2", "w_d2", "tv_optimal_d2", "npy"}


def bound_terms(names, model, n, d):
    """Flattened ``{"<bound>.<term>": value}`` for the selected bounds."""
    out = {}
    for name in names:
        for term, v in BOUNDS[name](model, n, d).items():
            out[f"{name}.{term}"] = v
    return out


def rate_classifier(alpha, d=2, metric="tv"):
    """Exponent of ``n`` in the rank-2 rate under ``|rho(k)| ~ k^{-alpha}``.

    Returns ``{"exponent", "log_factor"}``; ``log_factor`` flags an extra
    ``(log n)^{1/2}``.
    """
    if d != 2:
        raise ValueError("rate tables are available for d = 2 only")
    if not alpha > 0.5:
        raise ValueError("alpha must exceed 1/2")
    if metric == "tv":
        if alpha < 2 / 3:
            return {"exponent": 1 - 2 * alpha, "log_factor": False}
        if alpha < 1:
            return {"exponent": -alpha / 2, "log_factor": False}
        return {"exponent": -0.5, "log_factor": alpha == 1}
    if metric == "w":
        if alpha <= 0.6:
            return {"exponent": 1.5 - 3 * alpha, "log_factor": False}
        if alpha <= 1:
            return {"exponent": -alpha / 2 if alpha < 1 else -0.5, "log_factor": alpha == 1}
        return {"exponent": -0.5, "log_factor": False}
    raise ValueError(f"unknown metric {metric!r}")


@dataclass
class RateFit:
    slope: float
    intercept: float
    ci_95: tuple
    slope_se: float
    points: int

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept,
                "ci_95": list(self.ci_95), "slope_se": self.slope_se,
                "points": self.points}


def rate_fit(points, log_correction=False):
    """Least-squares slope of ``log value`` against ``log n``.

    With ``log_correction`` the response is ``log value - 1/2 log log n``.
    The 95% interval uses the t distribution with ``m - 2`` degrees of
    freedom.
    """
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 4:
        raise DegeneratePoints(f"rate_fit needs at least 4 points, got {len(pts)}")
    n = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(~np.isfinite(v)) or np.any(v <= 0) or np.any(n <= 1):
        raise DegeneratePoints("rate_fit needs finite positive values and n > 1")
    x = np.log(n)
    y = np.log(v)
    if log_correction:
        y = y - 0.5 * np.log(np.log(n))
    res = stats.linregress(x, y)
    slope_se = float(res.stderr)
    half = float(stats.t.ppf(0.975, len(pts) - 2)) * slope_se
    return RateFit(float(res.slope), float(res.intercept),
                   (float(res.slope) - half, float(res.slope) + half), slope_se, len(pts))


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.generic):
        return _json_safe(v.item())
    return v


@dataclass
class BoundReport:
    """Rows indexed by ``n`` plus fitted exponents and a config echo."""

    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)

    def columns(self):
        cols = []
        for row in self.rows:
            for k in row:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        cols = self.columns()
        w.writerow(cols)
        for row in self.rows:
            w.writerow(["" if row.get(c) is None else _fmt(row.get(c)) for c in cols])
        return buf.getvalue()

    def to_dict(self):
        return _json_safe({
            "config": self.config,
            "rows": self.rows,
            "fits": {k: (v.to_dict() if isinstance(v, RateFit) else v)
                     for k, v in self.fits.items()},
            "expected": self.expected,
        })

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
