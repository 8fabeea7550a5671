"""Self-checks: oracle equivalences, duality identities and closed forms."""
from __future__ import annotations

import contextlib
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceModel
from .diagrams import exact_third_moment, exact_var_DFu, mutate_weights, product_moment
from .functionals import (
    inner_D2F_v,
    inner_DF_u,
    inner_DFxDF_v,
    inner_DFxDF_v_brute,
    iterated_D,
    iterated_D_brute,
)
from .hermite import HermiteSeries, catalog, sigma_sq
from .oracles import isserlis_product_moment, random_rational_correlation
from .paths import simulate, variance_F_exact


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def to_dict(self):
        return {"check": self.name, "passed": self.passed, "detail": self.detail}


def check_isserlis(matrices=50, max_order=4, max_vertices=4):
    bad = total = 0
    for seed in range(matrices):
        for M in range(1, max_vertices + 1):
            corr = random_rational_correlation(M, seed)
            for q in itertools.product(range(max_order + 1), repeat=M):
                total += 1
                if product_moment(q, corr, exact=True) != isserlis_product_moment(q, corr):
                    bad += 1
    return bad == 0, f"{total - bad}/{total} exact matches"


def _zscore(mean, se, target):
    # deterministic functionals have se ~ 0; compare them at rounding level
    se = max(se, 1e-12 * abs(target))
    return abs(mean - target) / se if se > 0 else (0.0 if mean == target else math.inf)


def check_duality(n=64, R=20000, seed=11):
    model = CovarianceModel.ar1(0.5)
    paths = simulate(model, n, R, seed)
    worst = 0.0
    parts = []
    cases = [("H2", HermiteSeries.monomial(2), True), ("H3", HermiteSeries.monomial(3), False),
             ("abs_centered", catalog("abs_centered", 20), True)]
    for name, s, second in cases:
        target = variance_F_exact(s, model, n)
        fns = [("<DF,u>", inner_DF_u)] + ([("<D2F,v>", inner_D2F_v)] if second else [])
        for label, fn in fns:
            v = fn(paths, s, model)
            z = _zscore(v.mean(), v.std(ddof=1) / math.sqrt(R), target)
            worst = max(worst, z)
            parts.append(f"{name}{label} z={z:.2f}")
    return worst <= 4.0, "; ".join(parts)


def check_brute(n=24, R=4, seed=5):
    model = CovarianceModel.ar1(0.5)
    paths = simulate(model, n, R, seed)
    worst = 0.0
    for s in (HermiteSeries.monomial(2), HermiteSeries([0, 0, 1.0, 0.3, 0.5])):
        pairs = [(inner_DFxDF_v(paths, s, model), inner_DFxDF_v_brute(paths, s, model)),
                 (iterated_D(paths, s, model, 2), iterated_D_brute(paths, s, model, 2)),
                 (iterated_D(paths, s, model, 3), iterated_D_brute(paths, s, model, 3))]
        for a, b in pairs:
            worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))))
        for N in (16, n):
            lag = exact_var_DFu(s, model, N, method="lag")
            loop = exact_var_DFu(s, model, N, method="loop")
            worst = max(worst, abs(lag - loop) / max(1.0, abs(loop)))
    return worst <= 1e-10, f"max relative deviation {worst:.2e}"


def check_closed_forms():
    m = CovarianceModel.ar1(0.5)
    errs = [
        abs(sigma_sq(HermiteSeries.monomial(2), m).value - 10 / 3),
        abs(sigma_sq(HermiteSeries.monomial(3), m).value - 54 / 7),
        abs(variance_F_exact(HermiteSeries.monomial(2), m, 2) - 2.5),
        abs(exact_third_moment(HermiteSeries.monomial(2), m, 1) - 8),
    ]
    return max(errs) <= 1e-9, "max error " + f"{max(errs):.1e}"


def check_exact_vs_mc(n=32, R=200000, seed=23):
    model = CovarianceModel.ar1(0.5)
    paths = simulate(model, n, R, seed)
    parts, ok = [], True
    for name, s in (("H2", HermiteSeries.monomial(2)), ("H2+0.5H4", HermiteSeries([0, 0, 1, 0, 0.5]))):
        v = inner_DF_u(paths, s, model)
        exact = exact_var_DFu(s, model, n)
        var = v.var(ddof=1)
        m4 = np.mean((v - v.mean()) ** 4)
        se = math.sqrt(max(m4 - var ** 2, 0.0) / R)
        z = _zscore(var, se, exact)
        ok &= z <= 4.0
        parts.append(f"{name}: exact={exact:.6g} mc={var:.6g} z={z:.2f}")
    return ok, "; ".join(parts)


FAST = [
    ("isserlis_vs_diagrams", lambda: check_isserlis(matrices=10)),
    ("closed_forms", check_closed_forms),
    ("brute_vs_factored", check_brute),
    ("duality_mc", lambda: check_duality(R=20000)),
]
FULL = [
    ("isserlis_vs_diagrams", check_isserlis),
    ("closed_forms", check_closed_forms),
    ("brute_vs_factored", check_brute),
    ("duality_mc", lambda: check_duality(R=100000)),
    ("exact_vs_mc_variance_n32", check_exact_vs_mc),
]


def verify_suite(level="fast", mutate=None, echo=print):
    """Run the checks for ``level`` and return a list of :class:`CheckResult`.

    ``mutate`` (development only) scales every contraction-diagram weight,
    which must make the Isserlis check fail.
    """
    checks = FAST if level == "fast" else FULL
    ctx = mutate_weights(mutate) if mutate is not None else contextlib.nullcontext()
    results = []
    with ctx:
        for name, fn in checks:
            t0 = time.perf_counter()
            try:
                ok, detail = fn()
            except Exception as exc:  # a crashing check is a failing check
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            res = CheckResult(name, bool(ok), detail, time.perf_counter() - t0)
            results.append(res)
            if echo:
                echo(f"{'PASS' if res.passed else 'FAIL'}  {name:<28} {detail}")
    return results
