import json
import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from bmlab.bounds import (
    S,
    BoundReport,
    bound_hermite_optimal,
    bound_npy,
    bound_terms,
    bound_tv_d2,
    bound_tv_dge3,
    bound_tv_optimal_d2,
    bound_w_d2,
    rate_classifier,
    rate_fit,
)
from bmlab.covariance import CovarianceModel
from bmlab.estimators import BreuerMajorTransformer
from bmlab.exceptions import DegeneratePoints
from bmlab.paths import simulate

IID = CovarianceModel.iid()


def test_bounds_under_iid():
    n = 400
    r = 1 / math.sqrt(n)
    assert S(IID, 1.5, n) == 1.0
    assert bound_tv_d2(IID, n) == pytest.approx({"term1": r, "term2": r})
    assert bound_w_d2(IID, n) == pytest.approx({"term1": r, "term2": r})
    assert bound_tv_dge3(IID, n, 3) == pytest.approx({"term1": r, "term2": r})
    assert bound_tv_optimal_d2(IID, n) == pytest.approx({"term1": r})
    assert bound_npy(IID, n) == pytest.approx({"term1": r})
    assert bound_hermite_optimal(IID, n, 4) == pytest.approx({"term1": 1 / n, "term2": r})
    assert bound_hermite_optimal(IID, n, 3)["term2"] == 0.0
    with pytest.raises(ValueError):
        bound_tv_dge3(IID, n, 2)
    flat = bound_terms(["tv_d2", "npy"], IID, n, 2)
    assert set(flat) == {"tv_d2.term1", "tv_d2.term2", "npy.term1"}


def test_power_tail_term_approaches_remark_exponent():
    model = CovarianceModel.power_tail(0.75)
    ns = [2 ** k for k in range(16, 21)]
    slope = rate_fit([(n, bound_tv_d2(model, n)["term1"]) for n in ns]).slope
    assert slope == pytest.approx(-0.375, abs=0.01)
    # the finite-n constant in S_1 makes the slope shallower on small grids
    small = rate_fit([(n, bound_tv_d2(model, n)["term1"]) for n in [2 ** k for k in range(8, 14)]])
    assert small.slope > slope


@pytest.mark.parametrize("alpha,metric,expected,log", [
    (0.6, "tv", 1 - 1.2, False), (0.75, "tv", -0.375, False), (1.0, "tv", -0.5, True),
    (1.5, "tv", -0.5, False), (0.55, "w", 1.5 - 1.65, False), (0.8, "w", -0.4, False),
    (1.0, "w", -0.5, True), (2.0, "w", -0.5, False),
])
def test_rate_classifier(alpha, metric, expected, log):
    out = rate_classifier(alpha, 2, metric)
    assert out["exponent"] == pytest.approx(expected) and out["log_factor"] is log


def test_rate_classifier_errors():
    with pytest.raises(ValueError):
        rate_classifier(0.75, d=3)
    with pytest.raises(ValueError):
        rate_classifier(0.5)
    with pytest.raises(ValueError):
        rate_classifier(0.8, metric="kl")


def test_rate_fit():
    ns = [2 ** k for k in range(6, 12)]
    fit = rate_fit([(n, 3 * n ** -0.4) for n in ns])
    assert fit.slope == pytest.approx(-0.4) and fit.intercept == pytest.approx(math.log(3))
    assert fit.ci_95[0] <= fit.slope <= fit.ci_95[1] and fit.points == 6
    noisy = rate_fit([(n, n ** -0.5 * (1 + 0.05 * (-1) ** i)) for i, n in enumerate(ns)])
    assert noisy.ci_95[0] < -0.5 < noisy.ci_95[1]
    logged = rate_fit([(n, n ** -0.5 * math.sqrt(math.log(n))) for n in ns], log_correction=True)
    assert logged.slope == pytest.approx(-0.5)
    with pytest.raises(DegeneratePoints):
        rate_fit([(2, 1.0), (4, 0.5), (8, 0.25)])
    with pytest.raises(DegeneratePoints):
        rate_fit([(2, 1.0), (4, 0.5), (8, 0.0), (16, 0.1)])


def test_bound_report_serialization():
    rows = [{"n": 8, "d_W": 0.1, "x": float("nan")}, {"n": 16, "d_W": 0.07, "y": 2}]
    rep = BoundReport(rows=rows, fits={}, config={"b": 1, "a": 2})
    js = rep.to_json()
    assert js == rep.to_json()
    data = json.loads(js)
    assert data["rows"][0]["x"] is None and list(data["config"]) == ["a", "b"]
    lines = rep.to_csv().splitlines()
    assert lines[0] == "n,d_W,x,y"
    assert lines[1] == "8,0.1,nan," and lines[2] == "16,0.07,,2"


def test_transformer_outputs_normalized_statistic():
    model = {"family": "ar1", "r": 0.5}
    X = simulate(CovarianceModel.ar1(0.5), 32, 20_000, seed=1).data
    tr = BreuerMajorTransformer(g="H2", model=model).fit(X)
    Y = tr.transform(X)
    assert Y.shape == (20_000, 1) and tr.n_features_in_ == 32
    assert abs(Y.mean()) < 0.04 and Y.var() == pytest.approx(1.0, abs=0.05)
    raw = BreuerMajorTransformer(g=[0, 0, 1.0], model=model, normalize=False).fit_transform(X)
    assert np.allclose(raw[:, 0], (X ** 2 - 1).sum(axis=1) / math.sqrt(32))
    sq = BreuerMajorTransformer(g="square", model=model, normalize=False).fit_transform(X)
    assert np.allclose(sq, raw)


def test_transformer_sklearn_protocol():
    tr = BreuerMajorTransformer(g="H3", model={"family": "iid"}, q_max=10)
    assert clone(tr).get_params() == tr.get_params()
    with pytest.raises(NotFittedError):
        tr.transform(np.zeros((2, 4)))
    X = np.random.default_rng(0).normal(size=(50, 8))
    pipe = make_pipeline(BreuerMajorTransformer(g="H2"), FunctionTransformer(np.abs))
    assert pipe.fit_transform(X).shape == (50, 1)
    tr.fit(X)
    with pytest.raises(ValueError):
        tr.transform(np.zeros((2, 5)))
