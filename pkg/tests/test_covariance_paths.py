import json
import math

import numpy as np
import pytest

from bmlab.covariance import CovarianceModel, lag_cutoff, summability
from bmlab.exceptions import EmbeddingFailure, NormalizationError
from bmlab.hermite import HermiteSeries
from bmlab.paths import (
    CirculantSampler,
    PathEnsemble,
    export_statistics_csv,
    iter_path_chunks,
    normalize_Y,
    replicate_normals,
    simulate,
    statistic_F,
    substream_key,
    variance_F_exact,
)

DENSE_TABLE = [1.0, -0.01, 0.06, 0.57]


def test_rho_families():
    k = np.arange(5)
    assert np.array_equal(CovarianceModel.iid().rho(k), [1, 0, 0, 0, 0])
    assert np.allclose(CovarianceModel.ar1(0.5).rho(k), 0.5 ** k)
    assert np.allclose(CovarianceModel.fgn(0.5).rho(k), [1, 0, 0, 0, 0], atol=1e-15)
    fgn = CovarianceModel.fgn(0.75).rho(1)
    assert fgn == pytest.approx(0.5 * (2 ** 1.5 - 2))
    pt = CovarianceModel.power_tail(0.75, table_cutoff=2)
    assert np.allclose(pt.rho(k), [1, 2 ** -0.75, 3 ** -0.75, 0, 0])
    c = CovarianceModel.custom([1, 0.5, 0.25])
    assert np.allclose(c.rho(np.array([-2, -1, 0, 1, 2, 7])), [0.25, 0.5, 1, 0.5, 0.25, 0])
    assert CovarianceModel.ar1(0.5).rho(-3) == 0.125


@pytest.mark.parametrize("family,params", [
    ("ar1", {"r": 1.0}), ("fgn_increment", {"H": 1.0}), ("power_tail", {"alpha": 0}),
    ("custom", {"table": [0.9, 0.1]}), ("custom", {"table": [1, 1.5]}), ("bogus", {}),
])
def test_invalid_models(family, params):
    with pytest.raises(ValueError):
        CovarianceModel(family, params)


def test_model_dict_roundtrip_and_hash():
    for m in (CovarianceModel.ar1(0.3), CovarianceModel.custom([1, 0.2]),
              CovarianceModel.power_tail(0.8)):
        back = CovarianceModel.from_dict(json.loads(json.dumps(m.to_dict())))
        assert back == m and hash(back) == hash(m)


def test_summability():
    assert summability(CovarianceModel.iid(), 1, 50) == (1.0, True)
    r, n = 0.5, 10
    s, saturated = summability(CovarianceModel.ar1(r), 1, n)
    assert s == pytest.approx(1 + 2 * r * (1 - r ** n) / (1 - r))
    assert not saturated
    assert summability(CovarianceModel.ar1(r), 1, 200)[1]
    assert not summability(CovarianceModel.power_tail(0.75), 1, 1000)[1]
    with pytest.raises(ValueError):
        summability(CovarianceModel.iid(), 0.5, 3)


def test_lag_cutoff():
    assert lag_cutoff(CovarianceModel.iid(), 100) == 0
    assert lag_cutoff(CovarianceModel.custom([1, 0.5, 0.25]), 100) == 2
    L = lag_cutoff(CovarianceModel.ar1(0.5), 1000)
    assert 0.5 ** (L - 1) > 1e-12 >= 0.5 ** L
    assert lag_cutoff(CovarianceModel.power_tail(0.75), 64) == 63


def test_replicate_normals_are_keyed_and_standard():
    key = substream_key(7, "paths")
    assert key == substream_key(7, "paths") != substream_key(8, "paths")
    a = replicate_normals(key, 3, 10)
    assert np.array_equal(a, replicate_normals(key, 3, 10))
    assert not np.array_equal(a, replicate_normals(key, 4, 10))
    z = replicate_normals(key, 0, 200_000)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01


@pytest.mark.parametrize("model", [CovarianceModel.ar1(0.7), CovarianceModel.fgn(0.8),
                                   CovarianceModel.power_tail(0.6),
                                   CovarianceModel.custom(DENSE_TABLE)])
def test_sample_covariance_matches_rho(model):
    n, R = 12, 40_000
    p = simulate(model, n, R, seed=3)
    emp = p.data.T @ p.data / R
    idx = np.arange(n)
    exact = model.rho(idx[:, None] - idx[None, :])
    # entrywise SE of a Gaussian sample covariance is at most sqrt(2/R)
    assert np.max(np.abs(emp - exact)) < 5 * math.sqrt(2 / R)


def test_sampler_methods():
    assert CirculantSampler(CovarianceModel.iid(), 10).method == "direct"
    s = CirculantSampler(CovarianceModel.fgn(0.9), 100)
    assert s.method == "circulant" and s.m == 256
    d = CirculantSampler(CovarianceModel.custom(DENSE_TABLE), 8)
    assert d.method == "dense" and len(d.attempts) == 3
    with pytest.raises(EmbeddingFailure):
        CirculantSampler(CovarianceModel.custom([1, 0.9, -0.9]), 6)


def test_simulation_independent_of_chunking_and_threads():
    m = CovarianceModel.ar1(0.5)
    ref = simulate(m, 33, 50, seed=12).data
    assert np.array_equal(ref, simulate(m, 33, 50, seed=12, threads=4).data)
    assert np.array_equal(ref[:20], simulate(m, 33, 20, seed=12).data)
    blocks = dict(iter_path_chunks(m, 33, 50, 12, chunk_size=7, threads=3))
    assert np.array_equal(np.vstack([blocks[s] for s in sorted(blocks)]), ref)
    assert not np.array_equal(ref, simulate(m, 33, 50, seed=13).data)


def test_path_ensemble_save_load(tmp_path):
    p = simulate(CovarianceModel.fgn(0.7), 16, 5, seed=1)
    p.save(tmp_path / "paths")
    q = PathEnsemble.load(tmp_path / "paths")
    assert np.array_equal(p.data, q.data)
    assert q.model == p.model and (q.n, q.R, q.seed) == (16, 5, 1)
    assert q.meta["method"] == "circulant"


def test_statistic_and_exact_variance():
    s = HermiteSeries([0, 0, 1.0, 0.5])
    assert variance_F_exact(s, CovarianceModel.iid(), 10) == pytest.approx(2 + 6 * 0.25)
    m = CovarianceModel.ar1(0.5)
    assert variance_F_exact(HermiteSeries.monomial(2), m, 2) == 2.5
    p = simulate(m, 16, 100_000, seed=4)
    F = statistic_F(p, s)
    exact = variance_F_exact(s, m, 16)
    assert abs(F.mean()) < 4 * math.sqrt(exact / p.R)
    assert F.var() == pytest.approx(exact, rel=0.05)
    with pytest.raises(ValueError):
        variance_F_exact(s, m, 0)


def test_normalize_and_export(tmp_path):
    assert np.allclose(normalize_Y([2.0, -4.0], 4.0), [1.0, -2.0])
    with pytest.raises(NormalizationError):
        normalize_Y([1.0], 0.0)
    export_statistics_csv(tmp_path / "s.csv", {"F": np.array([0.5, 1.5]), "Y": np.array([1.0, 3.0])})
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines == ["replicate,F,Y", "0,0.5,1.0", "1,1.5,3.0"]
