"""Exact simulation of stationary Gaussian sequences and the statistics
``F_n`` and ``Y_n`` built on them."""
from __future__ import annotations

import csv
import functools
import json
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.special import ndtri

from .covariance import CovarianceModel
from .exceptions import EmbeddingFailure, NormalizationError
from .hermite import eval_series

__all__ = [
    "PathEnsemble",
    "CirculantSampler",
    "simulate",
    "iter_path_chunks",
    "statistic_F",
    "variance_F_exact",
    "normalize_Y",
    "substream_key",
    "replicate_normals",
    "export_statistics_csv",
]

EIG_TOL = 1e-9
MAX_DENSE_N = 4096
_U53 = 2.0 ** -53


def substream_key(seed, name):
    """64-bit Philox key for the named stream derived from the run seed."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def replicate_normals(key, replicate, size):
    """Standard normals for one replicate, by inverse CDF of Philox uniforms.

    The replicate index occupies the top counter word, so every replicate
    owns a disjoint stream regardless of how replicates are scheduled.
    """
    bitgen = np.random.Philox(key=key, counter=[0, 0, 0, int(replicate)])
    bits = np.random.Generator(bitgen).integers(0, 2 ** 53, size=size, dtype=np.uint64)
    return ndtri((bits + 0.5) * _U53)


class CirculantSampler:
    """Sampler for ``n`` consecutive values of a stationary Gaussian
    sequence.

    Uses circulant embedding on the smallest power of two ``>= 2(n-1)``,
    doubling at most twice when negative eigenvalues exceed
    ``EIG_TOL * max eigenvalue``, then falls back to a dense symmetric
    factorisation of the ``n x n`` covariance.
    """

    def __init__(self, model, n):
        self.model = model
        self.n = int(n)
        self.method = None
        self.m = None
        self.attempts = []
        if model.family == "iid" or self.n == 1:
            self.method = "direct"
            self.width = self.n
            return
        m = 2
        while m < 2 * (self.n - 1):
            m *= 2
        for _ in range(3):
            k = np.arange(m // 2 + 1)
            c = np.empty(m)
            r = model.rho(k)
            c[:m // 2 + 1] = r
            c[m // 2 + 1:] = r[1:m // 2][::-1]
            lam = sfft.rfft(c).real
            lo, hi = lam.min(), lam.max()
            self.attempts.append((m, float(lo)))
            if lo >= -EIG_TOL * hi:
                self.method = "circulant"
                self.m = m
                self.sqrt_lam = np.sqrt(np.clip(lam, 0.0, None))
                self.width = m
                return
            m *= 2
        if self.n > MAX_DENSE_N:
            raise EmbeddingFailure(
                f"circulant embedding failed (min eigenvalues {self.attempts}) and "
                f"n={self.n} exceeds the dense fallback limit {MAX_DENSE_N}")
        idx = np.arange(self.n)
        cov = model.rho(idx[:, None] - idx[None, :])
        w, v = np.linalg.eigh(cov)
        if w.min() < -1e-8 * w.max():
            raise EmbeddingFailure("covariance matrix is not positive semidefinite")
        self.factor = v * np.sqrt(np.clip(w, 0.0, None))
        self.method = "dense"
        self.width = self.n

    def transform(self, z):
        """Map rows of i.i.d. normals (width ``self.width``) to paths."""
        if self.method == "direct":
            return z
        if self.method == "dense":
            return z @ self.factor.T
        m = self.m
        h = m // 2
        spec = np.empty((z.shape[0], h + 1), dtype=complex)
        spec[:, 0] = z[:, 0]
        spec[:, h] = z[:, 1]
        spec[:, 1:h] = (z[:, 2:m:2] + 1j * z[:, 3:m:2]) / math.sqrt(2.0)
        spec *= self.sqrt_lam
        x = sfft.irfft(spec, n=m, axis=1)
        return math.sqrt(m) * x[:, :self.n]

    def metadata(self):
        return {"method": self.method, "embedding_size": self.m,
                "attempts": [list(a) for a in self.attempts]}


@functools.lru_cache(maxsize=32)
def _sampler(model, n):
    return CirculantSampler(model, n)


def _block(sampler, key, start, stop):
    z = np.empty((stop - start, sampler.width))
    for i, r in enumerate(range(start, stop)):
        z[i] = replicate_normals(key, r, sampler.width)
    return sampler.transform(z)


def iter_path_chunks(model, n, R, seed, chunk_size=None, threads=1):
    """Yield ``(start, block)`` pairs covering replicates ``0..R-1``.

    Values depend only on ``(model, n, seed, replicate index)``; chunking
    and thread count change neither values nor order.
    """
    if n < 1 or R < 1:
        raise ValueError("n and R must be >= 1")
    sampler = _sampler(model, int(n))
    key = substream_key(seed, "paths")
    if chunk_size is None:
        chunk_size = max(1, min(R, 2 ** 22 // max(sampler.width, 1)))
    bounds = [(s, min(R, s + chunk_size)) for s in range(0, R, chunk_size)]
    if threads <= 1:
        for s, e in bounds:
            yield s, _block(sampler, key, s, e)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        window = 2 * threads
        for i in range(0, len(bounds), window):
            part = bounds[i:i + window]
            blocks = pool.map(lambda b: _block(sampler, key, *b), part)
            for (s, _), blk in zip(part, blocks):
                yield s, blk


@dataclass
class PathEnsemble:
    """``R`` independent Gaussian paths of length ``n`` (rows of ``data``)."""

    n: int
    R: int
    data: np.ndarray
    model: CovarianceModel
    seed: int
    meta: dict = field(default_factory=dict)

    def sidecar(self):
        params = self.model.to_dict()
        family = params.pop("family")
        return {"family": family, "params": params, "n": self.n, "R": self.R,
                "seed": self.seed, **self.meta}

    def save(self, path):
        """Write ``<path>.npy`` and the JSON sidecar ``<path>.json``."""
        path = Path(path)
        np.save(path.with_suffix(".npy"), self.data)
        path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=2))

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        data = np.load(path.with_suffix(".npy"))
        model = CovarianceModel(meta["family"], meta["params"])
        extra = {k: meta[k] for k in ("method", "embedding_size", "attempts") if k in meta}
        return cls(meta["n"], meta["R"], data, model, meta["seed"], extra)


def simulate(model, n, R, seed, threads=1):
    """Simulate ``R`` exact stationary Gaussian paths of length ``n``."""
    data = np.empty((R, n))
    for start, block in iter_path_chunks(model, n, R, seed, threads=threads):
        data[start:start + block.shape[0]] = block
    meta = _sampler(model, int(n)).metadata()
    return PathEnsemble(int(n), int(R), data, model, int(seed), meta)


def _as_matrix(paths):
    data = paths.data if isinstance(paths, PathEnsemble) else paths
    data = np.asarray(data, dtype=float)
    return data[None, :] if data.ndim == 1 else data


def statistic_F(paths, s):
    """``F_n = n^{-1/2} sum_i g(X_i)`` for every replicate."""
    x = _as_matrix(paths)
    n = x.shape[1]
    return eval_series(s, x).sum(axis=1) / math.sqrt(n)


def variance_F_exact(s, model, n):
    """Exact ``Var(F_n) = sum_q q! c_q^2 sum_{|k|<n} (1 - |k|/n) rho(k)^q``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(1, n)
    r = model.rho(k) if k.size else np.zeros(0)
    w = 1.0 - k / n
    total = 0.0
    for q in range(1, s.q_max + 1):
        cq = s.coeffs[q]
        if cq == 0:
            continue
        total += math.factorial(q) * cq * cq * (1.0 + 2.0 * float(np.sum(w * r ** q)))
    if not total > 1e-300:
        raise NormalizationError(f"Var(F_n) = {total!r} is not positive")
    return total


def normalize_Y(F, varF):
    """``Y_n = F_n / sqrt(Var F_n)``."""
    if not varF > 0:
        raise NormalizationError(f"variance {varF!r} is not positive")
    return np.asarray(F, dtype=float) / math.sqrt(varF)


def export_statistics_csv(path, columns):
    """Write per-replicate statistics (``name -> vector``) as CSV."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate"] + names)
        for i in range(cols[0].size):
            w.writerow([i] + [repr(float(c[i])) for c in cols])
