"""scikit-learn adapter: sample paths in, normalized statistics out."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .covariance import CovarianceModel
from .hermite import HermiteSeries, catalog
from .paths import statistic_F, variance_F_exact


def resolve_series(g, q_max=40):
    """``HermiteSeries`` from a series, a catalog name or a coefficient list."""
    if isinstance(g, HermiteSeries):
        return g
    if isinstance(g, str):
        return catalog(g, q_max=q_max)
    return HermiteSeries(np.asarray(g, dtype=float))


def resolve_model(model):
    if isinstance(model, CovarianceModel):
        return model
    return CovarianceModel.from_dict(model)


class BreuerMajorTransformer(BaseEstimator, TransformerMixin):
    """Map an ``(R, n)`` matrix of Gaussian paths to ``F_n`` or ``Y_n``.

    Parameters
    ----------
    g : str, sequence of float or HermiteSeries
        Catalog name (``"H2"``, ``"abs_centered"``, ...) or Hermite
        coefficients ``c_0, c_1, ...``.
    model : dict or CovarianceModel
        Covariance of the rows, e.g. ``{"family": "ar1", "r": 0.5}``.
    q_max : int, default=40
        Truncation order for catalog functions.
    normalize : bool, default=True
        Divide by the exact ``sqrt(Var F_n)`` so the output is ``Y_n``.

    Attributes
    ----------
    series_ : HermiteSeries
        Expansion of ``g`` with the constant term dropped.
    n_features_in_ : int
        Path length ``n`` seen in :meth:`fit`.
    var_F_ : float
        Exact ``Var(F_n)`` for that ``n``.
    """

    def __init__(self, g="H2", model=None, q_max=40, normalize=True):
        self.g = g
        self.model = model
        self.q_max = q_max
        self.normalize = normalize

    def fit(self, X, y=None):
        X = check_array(X)
        s = resolve_series(self.g, self.q_max)
        if s.coeffs[0] != 0:
            # F_n is defined for centred g
            c = s.coeffs.copy()
            c[0] = 0.0
            s = HermiteSeries(c)
        self.series_ = s
        self.model_ = resolve_model(self.model or {"family": "iid"})
        self.n_features_in_ = X.shape[1]
        self.var_F_ = variance_F_exact(self.series_, self.model_, X.shape[1])
        return self

    def transform(self, X):
        check_is_fitted(self, "var_F_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected paths of length {self.n_features_in_}, got {X.shape[1]}")
        F = statistic_F(X, self.series_)
        if self.normalize:
            F = F / np.sqrt(self.var_F_)
        return F[:, None]
