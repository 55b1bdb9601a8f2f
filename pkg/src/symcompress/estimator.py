"""sklearn-style wrapper around the compressor for pipeline composition."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .compressor import CompressionConfig, compress
from .moments import WeightedSet, n_basis
from .validation import check_points, check_weights

__all__ = ["SetCompressor"]


class SetCompressor(BaseEstimator, TransformerMixin):
    """Moment-preserving row compressor with fit/transform semantics.

    Fitting reallocates the sample weights of X so that at most
    `target_size` rows keep nonzero weight while all monomial moments of the
    rows up to degree `order` are preserved.  `transform` selects the
    surviving rows; the fitted weights are on `weights_` (full length) and
    `compressed_weights_` (surviving rows only).

    Parameters follow CompressionConfig; `target_size=None` compresses to
    the support floor C(m+order, order).
    """

    def __init__(
        self,
        order: int = 2,
        target_size: int | None = None,
        tol: float = 1e-8,
        switch_factor: float = 4.0,
        exact_nn: bool = False,
        random_state: int = 0,
    ):
        self.order = order
        self.target_size = target_size
        self.tol = tol
        self.switch_factor = switch_factor
        self.exact_nn = exact_nn
        self.random_state = random_state

    def fit(self, X, y=None, sample_weight=None):
        X = check_points(X, "X")
        n, m = X.shape
        if sample_weight is None:
            sample_weight = np.ones(n)
        weights = check_weights(sample_weight, n, "sample_weight")
        target = self.target_size
        if target is None:
            target = n_basis(m, self.order)
        cfg = CompressionConfig(
            k=self.order,
            target_size=target,
            tol=self.tol,
            switch_factor=self.switch_factor,
            seed=self.random_state,
            exact_nn=self.exact_nn,
        )
        out, report = compress(WeightedSet(X, weights), cfg)
        self.n_features_in_ = m
        self.n_samples_in_ = n
        self.weights_ = out.weights
        self.support_ = out.support
        self.report_ = report
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("SetCompressor is not fitted; call fit first")

    @property
    def compressed_weights_(self) -> np.ndarray:
        self._check_fitted()
        return self.weights_[self.support_]

    def transform(self, X):
        """Rows of X surviving the fitted compression (same row order as fit)."""
        self._check_fitted()
        X = check_points(X, "X")
        if X.shape != (self.n_samples_in_, self.n_features_in_):
            raise ValueError(
                f"transform input shape {X.shape} does not match the fitted "
                f"shape ({self.n_samples_in_}, {self.n_features_in_}); the "
                "compression is row-indexed"
            )
        return X[self.support_]

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).transform(X)
