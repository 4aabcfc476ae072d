"""Plug-in mean-variance portfolio as a scikit-learn estimator."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from . import core
from .estimators import SampleMoments
from .validation import check_returns, check_risk_aversion


class MeanVariancePortfolio(BaseEstimator):
    """Fully-invested mean-variance portfolio built from estimated moments.

    Parameters
    ----------
    moments : estimator, default=None
        Any estimator exposing ``location_`` and ``covariance_`` after
        ``fit``.  ``None`` uses :class:`~mvfrontier.estimators.SampleMoments`.
    risk_aversion : float, default=1.0

    Attributes
    ----------
    moments_ : estimator
        Fitted clone of ``moments``.
    weights_ : ndarray of shape (n_assets,)
    gmv_weights_ : ndarray of shape (n_assets,)
    mrar_allocation_ : float
        Weight placed on the MRAR portfolio, ``1'Sigma^-1 mu / risk_aversion``.
    """

    def __init__(self, moments=None, risk_aversion: float = 1.0):
        self.moments = moments
        self.risk_aversion = risk_aversion

    def fit(self, X, y=None):
        gamma = check_risk_aversion(self.risk_aversion)
        self.moments_ = clone(self.moments) if self.moments is not None else SampleMoments()
        self.moments_.fit(X)
        tf = core.two_fund(self.moments_.location_, self.moments_.covariance_)
        self.weights_ = tf.weights(gamma)
        self.gmv_weights_ = tf.gmv
        self.mrar_allocation_ = tf.allocation(gamma)
        self.n_features_in_ = self.weights_.shape[0]
        return self

    def predict(self, X):
        """Portfolio returns for each row of ``X``."""
        check_is_fitted(self, "weights_")
        X = check_returns(X, min_samples=1)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} assets, portfolio was fitted on {self.n_features_in_}"
            )
        return X @ self.weights_

    def score(self, X, y=None):
        """Realized mean-variance utility on ``X``."""
        r = self.predict(X)
        return float(np.mean(r) - 0.5 * self.risk_aversion * np.var(r, ddof=1))
