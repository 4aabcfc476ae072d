"""Closed-form mean-variance portfolios under the full-investment constraint.

Every optimal portfolio of

    max_w  w'mu - gamma/2 * w'Sigma w   s.t.  w'1 = 1

is a mix of the global minimum variance (GMV) portfolio and the maximum
risk-adjusted return (MRAR) portfolio, with MRAR allocation
``a = 1'Sigma^-1 mu / gamma``.  All products with ``Sigma^-1`` go through a
Cholesky solve; no explicit inverse is formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .validation import (
    DegenerateNormalizationError,
    NotPositiveDefiniteError,
    check_covariance,
    check_mean,
    check_risk_aversion,
)

#: Risk aversion standing in for gamma = infinity (pure GMV) on a frontier grid.
GMV_GAMMA = 1.5e8

#: MRAR allocations 0.0, 0.2, ..., 2.0.
DEFAULT_ALLOCATIONS = tuple(round(0.2 * k, 10) for k in range(11))


@dataclass(frozen=True)
class FrontierPoint:
    gamma: float
    mean: float
    variance: float
    utility: float


@dataclass(frozen=True)
class TwoFund:
    """Precomputed building blocks of the frontier for one (mu, Sigma)."""

    gmv: np.ndarray
    sigma_inv_mu: np.ndarray
    #: 1'Sigma^-1 mu
    k: float
    #: 1'Sigma^-1 1
    c: float

    def allocation(self, gamma: float) -> float:
        return self.k / gamma

    def weights(self, gamma: float) -> np.ndarray:
        # (1 - k/g) gmv + (k/g) * Sigma^-1 mu / k, written without dividing by k
        return (1.0 - self.k / gamma) * self.gmv + self.sigma_inv_mu / gamma

    def mrar(self) -> np.ndarray:
        if abs(self.k) < 1e-12:
            raise DegenerateNormalizationError(
                f"1'Sigma^-1 mu = {self.k:.3g} is numerically zero; the MRAR portfolio "
                "is not defined"
            )
        return self.sigma_inv_mu / self.k


def _cho(sigma: np.ndarray):
    try:
        return linalg.cho_factor(sigma, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        eig = np.linalg.eigvalsh(sigma)[0]
        raise NotPositiveDefiniteError(
            f"covariance is not positive definite: smallest eigenvalue {eig:.6g}"
        ) from exc


def two_fund(mu, sigma, *, validate: bool = True) -> TwoFund:
    """Factor ``sigma`` once and return the GMV portfolio and ``Sigma^-1 mu``."""
    if validate:
        sigma = check_covariance(sigma)
        mu = check_mean(mu, sigma.shape[0])
    else:
        sigma = np.asarray(sigma, dtype=float)
        mu = np.asarray(mu, dtype=float)
    n = sigma.shape[0]
    cho = _cho(sigma)
    rhs = np.column_stack([np.ones(n), mu])
    sol = linalg.cho_solve(cho, rhs, check_finite=False)
    c = sol[:, 0].sum()
    k = sol[:, 1].sum()
    return TwoFund(gmv=sol[:, 0] / c, sigma_inv_mu=sol[:, 1], k=float(k), c=float(c))


def gmv_weights(sigma) -> np.ndarray:
    """Global minimum variance portfolio ``Sigma^-1 1 / (1'Sigma^-1 1)``."""
    sigma = check_covariance(sigma)
    sol = linalg.cho_solve(_cho(sigma), np.ones(sigma.shape[0]), check_finite=False)
    return sol / sol.sum()


def mrar_weights(mu, sigma) -> np.ndarray:
    """Maximum risk-adjusted return portfolio ``Sigma^-1 mu / (1'Sigma^-1 mu)``."""
    return two_fund(mu, sigma).mrar()


def optimal_weights(mu, sigma, gamma) -> np.ndarray:
    """Mean-variance optimal fully-invested portfolio for risk aversion ``gamma``."""
    gamma = check_risk_aversion(gamma)
    return two_fund(mu, sigma).weights(gamma)


def frontier_weights(mu, sigma, gammas, *, validate: bool = True) -> np.ndarray:
    """Optimal weights for each risk aversion in ``gammas``, shape (len(gammas), N)."""
    tf = two_fund(mu, sigma, validate=validate)
    g = np.asarray(gammas, dtype=float)
    return np.outer(1.0 - tf.k / g, tf.gmv) + np.outer(1.0 / g, tf.sigma_inv_mu)


def mv_utility(w, mu, sigma, gamma) -> float:
    """Mean-variance utility ``w'mu - gamma/2 * w'Sigma w``."""
    w = np.asarray(w, dtype=float)
    mu = check_mean(mu, w.shape[0])
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (w.shape[0], w.shape[0]):
        raise ValueError(
            f"dimension mismatch: weights have {w.shape[0]} entries, covariance is "
            f"{sigma.shape}"
        )
    return float(w @ mu - 0.5 * gamma * (w @ sigma @ w))


def evaluate(w, mu, sigma, gamma) -> FrontierPoint:
    """Score portfolio ``w`` under the (true) parameters ``mu`` and ``sigma``."""
    w = np.asarray(w, dtype=float)
    mean = float(w @ mu)
    var = float(w @ sigma @ w)
    return FrontierPoint(gamma=float(gamma), mean=mean, variance=var,
                         utility=mean - 0.5 * gamma * var)


def gamma_grid(mu, sigma, allocations=DEFAULT_ALLOCATIONS) -> list[float]:
    """Risk aversions at which the true optimum puts ``a_k`` into the MRAR portfolio.

    ``gamma_k = 1'Sigma^-1 mu / a_k``; a zero allocation maps to :data:`GMV_GAMMA`.
    """
    tf = two_fund(mu, sigma)
    if tf.k <= 0:
        raise ValueError(
            f"1'Sigma^-1 mu = {tf.k:.6g} is not positive; the frontier cannot be "
            "indexed by non-negative MRAR allocations"
        )
    out = []
    for a in allocations:
        a = float(a)
        if a < 0 or a > 2 or not np.isfinite(a):
            raise ValueError(f"MRAR allocation must lie in [0, 2], got {a}")
        out.append(GMV_GAMMA if a == 0 else tf.k / a)
    return out


def spd_sqrt(sigma) -> np.ndarray:
    """Lower-triangular factor ``L`` with ``L @ L.T == sigma``."""
    sigma = check_covariance(sigma)
    return np.linalg.cholesky(sigma)
