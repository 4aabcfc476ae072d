"""Input validation helpers shared by the estimators, simulators and optimizers."""

from __future__ import annotations

import numpy as np

#: Covariance matrices with a larger 2-norm condition number are rejected.
MAX_CONDITION = 1e12


class NotPositiveDefiniteError(ValueError):
    """Raised when a covariance matrix is singular, indefinite or ill-conditioned."""


class DegenerateNormalizationError(ValueError):
    """Raised when a portfolio cannot be scaled to sum to one."""


def check_returns(X, *, min_samples: int = 2, min_assets: int = 1) -> np.ndarray:
    """Validate a T x N return sample and return it as a float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"returns must be 2-dimensional (T, N), got shape {X.shape}")
    t, n = X.shape
    if t < min_samples:
        raise ValueError(f"need at least {min_samples} observations, got T={t}")
    if n < min_assets:
        raise ValueError(f"need at least {min_assets} assets, got N={n}")
    if not np.all(np.isfinite(X)):
        raise ValueError("returns contain non-finite values")
    return X


def check_mean(mu, n_assets: int | None = None) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1:
        raise ValueError(f"mean vector must be 1-dimensional, got shape {mu.shape}")
    if n_assets is not None and mu.shape[0] != n_assets:
        raise ValueError(
            f"dimension mismatch: mean has {mu.shape[0]} entries, expected {n_assets}"
        )
    if not np.all(np.isfinite(mu)):
        raise ValueError("mean vector contains non-finite values")
    return mu


def check_covariance(
    sigma, n_assets: int | None = None, *, max_condition: float = MAX_CONDITION
) -> np.ndarray:
    """Validate a symmetric positive definite covariance matrix.

    The matrix must be square, finite, symmetric to 1e-12 relative tolerance,
    have a strictly positive smallest eigenvalue and a condition number not
    above ``max_condition``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"covariance must be square, got shape {sigma.shape}")
    if n_assets is not None and sigma.shape[0] != n_assets:
        raise ValueError(
            f"dimension mismatch: covariance is {sigma.shape[0]}x{sigma.shape[0]}, "
            f"expected {n_assets}x{n_assets}"
        )
    if not np.all(np.isfinite(sigma)):
        raise ValueError("covariance contains non-finite values")
    scale = max(np.max(np.abs(sigma)), np.finfo(float).tiny)
    if np.max(np.abs(sigma - sigma.T)) > 1e-12 * scale:
        raise ValueError("covariance is not symmetric")
    eig = np.linalg.eigvalsh(sigma)
    if eig[0] <= 0:
        raise NotPositiveDefiniteError(
            f"covariance is not positive definite: smallest eigenvalue {eig[0]:.6g}"
        )
    cond = eig[-1] / eig[0]
    if cond > max_condition:
        raise NotPositiveDefiniteError(
            f"covariance is numerically singular: condition number {cond:.3g} exceeds "
            f"{max_condition:.0e} (smallest eigenvalue {eig[0]:.6g})"
        )
    return sigma


def check_risk_aversion(gamma) -> float:
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError(f"risk aversion must be positive and finite, got {gamma}")
    return gamma


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)
