"""Moment estimators behind the portfolio decision rules.

Each rule turns a T x N return sample into a mean vector and a covariance
matrix.  The functional form (``bayes_stein(X)`` etc.) returns a
:class:`MomentEstimate` plus :class:`ShrinkageDiagnostics`; the classes
(``BayesStein().fit(X)``) wrap the same computation behind the scikit-learn
estimator interface and expose ``location_`` and ``covariance_``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.isotonic import isotonic_regression
from sklearn.utils.validation import check_is_fitted

from .validation import (
    NotPositiveDefiniteError,
    check_covariance,
    check_returns,
    symmetrize,
)

RULES = (
    "sample",
    "bayes_stein",
    "factor",
    "linear_shrink",
    "data_and_model",
    "nonlinear_shrink",
)


@dataclass(frozen=True)
class MomentEstimate:
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    rule_tag: str


@dataclass(frozen=True)
class ShrinkageDiagnostics:
    intensity: float
    target_description: str
    auxiliary: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FactorModel:
    """Statistical factor model fitted by time-series regression.

    ``loadings_unrestricted`` and ``alpha`` come from the regression with an
    intercept, ``loadings_restricted`` from the one with the intercept fixed
    at zero.  Residual covariances are diagonal.
    """

    loadings_unrestricted: np.ndarray
    loadings_restricted: np.ndarray
    factor_returns: np.ndarray
    factor_mean: np.ndarray
    factor_cov: np.ndarray
    residual_cov_unrestricted: np.ndarray
    residual_cov_restricted: np.ndarray
    alpha: np.ndarray

    @property
    def n_factors(self) -> int:
        return self.factor_cov.shape[0]


def _sample_cov(X: np.ndarray) -> np.ndarray:
    Y = X - X.mean(axis=0)
    return symmetrize(Y.T @ Y / (X.shape[0] - 1))


def _solve(sigma: np.ndarray, b: np.ndarray) -> np.ndarray:
    return linalg.cho_solve(linalg.cho_factor(sigma, lower=True), b)


# ---------------------------------------------------------------------------
# sample moments


def sample_moments(X) -> MomentEstimate:
    """Column means and the (T-1)-normalized sample covariance."""
    X = check_returns(X, min_samples=2)
    return MomentEstimate(X.mean(axis=0), _sample_cov(X), "sample")


# ---------------------------------------------------------------------------
# Bayes-Stein


def bayes_stein(X, *, classical_constant: bool = False):
    """Bayes-Stein shrinkage of the mean towards the GMV portfolio's average return.

    The intensity is ``(N+2) / ((N+2) + T d'S^-1 d)`` with ``d`` the gap
    between the sample mean and the grand mean ``mu_0 * 1``; with
    ``classical_constant=True`` the James-Stein constant ``N-2`` replaces
    ``N+2``.  The covariance is the predictive covariance that accounts for
    estimation risk in the mean.
    """
    X = check_returns(X, min_samples=3)
    t, n = X.shape
    mu_s = X.mean(axis=0)
    S = check_covariance(_sample_cov(X))
    ones = np.ones(n)
    sol = _solve(S, np.column_stack([ones, mu_s]))
    c = sol[:, 0].sum()
    gmv = sol[:, 0] / c
    mu_0 = float(gmv @ mu_s)
    d = mu_s - mu_0
    quad = float(t * (d @ _solve(S, d)))
    const = (n - 2) if classical_constant else (n + 2)
    denom = const + quad
    phi = 1.0 if denom <= 0 else min(1.0, max(0.0, const / denom))
    mu_b = (1.0 - phi) * mu_s + phi * mu_0 * ones
    sigma_b = S * (1.0 + 1.0 / (t + phi)) + phi / (t * (t + 1.0 + phi)) * np.outer(
        ones, ones
    ) / c
    diag = ShrinkageDiagnostics(
        intensity=phi,
        target_description="grand mean of the sample GMV portfolio",
        auxiliary={"mu_0": mu_0, "dispersion": quad},
    )
    return MomentEstimate(mu_b, symmetrize(sigma_b), "bayes_stein"), diag


# ---------------------------------------------------------------------------
# linear shrinkage to constant correlation


def _mean_correlation(sigma: np.ndarray) -> float:
    n = sigma.shape[0]
    sd = np.sqrt(np.diag(sigma))
    corr = sigma / np.outer(sd, sd)
    return float((corr.sum() - np.trace(corr)) / (n * (n - 1)))


def constant_correlation_target(sigma_s) -> np.ndarray:
    """Covariance with the sample variances and every correlation set to the mean one."""
    sigma_s = np.asarray(sigma_s, dtype=float)
    var = np.diag(sigma_s)
    if np.any(var <= 0):
        raise ValueError("constant-correlation target needs strictly positive variances")
    sd = np.sqrt(var)
    r_bar = _mean_correlation(sigma_s)
    target = r_bar * np.outer(sd, sd)
    np.fill_diagonal(target, var)
    return target


def _ccm_intensity(X: np.ndarray):
    """Raw optimal intensity ingredients for the constant-correlation target.

    Uses the T-normalized covariance of the demeaned data, as the asymptotic
    formulas are written.
    """
    t, n = X.shape
    Y = X - X.mean(axis=0)
    S = Y.T @ Y / t
    var = np.diag(S)
    sd = np.sqrt(var)
    r_bar = _mean_correlation(S)
    F = r_bar * np.outer(sd, sd)
    np.fill_diagonal(F, var)

    Y2 = Y**2
    pi_mat = Y2.T @ Y2 / t - S**2
    pi_hat = float(pi_mat.sum())

    theta = (Y**3).T @ Y / t - var[:, None] * S
    np.fill_diagonal(theta, 0.0)
    rho_hat = float(np.trace(pi_mat) + r_bar * ((sd[None, :] / sd[:, None]) * theta).sum())

    gap = float(np.sum((S - F) ** 2))
    return pi_hat, rho_hat, gap, r_bar


def linear_shrinkage(X):
    """Shrink the sample covariance towards the constant-correlation target.

    The intensity ``(pi - rho) / (T * gap)`` is clipped to [0, 1]; ``gap`` is
    the squared Frobenius distance between the sample covariance and the
    target.  The mean estimate is the sample mean.
    """
    X = check_returns(X, min_samples=2, min_assets=2)
    t, _ = X.shape
    mu = X.mean(axis=0)
    S = _sample_cov(X)
    F = constant_correlation_target(S)
    pi_hat, rho_hat, gap, r_bar = _ccm_intensity(X)
    if gap <= 0:
        phi = 0.0
    else:
        phi = float(min(1.0, max(0.0, (pi_hat - rho_hat) / (t * gap))))
    sigma_l = phi * F + (1.0 - phi) * S
    diag = ShrinkageDiagnostics(
        intensity=phi,
        target_description="constant correlation",
        auxiliary={"pi": pi_hat, "rho": rho_hat, "frobenius_gap": gap, "mean_corr": r_bar},
    )
    return MomentEstimate(mu, symmetrize(sigma_l), "linear_shrink"), diag


# ---------------------------------------------------------------------------
# analytical nonlinear shrinkage

_SQRT5 = np.sqrt(5.0)
#: Smallest effective sample size with sqrt(5) * n^(-1/3) < 1.
MIN_NLS_OBS = 12


def _epanechnikov_density_hilbert(lam: np.ndarray, h: float):
    """Kernel density of ``lam`` and its Hilbert transform, evaluated at ``lam``.

    The Epanechnikov kernel around eigenvalue ``lam_j`` has bandwidth
    ``lam_j * h``.
    """
    L = lam[:, None]
    H = h * lam[None, :]
    x = (L - lam[None, :]) / H
    f = (3.0 / 4.0 / _SQRT5) * np.mean(np.maximum(1.0 - x**2 / 5.0, 0.0) / H, axis=1)
    edge = np.isclose(np.abs(x), _SQRT5, rtol=0.0, atol=1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.log(np.abs((_SQRT5 - x) / (_SQRT5 + x)))
    hilbert = (-3.0 / 10.0 / np.pi) * x + (3.0 / 4.0 / _SQRT5 / np.pi) * (
        1.0 - x**2 / 5.0
    ) * np.where(edge, 0.0, log_term)
    hf = np.mean(hilbert / H, axis=1)
    return f, hf


def shrink_eigenvalues(lam: np.ndarray, n_assets: int, n_obs: int) -> np.ndarray:
    """Nonlinearly shrink ascending sample eigenvalues ``lam``.

    ``n_obs`` is the effective sample size (T-1 for demeaned data) and
    ``c = n_assets / n_obs`` the concentration ratio.  When ``c > 1`` only
    the top ``n_obs`` eigenvalues are informative and the null ones are
    mapped to a common positive value.  The result is made non-decreasing by
    isotonic regression.
    """
    p, n = n_assets, n_obs
    c = p / n
    h = n ** (-1.0 / 3.0)
    pos = lam[max(0, p - n):]
    f, hf = _epanechnikov_density_hilbert(pos, h)
    if p <= n:
        denom = (np.pi * c * pos * f) ** 2 + (1.0 - c - np.pi * c * pos * hf) ** 2
        return _monotone(pos / denom)
    hf0 = (1.0 / np.pi) * (
        3.0 / 10.0 / h**2
        + 3.0 / 4.0 / _SQRT5 / h * (1.0 - 1.0 / 5.0 / h**2)
        * np.log((1.0 + _SQRT5 * h) / (1.0 - _SQRT5 * h))
    ) * np.mean(1.0 / pos)
    d0 = 1.0 / (np.pi * (c - 1.0) * hf0)
    d1 = pos / (np.pi**2 * pos**2 * (f**2 + hf**2))
    return _monotone(np.concatenate([np.full(p - n, d0), d1]))


def _monotone(d: np.ndarray) -> np.ndarray:
    # the kernel estimate can reorder neighbouring eigenvalues; pool adjacent
    # violators restores the sample ordering and keeps the trace
    return isotonic_regression(d, increasing=True)


def nonlinear_shrinkage(X):
    """Shrink each sample eigenvalue separately, keeping the eigenvectors.

    The mean estimate is the sample mean.  A degenerate spectrum (all
    eigenvalues equal) leaves the sample covariance unchanged.
    """
    X = check_returns(X, min_samples=2, min_assets=2)
    t, n_assets = X.shape
    if t - 1 < MIN_NLS_OBS:
        # the kernel's Hilbert transform at zero needs sqrt(5) * h < 1
        raise ValueError(
            f"nonlinear shrinkage needs T-1 >= {MIN_NLS_OBS} effective observations, got T={t}"
        )
    mu = X.mean(axis=0)
    S = _sample_cov(X)
    n_obs = t - 1
    lam, U = np.linalg.eigh(S)
    c = n_assets / n_obs
    top = lam[-1]
    if top <= 0 or (top - lam[max(0, n_assets - n_obs)]) <= 1e-14 * abs(top):
        diag = ShrinkageDiagnostics(
            0.0, "analytical nonlinear shrinkage", {"c": c, "degenerate_spectrum": 1.0}
        )
        return MomentEstimate(mu, S, "nonlinear_shrink"), diag
    d = shrink_eigenvalues(lam, n_assets, n_obs)
    sigma_n = symmetrize((U * d) @ U.T)
    # share of the eigenvalue dispersion removed by the shrinkage
    spread = np.var(lam[max(0, n_assets - n_obs):])
    removed = 1.0 - np.var(d[max(0, n_assets - n_obs):]) / spread
    diag = ShrinkageDiagnostics(
        intensity=float(min(1.0, max(0.0, removed))),
        target_description="analytical nonlinear shrinkage",
        auxiliary={"c": c, "degenerate_spectrum": 0.0},
    )
    return MomentEstimate(mu, sigma_n, "nonlinear_shrink"), diag


# ---------------------------------------------------------------------------
# statistical factor model


def pca_factors(X, k: int = 2) -> FactorModel:
    """Principal-component factors and their time-series regressions."""
    X = check_returns(X, min_samples=3, min_assets=2)
    t, n = X.shape
    if not 1 <= k < n:
        raise ValueError(f"number of factors must satisfy 1 <= k < N={n}, got {k}")
    S = _sample_cov(X)
    lam, U = np.linalg.eigh(S)
    Uk = U[:, ::-1][:, :k].copy()
    # largest-magnitude entry positive
    idx = np.argmax(np.abs(Uk), axis=0)
    Uk *= np.sign(Uk[idx, np.arange(k)])
    f = X @ Uk
    f_mean = f.mean(axis=0)
    f_cov = np.atleast_2d(_sample_cov(f))
    if np.linalg.eigvalsh(f_cov)[0] <= 1e-14 * max(lam[-1], np.finfo(float).tiny):
        raise ValueError("factor returns are rank deficient")

    design = np.column_stack([np.ones(t), f])
    coef, *_ = np.linalg.lstsq(design, X, rcond=None)
    alpha = coef[0]
    B_hat = coef[1:].T
    resid_u = X - design @ coef
    coef_r, *_ = np.linalg.lstsq(f, X, rcond=None)
    B_bar = coef_r.T
    resid_r = X - f @ coef_r
    return FactorModel(
        loadings_unrestricted=B_hat,
        loadings_restricted=B_bar,
        factor_returns=f,
        factor_mean=f_mean,
        factor_cov=f_cov,
        residual_cov_unrestricted=np.diag(np.sum(resid_u**2, axis=0) / (t - 1)),
        residual_cov_restricted=np.diag(np.sum(resid_r**2, axis=0) / (t - 1)),
        alpha=alpha,
    )


def factor_moments(fm: FactorModel) -> MomentEstimate:
    """Moments implied by the unrestricted factor regression."""
    B = fm.loadings_unrestricted
    mu = B @ fm.factor_mean + fm.alpha
    sigma = symmetrize(B @ fm.factor_cov @ B.T + np.diag(np.diag(fm.residual_cov_unrestricted)))
    return MomentEstimate(mu, sigma, "factor")


# ---------------------------------------------------------------------------
# Data-and-Model

SHARPE_SOURCES = ("sample", "factor", "bayes_stein")
DELTA_STRATEGIES = ("predictive", "unit")


def data_and_model(
    X,
    k: int = 2,
    tau: float = 0.01,
    *,
    sharpe_source: str = "sample",
    delta: str = "predictive",
):
    """Blend a statistical factor pricing model (zero alphas) with the sample data.

    ``tau`` scales the prior uncertainty about the zero-alpha restriction;
    ``tau = 0`` is full confidence in the model.  ``sharpe_source`` picks the
    covariance used for the squared maximum Sharpe ratio and ``delta`` the
    predictive-variance scalar multiplying the residual covariance.
    """
    X = check_returns(X, min_samples=3, min_assets=2)
    t, n = X.shape
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    if t <= max(k + 2, n + 1):
        raise ValueError(
            f"need T > max(K+2, N+1) = {max(k + 2, n + 1)} observations, got T={t}"
        )
    if sharpe_source not in SHARPE_SOURCES:
        raise ValueError(f"unknown sharpe_source {sharpe_source!r}")
    if delta not in DELTA_STRATEGIES:
        raise ValueError(f"unknown delta strategy {delta!r}")

    fm = pca_factors(X, k)
    mu = X.mean(axis=0)
    mu_B, sigma_B = fm.factor_mean, fm.factor_cov
    if sharpe_source == "sample":
        s2 = float(mu @ _solve(check_covariance(_sample_cov(X)), mu))
    elif sharpe_source == "factor":
        s2 = float(mu_B @ _solve(sigma_B, mu_B))
    else:
        est, _ = bayes_stein(X)
        s2 = float(mu @ _solve(est.sigma_hat, mu))
    phi = (1.0 + s2) / (t * tau + 1.0 + s2)

    mu_d = phi * (fm.loadings_restricted @ mu_B) + (1.0 - phi) * mu
    F = phi * fm.loadings_restricted + (1.0 - phi) * fm.loadings_unrestricted
    if delta == "predictive":
        d_scalar = 1.0 + float(mu_B @ _solve(sigma_B, mu_B))
    else:
        d_scalar = 1.0
    E = phi * fm.residual_cov_restricted + (1.0 - phi) * fm.residual_cov_unrestricted
    sigma_d = (t + 1.0) / (t - k - 2.0) * F @ sigma_B @ F.T + t / (t - n - 1.0) * d_scalar * E
    sigma_d = symmetrize(sigma_d)
    lam_min = np.linalg.eigvalsh(sigma_d)[0]
    if lam_min <= 0:
        raise NotPositiveDefiniteError(
            f"Data-and-Model covariance is not positive definite: smallest eigenvalue "
            f"{lam_min:.6g} (phi={phi:.4g}, S2={s2:.4g})"
        )
    diag = ShrinkageDiagnostics(
        intensity=float(phi),
        target_description=f"{k}-factor statistical pricing model with zero alphas",
        auxiliary={"S2": s2, "delta": d_scalar, "tau": float(tau)},
    )
    return MomentEstimate(mu_d, sigma_d, "data_and_model"), diag


# ---------------------------------------------------------------------------
# rule dispatch


def estimate(rule: str, X, **options) -> MomentEstimate:
    """Apply decision rule ``rule`` and return its moment estimate.

    ``options`` may carry ``k`` (factor count), ``tau``, ``sharpe_source``,
    ``delta`` and ``classical_constant``; each rule takes what it needs.
    """
    k = options.get("k", 2)
    if rule == "sample":
        return sample_moments(X)
    if rule == "bayes_stein":
        return bayes_stein(X, classical_constant=options.get("classical_constant", False))[0]
    if rule == "factor":
        return factor_moments(pca_factors(X, k))
    if rule == "linear_shrink":
        return linear_shrinkage(X)[0]
    if rule == "nonlinear_shrink":
        return nonlinear_shrinkage(X)[0]
    if rule == "data_and_model":
        return data_and_model(
            X,
            k,
            options.get("tau", 0.01),
            sharpe_source=options.get("sharpe_source", "sample"),
            delta=options.get("delta", "predictive"),
        )[0]
    raise ValueError(f"unknown decision rule {rule!r}; expected one of {RULES}")


# ---------------------------------------------------------------------------
# scikit-learn style estimators


class BaseMoments(BaseEstimator):
    """Base class for estimators producing ``location_`` and ``covariance_``."""

    def _store(self, est: MomentEstimate, diag: ShrinkageDiagnostics | None, X):
        self.location_ = est.mu_hat
        self.covariance_ = est.sigma_hat
        self.diagnostics_ = diag
        self.n_features_in_ = np.asarray(X).shape[1]
        if hasattr(X, "columns"):
            self.feature_names_in_ = np.asarray(X.columns, dtype=object)
        return self

    @property
    def moments_(self) -> MomentEstimate:
        check_is_fitted(self, ["location_", "covariance_"])
        return MomentEstimate(self.location_, self.covariance_, self._rule_tag)

    @property
    def shrinkage_(self) -> float:
        check_is_fitted(self, "diagnostics_")
        return 0.0 if self.diagnostics_ is None else self.diagnostics_.intensity


class SampleMoments(BaseMoments):
    """Sample mean and (T-1)-normalized sample covariance."""

    _rule_tag = "sample"

    def fit(self, X, y=None):
        return self._store(sample_moments(X), None, X)


class BayesStein(BaseMoments):
    """Bayes-Stein mean with the matching predictive covariance.

    Parameters
    ----------
    classical_constant : bool, default=False
        Use ``N-2`` instead of ``N+2`` in the shrinkage intensity.
    """

    _rule_tag = "bayes_stein"

    def __init__(self, classical_constant: bool = False):
        self.classical_constant = classical_constant

    def fit(self, X, y=None):
        est, diag = bayes_stein(X, classical_constant=self.classical_constant)
        return self._store(est, diag, X)


class LinearShrinkage(BaseMoments):
    """Sample mean; covariance shrunk linearly to constant correlation."""

    _rule_tag = "linear_shrink"

    def fit(self, X, y=None):
        return self._store(*linear_shrinkage(X), X)


class NonlinearShrinkage(BaseMoments):
    """Sample mean; covariance with analytically shrunk eigenvalues."""

    _rule_tag = "nonlinear_shrink"

    def fit(self, X, y=None):
        return self._store(*nonlinear_shrinkage(X), X)


class StatisticalFactorModel(BaseMoments):
    """Moments implied by a principal-component factor model.

    Parameters
    ----------
    n_factors : int, default=2
        Number of principal components used as factors.

    Attributes
    ----------
    factor_model_ : FactorModel
        Fitted loadings, factor moments and residual covariances.
    """

    _rule_tag = "factor"

    def __init__(self, n_factors: int = 2):
        self.n_factors = n_factors

    def fit(self, X, y=None):
        self.factor_model_ = pca_factors(X, self.n_factors)
        return self._store(factor_moments(self.factor_model_), None, X)


class DataAndModel(BaseMoments):
    """Bayesian blend of a statistical factor pricing model and the sample.

    Parameters
    ----------
    n_factors : int, default=2
    tau : float, default=0.01
        Prior uncertainty about the zero-alpha restriction, as a multiple of
        the covariance.  ``0`` means full confidence in the model.
    sharpe_source : {"sample", "factor", "bayes_stein"}, default="sample"
    delta : {"predictive", "unit"}, default="predictive"
    """

    _rule_tag = "data_and_model"

    def __init__(
        self,
        n_factors: int = 2,
        tau: float = 0.01,
        sharpe_source: str = "sample",
        delta: str = "predictive",
    ):
        self.n_factors = n_factors
        self.tau = tau
        self.sharpe_source = sharpe_source
        self.delta = delta

    def fit(self, X, y=None):
        est, diag = data_and_model(
            X, self.n_factors, self.tau, sharpe_source=self.sharpe_source, delta=self.delta
        )
        return self._store(est, diag, X)


ESTIMATORS = {
    "sample": SampleMoments,
    "bayes_stein": BayesStein,
    "factor": StatisticalFactorModel,
    "linear_shrink": LinearShrinkage,
    "data_and_model": DataAndModel,
    "nonlinear_shrink": NonlinearShrinkage,
}
