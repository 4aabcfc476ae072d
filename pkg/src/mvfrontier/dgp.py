"""Return simulators sharing a common target mean and covariance.

Five data-generating processes are supported: multivariate Gaussian (MVG),
multivariate Student-t (MVT), multivariate skew-normal (MVSN), and Gaussian
cross-sections colored from independent AR(1) or GARCH(1,1) innovations.
Every kind is parameterized so that the population mean and covariance of
the simulated returns equal ``target_mu`` and ``target_sigma``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, stats

from .core import spd_sqrt
from .estimators import sample_moments
from .validation import check_covariance, check_mean, check_returns

KINDS = ("MVG", "MVT", "MVSN", "AR1", "GARCH")

#: Largest attainable |skewness| of a univariate skew-normal margin.
SN_SKEW_BOUND = 0.5 * (4.0 - np.pi) * (2.0 / (np.pi - 2.0)) ** 1.5
_B = np.sqrt(2.0 / np.pi)

GARCH_BURN_IN = 250
DEFAULT_GARCH = (0.08, 0.90)
NU_BOUNDS = (4.5, 50.0)


@dataclass(frozen=True)
class RngStream:
    """Seed material for one replication.

    ``attempt`` distinguishes resampling after a failed trial; it does not
    change the stream for ``attempt == 0``.
    """

    master_seed: int
    stream_index: int
    attempt: int = 0

    def generator(self) -> np.random.Generator:
        key = (self.stream_index,) if self.attempt == 0 else (self.stream_index, self.attempt)
        ss = np.random.SeedSequence(self.master_seed, spawn_key=key)
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class DgpSpec:
    kind: str
    target_mu: np.ndarray
    target_sigma: np.ndarray
    nu: float | None = None
    skew: np.ndarray | None = None
    ar_coeffs: np.ndarray | None = None
    garch_params: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown DGP kind {self.kind!r}; expected one of {KINDS}")
        sigma = check_covariance(self.target_sigma)
        n = sigma.shape[0]
        mu = check_mean(self.target_mu, n)
        if n < 2:
            raise ValueError("need at least two assets")
        object.__setattr__(self, "target_sigma", sigma)
        object.__setattr__(self, "target_mu", mu)
        if self.kind == "MVT":
            if self.nu is None or not self.nu > 4 or not np.isfinite(self.nu):
                raise ValueError(f"MVT needs finite degrees of freedom nu > 4, got {self.nu}")
        if self.kind == "MVSN":
            skew = check_mean(self.skew, n)
            if np.any(np.abs(skew) >= SN_SKEW_BOUND):
                raise ValueError(
                    f"marginal skewness must lie strictly inside +/-{SN_SKEW_BOUND:.7f}"
                )
            object.__setattr__(self, "skew", skew)
        if self.kind == "AR1":
            phi = check_mean(self.ar_coeffs, n)
            if np.any(np.abs(phi) >= 1):
                raise ValueError("AR(1) coefficients must lie in (-1, 1)")
            object.__setattr__(self, "ar_coeffs", phi)
        if self.kind == "GARCH":
            p = np.asarray(self.garch_params, dtype=float)
            if p.shape != (n, 2):
                raise ValueError(f"garch_params must have shape ({n}, 2), got {p.shape}")
            a, b = p[:, 0], p[:, 1]
            if np.any(a < 0) or np.any(b < 0) or np.any(a + b >= 1):
                raise ValueError("GARCH parameters need alpha, beta >= 0 and alpha + beta < 1")
            object.__setattr__(self, "garch_params", p)

    @property
    def n_assets(self) -> int:
        return self.target_mu.shape[0]

    def chol(self) -> np.ndarray:
        if "chol" not in self._cache:
            self._cache["chol"] = spd_sqrt(self.target_sigma)
        return self._cache["chol"]

    def skew_normal(self) -> "SkewNormalDirect":
        if "sn" not in self._cache:
            self._cache["sn"] = centered_to_direct(self.target_mu, self.target_sigma, self.skew)
        return self._cache["sn"]

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "target_mu": self.target_mu.tolist(),
            "target_sigma": self.target_sigma.tolist(),
        }
        if self.kind == "MVT":
            out["nu"] = float(self.nu)
        if self.kind == "MVSN":
            out["skew"] = self.skew.tolist()
        if self.kind == "AR1":
            out["ar_coeffs"] = self.ar_coeffs.tolist()
        if self.kind == "GARCH":
            out["garch_params"] = {
                "alpha": self.garch_params[:, 0].tolist(),
                "beta": self.garch_params[:, 1].tolist(),
            }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DgpSpec":
        garch = d.get("garch_params")
        if isinstance(garch, dict):
            garch = np.column_stack([garch["alpha"], garch["beta"]])
        return cls(
            kind=d["kind"],
            target_mu=np.asarray(d["target_mu"], dtype=float),
            target_sigma=np.asarray(d["target_sigma"], dtype=float),
            nu=d.get("nu"),
            skew=None if d.get("skew") is None else np.asarray(d["skew"], dtype=float),
            ar_coeffs=None if d.get("ar_coeffs") is None else np.asarray(d["ar_coeffs"], dtype=float),
            garch_params=garch,
        )


# ---------------------------------------------------------------------------
# skew-normal parameter maps


@dataclass(frozen=True)
class SkewNormalDirect:
    """Direct parameters of a multivariate skew-normal distribution.

    ``Y = xi + scale * Z`` with ``Z = delta * |U0| + W``, ``U0 ~ N(0, 1)`` and
    ``W ~ N(0, omega_bar - delta delta')`` independent.
    """

    xi: np.ndarray
    scale: np.ndarray
    omega_bar: np.ndarray
    delta: np.ndarray

    @property
    def omega(self) -> np.ndarray:
        return self.omega_bar * np.outer(self.scale, self.scale)

    @property
    def alpha(self) -> np.ndarray:
        q = np.linalg.solve(self.omega_bar, self.delta)
        return q / np.sqrt(1.0 - self.delta @ q)


def _skew_to_mu_z(skew: np.ndarray) -> np.ndarray:
    r = np.cbrt(2.0 * skew / (4.0 - np.pi))
    return r / np.sqrt(1.0 + r**2)


def centered_to_direct(mu, sigma, skew) -> SkewNormalDirect:
    """Map mean, covariance and marginal skewness to direct parameters.

    Raises ``ValueError`` when the requested skewness vector is not jointly
    attainable for this covariance.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    skew = np.asarray(skew, dtype=float)
    if np.any(np.abs(skew) >= SN_SKEW_BOUND):
        raise ValueError(f"marginal skewness must lie strictly inside +/-{SN_SKEW_BOUND:.7f}")
    mu_z = _skew_to_mu_z(skew)
    sd = np.sqrt(np.diag(sigma))
    scale = sd / np.sqrt(1.0 - mu_z**2)
    xi = mu - scale * mu_z
    omega_bar = sigma / np.outer(scale, scale) + np.outer(mu_z, mu_z)
    delta = mu_z / _B
    q = np.linalg.solve(omega_bar, delta)
    # keep omega_bar - delta delta' safely positive definite for the sampler
    if delta @ q >= 1.0 - 1e-8:
        raise ValueError(
            f"skewness vector is not jointly attainable (delta' Omega^-1 delta = {delta @ q:.4f} >= 1)"
        )
    return SkewNormalDirect(xi=xi, scale=scale, omega_bar=omega_bar, delta=delta)


def direct_to_centered(dp: SkewNormalDirect):
    """Mean, covariance and marginal skewness of a skew-normal distribution."""
    mu_z = _B * dp.delta
    mean = dp.xi + dp.scale * mu_z
    sz = dp.scale * mu_z
    cov = dp.omega - np.outer(sz, sz)
    skew = 0.5 * (4.0 - np.pi) * mu_z**3 / (1.0 - mu_z**2) ** 1.5
    return mean, cov, skew


# ---------------------------------------------------------------------------
# simulation


def simulate_innovations(spec: DgpSpec, t: int, rng: np.random.Generator) -> np.ndarray:
    """Standardized AR(1) or GARCH(1,1) innovation series, shape (t, N).

    Each column has zero mean and unit unconditional variance; columns are
    independent.
    """
    n = spec.n_assets
    if spec.kind == "AR1":
        phi = spec.ar_coeffs
        x_prev = rng.standard_normal(n)
        e = rng.standard_normal((t, n))
        x = np.empty((t, n))
        for i in range(n):
            x[:, i] = signal.lfilter(
                [np.sqrt(1.0 - phi[i] ** 2)], [1.0, -phi[i]], e[:, i], zi=[phi[i] * x_prev[i]]
            )[0]
        return x
    if spec.kind == "GARCH":
        a, b = spec.garch_params[:, 0], spec.garch_params[:, 1]
        w = 1.0 - a - b
        z = rng.standard_normal((GARCH_BURN_IN + t, n))
        h = np.ones(n)
        x = np.empty_like(z)
        for s in range(z.shape[0]):
            x[s] = np.sqrt(h) * z[s]
            h = w + a * x[s] ** 2 + b * h
        return x[GARCH_BURN_IN:]
    raise ValueError(f"{spec.kind} has no innovation series")


def simulate(spec: DgpSpec, t: int, rng) -> np.ndarray:
    """Draw a ``t x N`` return sample from ``spec``.

    ``rng`` is a :class:`RngStream` or a ``numpy.random.Generator``.
    """
    if int(t) != t or t < 1:
        raise ValueError(f"sample length must be a positive integer, got {t}")
    t = int(t)
    if isinstance(rng, RngStream):
        rng = rng.generator()
    n = spec.n_assets
    mu = spec.target_mu
    if spec.kind == "MVG":
        return mu + rng.standard_normal((t, n)) @ spec.chol().T
    if spec.kind == "MVT":
        nu = spec.nu
        z = rng.standard_normal((t, n)) @ spec.chol().T * np.sqrt((nu - 2.0) / nu)
        w = rng.chisquare(nu, t)
        return mu + z * np.sqrt(nu / w)[:, None]
    if spec.kind == "MVSN":
        dp = spec.skew_normal()
        if "sn_chol" not in spec._cache:
            spec._cache["sn_chol"] = np.linalg.cholesky(
                dp.omega_bar - np.outer(dp.delta, dp.delta)
            )
        u0 = np.abs(rng.standard_normal(t))
        w = rng.standard_normal((t, n)) @ spec._cache["sn_chol"].T
        return dp.xi + (np.outer(u0, dp.delta) + w) * dp.scale
    x = simulate_innovations(spec, t, rng)
    return mu + x @ spec.chol().T


# ---------------------------------------------------------------------------
# calibration


def lag1_autocorrelation(x: np.ndarray) -> np.ndarray:
    """Per-column lag-1 sample autocorrelation."""
    x = np.asarray(x, dtype=float)
    y = x - x.mean(axis=0)
    return np.sum(y[1:] * y[:-1], axis=0) / np.sum(y**2, axis=0)


def estimate_nu(returns, *, bounds=NU_BOUNDS, default: float = NU_BOUNDS[1]) -> float:
    """Average of per-asset method-of-moments Student-t degrees of freedom.

    Each asset contributes ``4 + 6 / excess_kurtosis`` clamped to ``bounds``;
    assets without positive excess kurtosis sit at the upper bound.  When no
    asset has positive excess kurtosis, ``default`` is returned.
    """
    kurt = stats.kurtosis(np.asarray(returns, dtype=float), axis=0)
    if np.all(kurt <= 0):
        return float(default)
    lo, hi = bounds
    with np.errstate(divide="ignore"):
        nu = np.where(kurt > 0, 4.0 + 6.0 / np.where(kurt > 0, kurt, 1.0), hi)
    return float(np.mean(np.clip(nu, lo, hi)))


def _admissible_skew(mu, sigma, skew):
    """Shrink ``skew`` towards zero until it is jointly attainable."""
    try:
        centered_to_direct(mu, sigma, skew)
        return skew
    except ValueError:
        pass
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        try:
            centered_to_direct(mu, sigma, mid * skew)
            lo = mid
        except ValueError:
            hi = mid
    warnings.warn(
        f"skewness vector scaled by {lo:.4f} to make it jointly attainable", stacklevel=3
    )
    return lo * skew


def calibrate(
    returns,
    kind: str,
    *,
    nu: float | None = None,
    default_nu: float = NU_BOUNDS[1],
    skew_scale: float = 0.72,
    ar_mean: float = -0.15,
    garch_alpha=DEFAULT_GARCH[0],
    garch_beta=DEFAULT_GARCH[1],
) -> DgpSpec:
    """Build a :class:`DgpSpec` whose target moments are the sample moments of ``returns``.

    Parameters
    ----------
    returns : array-like of shape (T, N)
    kind : {"MVG", "MVT", "MVSN", "AR1", "GARCH"}
    nu : float, optional
        Fix the Student-t degrees of freedom instead of estimating them.
    default_nu : float
        Fallback when no asset shows positive excess kurtosis.
    skew_scale : float
        Factor applied to the sample marginal skewness.
    ar_mean : float
        Cross-sectional mean the lag-1 autocorrelations are rescaled to.  When
        their sample mean has the other sign, or rescaling would push a
        coefficient past +/-0.99, they are shifted to this mean instead.
    garch_alpha, garch_beta : float or array-like
        Per-asset GARCH(1,1) coefficients.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown DGP kind {kind!r}; expected one of {KINDS}")
    X = check_returns(returns, min_samples=3, min_assets=2)
    m = sample_moments(X)
    mu, sigma = m.mu_hat, m.sigma_hat
    n = X.shape[1]
    if kind == "MVG":
        return DgpSpec("MVG", mu, sigma)
    if kind == "MVT":
        value = estimate_nu(X, default=default_nu) if nu is None else float(nu)
        return DgpSpec("MVT", mu, sigma, nu=value)
    if kind == "MVSN":
        skew = skew_scale * stats.skew(X, axis=0)
        limit = 0.99 * SN_SKEW_BOUND
        if np.any(np.abs(skew) > limit):
            warnings.warn(
                f"scaled skewness clamped to +/-{limit:.4f} for assets "
                f"{np.flatnonzero(np.abs(skew) > limit).tolist()}",
                stacklevel=2,
            )
            skew = np.clip(skew, -limit, limit)
        skew = _admissible_skew(mu, sigma, skew)
        return DgpSpec("MVSN", mu, sigma, skew=skew)
    if kind == "AR1":
        rho = lag1_autocorrelation(X)
        mean_rho = float(np.mean(rho))
        phi = None
        if abs(mean_rho) >= 1e-8 and mean_rho * ar_mean > 0:
            phi = rho * (ar_mean / mean_rho)
            if np.any(np.abs(phi) >= 0.99):
                phi = None
        if phi is None:
            # a sign flip or blow-up of the rescaling factor would distort the
            # cross-section; shift to the target mean instead
            if abs(mean_rho) >= 1e-8:
                warnings.warn(
                    f"lag-1 autocorrelations (mean {mean_rho:.4f}) shifted, not rescaled, "
                    f"to mean {ar_mean}",
                    stacklevel=2,
                )
            phi = rho - mean_rho + ar_mean
        if np.any(np.abs(phi) >= 0.99):
            warnings.warn("rescaled AR(1) coefficients clipped to +/-0.99", stacklevel=2)
            phi = np.clip(phi, -0.99, 0.99)
        return DgpSpec("AR1", mu, sigma, ar_coeffs=phi)
    a = np.broadcast_to(np.asarray(garch_alpha, dtype=float), (n,))
    b = np.broadcast_to(np.asarray(garch_beta, dtype=float), (n,))
    return DgpSpec("GARCH", mu, sigma, garch_params=np.column_stack([a, b]))
