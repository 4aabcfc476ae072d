import warnings

import numpy as np
import pytest
from scipy import stats

from mvfrontier import dgp
from mvfrontier.dgp import (
    SN_SKEW_BOUND,
    DgpSpec,
    RngStream,
    calibrate,
    centered_to_direct,
    direct_to_centered,
    estimate_nu,
    lag1_autocorrelation,
    simulate,
    simulate_innovations,
)
from oracles import batch_se

SIGMA3 = np.array([[0.0025, 0.0012, 0.0010],
                   [0.0012, 0.0036, 0.0015],
                   [0.0010, 0.0015, 0.0049]])
MU3 = np.array([0.008, 0.010, 0.012])


def spec(kind, **kw):
    return DgpSpec(kind, MU3, SIGMA3, **kw)


# -- RNG and reproducibility -------------------------------------------------

def test_stream_bitwise_reproducible():
    for kind, kw in [("MVG", {}), ("MVT", {"nu": 8.0}), ("MVSN", {"skew": [-0.3, -0.25, -0.2]}),
                     ("AR1", {"ar_coeffs": [-0.1, -0.2, -0.15]}),
                     ("GARCH", {"garch_params": [[0.08, 0.9]] * 3})]:
        s = spec(kind, **kw)
        a = simulate(s, 50, RngStream(3, 17))
        b = simulate(s, 50, RngStream(3, 17))
        assert a.tobytes() == b.tobytes()
        assert a.tobytes() != simulate(s, 50, RngStream(3, 18)).tobytes()
        assert a.tobytes() != simulate(s, 50, RngStream(4, 17)).tobytes()


def test_stream_attempts_are_distinct():
    s = spec("MVG")
    base = simulate(s, 10, RngStream(1, 5))
    assert base.tobytes() == simulate(s, 10, RngStream(1, 5, 0)).tobytes()
    assert base.tobytes() != simulate(s, 10, RngStream(1, 5, 1)).tobytes()
    assert simulate(s, 10, RngStream(1, 5, 1)).tobytes() != simulate(s, 10, RngStream(1, 6)).tobytes()


def test_simulate_accepts_generator():
    s = spec("MVG")
    a = simulate(s, 5, np.random.default_rng(0))
    assert a.shape == (5, 3)


def test_simulate_rejects_bad_length():
    for t in (0, -1, 2.5):
        with pytest.raises(ValueError):
            simulate(spec("MVG"), t, RngStream(0, 0))


# -- spec validation ---------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        DgpSpec("LAPLACE", MU3, SIGMA3)
    with pytest.raises(ValueError):
        spec("MVT", nu=4.0)
    with pytest.raises(ValueError):
        spec("MVSN", skew=[0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        spec("AR1", ar_coeffs=[0.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        spec("GARCH", garch_params=[[0.1, 0.9]] * 3)
    with pytest.raises(ValueError):
        DgpSpec("MVG", MU3, np.eye(3) - 2)


def test_spec_dict_roundtrip():
    for kind, kw in [("MVG", {}), ("MVT", {"nu": 8.0}), ("MVSN", {"skew": [-0.3, -0.25, -0.2]}),
                     ("AR1", {"ar_coeffs": [-0.1, -0.2, -0.15]}),
                     ("GARCH", {"garch_params": [[0.08, 0.9], [0.05, 0.9], [0.1, 0.85]]})]:
        s = spec(kind, **kw)
        back = DgpSpec.from_dict(s.to_dict())
        a = simulate(s, 20, RngStream(0, 0))
        assert a.tobytes() == simulate(back, 20, RngStream(0, 0)).tobytes()


# -- distribution checks -----------------------------------------------------

def test_mvsn_zero_skew_is_gaussian():
    t = 100_000
    g = simulate(spec("MVG"), t, RngStream(5, 0))
    s = simulate(spec("MVSN", skew=[0.0, 0.0, 0.0]), t, RngStream(5, 1))
    for X in (g, s):
        np.testing.assert_array_less(np.abs(X.mean(axis=0) - MU3), 3 * np.sqrt(np.diag(SIGMA3) / t) * 1.5)
    # two-sample comparison of means and variances
    z_mean = (g.mean(axis=0) - s.mean(axis=0)) / np.sqrt(2 * np.diag(SIGMA3) / t)
    z_var = (g.var(axis=0) - s.var(axis=0)) / (np.diag(SIGMA3) * np.sqrt(4 / t))
    assert np.all(np.abs(z_mean) < 3) and np.all(np.abs(z_var) < 3)
    assert np.all(np.abs(stats.skew(s)) < 3 * np.sqrt(6 / t))


def test_mvt_gaussian_limit():
    X = simulate(spec("MVT", nu=1e6), 200_000, RngStream(6, 0))
    assert np.all(np.abs(stats.kurtosis(X)) < 4 * np.sqrt(24 / 200_000))


def test_mvt_kurtosis_nu8():
    X = simulate(spec("MVT", nu=8.0), 1_000_000, RngStream(7, 0))
    # 6 / (nu - 4) = 1.5; the eighth moment is infinite, so allow 10 %
    np.testing.assert_allclose(stats.kurtosis(X), 1.5, rtol=0.10)


def test_ar1_autocorrelation():
    phi = np.array([-0.05, -0.25, -0.15])
    x = simulate_innovations(spec("AR1", ar_coeffs=phi), 1_000_000, np.random.default_rng(8))
    rho = lag1_autocorrelation(x)
    np.testing.assert_allclose(rho, phi, atol=4 / np.sqrt(1_000_000))
    assert rho.mean() == pytest.approx(-0.15, abs=0.01)
    np.testing.assert_allclose(x.var(axis=0), 1.0, atol=0.01)
    # no cross-asset correlation at lag one
    y = x - x.mean(axis=0)
    cross = y[1:].T @ y[:-1] / len(y)
    off = cross[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) < 4 / np.sqrt(1_000_000))


def test_ar1_stationary_start():
    s = spec("AR1", ar_coeffs=[-0.9, 0.9, 0.5])
    first = np.array([simulate_innovations(s, 1, np.random.default_rng(i))[0] for i in range(20_000)])
    np.testing.assert_allclose(first.var(axis=0), 1.0, atol=0.05)


def test_garch_moments():
    s = spec("GARCH", garch_params=[[0.08, 0.9]] * 3)
    x = simulate_innovations(s, 1_000_000, np.random.default_rng(9))
    sq = x**2
    # unconditional variance pooled over assets; x^2 is strongly persistent
    pooled = sq.mean()
    se = batch_se(sq.mean(axis=1, keepdims=True))[0]
    assert abs(pooled - 1.0) < 0.01
    assert abs(pooled - 1.0) < 4 * se
    r1 = lag1_autocorrelation(sq)
    assert np.all(r1 > 3 / np.sqrt(len(sq)))
    r2 = np.array([np.corrcoef(sq[2:, i], sq[:-2, i])[0, 1] for i in range(3)])
    assert np.all(r2 > 0)


def test_garch_burn_in_applied():
    s = spec("GARCH", garch_params=[[0.08, 0.9]] * 3)
    assert simulate_innovations(s, 7, np.random.default_rng(0)).shape == (7, 3)
    with pytest.raises(ValueError):
        simulate_innovations(spec("MVG"), 7, np.random.default_rng(0))


# -- skew-normal parameter maps ----------------------------------------------

def test_skew_normal_roundtrip():
    skew = np.array([-0.4, -0.3, -0.2])
    dp = centered_to_direct(MU3, SIGMA3, skew)
    mean, cov, sk = direct_to_centered(dp)
    np.testing.assert_allclose(mean, MU3, atol=1e-12)
    np.testing.assert_allclose(cov, SIGMA3, atol=1e-14)
    np.testing.assert_allclose(sk, skew, atol=1e-10)
    assert np.all(np.isfinite(dp.alpha))


def test_skew_normal_unattainable():
    # strongly correlated assets cannot carry opposite skews
    sigma = np.array([[1.0, 0.95], [0.95, 1.0]])
    with pytest.raises(ValueError, match="jointly attainable"):
        centered_to_direct(np.zeros(2), sigma, [0.8, -0.8])


def test_skew_normal_bound_constant():
    assert SN_SKEW_BOUND == pytest.approx(0.9952717, abs=1e-7)


# -- calibration -------------------------------------------------------------

def test_calibrate_gaussian_input():
    X = np.random.default_rng(10).standard_normal((100_000, 3)) @ np.linalg.cholesky(SIGMA3).T
    assert calibrate(X, "MVT").nu == 50.0
    s = calibrate(X, "MVSN")
    assert np.all(np.abs(s.skew) < 0.72 * 4 * np.sqrt(6 / 100_000))
    np.testing.assert_allclose(s.target_sigma, np.cov(X.T))


def test_estimate_nu_inverts_kurtosis():
    # three-point columns: +-1 with probability 2/18 each has excess kurtosis 1.5
    base = np.array([1, 1, -1, -1] + [0] * 14, dtype=float)
    X = np.column_stack([base, np.roll(base, 5), np.roll(base, 11)])
    assert stats.kurtosis(X) == pytest.approx([1.5] * 3)
    assert estimate_nu(X) == pytest.approx(8.0)


def test_estimate_nu_fallback():
    X = np.random.default_rng(0).uniform(size=(1000, 3))
    assert estimate_nu(X, default=12.0) == 12.0


def test_ar_rescale_fixed_point(monkeypatch):
    monkeypatch.setattr(dgp, "lag1_autocorrelation", lambda X: np.array([-0.05, -0.25]))
    X = np.random.default_rng(0).standard_normal((50, 2))
    s = calibrate(X, "AR1")
    np.testing.assert_allclose(s.ar_coeffs, [-0.05, -0.25], atol=1e-15)


def test_ar_rescale_scales(monkeypatch):
    monkeypatch.setattr(dgp, "lag1_autocorrelation", lambda X: np.array([-0.02, -0.08]))
    s = calibrate(np.random.default_rng(0).standard_normal((50, 2)), "AR1")
    np.testing.assert_allclose(s.ar_coeffs, [-0.06, -0.24])


def test_ar_rescale_shifts_on_sign_mismatch(monkeypatch):
    monkeypatch.setattr(dgp, "lag1_autocorrelation", lambda X: np.array([0.01, 0.05]))
    with pytest.warns(UserWarning, match="shifted"):
        s = calibrate(np.random.default_rng(0).standard_normal((50, 2)), "AR1")
    np.testing.assert_allclose(s.ar_coeffs, [-0.17, -0.13])


def test_skew_clamp_warns():
    rng = np.random.default_rng(1)
    X = np.column_stack([rng.exponential(size=5000), rng.standard_normal(5000)])
    with pytest.warns(UserWarning, match="clamped"):
        s = calibrate(X, "MVSN")
    assert abs(s.skew[0]) <= 0.99 * SN_SKEW_BOUND + 1e-12


def test_calibrate_fixture_specs(fixture_panel):
    X = fixture_panel.values
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        specs = {k: calibrate(X, k) for k in dgp.KINDS}
    for s in specs.values():
        np.testing.assert_allclose(s.target_mu, X.mean(axis=0))
    assert dgp.NU_BOUNDS[0] <= specs["MVT"].nu <= dgp.NU_BOUNDS[1]
    np.testing.assert_allclose(specs["MVSN"].skew, 0.72 * stats.skew(X))
    assert specs["AR1"].ar_coeffs.mean() == pytest.approx(-0.15)
    np.testing.assert_allclose(specs["GARCH"].garch_params, [[0.08, 0.9]] * 10)


def test_calibrate_rejects_unknown_kind():
    with pytest.raises(ValueError):
        calibrate(np.ones((10, 2)), "CAUCHY")
