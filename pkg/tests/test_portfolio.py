import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mvfrontier import LinearShrinkage, MeanVariancePortfolio, core


@pytest.fixture
def returns(rng):
    L = np.linalg.cholesky(0.002 * (0.3 * np.ones((4, 4)) + 0.7 * np.eye(4)))
    return 0.01 + rng.standard_normal((60, 4)) @ L.T


def test_default_params():
    p = MeanVariancePortfolio()
    assert p.get_params() == {"moments": None, "risk_aversion": 1.0}


def test_fit_matches_core(returns):
    p = MeanVariancePortfolio(risk_aversion=4.0).fit(returns)
    mu, S = returns.mean(axis=0), np.cov(returns.T)
    np.testing.assert_allclose(p.weights_, core.optimal_weights(mu, S, 4.0), atol=1e-12)
    np.testing.assert_allclose(p.gmv_weights_, core.gmv_weights(S), atol=1e-12)
    assert p.mrar_allocation_ == pytest.approx(np.ones(4) @ np.linalg.solve(S, mu) / 4.0)
    assert p.n_features_in_ == 4


def test_custom_moment_estimator(returns):
    p = MeanVariancePortfolio(moments=LinearShrinkage(), risk_aversion=3.0).fit(returns)
    est = LinearShrinkage().fit(returns)
    np.testing.assert_allclose(
        p.weights_, core.optimal_weights(est.location_, est.covariance_, 3.0), atol=1e-12
    )
    assert p.moments is not p.moments_


def test_clone_and_set_params(returns):
    p = MeanVariancePortfolio(risk_aversion=2.0).fit(returns)
    c = clone(p)
    assert c.get_params()["risk_aversion"] == 2.0
    assert not hasattr(c, "weights_")
    c.set_params(risk_aversion=5.0)
    assert c.fit(returns).weights_ is not None


def test_predict_and_score(returns):
    p = MeanVariancePortfolio(risk_aversion=3.0).fit(returns)
    r = p.predict(returns)
    np.testing.assert_allclose(r, returns @ p.weights_)
    assert p.score(returns) == pytest.approx(r.mean() - 1.5 * r.var(ddof=1))


def test_not_fitted(returns):
    with pytest.raises(NotFittedError):
        MeanVariancePortfolio().predict(returns)


def test_feature_mismatch(returns):
    p = MeanVariancePortfolio().fit(returns)
    with pytest.raises(ValueError, match="assets"):
        p.predict(returns[:, :3])


@pytest.mark.parametrize("gamma", [0.0, -1.0, np.inf])
def test_bad_risk_aversion(returns, gamma):
    with pytest.raises(ValueError):
        MeanVariancePortfolio(risk_aversion=gamma).fit(returns)


def test_rejects_nan(returns):
    returns[3, 1] = np.nan
    with pytest.raises(ValueError):
        MeanVariancePortfolio().fit(returns)
