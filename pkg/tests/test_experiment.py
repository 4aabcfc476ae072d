import numpy as np
import pytest

from mvfrontier import core, experiment
from mvfrontier.dgp import DgpSpec, RngStream, simulate
from mvfrontier.experiment import (
    FrontierCurve,
    StudyConfig,
    TrialFailure,
    estimator_rmse,
    frontier_dominance,
    monotone_filter,
    ras_dominance,
    run_study,
    run_trial,
    simulate_trials,
    trial_frontier,
    true_frontier,
    utility_loss,
)
from oracles import grid_qp

SIGMA3 = np.array([[0.0025, 0.0012, 0.0010],
                   [0.0012, 0.0036, 0.0015],
                   [0.0010, 0.0015, 0.0049]])
MU3 = np.array([0.008, 0.010, 0.012])


def mvg3():
    return DgpSpec("MVG", MU3, SIGMA3)


def exact_sample(mu, sigma, t, seed=0):
    """A T x N sample whose mean and (T-1) covariance equal (mu, sigma) exactly."""
    Z = np.random.default_rng(seed).standard_normal((t, len(mu)))
    Z -= Z.mean(axis=0)
    Z = Z @ np.linalg.inv(np.linalg.cholesky(np.cov(Z.T)).T)
    return mu + Z @ np.linalg.cholesky(sigma).T


def curve(means, variances, tag="x"):
    n = len(means)
    g = np.arange(n, 0, -1, dtype=float)
    m = np.asarray(means, dtype=float)
    v = np.asarray(variances, dtype=float)
    return FrontierCurve(tag, np.linspace(0, 2, n), g, m, v, m - 0.5 * g * v)


# -- true frontier -----------------------------------------------------------

def test_true_frontier_endpoints():
    tf = core.two_fund(MU3, SIGMA3)
    truth = true_frontier(MU3, SIGMA3)
    gmv, mrar = tf.gmv, tf.mrar()
    assert truth.allocations[0] == 0.0 and truth.allocations[5] == 1.0
    assert truth.means[0] == pytest.approx(gmv @ MU3, rel=1e-6)
    assert truth.variances[0] == pytest.approx(gmv @ SIGMA3 @ gmv, rel=1e-9)
    assert truth.means[5] == pytest.approx(mrar @ MU3, rel=1e-12)
    assert truth.variances[5] == pytest.approx(mrar @ SIGMA3 @ mrar, rel=1e-12)


def test_true_frontier_matches_direct_optimization():
    truth = true_frontier(MU3, SIGMA3)
    assert np.all(np.diff(truth.means) > 0)
    for g, m in zip(truth.gammas[1:], truth.means[1:]):
        w = grid_qp(MU3, SIGMA3, g)
        assert w @ MU3 == pytest.approx(m, abs=1e-6)


# -- trials ------------------------------------------------------------------

def test_trial_with_exact_moments_equals_truth():
    truth = true_frontier(MU3, SIGMA3)
    X = exact_sample(MU3, SIGMA3, 40)
    c, mu_hat = trial_frontier(X, "sample", MU3, SIGMA3, truth.gammas)
    np.testing.assert_allclose(mu_hat, MU3, atol=1e-15)
    np.testing.assert_allclose(c.means, truth.means, rtol=1e-9)
    np.testing.assert_allclose(c.variances, truth.variances, rtol=1e-9)
    np.testing.assert_allclose(c.utilities, truth.utilities, rtol=1e-9, atol=1e-15)


@pytest.mark.parametrize("rule", ["sample", "bayes_stein", "linear_shrink", "nonlinear_shrink",
                                  "factor", "data_and_model"])
def test_trial_utility_below_truth(rule):
    spec = mvg3()
    truth = true_frontier(MU3, SIGMA3)
    for i in range(20):
        c = run_trial(spec, rule, 36, truth.gammas, RngStream(11, i), rule_options={"k": 1})
        assert np.all(c.utilities <= truth.utilities + 1e-14)


def test_run_trial_multiple_rules_share_sample():
    spec = mvg3()
    gammas = true_frontier(MU3, SIGMA3).gammas
    both = run_trial(spec, ["sample", "bayes_stein"], 36, gammas, RngStream(2, 3))
    one = run_trial(spec, "sample", 36, gammas, RngStream(2, 3))
    np.testing.assert_array_equal(both["sample"].means, one.means)


def test_trial_failure_wraps_estimator_errors():
    X = np.ones((10, 3))
    with pytest.raises(TrialFailure):
        trial_frontier(X, "sample", MU3, SIGMA3, [1.0, 2.0])


# -- evaluation primitives ---------------------------------------------------

def test_utility_loss_examples():
    assert utility_loss(0.02, 0.02) == 0.0
    assert utility_loss(-0.016, 0.02) == pytest.approx(180.0)
    assert utility_loss(-0.03, -0.01) == pytest.approx(200.0)
    with pytest.raises(ValueError):
        utility_loss(0.1, 0.0)


def test_ras_tie_and_strict():
    assert ras_dominance([1, 2, 3], [1, 2, 3]).verdict == "tie"
    assert ras_dominance([2, 3, 4], [1, 2, 3]).verdict == "a"
    assert ras_dominance([0, 1, 2], [1, 2, 3]).verdict == "b"


def test_ras_single_violation_reported():
    g = [1.5e8, 74.0, 37.0]
    v = ras_dominance([-235.9, -10, -5], [-236.4, -12, -6], g)
    assert v.verdict == "a"
    v = ras_dominance([-236.4, -10, -5], [-235.9, -12, -6], g)
    assert v.verdict == "none"
    assert v.a_worse_at == [1.5e8]
    assert v.b_worse_at == [74.0, 37.0]


def test_ras_grid_mismatch():
    with pytest.raises(ValueError):
        ras_dominance([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        ras_dominance([1, 2], [1, 2], gammas=[1, 2, 3])


def test_monotone_filter():
    np.testing.assert_array_equal(monotone_filter([1, 2, 3]), [0, 1, 2])
    np.testing.assert_array_equal(monotone_filter([1, 3, 2, 4]), [0, 1, 3])
    np.testing.assert_array_equal(monotone_filter([5, 1, 2, 3]), [1, 2, 3])
    assert len(monotone_filter([])) == 0


def test_frontier_dominance_identical():
    a = curve([0.01, 0.02, 0.03], [0.001, 0.002, 0.004])
    v = frontier_dominance(a, a)
    assert v.verdict == "tie" and v.fraction == 1.0


def test_frontier_dominance_shift():
    b = curve([0.01, 0.02, 0.03], [0.001, 0.002, 0.004])
    a = curve(b.means + 0.001, b.variances)
    v = frontier_dominance(a, b)
    assert v.verdict == "a" and v.fraction == 1.0
    assert frontier_dominance(b, a).verdict == "b"
    assert frontier_dominance(b, a).fraction == 0.0


def test_frontier_dominance_crossing():
    a = curve([0.010, 0.030], [0.001, 0.004])
    b = curve([0.015, 0.025], [0.001, 0.004])
    v = frontier_dominance(a, b)
    assert v.verdict == "none"
    assert 0.0 < v.fraction < 1.0
    # crossing at the midpoint level, which is a floating-point tie
    assert round(v.fraction * 101) in (50, 51)


def test_frontier_dominance_incomparable():
    a = curve([0.01, 0.02], [0.001, 0.002])
    b = curve([0.01, 0.02], [0.003, 0.004])
    v = frontier_dominance(a, b)
    assert v.verdict == "incomparable" and np.isnan(v.fraction)


def test_frontier_dominance_filters_nonmonotone():
    a = curve([0.01, 0.02, 0.015, 0.03], [0.001, 0.003, 0.002, 0.004])
    v = frontier_dominance(a, a)
    assert v.filtered_a == [2]
    assert v.verdict == "tie"


# -- RMSE --------------------------------------------------------------------

def test_rmse_sigma2_identity():
    n, t, s2 = 4, 36, 0.0025
    spec = DgpSpec("MVG", np.full(n, 0.01) + 0.001 * np.arange(n), s2 * np.eye(n))
    rmse = estimator_rmse(spec, "sample", 4000, t, 3)
    # E||mu_hat - mu||^2 = N sigma^2 / T; SE of the mean of a chi2_N-scaled draw
    target = n * s2 / t
    se = target * np.sqrt(2 / n) / np.sqrt(4000)
    assert abs(rmse**2 - target) < 4 * se


def test_rmse_exact_rule_is_zero(monkeypatch):
    from mvfrontier.estimators import MomentEstimate

    def exact(rule, X, **kw):
        return MomentEstimate(MU3.copy(), SIGMA3.copy(), rule)

    monkeypatch.setattr(experiment, "estimate", exact)
    assert estimator_rmse(mvg3(), "sample", 20, 36, 0) == 0.0


# -- studies -----------------------------------------------------------------

def test_study_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(dgp=mvg3(), reps=0)
    with pytest.raises(ValueError):
        StudyConfig(dgp=mvg3(), window_t=5)
    with pytest.raises(ValueError):
        StudyConfig(dgp=mvg3(), rules=("sample", "oracle"))
    with pytest.raises(ValueError):
        StudyConfig(dgp=mvg3(), rules=("sample", "sample"))
    with pytest.raises(ValueError):
        StudyConfig(dgp=mvg3(), allocations=())


def test_reps_one_equals_single_trial():
    cfg = StudyConfig(dgp=mvg3(), rules=("sample", "bayes_stein"), reps=1, master_seed=9)
    rep = run_study(cfg)
    for r in cfg.rules:
        single = run_trial(cfg.dgp, r, cfg.window_t, rep.true_frontier.gammas, RngStream(9, 0))
        np.testing.assert_array_equal(rep.average_frontiers[r].means, single.means)
        np.testing.assert_array_equal(rep.average_frontiers[r].variances, single.variances)
        np.testing.assert_array_equal(rep.frontier_dispersion[r]["sd_mean"], 0.0)


@pytest.fixture(scope="module")
def small_study():
    cfg = StudyConfig(dgp=mvg3(), reps=200, master_seed=4, rule_options={"k": 1})
    return run_study(cfg)


def test_study_loss_table_consistency(small_study):
    rep = small_study
    assert rep.ok
    for r, losses in rep.utility_loss_table["losses"].items():
        assert len(losses) == len(rep.config.allocations)
        again = [utility_loss(e, t) for e, t in
                 zip(rep.average_frontiers[r].utilities, rep.true_frontier.utilities)]
        assert losses.tolist() == again
        assert np.all(losses >= 0)
    truth_self = [utility_loss(u, u) for u in rep.true_frontier.utilities]
    assert truth_self == [0.0] * len(truth_self)


def test_study_dominance_and_rmse_shape(small_study):
    rep = small_study
    n = len(rep.config.rules)
    assert len(rep.dominance["ras"]) == n * (n - 1) // 2
    assert rep.rmse["sample"]["ratio_to_sample"] == 1.0
    for r in rep.config.rules:
        assert rep.rmse[r]["rmse"] > 0


def test_study_deterministic_across_workers():
    base = dict(dgp=mvg3(), rules=("sample", "linear_shrink"), reps=60, master_seed=21)
    one = simulate_trials(StudyConfig(**base, workers=1), true_frontier(MU3, SIGMA3).gammas)
    three = simulate_trials(StudyConfig(**base, workers=3), true_frontier(MU3, SIGMA3).gammas)
    for r in base["rules"]:
        for key in ("mean", "var", "util", "sqerr"):
            assert one[r][key].tobytes() == three[r][key].tobytes()


def test_failures_resampled_and_counted(monkeypatch):
    real = experiment.trial_frontier
    calls = {"n": 0}

    def flaky(X, rule, *a, **kw):
        calls["n"] += 1
        if rule == "bayes_stein" and calls["n"] % 7 == 0:
            raise TrialFailure("synthetic")
        return real(X, rule, *a, **kw)

    monkeypatch.setattr(experiment, "trial_frontier", flaky)
    rep = run_study(StudyConfig(dgp=mvg3(), rules=("sample", "bayes_stein"), reps=50))
    assert rep.failures["bayes_stein"] > 0
    assert rep.failures["sample"] == 0
    assert rep.cap_exceeded == ["bayes_stein"]
    assert not rep.ok


def test_exhausted_rule_omitted(monkeypatch):
    real = experiment.trial_frontier

    def broken(X, rule, *a, **kw):
        if rule == "factor":
            raise TrialFailure("always")
        return real(X, rule, *a, **kw)

    monkeypatch.setattr(experiment, "trial_frontier", broken)
    rep = run_study(StudyConfig(dgp=mvg3(), rules=("sample", "factor"), reps=3,
                                rule_options={"k": 1}))
    assert rep.omitted_rules == ["factor"]
    assert "factor" not in rep.average_frontiers
    assert rep.dominance["ras"] == {}


def test_simulate_matches_stream_layout():
    # replication idx uses stream (seed, idx), attempt 0
    cfg = StudyConfig(dgp=mvg3(), rules=("sample",), reps=3, master_seed=5)
    gammas = true_frontier(MU3, SIGMA3).gammas
    trials = simulate_trials(cfg, gammas)
    X = simulate(cfg.dgp, cfg.window_t, RngStream(5, 2))
    c, _ = trial_frontier(X, "sample", MU3, SIGMA3, gammas)
    np.testing.assert_array_equal(trials["sample"]["mean"][2], c.means)
