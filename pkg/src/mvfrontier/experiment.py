"""Monte-Carlo comparison of decision-rule frontiers against the true frontier.

Each replication draws one ``window_t x N`` sample, applies every decision
rule to it, builds the rule's optimal portfolios on a risk-aversion grid that
is fixed from the true parameters, and scores those portfolios under the true
mean and covariance.  Replications are keyed by stream index, so results do
not depend on how they are spread over worker processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import core
from .dgp import DgpSpec, RngStream, simulate
from .estimators import RULES, estimate
from .validation import NotPositiveDefiniteError

#: Resampling attempts per replication before a rule is given up on.
MAX_ATTEMPTS = 20
#: Share of the replications in which every rule is spot-checked against the two-fund identity.
IDENTITY_CHECK_EVERY = 100
N_LEVELS = 101


class TrialFailure(RuntimeError):
    """A decision rule could not produce a usable estimate on a sample."""


@dataclass(frozen=True)
class FrontierCurve:
    """Frontier of one rule at the grid allocations, scored under true parameters."""

    rule_tag: str
    allocations: np.ndarray
    gammas: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    utilities: np.ndarray

    @property
    def points(self) -> list[core.FrontierPoint]:
        return [
            core.FrontierPoint(float(g), float(m), float(v), float(u))
            for g, m, v, u in zip(self.gammas, self.means, self.variances, self.utilities)
        ]

    def to_dict(self) -> dict:
        return {
            "rule": self.rule_tag,
            "allocations": self.allocations.tolist(),
            "gammas": self.gammas.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "utilities": self.utilities.tolist(),
        }


@dataclass(frozen=True)
class StudyConfig:
    dgp: DgpSpec
    rules: tuple = RULES
    reps: int = 10_000
    window_t: int = 36
    allocations: tuple = core.DEFAULT_ALLOCATIONS
    master_seed: int = 0
    rule_options: dict = field(default_factory=dict)
    workers: int = 1
    failure_cap: float = 0.01

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError(f"reps must be at least 1, got {self.reps}")
        n = self.dgp.n_assets
        if self.window_t < n + 3:
            raise ValueError(f"window_t must be at least N+3 = {n + 3}, got {self.window_t}")
        if len(self.allocations) == 0 or min(self.allocations) < 0:
            raise ValueError("allocations must be non-empty and non-negative")
        unknown = [r for r in self.rules if r not in RULES]
        if unknown or len(self.rules) == 0:
            raise ValueError(f"unknown rules {unknown}; expected a subset of {RULES}")
        if len(set(self.rules)) != len(self.rules):
            raise ValueError("rules must not repeat")


@dataclass(frozen=True)
class RasVerdict:
    """Risk-aversion-specific dominance between two utility rows."""

    verdict: str
    a_worse_at: list
    b_worse_at: list

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "a_worse_at": self.a_worse_at, "b_worse_at": self.b_worse_at}


@dataclass(frozen=True)
class FrontierVerdict:
    """Matched-variance dominance between two frontier curves."""

    verdict: str
    fraction: float
    variance_range: tuple
    filtered_a: list
    filtered_b: list

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "fraction_a_ge_b": self.fraction,
            "variance_range": list(self.variance_range),
            "filtered_points_a": self.filtered_a,
            "filtered_points_b": self.filtered_b,
        }


@dataclass
class StudyReport:
    config: StudyConfig
    true_frontier: FrontierCurve
    average_frontiers: dict
    frontier_dispersion: dict
    utility_loss_table: dict
    dominance: dict
    rmse: dict
    failures: dict
    omitted_rules: list

    @property
    def cap_exceeded(self) -> list:
        cap = self.config.failure_cap * self.config.reps
        return [r for r, k in self.failures.items() if k > cap]

    @property
    def ok(self) -> bool:
        return not self.omitted_rules and not self.cap_exceeded


# ---------------------------------------------------------------------------
# frontier construction


def true_frontier(mu, sigma, allocations=core.DEFAULT_ALLOCATIONS) -> FrontierCurve:
    """Optimal portfolios under the true parameters at the grid's risk aversions."""
    gammas = np.asarray(core.gamma_grid(mu, sigma, allocations))
    return _score("true", allocations, gammas, core.frontier_weights(mu, sigma, gammas), mu, sigma)


def _score(tag, allocations, gammas, W, mu, sigma) -> FrontierCurve:
    means = W @ mu
    variances = np.einsum("ij,jk,ik->i", W, sigma, W)
    return FrontierCurve(
        rule_tag=tag,
        allocations=np.asarray(allocations, dtype=float),
        gammas=np.asarray(gammas, dtype=float),
        means=means,
        variances=variances,
        utilities=means - 0.5 * gammas * variances,
    )


def trial_frontier(X, rule, mu, sigma, gammas, allocations=None, rule_options=None):
    """Frontier of ``rule`` estimated on sample ``X``, scored under ``(mu, sigma)``.

    Returns the curve and the rule's mean estimate.
    """
    gammas = np.asarray(gammas, dtype=float)
    if allocations is None:
        allocations = np.full(gammas.shape, np.nan)
    try:
        est = estimate(rule, X, **(rule_options or {}))
        W = core.frontier_weights(est.mu_hat, est.sigma_hat, gammas)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise TrialFailure(f"{rule}: {exc}") from exc
    if not np.all(np.isfinite(W)):
        raise TrialFailure(f"{rule}: non-finite portfolio weights")
    return _score(rule, allocations, gammas, W, mu, sigma), est.mu_hat


def run_trial(spec: DgpSpec, rule, window_t: int, gammas, rng, rule_options=None):
    """Simulate one sample and return the frontier of ``rule`` (or of each rule in a list)."""
    X = simulate(spec, window_t, rng)
    rules = [rule] if isinstance(rule, str) else list(rule)
    out = {
        r: trial_frontier(X, r, spec.target_mu, spec.target_sigma, gammas,
                          rule_options=rule_options)[0]
        for r in rules
    }
    return out[rule] if isinstance(rule, str) else out


def _check_identity(rule, X, gammas, rule_options):
    est = estimate(rule, X, **rule_options)
    tf = core.two_fund(est.mu_hat, est.sigma_hat)
    for g in gammas:
        a = tf.k / g
        mix = (1.0 - a) * tf.gmv + a * tf.mrar()
        w = core.optimal_weights(est.mu_hat, est.sigma_hat, g)
        if np.max(np.abs(w - mix)) >= 1e-10:
            raise AssertionError(f"two-fund identity violated for rule {rule} at gamma={g}")


def _run_block(args):
    spec, rules, window_t, gammas, seed, start, stop, rule_options = args
    mu, sigma = spec.target_mu, spec.target_sigma
    g = len(gammas)
    n = stop - start
    out = {
        r: {
            "mean": np.empty((n, g)),
            "var": np.empty((n, g)),
            "util": np.empty((n, g)),
            "sqerr": np.empty(n),
            "failures": 0,
            "exhausted": False,
        }
        for r in rules
    }
    for j, idx in enumerate(range(start, stop)):
        X = simulate(spec, window_t, RngStream(seed, idx))
        for r in rules:
            slot = out[r]
            if slot["exhausted"]:
                continue
            sample = X
            for attempt in range(MAX_ATTEMPTS + 1):
                if attempt:
                    slot["failures"] += 1
                    sample = simulate(spec, window_t, RngStream(seed, idx, attempt))
                try:
                    curve, mu_hat = trial_frontier(sample, r, mu, sigma, gammas,
                                                   rule_options=rule_options)
                    break
                except TrialFailure:
                    continue
            else:
                slot["exhausted"] = True
                continue
            if idx % IDENTITY_CHECK_EVERY == 0:
                _check_identity(r, sample, gammas, rule_options)
            slot["mean"][j] = curve.means
            slot["var"][j] = curve.variances
            slot["util"][j] = curve.utilities
            slot["sqerr"][j] = float(np.sum((mu_hat - mu) ** 2))
    return out


def _blocks(reps: int, workers: int):
    size = max(1, -(-reps // (4 * workers)))
    return [(s, min(reps, s + size)) for s in range(0, reps, size)]


def simulate_trials(config: StudyConfig, gammas) -> dict:
    """Per-replication (mean, variance, utility, squared mean error) arrays for each rule."""
    jobs = [
        (config.dgp, tuple(config.rules), config.window_t, np.asarray(gammas),
         config.master_seed, start, stop, dict(config.rule_options))
        for start, stop in _blocks(config.reps, config.workers)
    ]
    if config.workers <= 1:
        parts = [_run_block(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    merged = {}
    for r in config.rules:
        merged[r] = {
            key: np.concatenate([p[r][key] for p in parts])
            for key in ("mean", "var", "util", "sqerr")
        }
        merged[r]["failures"] = int(sum(p[r]["failures"] for p in parts))
        merged[r]["exhausted"] = any(p[r]["exhausted"] for p in parts)
    return merged


# ---------------------------------------------------------------------------
# evaluation


def utility_loss(expected_utility: float, true_utility: float) -> float:
    """Shortfall from the true optimum as a percentage of its absolute value."""
    if abs(true_utility) < 1e-15:
        raise ValueError("utility loss is undefined when the true utility is zero")
    return 100.0 * (true_utility - expected_utility) / abs(true_utility)


def ras_dominance(a, b, gammas=None) -> RasVerdict:
    """Compare two expected-utility rows on a common risk-aversion grid.

    ``a`` dominates ``b`` when its utility is at least ``b``'s at every grid
    point.  The verdict is one of ``"tie"``, ``"a"``, ``"b"`` or ``"none"``;
    the grid values where each side falls short are reported.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"utility rows have different grids: {a.shape} vs {b.shape}")
    if gammas is None:
        gammas = np.arange(a.shape[0])
    gammas = np.asarray(gammas, dtype=float)
    if gammas.shape != a.shape:
        raise ValueError("gamma grid does not match the utility rows")
    a_worse = gammas[a < b].tolist()
    b_worse = gammas[b < a].tolist()
    if not a_worse and not b_worse:
        verdict = "tie"
    elif not a_worse:
        verdict = "a"
    elif not b_worse:
        verdict = "b"
    else:
        verdict = "none"
    return RasVerdict(verdict, a_worse, b_worse)


def monotone_filter(variances) -> np.ndarray:
    """Indices of the longest subsequence with strictly increasing variance."""
    v = np.asarray(variances, dtype=float)
    n = len(v)
    if n == 0:
        return np.array([], dtype=int)
    length = [1] * n
    prev = [-1] * n
    for i in range(n):
        for j in range(i):
            if v[j] < v[i] and length[j] + 1 > length[i]:
                length[i] = length[j] + 1
                prev[i] = j
    i = int(np.argmax(length))
    keep = []
    while i >= 0:
        keep.append(i)
        i = prev[i]
    return np.array(keep[::-1], dtype=int)


def frontier_dominance(a: FrontierCurve, b: FrontierCurve, n_levels: int = N_LEVELS) -> FrontierVerdict:
    """Compare mean return at matched variance over the shared variance range.

    Both curves are first reduced to their longest run of increasing
    variance, then interpolated piecewise-linearly at ``n_levels`` evenly
    spaced variances.  The verdict is ``"tie"``, ``"a"``, ``"b"``, ``"none"``
    or ``"incomparable"``; ``fraction`` is the share of levels where ``a``'s
    mean is at least ``b``'s.
    """
    ka = monotone_filter(a.variances)
    kb = monotone_filter(b.variances)
    dropped_a = sorted(set(range(len(a.variances))) - set(ka.tolist()))
    dropped_b = sorted(set(range(len(b.variances))) - set(kb.tolist()))
    va, ma = a.variances[ka], a.means[ka]
    vb, mb = b.variances[kb], b.means[kb]
    lo = max(va[0], vb[0])
    hi = min(va[-1], vb[-1])
    if hi < lo:
        return FrontierVerdict("incomparable", float("nan"), (float(lo), float(hi)),
                               dropped_a, dropped_b)
    levels = np.linspace(lo, hi, n_levels)
    ia = np.interp(levels, va, ma)
    ib = np.interp(levels, vb, mb)
    ge = ia >= ib
    le = ia <= ib
    if ge.all() and le.all():
        verdict = "tie"
    elif ge.all():
        verdict = "a"
    elif le.all():
        verdict = "b"
    else:
        verdict = "none"
    return FrontierVerdict(verdict, float(ge.mean()), (float(lo), float(hi)), dropped_a, dropped_b)


def estimator_rmse(spec: DgpSpec, rule: str, reps: int, window_t: int, master_seed: int,
                   rule_options=None) -> float:
    """Root of the mean squared Euclidean error of the rule's mean estimate."""
    config = StudyConfig(dgp=spec, rules=(rule,), reps=reps, window_t=window_t,
                         master_seed=master_seed, rule_options=rule_options or {})
    gammas = core.gamma_grid(spec.target_mu, spec.target_sigma, (1.0,))
    trials = simulate_trials(config, gammas)[rule]
    return float(np.sqrt(np.mean(trials["sqerr"])))


def run_study(config: StudyConfig) -> StudyReport:
    """Run every replication of ``config`` and summarize the frontiers."""
    spec = config.dgp
    mu, sigma = spec.target_mu, spec.target_sigma
    truth = true_frontier(mu, sigma, config.allocations)
    gammas = truth.gammas
    trials = simulate_trials(config, gammas)

    average, dispersion, losses, rmse, failures = {}, {}, {}, {}, {}
    omitted = []
    ddof = 1 if config.reps > 1 else 0
    for r in config.rules:
        t = trials[r]
        failures[r] = t["failures"]
        if t["exhausted"]:
            omitted.append(r)
            continue
        average[r] = FrontierCurve(
            rule_tag=r,
            allocations=truth.allocations,
            gammas=gammas,
            means=t["mean"].mean(axis=0),
            variances=t["var"].mean(axis=0),
            utilities=t["util"].mean(axis=0),
        )
        dispersion[r] = {
            "sd_mean": t["mean"].std(axis=0, ddof=ddof),
            "sd_variance": t["var"].std(axis=0, ddof=ddof),
        }
        losses[r] = np.array([
            utility_loss(eu, tu) for eu, tu in zip(average[r].utilities, truth.utilities)
        ])
        rmse[r] = float(np.sqrt(np.mean(t["sqerr"])))

    rmse_report = {
        r: {"rmse": v, "ratio_to_sample": (v / rmse["sample"]) if rmse.get("sample") else None}
        for r, v in rmse.items()
    }
    dominance = {"ras": {}, "frontier": {}}
    kept = [r for r in config.rules if r in average]
    for i, ra in enumerate(kept):
        for rb in kept[i + 1:]:
            key = f"{ra}|{rb}"
            dominance["ras"][key] = ras_dominance(
                average[ra].utilities, average[rb].utilities, gammas
            ).to_dict()
            dominance["frontier"][key] = frontier_dominance(average[ra], average[rb]).to_dict()
    return StudyReport(
        config=config,
        true_frontier=truth,
        average_frontiers=average,
        frontier_dispersion=dispersion,
        utility_loss_table={"gammas": gammas, "losses": losses},
        dominance=dominance,
        rmse=rmse_report,
        failures=failures,
        omitted_rules=omitted,
    )


__all__ = [
    "FrontierCurve",
    "FrontierVerdict",
    "NotPositiveDefiniteError",
    "RasVerdict",
    "StudyConfig",
    "StudyReport",
    "TrialFailure",
    "estimator_rmse",
    "frontier_dominance",
    "monotone_filter",
    "ras_dominance",
    "run_study",
    "run_trial",
    "simulate_trials",
    "trial_frontier",
    "true_frontier",
    "utility_loss",
]
