"""Generate the synthetic ten-industry fixtures shipped under tests/data.

The real library file is not redistributed.  This script builds a stand-in
with a one-factor-plus-noise structure, heavy tails and a negatively skewed
market factor (0.72 times the sample skewness is then jointly attainable by a
multivariate skew-normal).  Each column is then shifted so that its trailing-120-month mean lies on the
one-factor security market line (no alphas), and all columns together so
that 1'S^-1 m over that window lands in [14.8, 14.9), the range for which
the rounded risk-aversion grid reads 74, 37, 25, 19, 15, 12, 11, 9, 8, 7.

    python scripts/make_synthetic_industry.py
"""

from pathlib import Path

import numpy as np

from mvfrontier.io import ReturnsPanel, select_window, write_industry_csv
from mvfrontier.estimators import sample_moments

NAMES = ("NoDur", "Durbl", "Manuf", "Enrgy", "HiTec", "Telcm", "Shops", "Hlth", "Utils", "Other")
BETA = np.array([0.70, 1.25, 1.10, 0.95, 1.20, 0.90, 0.85, 0.80, 0.55, 1.10])
IDIO = 0.7 * np.array([0.022, 0.045, 0.020, 0.045, 0.035, 0.032, 0.025, 0.030, 0.035, 0.020])
MKT_SKEW_WEIGHT = 0.97
PREMIUM = 0.003
TARGET_K = 14.85


def months(start, count):
    y, m = divmod(start, 100)
    out = []
    for _ in range(count):
        out.append(y * 100 + m)
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return out


def build(t=238, start=200001, seed=20191031):
    rng = np.random.default_rng(seed)
    # market: fat-tailed core plus a dominant negatively skewed half-normal part,
    # so that industry skews share the market's sign as in the real data
    core = rng.standard_t(5.0, t) * np.sqrt(3.0 / 5.0)
    half = (np.abs(rng.standard_normal(t)) - np.sqrt(2 / np.pi)) / np.sqrt(1 - 2 / np.pi)
    mkt = 0.007 + 0.043 * (np.sqrt(1 - MKT_SKEW_WEIGHT**2) * core - MKT_SKEW_WEIGHT * half)
    eps = rng.standard_t(8.0, (t, len(NAMES))) * np.sqrt(6.0 / 8.0) * IDIO
    r = np.outer(mkt, BETA) + eps
    # put window means on the security market line
    r += (PREMIUM * BETA) - r[-120:].mean(axis=0)
    window = r[-120:]
    m = sample_moments(window)
    ones = np.ones(len(NAMES))
    s_inv_1 = np.linalg.solve(m.sigma_hat, ones)
    s_inv_m = np.linalg.solve(m.sigma_hat, m.mu_hat)
    shift = (TARGET_K - s_inv_m.sum()) / s_inv_1.sum()
    r = np.round((r + shift) * 100, 2) / 100
    # rounding to 0.01% moves k; a common shift by whole 0.01% steps moves it back
    m = sample_moments(r[-120:])
    step = 1e-4 * np.linalg.solve(m.sigma_hat, ones).sum()
    j = round((TARGET_K - np.linalg.solve(m.sigma_hat, m.mu_hat).sum()) / step)
    r = np.round(r * 100 + j, 2) / 100
    return ReturnsPanel(tuple(months(start, t)), NAMES, r)


if __name__ == "__main__":
    here = Path(__file__).resolve().parents[1] / "tests" / "data"
    here.mkdir(parents=True, exist_ok=True)
    panel = build()
    write_industry_csv(panel, here / "industry10_synthetic.csv")
    short = ReturnsPanel(panel.dates[:24], panel.asset_names, panel.values[:24])
    write_industry_csv(short, here / "industry10_24m.csv")
    w = select_window(panel, 120)
    m = sample_moments(w.values)
    print("1'S^-1 m =", np.linalg.solve(m.sigma_hat, m.mu_hat).sum())
