"""Mean-variance decision rules and Monte-Carlo frontier studies."""

from .core import (
    gamma_grid,
    gmv_weights,
    mrar_weights,
    mv_utility,
    optimal_weights,
    spd_sqrt,
)
from .estimators import (
    BayesStein,
    DataAndModel,
    LinearShrinkage,
    NonlinearShrinkage,
    SampleMoments,
    StatisticalFactorModel,
)
from .portfolio import MeanVariancePortfolio

__version__ = "0.1.0"

__all__ = [
    "BayesStein",
    "DataAndModel",
    "LinearShrinkage",
    "MeanVariancePortfolio",
    "NonlinearShrinkage",
    "SampleMoments",
    "StatisticalFactorModel",
    "gamma_grid",
    "gmv_weights",
    "mrar_weights",
    "mv_utility",
    "optimal_weights",
    "spd_sqrt",
]
