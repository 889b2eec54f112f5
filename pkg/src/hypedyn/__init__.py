"""Sentiment-return dynamics of retail-investor forums.

Modules
-------
dynamics    the discrete sentiment-return map and its agent-level version
stability   steady states, Jacobians, eigenvalue regions, phase portraits
scans       seeded parameter scans (bifurcation and volatility)
sir         SIR contagion model, thresholds and final sizes
regression  OLS and 2SLS with absorbed fixed effects and clustered errors
features    contagion, sentiment and peer-network regressors
matching    exposure matching of treated users to controls
panel_io    CSV ingestion and weekly aggregation
estimate    contagion, market-impact and peer-effect pipelines
"""

__version__ = "0.1.0"

from .dynamics import MarketState, ModelParams, simulate, step
from .errors import BoundaryCaseError, HypeDynError, NumericalError, RankDeficiencyError, ValidationError

__all__ = [
    "__version__",
    "BoundaryCaseError",
    "HypeDynError",
    "MarketState",
    "ModelParams",
    "NumericalError",
    "RankDeficiencyError",
    "ValidationError",
    "simulate",
    "step",
]
