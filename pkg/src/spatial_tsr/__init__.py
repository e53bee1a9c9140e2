"""Objective Bayesian inference for spatial Student-t regression."""

from .corr import CorrelationModel, Family
from .glscore import GlsSummary, SpatialDataset, gls_summary
from .priors import PriorKind, PriorSpec, Propriety, check_propriety

__version__ = "0.1.0"

__all__ = [
    "CorrelationModel",
    "Family",
    "GlsSummary",
    "SpatialDataset",
    "gls_summary",
    "PriorKind",
    "PriorSpec",
    "Propriety",
    "check_propriety",
]
