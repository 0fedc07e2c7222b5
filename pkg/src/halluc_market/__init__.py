"""Relational-contract market for AI answers under hallucination risk."""

from .model import (
    Binding,
    Contract,
    CostFunction,
    EquilibriumResult,
    FocReport,
    MarketParams,
    ModelCatalog,
    UpstreamModel,
    UserPopulation,
    UserType,
)
from .solver import SolverConfig, solve, solve_equilibrium, spot_equilibrium

__all__ = [
    "Binding", "Contract", "CostFunction", "EquilibriumResult", "FocReport", "MarketParams",
    "ModelCatalog", "UpstreamModel", "UserPopulation", "UserType",
    "SolverConfig", "solve", "solve_equilibrium", "spot_equilibrium",
]
__version__ = "0.1.0"
