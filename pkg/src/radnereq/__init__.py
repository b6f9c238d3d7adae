"""Markovian equilibrium market price of risk for exponential-utility agents
in a market driven by a Brownian motion and a single jump."""

__version__ = "0.1.0"

from .agent import AgentSolution, AgentSpec, evaluate_value, solve_agent_pdde
from .endowments import Constant, DampedCos, Endowment, GaussianBump, Tanh
from .equilibrium import (
    EquilibriumResult,
    MarketSpec,
    clearing_residual,
    find_equilibrium,
    gamma_bar,
    pi_operator,
    smallness_diagnostics,
)
from .estimators import AgentSolver, EquilibriumSolver
from .grid import GridSpec, SlicedField, field_from_function, holder_norm, sup_norm
from .pde import (
    LinearCoefficients,
    SemilinearCoefficients,
    SolverError,
    solve_linear_cauchy,
    solve_semilinear_cauchy,
)

__all__ = [
    "AgentSolution", "AgentSolver", "AgentSpec", "Constant", "DampedCos", "Endowment",
    "EquilibriumResult", "EquilibriumSolver", "GaussianBump", "GridSpec", "LinearCoefficients",
    "MarketSpec", "SemilinearCoefficients", "SlicedField", "SolverError", "Tanh",
    "clearing_residual", "evaluate_value", "field_from_function", "find_equilibrium",
    "gamma_bar", "holder_norm", "pi_operator", "smallness_diagnostics", "solve_agent_pdde",
    "solve_linear_cauchy", "solve_semilinear_cauchy", "sup_norm",
]
