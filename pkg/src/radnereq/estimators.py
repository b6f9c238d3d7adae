"""scikit-learn style wrappers around the functional solvers.

``fit`` takes a market (or a price of risk and an agent) instead of a data
matrix; ``predict`` takes query points ``X`` with columns ``(t, x, n)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .agent import AgentSpec, solve_agent_pdde
from .equilibrium import MarketSpec, find_equilibrium
from .grid import GridSpec, SlicedField, default_half_width, interpolate_many

__all__ = ["EquilibriumSolver", "AgentSolver", "check_query_points"]

_TARGETS = ("lambda", "u", "u_x", "pi")


def check_query_points(X, T: float) -> np.ndarray:
    """Validate an ``(n_samples, 3)`` array of ``(t, x, n)`` rows."""
    X = check_array(X, dtype=float, ensure_2d=True)
    if X.shape[1] != 3:
        raise ValueError(f"query points need 3 columns (t, x, n), got {X.shape[1]}")
    t, n = X[:, 0], X[:, 2]
    if np.any((t < 0) | (t > T)):
        raise ValueError(f"t must lie in [0, {T}]")
    if np.any((n != 0) & (n != 1)):
        raise ValueError("n must be 0 or 1")
    return X


def _grid_for(est, T: float, support_scale: float) -> GridSpec:
    if est.x_min is None or est.x_max is None:
        hw = default_half_width(T, support_scale)
        x_min = -hw if est.x_min is None else est.x_min
        x_max = hw if est.x_max is None else est.x_max
    else:
        x_min, x_max = est.x_min, est.x_max
    return GridSpec(T, x_min, x_max, est.nt, est.nx, est.alpha)


class EquilibriumSolver(BaseEstimator):
    """Equilibrium market price of risk for a :class:`MarketSpec`.

    Parameters
    ----------
    nt, nx : int
        Time and space intervals of the grid.
    x_min, x_max : float or None
        Spatial domain; ``None`` picks a width from the horizon and the
        endowment support.
    alpha : float
        Hölder exponent for diagnostics.
    scheme, mode, tol, max_iter, damping, n_jobs
        Passed to :func:`find_equilibrium`.
    """

    def __init__(self, nt=200, nx=200, x_min=None, x_max=None, alpha=0.5, scheme="implicit",
                 mode="newton", tol=1e-8, max_iter=100, damping=1.0, n_jobs=1):
        self.nt = nt
        self.nx = nx
        self.x_min = x_min
        self.x_max = x_max
        self.alpha = alpha
        self.scheme = scheme
        self.mode = mode
        self.tol = tol
        self.max_iter = max_iter
        self.damping = damping
        self.n_jobs = n_jobs

    def fit(self, market: MarketSpec, y=None):
        if not isinstance(market, MarketSpec):
            raise TypeError(f"fit expects a MarketSpec, got {type(market).__name__}")
        self.grid_ = _grid_for(self, market.T, market.support_scale())
        self.market_ = market
        self.result_ = find_equilibrium(market, self.grid_, tol=self.tol, max_iter=self.max_iter,
                                        damping=self.damping, scheme=self.scheme, mode=self.mode,
                                        n_jobs=self.n_jobs)
        self.lambda_star_ = self.result_.lambda_star
        self.agent_solutions_ = self.result_.agent_solutions
        self.n_iter_ = self.result_.iterations
        self.converged_ = self.result_.converged
        return self

    def predict(self, X, target="lambda", agent=0):
        """``lambda*`` at the query rows, or ``u``/``u_x``/``pi`` of one agent."""
        check_is_fitted(self, "lambda_star_")
        X = check_query_points(X, self.grid_.T)
        if target not in _TARGETS:
            raise ValueError(f"target must be one of {_TARGETS}")
        f = self.lambda_star_ if target == "lambda" else getattr(self.agent_solutions_[agent], target)
        return interpolate_many(f, X[:, 0], X[:, 1], X[:, 2].astype(int))


class AgentSolver(BaseEstimator):
    """Single-agent PDDE at a given price of risk."""

    def __init__(self, tol=1e-10, scheme="implicit", mode="newton"):
        self.tol = tol
        self.scheme = scheme
        self.mode = mode

    def fit(self, lam: SlicedField, agent: AgentSpec, mu: float):
        if not isinstance(lam, SlicedField):
            raise TypeError("lam must be a SlicedField")
        self.solution_ = solve_agent_pdde(lam, agent, mu, tol=self.tol, scheme=self.scheme,
                                          mode=self.mode)
        self.gamma_ = agent.gamma
        self.grid_ = lam.grid
        return self

    def predict(self, X, target="pi"):
        check_is_fitted(self, "solution_")
        X = check_query_points(X, self.grid_.T)
        if target not in _TARGETS[1:]:
            raise ValueError(f"target must be one of {_TARGETS[1:]}")
        f = getattr(self.solution_, target)
        return interpolate_many(f, X[:, 0], X[:, 1], X[:, 2].astype(int))

    def value(self, X, xi=0.0):
        """Value function ``-exp(-gamma (xi + u))`` at the query rows."""
        return -np.exp(-self.gamma_ * (xi + self.predict(X, "u")))
