"""Equilibrium market price of risk as the fixed point of

    Pi(lambda) = gamma_bar * sum_i u^{lambda, i}_x,   gamma_bar = (sum_i 1/gamma_i)^{-1}.

At a fixed point the optimal portfolios ``pi_i = lambda / gamma_i - u^i_x``
sum to zero, i.e. the risky-asset market clears.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentSpec, solve_agent_pdde
from .grid import GridSpec, SlicedField, holder_norm, sup_norm

__all__ = [
    "MarketSpec",
    "EquilibriumResult",
    "SmallnessReport",
    "gamma_bar",
    "solve_agents",
    "pi_operator",
    "find_equilibrium",
    "clearing_residual",
    "smallness_diagnostics",
]

log = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e6


@dataclass(frozen=True)
class MarketSpec:
    """Jump intensity ``mu``, horizon ``T`` and the agents."""

    mu: float
    T: float
    agents: tuple

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not (math.isfinite(self.mu) and self.mu >= 0):
            raise ValueError(f"mu must be nonnegative, got {self.mu!r}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be positive, got {self.T!r}")
        if not self.agents:
            raise ValueError("a market needs at least one agent")
        for a in self.agents:
            if not isinstance(a, AgentSpec):
                raise TypeError(f"agents must be AgentSpec instances, got {type(a).__name__}")

    @property
    def gamma_bar(self) -> float:
        return gamma_bar(self.agents)

    def support_scale(self) -> float:
        return max(a.endowment.support_scale() for a in self.agents)


@dataclass
class EquilibriumResult:
    lambda_star: SlicedField
    agent_solutions: list
    iterations: int
    residual_history: list = field(default_factory=list)
    contraction_ratios: list = field(default_factory=list)
    clearing_residual: float = float("nan")
    converged: bool = False
    iterate_norms: list = field(default_factory=list)
    clearing_history: list = field(default_factory=list)
    final_residual: float = float("nan")
    diverged: bool = False

    @property
    def max_ratio(self) -> float:
        return max(self.contraction_ratios, default=0.0)

    @property
    def contracting(self) -> bool:
        """True when every observed ratio was below one; the only case in which
        uniqueness near the seed may be claimed."""
        return self.converged and all(r < 1.0 for r in self.contraction_ratios)

    def iteration_log_rows(self):
        """``(iter, sup_residual, holder_residual, ratio, clearing_residual)`` per iteration."""
        prev = None
        for k, (sup_r, hold_r) in enumerate(self.residual_history, start=1):
            ratio = sup_r / prev if prev else float("nan")
            prev = sup_r
            yield k, sup_r, hold_r, ratio, self.clearing_history[k - 1]


@dataclass(frozen=True)
class SmallnessReport:
    R0: float
    all_in_ball: bool
    max_ratio: float
    iterate_norms: tuple

    def as_dict(self):
        return {"R0": self.R0, "all_in_ball": self.all_in_ball, "max_ratio": self.max_ratio}


def gamma_bar(agents) -> float:
    """``(sum_i 1/gamma_i)^{-1}``."""
    gammas = [a.gamma if isinstance(a, AgentSpec) else float(a) for a in agents]
    if not gammas:
        raise ValueError("gamma_bar needs at least one agent")
    if any(not g > 0 for g in gammas):
        raise ValueError("all risk aversions must be positive")
    return 1.0 / math.fsum(1.0 / g for g in gammas)


def solve_agents(lam: SlicedField, market: MarketSpec, grid: GridSpec | None = None,
                 tol: float = 1e-10, scheme: str = "implicit", mode: str = "newton",
                 n_jobs: int = 1) -> list:
    """Solve every agent's PDDE at ``lam``; order follows ``market.agents``."""
    grid = lam.grid if grid is None else grid

    def one(item):
        i, agent = item
        return solve_agent_pdde(lam, agent, market.mu, grid, tol=tol, scheme=scheme, mode=mode,
                                agent_index=i)

    items = list(enumerate(market.agents))
    if n_jobs == 1 or len(items) == 1:
        return [one(it) for it in items]
    with ThreadPoolExecutor(max_workers=None if n_jobs < 0 else n_jobs) as pool:
        return list(pool.map(one, items))


def _pi_from(solutions, market) -> SlicedField:
    total = np.zeros(solutions[0].u_x.values.shape)
    for s in solutions:
        total += s.u_x.values
    return SlicedField(solutions[0].grid, market.gamma_bar * total)


def _portfolio_sum(solutions) -> np.ndarray:
    total = np.zeros(solutions[0].pi.values.shape)
    for s in solutions:
        total += s.pi.values
    return total


def pi_operator(lam: SlicedField, market: MarketSpec, grid: GridSpec | None = None,
                tol: float = 1e-10, scheme: str = "implicit", mode: str = "newton",
                n_jobs: int = 1) -> SlicedField:
    """``Pi(lambda) = gamma_bar * sum_i u^i_x`` with each ``u^i`` solved at ``lam``."""
    return _pi_from(solve_agents(lam, market, grid, tol, scheme, mode, n_jobs), market)


def find_equilibrium(market: MarketSpec, grid: GridSpec, tol: float = 1e-8, max_iter: int = 100,
                     damping: float = 1.0, scheme: str = "implicit", mode: str = "newton",
                     solver_tol: float | None = None, n_jobs: int = 1) -> EquilibriumResult:
    """Damped fixed-point iteration ``lambda <- (1 - w) lambda + w Pi(lambda)`` from zero.

    Stops once ``|lambda_{k+1} - lambda_k|_sup <= tol * w``.  Non-convergence
    is reported through ``converged=False``; it does not raise.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    if abs(grid.T - market.T) > 1e-12 * max(1.0, market.T):
        raise ValueError(f"grid horizon {grid.T} differs from market horizon {market.T}")
    for agent in market.agents:
        agent.check_endowment(grid)
    solver_tol = min(tol, 1e-10) if solver_tol is None else solver_tol

    lam = SlicedField.zeros(grid)
    result = EquilibriumResult(lam, [], 0)
    prev = None
    for k in range(1, max_iter + 1):
        sols = solve_agents(lam, market, grid, solver_tol, scheme, mode, n_jobs)
        resid = _pi_from(sols, market) - lam
        sup_r = sup_norm(resid)
        result.residual_history.append((sup_r, holder_norm(resid)))
        result.iterate_norms.append(holder_norm(lam))
        result.clearing_history.append(float(np.max(np.abs(_portfolio_sum(sols)))))
        if prev is not None and prev > 0:
            result.contraction_ratios.append(sup_r / prev)
        prev = sup_r
        result.iterations = k
        new = lam + damping * resid
        step = sup_norm(new - lam)
        log.debug("iteration %d: sup residual %.3e", k, sup_r)
        lam = new
        if step <= tol * damping:
            result.converged = True
            break
        if sup_norm(lam) > DIVERGENCE_BOUND:
            result.diverged = True
            log.warning("fixed-point iteration diverged at iteration %d", k)
            break

    sols = solve_agents(lam, market, grid, solver_tol, scheme, mode, n_jobs)
    result.lambda_star = lam
    result.agent_solutions = sols
    result.clearing_residual = float(np.max(np.abs(_portfolio_sum(sols))))
    result.final_residual = sup_norm(_pi_from(sols, market) - lam)
    if result.converged:
        result.iterate_norms.append(holder_norm(lam))
    return result


def clearing_residual(result: EquilibriumResult, market: MarketSpec | None = None) -> float:
    """``sup |sum_i pi_i|`` over the grid for the stored agent solutions."""
    sols = result.agent_solutions
    grid = result.lambda_star.grid
    if any(s.grid != grid for s in sols):
        raise ValueError("agent solutions live on a different grid than lambda")
    if market is not None and len(market.agents) != len(sols):
        raise ValueError("number of agent solutions does not match the market")
    return float(np.max(np.abs(_portfolio_sum(sols))))


def smallness_diagnostics(market: MarketSpec, grid: GridSpec, result: EquilibriumResult | None = None,
                          tol: float = 1e-8, **solver_kw) -> SmallnessReport:
    """Ball radius ``R0 = (2 / gamma_bar) sum_i |u^{0,i}_x|_alpha`` on a unit horizon,
    with the iterates of ``result`` checked against it.

    ``R0`` is evaluated on a ``T = 1`` grid with the same node spacing.  If
    ``result`` is omitted the equilibrium iteration is run first.
    """
    unit_grid = grid.with_horizon(1.0)
    unit_market = MarketSpec(market.mu, 1.0, market.agents)
    zero = SlicedField.zeros(unit_grid)
    sols = solve_agents(zero, unit_market, unit_grid,
                        solver_kw.get("solver_tol") or 1e-10,
                        solver_kw.get("scheme", "implicit"), solver_kw.get("mode", "newton"))
    R0 = 2.0 / market.gamma_bar * math.fsum(holder_norm(s.u_x) for s in sols)
    if result is None:
        result = find_equilibrium(market, grid, tol=tol, **solver_kw)
    # 1e-12 absorbs rounding in norms of iterates that sit exactly on the boundary
    in_ball = all(nrm <= R0 + 1e-12 for nrm in result.iterate_norms)
    return SmallnessReport(R0, in_ball, result.max_ratio, tuple(result.iterate_norms))
