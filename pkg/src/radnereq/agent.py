"""Single-agent optimal investment under a given market price of risk.

For ``lambda(t, x, n)`` the indirect-utility exponent ``u`` solves the coupled
two-slice problem

    0 = u_t + 1/2 u_xx - lambda u_x + lambda^2 / (2 gamma)
        - (mu / gamma) (exp(-gamma (u(., ., 1) - u)) - 1),      u(T) = g.

On the n=1 slice the jump term vanishes and the equation is linear; the n=0
slice is then semilinear with ``a = (lambda^2 / 2 + mu) / gamma`` and
``b = (mu / gamma) exp(-gamma u(., ., 1))``.  The optimal number of shares is
``pi = lambda / gamma - u_x`` and the value function is
``-exp(-gamma (xi + u))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .endowments import Endowment
from .grid import (
    GridSpec,
    SlicedField,
    _dx_array,
    _dxx_array,
    derivative_x,
    holder_seminorm_1d,
    interpolate,
)
from .pde import (
    PicardHistory,
    SemilinearCoefficients,
    SolverError,
    march_slice,
    pde_residual,
    picard_beta,
    picard_slice,
    resolve_mode,
    resolve_theta,
)

__all__ = [
    "AgentSpec",
    "AgentSolution",
    "solve_agent_pdde",
    "evaluate_value",
    "pdde_coefficients",
    "pdde_residual",
    "endowment_norms",
]


@dataclass(frozen=True)
class AgentSpec:
    """Exponential-utility agent: risk aversion ``gamma`` and endowment ``g(x, n)``."""

    gamma: float
    endowment: Endowment
    name: str = ""

    def __post_init__(self):
        if not (isinstance(self.gamma, (int, float)) and math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be a positive number, got {self.gamma!r}")

    def utility(self, w):
        return -np.exp(-self.gamma * np.asarray(w, dtype=float))

    def check_endowment(self, grid: GridSpec) -> None:
        """Sampled endowment, first and second differences must be finite."""
        for n in (0, 1):
            vals = np.asarray(self.endowment(grid.x, n), dtype=float)
            d1 = np.diff(vals) / grid.dx
            d2 = np.diff(vals, 2) / grid.dx**2
            if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(d1)) and np.all(np.isfinite(d2))):
                raise ValueError(f"endowment of agent {self.name or '?'} is not finite on slice n={n}")


@dataclass(frozen=True)
class AgentSolution:
    """``u``, its derivative ``u_x`` and the optimal portfolio ``pi``."""

    u: SlicedField
    u_x: SlicedField
    pi: SlicedField

    @property
    def grid(self):
        return self.u.grid


def pdde_coefficients(lam: SlicedField, agent: AgentSpec, mu: float,
                      u1: np.ndarray) -> SemilinearCoefficients:
    """Slice-wise coefficients of the PDDE given the solved n=1 slice ``u1``.

    The n=1 slice carries ``b = 0``, so the result also serves for residuals.
    """
    gamma = agent.gamma
    lv = lam.values
    h = -lv
    a = np.empty_like(lv)
    a[:, :, 1] = lv[:, :, 1] ** 2 / (2.0 * gamma)
    a[:, :, 0] = (0.5 * lv[:, :, 0] ** 2 + mu) / gamma
    b = np.zeros_like(lv)
    b[:, :, 0] = (mu / gamma) * np.exp(-gamma * u1)
    grid = lam.grid
    return SemilinearCoefficients(SlicedField(grid, h), SlicedField(grid, a), SlicedField(grid, b),
                                  gamma, agent.endowment)


def solve_agent_pdde(lam: SlicedField, agent: AgentSpec, mu: float, grid: GridSpec | None = None,
                     tol: float = 1e-10, scheme: str = "implicit", mode: str = "newton",
                     agent_index=None) -> AgentSolution:
    """Solve the agent's PDDE at ``lam`` and extract the optimal portfolio.

    The n=1 slice (linear) is solved first; its solution feeds the
    coefficient ``b`` of the semilinear n=0 slice.
    """
    grid = lam.grid if grid is None else grid
    if lam.grid != grid:
        raise ValueError("lambda does not live on the given grid")
    if mu < 0 or not math.isfinite(mu):
        raise ValueError(f"mu must be a nonnegative number, got {mu!r}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    theta = resolve_theta(scheme)
    mode = resolve_mode(mode)
    gamma = agent.gamma
    who = agent.name or ("?" if agent_index is None else str(agent_index))
    lv = lam.values
    g1 = np.asarray(agent.endowment(grid.x, 1), dtype=float) * np.ones(grid.nx + 1)
    g0 = np.asarray(agent.endowment(grid.x, 0), dtype=float) * np.ones(grid.nx + 1)
    try:
        u1 = march_slice(-lv[:, :, 1], lv[:, :, 1] ** 2 / (2.0 * gamma), g1, grid, theta,
                         slice_index=1)
    except SolverError as exc:
        raise SolverError(f"agent {who}, slice n=1: {exc}") from exc
    a0 = (0.5 * lv[:, :, 0] ** 2 + mu) / gamma
    b0 = (mu / gamma) * np.exp(-gamma * u1) if mu > 0 else None
    try:
        if b0 is None or mode == "newton":
            u0 = march_slice(-lv[:, :, 0], a0, g0, grid, theta, b=b0, gamma=gamma,
                             slice_index=0, newton_tol=min(1e-13, tol))
        else:
            coeffs = pdde_coefficients(lam, agent, mu, u1)
            hist = PicardHistory(beta=picard_beta(coeffs, grid))
            u0 = picard_slice(-lv[:, :, 0], a0, b0, gamma, g0, grid, theta, tol, hist,
                              slice_index=0)
    except SolverError as exc:
        raise SolverError(f"agent {who}, slice n=0: {exc}") from exc
    u = SlicedField.from_slices(grid, u0, u1)
    u_x = derivative_x(u)
    pi = SlicedField(grid, lv / gamma - u_x.values)
    return AgentSolution(u, u_x, pi)


def pdde_residual(solution: AgentSolution, lam: SlicedField, agent: AgentSpec, mu: float,
                  scheme: str = "implicit"):
    coeffs = pdde_coefficients(lam, agent, mu, solution.u.slice(1))
    return pde_residual(solution.u, coeffs, scheme)


def evaluate_value(solution: AgentSolution, xi: float, t: float, x: float, n: int,
                   gamma: float) -> float:
    """Value function ``-exp(-gamma (xi + u(t, x, n)))``."""
    return -math.exp(-gamma * (xi + interpolate(solution.u, t, x, n)))


def endowment_norms(agent: AgentSpec, grid: GridSpec) -> tuple[float, float]:
    """Sup norm and discrete ``C^{2+alpha}`` norm of the endowment on the grid.

    The latter sums sup norms of ``g``, ``g_x``, ``g_xx`` and the Hölder
    constant of ``g_xx``, each maximised over the two slices.
    """
    vals = np.stack([np.asarray(agent.endowment(grid.x, n), dtype=float) * np.ones(grid.nx + 1)
                     for n in (0, 1)])
    gx = _dx_array(vals, grid.dx)
    gxx = _dxx_array(vals, grid.dx)
    sup = float(np.max(np.abs(vals)))
    c2a = (sup + float(np.max(np.abs(gx))) + float(np.max(np.abs(gxx)))
           + max(holder_seminorm_1d(gxx[n], grid.dx, grid.alpha) for n in (0, 1)))
    return sup, c2a
