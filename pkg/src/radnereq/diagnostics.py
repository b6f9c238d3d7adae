"""Computable counterparts of the a-priori estimates behind the equilibrium
construction: growth constants, the Lipschitz bound ``L(R)``, the bound for
sublinear recurrences and the composition estimates for ``u -> exp(gamma u)``.

Estimates that hold only up to an unspecified universal constant are exposed
with that constant as an explicit argument, or reported with a calibrated
value; they are never asserted with an assumed constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agent import AgentSolution, AgentSpec, endowment_norms, solve_agent_pdde
from .grid import SlicedField, holder_norm, holder_seminorm, sup_norm

__all__ = [
    "GrowthConstants",
    "LipschitzEstimate",
    "CompositionReport",
    "GrowthReport",
    "StabilityReport",
    "growth_constants",
    "growth_check",
    "lipschitz_estimate",
    "sequence_root",
    "sequence_bound",
    "verify_exp_composition",
    "stability_ratios",
]

_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class GrowthConstants:
    M0: float
    Malpha: float


def growth_constants(gamma: float, mu: float, T: float, g_norms, lambda_norms) -> GrowthConstants:
    """``M0 = gamma |g|_0 + T |lambda|_0^2 / 2 + mu T`` and
    ``Malpha = gamma |g|_{2+alpha} + (T + 1)(|lambda|_alpha^2 / 2 + mu)``.

    ``g_norms`` is ``(sup, c2alpha)`` and ``lambda_norms`` is ``(sup, calpha)``.
    """
    g_sup, g_c2a = g_norms
    l_sup, l_ca = lambda_norms
    for name, v in [("gamma", gamma), ("mu", mu), ("T", T), ("|g|_0", g_sup),
                    ("|g|_2+alpha", g_c2a), ("|lambda|_0", l_sup), ("|lambda|_alpha", l_ca)]:
        if v < 0:
            raise ValueError(f"{name} must be nonnegative, got {v!r}")
    M0 = gamma * g_sup + 0.5 * T * l_sup**2 + mu * T
    Malpha = gamma * g_c2a + (T + 1.0) * (0.5 * l_ca**2 + mu)
    return GrowthConstants(M0, Malpha)


@dataclass(frozen=True)
class GrowthReport:
    constants: GrowthConstants
    sup_u: float
    K: float

    @property
    def ratio(self) -> float:
        return self.sup_u / self.constants.M0 if self.constants.M0 > 0 else (0.0 if self.sup_u == 0 else math.inf)

    @property
    def ok(self) -> bool:
        return self.sup_u <= self.K * self.constants.M0 + 1e-12


def growth_check(solution: AgentSolution, lam: SlicedField, agent: AgentSpec, mu: float,
                 K: float = 3.0) -> GrowthReport:
    """Compare ``|u|_0`` with ``K * M0``; ``K`` is a check threshold, not a proven constant."""
    grid = lam.grid
    consts = growth_constants(agent.gamma, mu, grid.T, endowment_norms(agent, grid),
                              (sup_norm(lam), holder_norm(lam)))
    return GrowthReport(consts, sup_norm(solution.u), K)


@dataclass(frozen=True)
class LipschitzEstimate:
    """``value`` is ``inf`` when it overflows; ``log_value`` and ``log_log_value``
    are always reported."""

    value: float
    log_value: float
    log_log_value: float
    overflow: bool


def lipschitz_estimate(R: float, T: float, gamma: float, mu: float, g_norms, C: float,
                       alpha: float = 0.5) -> LipschitzEstimate:
    """``C T^{(1+a)/(2+a)} exp(exp(2 + 2 gamma |g|_0 + T R^2 + 2 mu T))
    (|g|_{2+a} + (1 + T)(1 + R^2))^{6 + 4a}``, evaluated in log space."""
    if R < 0 or T < 0:
        raise ValueError("R and T must be nonnegative")
    if not C > 0:
        raise ValueError("C must be positive")
    g_sup, g_c2a = g_norms
    if T == 0:
        return LipschitzEstimate(0.0, -math.inf, -math.inf, False)
    inner = 2.0 + 2.0 * gamma * g_sup + T * R**2 + 2.0 * mu * T
    rest = (math.log(C) + (1.0 + alpha) / (2.0 + alpha) * math.log(T)
            + (6.0 + 4.0 * alpha) * math.log(g_c2a + (1.0 + T) * (1.0 + R**2)))
    if inner > _LOG_MAX:
        return LipschitzEstimate(math.inf, math.inf, inner, True)
    dbl = math.exp(inner)
    log_value = dbl + rest
    # log(dbl + rest) = inner + log1p(rest / dbl)
    log_log = inner + math.log1p(rest / dbl) if log_value > 0 else -math.inf
    if log_value > _LOG_MAX:
        return LipschitzEstimate(math.inf, log_value, log_log, True)
    return LipschitzEstimate(math.exp(log_value), log_value, log_log, False)


def sequence_root(alpha: float, xtol: float = 1e-12) -> float:
    """Positive root of ``g = 1 + g**alpha`` by bisection."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")

    def f(g):
        return g - 1.0 - g**alpha

    lo, hi = 1.0, 4.0
    while f(hi) <= 0:
        lo, hi = hi, 2.0 * hi
    if not (f(lo) < 0 < f(hi)):
        raise ArithmeticError("bisection bracket has no sign change")
    while hi - lo > xtol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sequence_bound(A: float, B: float, alpha: float) -> float:
    """Bound ``g(alpha) max(A, B^{1/(1-alpha)})`` on ``limsup x_n`` for
    nonnegative sequences with ``x_{n+1} <= A + B x_n**alpha``."""
    if A < 0 or B < 0:
        raise ValueError("A and B must be nonnegative")
    g = sequence_root(alpha)
    return g * max(A, B ** (1.0 / (1.0 - alpha)))


@dataclass(frozen=True)
class CompositionReport:
    lhs: tuple
    rhs: tuple

    @property
    def margins(self) -> tuple:
        return tuple(r - l for l, r in zip(self.lhs, self.rhs))

    def holds(self, slack: float = 1e-10) -> bool:
        return all(m >= -slack for m in self.margins)


def verify_exp_composition(u1: SlicedField, u2: SlicedField, gamma: float) -> CompositionReport:
    """Both sides of the four composition bounds for ``E u = exp(gamma u)``:

    1. ``|E u|_0 <= exp(gamma sup u)``
    2. ``[E u]_a <= gamma exp(gamma sup u) [u]_a``
    3. ``|E u2 - E u1|_0 <= gamma D |u2 - u1|_0``
    4. ``[E u2 - E u1]_a <= gamma D ([u2 - u1]_a + gamma [u2]_a |u2 - u1|_0)``

    with ``D = exp(gamma max(sup u1, sup u2))``.  Bounds 1 and 2 are checked
    for both fields and the tighter side is reported.  All seminorms use the
    same sampled pair set, on which the bounds hold pairwise.
    """
    if u1.grid != u2.grid:
        raise ValueError("fields live on different grids")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    e1, e2 = u1.map(lambda v: np.exp(gamma * v)), u2.map(lambda v: np.exp(gamma * v))
    s1, s2 = float(np.max(u1.values)), float(np.max(u2.values))
    D = math.exp(gamma * max(s1, s2))
    b1 = min(((sup_norm(e), math.exp(gamma * s)) for e, s in ((e1, s1), (e2, s2))),
             key=lambda p: p[1] - p[0])
    b2 = min(((holder_seminorm(e), gamma * math.exp(gamma * s) * holder_seminorm(u))
              for e, s, u in ((e1, s1, u1), (e2, s2, u2))), key=lambda p: p[1] - p[0])
    du = u2 - u1
    de = e2 - e1
    b3 = (sup_norm(de), gamma * D * sup_norm(du))
    b4 = (holder_seminorm(de),
          gamma * D * (holder_seminorm(du) + gamma * holder_seminorm(u2) * sup_norm(du)))
    pairs = (b1, b2, b3, b4)
    return CompositionReport(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))


@dataclass(frozen=True)
class StabilityReport:
    ratios: tuple
    R: float
    max_ratio: float
    calibrated_C: float


def stability_ratios(agent: AgentSpec, mu: float, lambda_pairs, tol: float = 1e-10,
                     **solver_kw) -> StabilityReport:
    """Empirical ``|u1_x - u2_x|_0 / |lambda1 - lambda2|_0`` over pairs of prices of risk.

    ``calibrated_C`` is the smallest ``C`` for which ``lipschitz_estimate``
    dominates every observed ratio, with ``R`` the largest sup norm seen.
    """
    ratios = []
    R = 0.0
    grid = None
    for lam1, lam2 in lambda_pairs:
        grid = lam1.grid
        s1 = solve_agent_pdde(lam1, agent, mu, grid, tol=tol, **solver_kw)
        s2 = solve_agent_pdde(lam2, agent, mu, grid, tol=tol, **solver_kw)
        denom = sup_norm(lam1 - lam2)
        if denom == 0:
            continue
        ratios.append(sup_norm(s1.u_x - s2.u_x) / denom)
        R = max(R, sup_norm(lam1), sup_norm(lam2))
    if not ratios:
        raise ValueError("need at least one pair of distinct fields")
    est = lipschitz_estimate(R, grid.T, agent.gamma, mu, endowment_norms(agent, grid), 1.0,
                             grid.alpha)
    calibrated = max(ratios) / est.value if est.value > 0 and not est.overflow else 0.0
    return StabilityReport(tuple(ratios), R, max(ratios), calibrated)
