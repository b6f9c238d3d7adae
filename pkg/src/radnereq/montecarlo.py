"""Monte Carlo checks of optimality, market clearing and the value identity.

Paths of the Brownian motion ``B`` and the jump time ``tau`` are drawn with
numpy's PCG64 generator (``numpy.random.default_rng(seed)``): first all
Brownian increments, then one uniform per path for ``tau = -log(U) / mu``.
Identical ``SimConfig`` gives bit-identical batches.

Strategies are Markov fields evaluated at ``(t_m, B_{t_m}, N_{t_m-})`` on the
PDE time grid; the jump state used on a step is the one strictly before its
left endpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentSolution, AgentSpec
from .grid import SlicedField, _cell, interpolate_many

__all__ = [
    "SimConfig",
    "PathBatch",
    "simulate_paths",
    "terminal_wealth",
    "wealth_and_utility",
    "verify_value_identity",
    "verify_optimality",
    "riskless_position",
    "verify_clearing_on_paths",
    "jump_statistics",
    "write_path_csv",
]


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    n_steps: int = 100
    seed: int = 0
    x0: float = 0.0

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be positive")


@dataclass(frozen=True)
class PathBatch:
    """Brownian increments ``dB`` of shape ``(n_paths, n_steps)`` and jump times."""

    T: float
    dB: np.ndarray
    tau: np.ndarray
    x0: float = 0.0

    @property
    def n_paths(self) -> int:
        return self.dB.shape[0]

    @property
    def n_steps(self) -> int:
        return self.dB.shape[1]

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.T / self.n_steps

    @property
    def B(self) -> np.ndarray:
        """Brownian positions at the step boundaries, ``(n_paths, n_steps + 1)``."""
        start = np.full((self.n_paths, 1), float(self.x0))
        return np.cumsum(np.hstack([start, self.dB]), axis=1)

    def states(self):
        """Yield ``(m, B_{t_m}, N_{t_m-})`` for ``m = 0..n_steps`` without storing all levels.

        Positions accumulate in the same order as :attr:`B`, so both agree bit for bit.
        """
        b = np.full(self.n_paths, float(self.x0))
        times = self.times
        for m in range(self.n_steps + 1):
            yield m, b, (self.tau < times[m]).astype(int)
            if m < self.n_steps:
                b = b + self.dB[:, m]

    @property
    def N(self) -> np.ndarray:
        """``N_t = 1{tau <= t}`` at the step boundaries."""
        return (self.tau[:, None] <= self.times[None, :]).astype(int)

    @property
    def N_before(self) -> np.ndarray:
        """``N_{t-} = 1{tau < t}`` at the step boundaries."""
        return (self.tau[:, None] < self.times[None, :]).astype(int)

    @property
    def B_T(self) -> np.ndarray:
        b = np.full(self.n_paths, float(self.x0))
        for m in range(self.n_steps):
            b = b + self.dB[:, m]
        return b

    @property
    def N_T(self) -> np.ndarray:
        return (self.tau <= self.T).astype(int)


def simulate_paths(mu: float, T: float, config: SimConfig) -> PathBatch:
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    rng = np.random.default_rng(config.seed)
    dB = rng.standard_normal((config.n_paths, config.n_steps)) * math.sqrt(T / config.n_steps)
    u = 1.0 - rng.random(config.n_paths)  # in (0, 1]
    if mu > 0:
        tau = -np.log(u) / mu
    else:
        tau = np.full(config.n_paths, np.inf)
    return PathBatch(T, dB, tau, config.x0)


def _check_alignment(fields, paths: PathBatch):
    for f in fields:
        g = f.grid
        if g.nt != paths.n_steps or abs(g.T - paths.T) > 1e-12 * g.T:
            raise ValueError(
                f"path time grid (T={paths.T}, steps={paths.n_steps}) does not match "
                f"field grid (T={g.T}, nt={g.nt})")


def _at_step(u: SlicedField, m: int, x: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Linear interpolation in ``x`` on time level ``m``; ``x`` is clamped."""
    grid = u.grid
    k, wx = _cell(grid.x, np.clip(x, grid.x_min, grid.x_max))
    v = u.values[m]
    return v[k, n] * (1.0 - wx) + v[k + 1, n] * wx


def terminal_wealth(lam: SlicedField, strategy: SlicedField, paths: PathBatch) -> np.ndarray:
    """Euler sum of ``pi (lambda dt + dB)`` along every path."""
    _check_alignment([lam, strategy], paths)
    X = np.zeros(paths.n_paths)
    for m, b, nb in paths.states():
        if m == paths.n_steps:
            break
        pi = _at_step(strategy, m, b, nb)
        lm = _at_step(lam, m, b, nb)
        X += pi * (lm * paths.dt + paths.dB[:, m])
    return X


def _utilities(lam, strategy, agent: AgentSpec, paths: PathBatch) -> np.ndarray:
    X = terminal_wealth(lam, strategy, paths)
    payoff = agent.endowment(paths.B_T, paths.N_T)
    return agent.utility(X + payoff)


def _mean_se(v: np.ndarray):
    if v.size < 2 or np.all(v == v[0]):
        # degenerate sample: report the common value exactly
        return float(v[0]) if v.size else math.nan, 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def wealth_and_utility(lam: SlicedField, strategy: SlicedField, agent: AgentSpec,
                       paths: PathBatch):
    """Sample mean and standard error of ``U(X_T + g(B_T, N_T))``."""
    return _mean_se(_utilities(lam, strategy, agent, paths))


@dataclass(frozen=True)
class ValueCheck:
    mc_mean: float
    mc_stderr: float
    pde_value: float
    n_stderr: float = 4.0

    @property
    def z(self) -> float:
        diff = self.mc_mean - self.pde_value
        if self.mc_stderr == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / self.mc_stderr

    @property
    def passed(self) -> bool:
        return abs(self.mc_mean - self.pde_value) <= self.n_stderr * self.mc_stderr + 1e-14


def verify_value_identity(solution: AgentSolution, lam: SlicedField, agent: AgentSpec,
                          paths: PathBatch, n_stderr: float = 4.0) -> ValueCheck:
    """Compare the MC utility of the optimal strategy with ``-exp(-gamma u(0, x0, 0))``."""
    mean, se = wealth_and_utility(lam, solution.pi, agent, paths)
    u0 = float(interpolate_many(solution.u, 0.0, paths.x0, 0))
    return ValueCheck(mean, se, -math.exp(-agent.gamma * u0), n_stderr)


@dataclass(frozen=True)
class PerturbationCheck:
    label: str
    eps: float
    diff_mean: float
    diff_stderr: float
    independent_stderr: float
    n_stderr: float = 3.0

    @property
    def passed(self) -> bool:
        """``U(pi*) >= U(pi* + eps phi) - n_stderr * se`` on common random numbers."""
        return self.diff_mean >= -self.n_stderr * self.diff_stderr

    @property
    def degradation_per_eps2(self) -> float:
        return self.diff_mean / self.eps**2 if self.eps else 0.0


@dataclass
class OptimalityReport:
    base_mean: float
    base_stderr: float
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def verify_optimality(solution: AgentSolution, lam: SlicedField, agent: AgentSpec,
                      paths: PathBatch, perturbations, eps) -> OptimalityReport:
    """Utility loss from perturbing the optimal strategy, on common random numbers.

    ``perturbations`` is a sequence of fields or of ``(label, field)`` pairs;
    ``eps`` a scalar or a sequence of sizes applied to every perturbation.
    """
    base = _utilities(lam, solution.pi, agent, paths)
    base_mean, base_se = _mean_se(base)
    eps_list = [float(eps)] if np.ndim(eps) == 0 else [float(e) for e in eps]
    report = OptimalityReport(base_mean, base_se)
    for i, item in enumerate(perturbations):
        label, phi = item if isinstance(item, tuple) else (f"phi{i}", item)
        for e in eps_list:
            pert = _utilities(lam, solution.pi + e * phi, agent, paths)
            diff = base - pert
            dm, dse = _mean_se(diff)
            indep = math.sqrt(base.var(ddof=1) / base.size + pert.var(ddof=1) / pert.size) \
                if base.size > 1 else 0.0
            report.checks.append(PerturbationCheck(label, e, dm, dse, indep))
    return report


@dataclass(frozen=True)
class RisklessReport:
    rho: np.ndarray
    identity_error: float

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.rho)))


def riskless_position(strategy: SlicedField, lam: SlicedField, paths: PathBatch) -> RisklessReport:
    """Riskless holdings ``rho_m = G_m - pi_m S_m`` with ``G`` the Euler gains
    ``sum pi dS`` and ``S_0 = 0``; checks ``pi S + rho = G`` at every step."""
    _check_alignment([lam, strategy], paths)
    S = np.zeros(paths.n_paths)
    G = np.zeros(paths.n_paths)
    rho = np.empty((paths.n_paths, paths.n_steps + 1))
    err = 0.0
    for m, b, nb in paths.states():
        pi = _at_step(strategy, m, b, nb)
        rho[:, m] = G - pi * S
        scale = 1.0 + np.abs(G) + np.abs(pi * S)
        err = max(err, float(np.max(np.abs(pi * S + rho[:, m] - G) / scale)))
        if m == paths.n_steps:
            break
        dS = _at_step(lam, m, b, nb) * paths.dt + paths.dB[:, m]
        S = S + dS
        G = G + pi * dS
    if err > 1e-12:
        raise ArithmeticError(f"self-financing bookkeeping violated by {err:.3e}")
    return RisklessReport(rho, err)


@dataclass(frozen=True)
class ClearingCheck:
    max_abs_sum: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.max_abs_sum <= self.bound


def verify_clearing_on_paths(result, paths: PathBatch, slack: float = 1e-9) -> ClearingCheck:
    """Max of ``|sum_i pi_i(t_m, B_m, N_{m-})|`` along all paths and steps."""
    sols = result.agent_solutions
    _check_alignment([s.pi for s in sols], paths)
    total = sols[0].pi
    for s in sols[1:]:
        total = total + s.pi
    worst = 0.0
    for m, b, nb in paths.states():
        worst = max(worst, float(np.max(np.abs(_at_step(total, m, b, nb)))))
    return ClearingCheck(worst, result.clearing_residual + slack)


@dataclass(frozen=True)
class JumpCheck:
    fraction: float
    expected: float
    stderr: float
    n_stderr: float = 4.0

    @property
    def passed(self) -> bool:
        return abs(self.fraction - self.expected) <= self.n_stderr * self.stderr + 1e-15


def jump_statistics(paths: PathBatch, mu: float, n_stderr: float = 4.0) -> JumpCheck:
    """Fraction of paths with a jump by ``T`` against ``1 - exp(-mu T)``."""
    p = 1.0 - math.exp(-mu * paths.T)
    se = math.sqrt(p * (1.0 - p) / paths.n_paths)
    return JumpCheck(float(paths.N_T.mean()), p, se, n_stderr)


def write_path_csv(path, lam: SlicedField, strategy: SlicedField, agent: AgentSpec,
                   paths: PathBatch, meta: dict | None = None) -> None:
    """Per-path ``path,B_T,N_T,X_T,payoff_utility`` rows."""
    X = terminal_wealth(lam, strategy, paths)
    BT, NT = paths.B_T, paths.N_T
    util = agent.utility(X + agent.endowment(BT, NT))
    with open(path, "w") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        fh.write("path,B_T,N_T,X_T,payoff_utility\n")
        for i in range(paths.n_paths):
            fh.write(f"{i},{BT[i]:.17g},{NT[i]},{X[i]:.17g},{util[i]:.17g}\n")
