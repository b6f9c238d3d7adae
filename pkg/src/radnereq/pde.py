"""Backward-in-time finite-difference solvers for

    0 = u_t + 1/2 u_xx + h u_x + a - b exp(gamma u),   u(T, .) = g,

on each jump-state slice independently (``b = 0`` gives the linear problem).

Time stepping is a theta scheme: ``theta = 1`` (backward Euler, default) or
``theta = 1/2`` (Crank-Nicolson).  Spatial derivatives are centred; where the
grid Péclet number ``|h| dx`` exceeds one the advection term switches to
upwinding so that the step matrix stays an M-matrix.  At both ends of the
truncated domain ``u_xx = 0`` is imposed (linear extrapolation).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .grid import GridSpec, SlicedField, sup_norm

__all__ = [
    "LinearCoefficients",
    "SemilinearCoefficients",
    "SolverError",
    "NewtonConvergenceError",
    "PicardContractionError",
    "PicardHistory",
    "Residual",
    "solve_linear_cauchy",
    "solve_semilinear_cauchy",
    "pde_residual",
    "picard_beta",
    "semilinear_bounds",
    "picard_slice",
    "march_slice",
]

NEWTON_MAX_ITER = 50
PICARD_MAX_SWEEPS = 500
_SCHEMES = {"implicit": 1.0, "crank_nicolson": 0.5, "cn": 0.5}
_MODES = {"newton": "newton", "newton_per_step": "newton",
          "picard": "picard", "picard_global": "picard"}


class SolverError(RuntimeError):
    pass


class NewtonConvergenceError(SolverError):
    def __init__(self, step, slice_=None, iterations=NEWTON_MAX_ITER):
        self.step = step
        self.slice = slice_
        where = f"time step j={step}" + ("" if slice_ is None else f", slice n={slice_}")
        super().__init__(f"Newton iteration did not converge in {iterations} iterations at {where}")


class PicardContractionError(SolverError):
    def __init__(self, ratios):
        self.ratios = list(ratios)
        tail = ", ".join(f"{r:.3g}" for r in self.ratios[-8:])
        super().__init__(f"Picard sweep is not contracting; recent ratios: [{tail}]")


def _terminal(g: Callable, grid: GridSpec, n: int) -> np.ndarray:
    vals = np.broadcast_to(np.asarray(g(grid.x, n), dtype=float), (grid.nx + 1,)).copy()
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"terminal data is not finite on slice n={n}")
    return vals


def _check_grid(grid, *fields):
    for f in fields:
        if f.grid != grid:
            raise ValueError("coefficient field does not live on the solver grid")


@dataclass(frozen=True)
class LinearCoefficients:
    """Drift ``h``, source ``a`` and terminal data ``g_terminal(x, n)``."""

    h: SlicedField
    a: SlicedField
    g_terminal: Callable

    @property
    def grid(self):
        return self.h.grid


@dataclass(frozen=True)
class SemilinearCoefficients:
    """``h``, ``a``, ``b`` fields (``a, b >= 0``), ``gamma > 0`` and terminal data."""

    h: SlicedField
    a: SlicedField
    b: SlicedField
    gamma: float
    g_terminal: Callable

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")
        if np.any(self.a.values < 0):
            raise ValueError("a must be nonnegative")
        if np.any(self.b.values < 0):
            raise ValueError("b must be nonnegative")

    @property
    def grid(self):
        return self.h.grid


@dataclass
class PicardHistory:
    """Per-sweep ``||u_{m+1} - u_m||_beta`` and the ratio to the previous sweep.

    Sweeps of both slices are appended in order; the first sweep of each
    slice has ratio ``nan``.
    """

    beta: float
    deltas: list = field(default_factory=list)
    sup_deltas: list = field(default_factory=list)
    ratios: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("sweep,beta_norm_delta,ratio\n")
            for m, (d, r) in enumerate(zip(self.deltas, self.ratios)):
                fh.write(f"{m + 1},{d:.17g},{r:.17g}\n")


@dataclass(frozen=True)
class Residual:
    per_slice: tuple
    max: float

    def __float__(self):
        return self.max


def _theta(scheme: str) -> float:
    try:
        return _SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; use 'implicit' or 'crank_nicolson'") from None


def _operator(h_row: np.ndarray, dx: float):
    """Stencil weights ``(lo, mid, hi)`` of ``1/2 D_xx + h D_x`` at interior nodes."""
    hi_ = h_row[1:-1]
    diff = 0.5 / dx**2
    lo = np.full(hi_.shape, diff) - hi_ / (2.0 * dx)
    hi = np.full(hi_.shape, diff) + hi_ / (2.0 * dx)
    mid = np.full(hi_.shape, -2.0 * diff)
    steep = np.abs(hi_) * dx > 1.0
    if steep.any():
        pos = steep & (hi_ > 0)
        neg = steep & (hi_ < 0)
        lo[pos], mid[pos], hi[pos] = diff, -2.0 * diff - hi_[pos] / dx, diff + hi_[pos] / dx
        lo[neg], mid[neg], hi[neg] = diff - hi_[neg] / dx, -2.0 * diff + hi_[neg] / dx, diff
    return lo, mid, hi, bool(steep.any())


def _apply(op, y: np.ndarray) -> np.ndarray:
    lo, mid, hi = op[:3]
    return lo * y[:-2] + mid * y[1:-1] + hi * y[2:]


def _extrapolate(inner: np.ndarray) -> np.ndarray:
    out = np.empty(inner.size + 2)
    out[1:-1] = inner
    out[0] = 2.0 * inner[0] - inner[1]
    out[-1] = 2.0 * inner[-1] - inner[-2]
    return out


def _step_band(op, dt_theta: float) -> np.ndarray:
    """Banded form of ``I - theta dt L`` on interior nodes with the end rows folded in."""
    lo, mid, hi = op[:3]
    sub = -dt_theta * lo
    main = 1.0 - dt_theta * mid
    sup = -dt_theta * hi
    # y_0 = 2 y_1 - y_2 and y_N = 2 y_{N-1} - y_{N-2}
    main[0] += 2.0 * sub[0]
    sup[0] -= sub[0]
    main[-1] += 2.0 * sup[-1]
    sub[-1] -= sup[-1]
    m = main.size
    ab = np.zeros((3, m))
    ab[1] = main
    if m > 1:
        ab[0, 1:] = sup[:-1]
        ab[2, :-1] = sub[1:]
    return ab


def march_slice(h, a, g_vals, grid: GridSpec, theta: float = 1.0, b=None, gamma: float = 1.0,
                slice_index=None, newton_tol: float = 1e-13):
    """Solve one slice backwards from ``t = T``; returns an ``(nt+1, nx+1)`` array.

    ``h, a, b`` are ``(nt+1, nx+1)`` arrays; ``b=None`` means the linear problem.
    """
    if grid.nx < 3:
        raise ValueError("the finite-difference solver needs nx >= 3")
    dt, dx = grid.dt, grid.dx
    u = np.empty((grid.nt + 1, grid.nx + 1))
    u[-1] = g_vals
    warned = False
    for j in range(grid.nt - 1, -1, -1):
        op_now = _operator(h[j], dx)
        if op_now[3] and not warned:
            warnings.warn(
                f"grid Peclet number |h| dx exceeds 1 at t={grid.t[j]:.4g}; "
                "using upwind advection at those nodes", RuntimeWarning, stacklevel=3)
            warned = True
        nxt = u[j + 1]
        rhs = nxt[1:-1] + theta * dt * a[j, 1:-1]
        if theta < 1.0:
            op_next = _operator(h[j + 1], dx)
            explicit = _apply(op_next, nxt) + a[j + 1, 1:-1]
            if b is not None:
                explicit = explicit - b[j + 1, 1:-1] * np.exp(gamma * nxt[1:-1])
            rhs = rhs + (1.0 - theta) * dt * explicit
        ab = _step_band(op_now, theta * dt)
        bj = None if b is None else b[j, 1:-1]
        if bj is None or not np.any(bj):
            y = solve_banded((1, 1), ab, rhs, check_finite=False)
        else:
            y = _newton_step(ab, rhs, theta * dt * bj, gamma, nxt[1:-1].copy(), j,
                             slice_index, newton_tol)
        u[j] = _extrapolate(y)
    return u


def _banded_matvec(ab: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = ab[1] * y
    out[:-1] += ab[0, 1:] * y[1:]
    out[1:] += ab[2, :-1] * y[:-1]
    return out


def _newton_step(ab, rhs, tb, gamma, y, j, slice_index, tol):
    """Solve ``M y + tb exp(gamma y) = rhs`` (``tb >= 0``) by Newton's method."""
    for _ in range(NEWTON_MAX_ITER):
        e = np.exp(gamma * y)
        resid = _banded_matvec(ab, y) + tb * e - rhs
        jac = ab.copy()
        jac[1] += gamma * tb * e
        delta = solve_banded((1, 1), jac, resid, check_finite=False)
        y = y - delta
        if not np.all(np.isfinite(y)):
            break
        if np.max(np.abs(delta)) <= tol * (1.0 + np.max(np.abs(y))):
            return y
    raise NewtonConvergenceError(j, slice_index)


def solve_linear_cauchy(coeffs: LinearCoefficients, grid: GridSpec,
                        scheme: str = "implicit") -> SlicedField:
    """Solve ``0 = u_t + 1/2 u_xx + h u_x + a``, ``u(T) = g`` on both slices."""
    _check_grid(grid, coeffs.h, coeffs.a)
    theta = _theta(scheme)
    out = [
        march_slice(coeffs.h.slice(n), coeffs.a.slice(n), _terminal(coeffs.g_terminal, grid, n),
                    grid, theta, slice_index=n)
        for n in (0, 1)
    ]
    return SlicedField.from_slices(grid, *out)


def picard_beta(coeffs: SemilinearCoefficients, grid: GridSpec) -> float:
    """Weight ``2 gamma |b| exp(gamma (T |a| + |g|))``, twice the contraction threshold."""
    g_sup = max(np.max(np.abs(_terminal(coeffs.g_terminal, grid, n))) for n in (0, 1))
    exponent = coeffs.gamma * (grid.T * sup_norm(coeffs.a) + g_sup)
    return 2.0 * coeffs.gamma * sup_norm(coeffs.b) * math.exp(exponent)


def semilinear_bounds(coeffs: SemilinearCoefficients, grid: GridSpec) -> tuple[float, float]:
    """A-priori bounds ``-(1/gamma) log(e^{gamma |g|} + gamma T |b|) <= u <= |g| + T |a|``."""
    g_sup = max(np.max(np.abs(_terminal(coeffs.g_terminal, grid, n))) for n in (0, 1))
    gam = coeffs.gamma
    lower = -math.log(math.exp(gam * g_sup) + gam * grid.T * sup_norm(coeffs.b)) / gam
    return lower, float(g_sup + grid.T * sup_norm(coeffs.a))


def picard_slice(h, a, b, gamma, g_vals, grid: GridSpec, theta: float, tol: float,
                 history: PicardHistory, slice_index=None) -> np.ndarray:
    """Global Picard sweeps on one slice.

    Each sweep freezes ``w`` in ``b exp(gamma w)`` and solves the linear problem
    on all of ``[0, T]``.  Successive differences are recorded in the
    ``beta``-weighted sup norm of ``history``.
    """
    weights = np.exp(-history.beta * (grid.T - grid.t))[:, None]
    w = np.broadcast_to(g_vals, (grid.nt + 1, grid.nx + 1)).copy()
    prev = None
    streak = 0
    for _ in range(PICARD_MAX_SWEEPS):
        nxt = march_slice(h, a - b * np.exp(gamma * w), g_vals, grid, theta,
                          slice_index=slice_index)
        diff = np.abs(nxt - w)
        delta = float(np.max(weights * diff))
        history.deltas.append(delta)
        history.sup_deltas.append(float(np.max(diff)))
        if prev is None or prev == 0:
            history.ratios.append(float("nan"))
        else:
            ratio = delta / prev
            history.ratios.append(ratio)
            # the weighted delta can stall at a rounding floor while the sup delta still shrinks
            stalled = ratio >= 1.0 and history.sup_deltas[-1] >= history.sup_deltas[-2]
            streak = streak + 1 if stalled else 0
            if streak >= 5:
                raise PicardContractionError(history.ratios)
        prev = delta
        w = nxt
        if history.sup_deltas[-1] <= tol:
            return w
    raise PicardContractionError(history.ratios)


def resolve_theta(scheme: str) -> float:
    return _theta(scheme)


def resolve_mode(mode: str) -> str:
    try:
        return _MODES[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; use 'newton' or 'picard'") from None


def solve_semilinear_cauchy(coeffs: SemilinearCoefficients, grid: GridSpec, mode: str = "newton",
                            tol: float = 1e-10, scheme: str = "implicit",
                            return_history: bool = False):
    """Solve ``0 = u_t + 1/2 u_xx + h u_x + a - b e^{gamma u}``, ``u(T) = g``.

    Parameters
    ----------
    mode : {"newton", "picard"}
        ``"newton"`` solves every implicit step with Newton's method on the
        tridiagonal step system.  ``"picard"`` freezes the nonlinearity at the
        previous iterate, solves the resulting linear problem on the whole
        time interval and repeats until successive sweeps differ by at most
        ``tol`` in sup norm.
    return_history : bool
        Also return a :class:`PicardHistory` (empty ``deltas`` for Newton).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    _check_grid(grid, coeffs.h, coeffs.a, coeffs.b)
    theta = _theta(scheme)
    mode = resolve_mode(mode)
    history = PicardHistory(beta=picard_beta(coeffs, grid) if mode == "picard" else 0.0)
    if mode == "newton":
        slices = [
            march_slice(coeffs.h.slice(n), coeffs.a.slice(n), _terminal(coeffs.g_terminal, grid, n),
                        grid, theta, b=coeffs.b.slice(n), gamma=coeffs.gamma, slice_index=n,
                        newton_tol=min(1e-13, tol))
            for n in (0, 1)
        ]
    else:
        slices = [
            picard_slice(coeffs.h.slice(n), coeffs.a.slice(n), coeffs.b.slice(n), coeffs.gamma,
                         _terminal(coeffs.g_terminal, grid, n), grid, theta, tol, history,
                         slice_index=n)
            for n in (0, 1)
        ]
    u = SlicedField.from_slices(grid, *slices)
    return (u, history) if return_history else u


def pde_residual(u: SlicedField, coeffs, scheme: str = "implicit") -> Residual:
    """Max over interior nodes of the discrete equation residual.

    The time derivative is the forward difference ``(u^{j+1} - u^j)/dt``; the
    spatial part is taken at level ``j`` (``"implicit"``) or averaged over
    ``j`` and ``j+1`` (``"crank_nicolson"``), matching the solver stencils
    when no upwinding was needed.
    """
    grid = u.grid
    theta = _theta(scheme)
    dt, dx = grid.dt, grid.dx
    b = getattr(coeffs, "b", None)
    gamma = getattr(coeffs, "gamma", 1.0)
    per = []
    for n in (0, 1):
        v = u.slice(n)
        h, a = coeffs.h.slice(n), coeffs.a.slice(n)
        spatial = (0.5 * (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / dx**2
                   + h[:, 1:-1] * (v[:, 2:] - v[:, :-2]) / (2.0 * dx) + a[:, 1:-1])
        if b is not None:
            spatial = spatial - b.slice(n)[:, 1:-1] * np.exp(gamma * v[:, 1:-1])
        dudt = (v[1:, 1:-1] - v[:-1, 1:-1]) / dt
        r = dudt + theta * spatial[:-1] + (1.0 - theta) * spatial[1:]
        per.append(float(np.max(np.abs(r))))
    return Residual(tuple(per), max(per))
