"""Space-time grids, two-slice fields and the norms used on them.

A :class:`SlicedField` stores a function ``f(t, x, n)`` sampled on the nodes
of a :class:`GridSpec`, where ``n in {0, 1}`` is the jump state.  Values are
held in an array of shape ``(nt + 1, nx + 1, 2)``.
"""

from __future__ import annotations

import functools
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "GridSpec",
    "SlicedField",
    "field_from_function",
    "derivative_x",
    "second_derivative_x",
    "sup_norm",
    "weighted_beta_norm",
    "holder_seminorm",
    "holder_norm",
    "holder_seminorm_1d",
    "n_difference",
    "interpolate",
    "interpolate_many",
    "default_half_width",
    "field_to_csv",
    "field_from_csv",
]

HOLDER_RANDOM_PAIRS = 100_000
HOLDER_PAIR_SEED = 20_100_611


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[0, T] x [x_min, x_max] x {0, 1}``.

    Parameters
    ----------
    T : float
        Horizon, ``T > 0``.
    x_min, x_max : float
        Truncated spatial domain, ``x_min < x_max``.
    nt : int
        Number of time steps.
    nx : int
        Number of spatial intervals, at least 2.
    alpha : float
        Hölder exponent in ``(0, 1]``.
    """

    T: float
    x_min: float
    x_max: float
    nt: int
    nx: int
    alpha: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be a positive finite number, got {self.T!r}")
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ValueError("x_min and x_max must be finite")
        if not self.x_min < self.x_max:
            raise ValueError(f"x_min < x_max required, got [{self.x_min}, {self.x_max}]")
        if int(self.nt) != self.nt or self.nt < 1:
            raise ValueError(f"nt must be an integer >= 1, got {self.nt!r}")
        if int(self.nx) != self.nx or self.nx < 2:
            raise ValueError(f"nx must be an integer >= 2, got {self.nx!r}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        object.__setattr__(self, "nt", int(self.nt))
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nt + 1, self.nx + 1, 2)

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.T / self.nt

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.nx + 1) * (self.x_max - self.x_min) / self.nx

    def with_horizon(self, T: float) -> "GridSpec":
        """Same spatial grid and time-step density on a new horizon."""
        nt = max(1, int(round(self.nt * T / self.T)))
        return GridSpec(T, self.x_min, self.x_max, nt, self.nx, self.alpha)

    @classmethod
    def centered(cls, T, half_width, nt, nx, alpha=0.5):
        return cls(T, -half_width, half_width, nt, nx, alpha)


def default_half_width(T: float, support_scale: float = 0.0) -> float:
    """Half-width of the truncated domain: ``max(6 sqrt(T), scale + 4 sqrt(T))``."""
    root = math.sqrt(T)
    return max(6.0 * root, support_scale + 4.0 * root)


class SlicedField:
    """Immutable real field on a :class:`GridSpec`, indexed ``[j, k, n]``."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: GridSpec, values):
        arr = np.array(values, dtype=float)
        if arr.shape != grid.shape:
            raise ValueError(f"field shape {arr.shape} does not match grid shape {grid.shape}")
        if not np.all(np.isfinite(arr)):
            j, k, n = np.argwhere(~np.isfinite(arr))[0]
            raise ValueError(f"non-finite value at node j={j}, k={k}, n={n}")
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("SlicedField is immutable")

    def __repr__(self):
        return f"SlicedField(grid={self.grid!r}, sup={sup_norm(self):.6g})"

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SlicedField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "SlicedField":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_slices(cls, grid: GridSpec, slice0, slice1) -> "SlicedField":
        return cls(grid, np.stack([slice0, slice1], axis=-1))

    def slice(self, n: int) -> np.ndarray:
        return self.values[:, :, n]

    def _other(self, other):
        if isinstance(other, SlicedField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return SlicedField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SlicedField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return SlicedField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return SlicedField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return SlicedField(self.grid, self.values / self._other(other))

    def __neg__(self):
        return SlicedField(self.grid, -self.values)

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "SlicedField":
        return SlicedField(self.grid, func(self.values))


def field_from_function(f, grid: GridSpec) -> SlicedField:
    """Sample ``f(t, x, n)`` on every node of ``grid``.

    ``f`` is first tried with broadcast arrays; scalar-only callables are
    evaluated node by node.
    """
    t = grid.t[:, None]
    x = grid.x[None, :]
    out = np.empty(grid.shape)
    for n in (0, 1):
        try:
            vals = np.broadcast_to(np.asarray(f(t, x, n), dtype=float), grid.shape[:2])
        except (TypeError, ValueError):
            vals = np.array([[f(ti, xk, n) for xk in grid.x] for ti in grid.t], dtype=float)
        out[:, :, n] = vals
    bad = ~np.isfinite(out)
    if bad.any():
        j, k, n = np.argwhere(bad)[0]
        raise ValueError(
            f"function is not finite at node j={j}, k={k}, n={n} "
            f"(t={grid.t[j]!r}, x={grid.x[k]!r})"
        )
    return SlicedField(grid, out)


def _dx_array(v: np.ndarray, dx: float) -> np.ndarray:
    # second order everywhere: central inside, three-point one-sided at the ends
    d = np.empty_like(v)
    d[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2.0 * dx)
    d[:, 0] = (-3.0 * v[:, 0] + 4.0 * v[:, 1] - v[:, 2]) / (2.0 * dx)
    d[:, -1] = (3.0 * v[:, -1] - 4.0 * v[:, -2] + v[:, -3]) / (2.0 * dx)
    return d


def _dxx_array(v: np.ndarray, dx: float) -> np.ndarray:
    d = np.empty_like(v)
    d[:, 1:-1] = (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / dx**2
    if v.shape[1] >= 4:
        d[:, 0] = (2.0 * v[:, 0] - 5.0 * v[:, 1] + 4.0 * v[:, 2] - v[:, 3]) / dx**2
        d[:, -1] = (2.0 * v[:, -1] - 5.0 * v[:, -2] + 4.0 * v[:, -3] - v[:, -4]) / dx**2
    else:
        d[:, 0] = d[:, 1]
        d[:, -1] = d[:, -2]
    return d


def derivative_x(u: SlicedField) -> SlicedField:
    """Second-order finite-difference ``u_x``, per time node and slice."""
    return SlicedField(u.grid, _dx_array(u.values, u.grid.dx))


def second_derivative_x(u: SlicedField) -> SlicedField:
    return SlicedField(u.grid, _dxx_array(u.values, u.grid.dx))


def sup_norm(u: SlicedField) -> float:
    return float(np.max(np.abs(u.values)))


def weighted_beta_norm(u: SlicedField, beta: float) -> float:
    """``max e^{-beta (T - t_j)} |u[j, k, n]|``; equals :func:`sup_norm` at ``beta = 0``."""
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta!r}")
    weights = np.exp(-beta * (u.grid.T - u.grid.t))
    return float(np.max(weights[:, None, None] * np.abs(u.values)))


@functools.lru_cache(maxsize=32)
def _holder_pairs(grid: GridSpec):
    """Flat index pairs and parabolic distances of the sampled pair set.

    Dyadic spatial lags within each time row, dyadic time lags at fixed x, and
    a fixed-seed sample of mixed pairs.  Deterministic in the grid alone.
    """
    nt1, nx1 = grid.nt + 1, grid.nx + 1
    jj, kk = np.meshgrid(np.arange(nt1), np.arange(nx1), indexing="ij")
    flat = (jj * nx1 + kk)
    first, second, dist = [], [], []
    lag = 1
    while lag < nx1:
        first.append(flat[:, :-lag].ravel())
        second.append(flat[:, lag:].ravel())
        dist.append(np.full(first[-1].size, lag * grid.dx))
        lag *= 2
    lag = 1
    while lag < nt1:
        first.append(flat[:-lag, :].ravel())
        second.append(flat[lag:, :].ravel())
        dist.append(np.full(first[-1].size, math.sqrt(lag * grid.dt)))
        lag *= 2
    rng = np.random.default_rng(HOLDER_PAIR_SEED)
    j1 = rng.integers(0, nt1, HOLDER_RANDOM_PAIRS)
    k1 = rng.integers(0, nx1, HOLDER_RANDOM_PAIRS)
    j2 = rng.integers(0, nt1, HOLDER_RANDOM_PAIRS)
    k2 = rng.integers(0, nx1, HOLDER_RANDOM_PAIRS)
    keep = (j1 != j2) | (k1 != k2)
    j1, k1, j2, k2 = j1[keep], k1[keep], j2[keep], k2[keep]
    first.append(j1 * nx1 + k1)
    second.append(j2 * nx1 + k2)
    dist.append(np.sqrt(np.abs(j1 - j2) * grid.dt) + np.abs(k1 - k2) * grid.dx)
    return np.concatenate(first), np.concatenate(second), np.concatenate(dist)


def holder_seminorm(u: SlicedField) -> float:
    """Sampled parabolic Hölder constant ``[u]_alpha``, maximum over both slices.

    The pair set is a subset of all node pairs, so the result is a lower
    bound for the full discrete seminorm.
    """
    i1, i2, dist = _holder_pairs(u.grid)
    denom = dist ** u.grid.alpha
    best = 0.0
    for n in (0, 1):
        flat = u.values[:, :, n].ravel()
        best = max(best, float(np.max(np.abs(flat[i1] - flat[i2]) / denom)))
    return best


def holder_norm(u: SlicedField) -> float:
    """Discrete ``C^alpha`` norm: sup norm plus sampled Hölder seminorm."""
    return sup_norm(u) + holder_seminorm(u)


def holder_seminorm_1d(values, dx: float, alpha: float) -> float:
    """Hölder constant of a function sampled on a uniform 1-D grid, all pairs."""
    v = np.asarray(values, dtype=float)
    best = 0.0
    for lag in range(1, v.size):
        diff = np.max(np.abs(v[lag:] - v[:-lag]))
        best = max(best, float(diff) / (lag * dx) ** alpha)
    return best


def n_difference(u: SlicedField) -> SlicedField:
    """``u(t, x, 1) - u(t, x, n)``: zero on the n=1 slice."""
    out = np.zeros(u.grid.shape)
    out[:, :, 0] = u.values[:, :, 1] - u.values[:, :, 0]
    return SlicedField(u.grid, out)


def _cell(nodes: np.ndarray, q: np.ndarray):
    idx = np.clip(np.searchsorted(nodes, q, side="right") - 1, 0, nodes.size - 2)
    w = (q - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    return idx, w


def interpolate_many(u: SlicedField, t, x, n) -> np.ndarray:
    """Vectorised bilinear interpolation; ``x`` is clamped to the domain."""
    grid = u.grid
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=int)
    if np.any((t < 0) | (t > grid.T)):
        raise ValueError(f"t must lie in [0, {grid.T}]")
    if np.any((n != 0) & (n != 1)):
        raise ValueError("n must be 0 or 1")
    t, x, n = np.broadcast_arrays(t, np.clip(x, grid.x_min, grid.x_max), n)
    j, wt = _cell(grid.t, t)
    k, wx = _cell(grid.x, x)
    v = u.values
    lo = v[j, k, n] * (1.0 - wx) + v[j, k + 1, n] * wx
    hi = v[j + 1, k, n] * (1.0 - wx) + v[j + 1, k + 1, n] * wx
    return lo * (1.0 - wt) + hi * wt


def interpolate(u: SlicedField, t: float, x: float, n: int) -> float:
    """Bilinear value of slice ``n`` at ``(t, x)``; exact at nodes."""
    return float(interpolate_many(u, t, x, n))


def field_to_csv(u: SlicedField, path_or_buf, meta: dict | None = None) -> None:
    """Write ``t,x,n,value`` rows in (j, k, n) order, preceded by a ``# key=value`` line."""
    g = u.grid
    header = {
        "T": repr(g.T), "x_min": repr(g.x_min), "x_max": repr(g.x_max),
        "nt": g.nt, "nx": g.nx, "alpha": repr(g.alpha),
    }
    header.update(meta or {})
    jj, kk, nn = np.meshgrid(np.arange(g.nt + 1), np.arange(g.nx + 1), [0, 1], indexing="ij")
    t = g.t[jj.ravel()]
    x = g.x[kk.ravel()]
    lines = ["# " + " ".join(f"{k}={v}" for k, v in header.items()), "t,x,n,value"]
    lines += [
        f"{ti:.17g},{xi:.17g},{ni},{vi:.17g}"
        for ti, xi, ni, vi in zip(t.tolist(), x.tolist(), nn.ravel().tolist(),
                                  u.values.ravel().tolist())
    ]
    text = "\n".join(lines) + "\n"
    if isinstance(path_or_buf, io.TextIOBase):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)


def read_meta(line: str) -> dict:
    return dict(item.split("=", 1) for item in line.lstrip("#").split())


def field_from_csv(path_or_buf) -> SlicedField:
    """Inverse of :func:`field_to_csv`; the grid is rebuilt from the metadata line."""
    if isinstance(path_or_buf, io.TextIOBase):
        text = path_or_buf.read()
    else:
        with open(path_or_buf) as fh:
            text = fh.read()
    lines = text.splitlines()
    meta = read_meta(lines[0])
    grid = GridSpec(float(meta["T"]), float(meta["x_min"]), float(meta["x_max"]),
                    int(meta["nt"]), int(meta["nx"]), float(meta["alpha"]))
    if lines[1].strip() != "t,x,n,value":
        raise ValueError(f"unexpected CSV header {lines[1]!r}")
    vals = np.array([float(line.rsplit(",", 1)[1]) for line in lines[2:] if line])
    return SlicedField(grid, vals.reshape(grid.shape))
