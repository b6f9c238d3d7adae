"""Run configuration: YAML file, environment overrides and command-line flags.

Precedence is flag > environment (``RADNEREQ_<FLAG>``) > file > default.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass

import yaml

from .agent import AgentSpec
from .endowments import Endowment
from .equilibrium import MarketSpec
from .grid import GridSpec, default_half_width
from .montecarlo import SimConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "apply_overrides", "ENV_PREFIX"]

ENV_PREFIX = "RADNEREQ_"

DEFAULTS = {
    "grid": {"nt": 200, "nx": 200, "x_min": None, "x_max": None, "alpha": 0.5},
    "solver": {"scheme": "implicit", "mode": "newton", "tol": 1e-8, "max_iter": 100,
               "damping": 1.0, "n_jobs": 1},
    "mc": {"n_paths": 100_000, "n_steps": None, "seed": 0, "x0": 0.0},
    "solve": {"lambda": 0.0},
    "output": {"dir": "out"},
}

# flag name -> (section, key, type)
OVERRIDES = {
    "out": ("output", "dir", str),
    "tol": ("solver", "tol", float),
    "max_iter": ("solver", "max_iter", int),
    "damping": ("solver", "damping", float),
    "seed": ("mc", "seed", int),
    "scheme": ("solver", "scheme", str),
    "mode": ("solver", "mode", str),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    market: MarketSpec
    grid: GridSpec
    solver: dict
    mc: SimConfig
    solve_lambda: float
    out_dir: str
    raw: dict

    @property
    def sha256(self) -> str:
        """Hash of the effective config; the output location is left out."""
        payload = {k: v for k, v in self.raw.items() if k != "output"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _merge(defaults: dict, data: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in data.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def apply_overrides(raw: dict, flags: dict | None = None, environ=None) -> dict:
    """Apply environment then flag overrides to a raw config tree."""
    raw = copy.deepcopy(raw)
    environ = os.environ if environ is None else environ
    flags = flags or {}
    for name, (section, key, typ) in OVERRIDES.items():
        env = environ.get(ENV_PREFIX + name.upper())
        value = flags.get(name)
        if value is None and env is not None:
            try:
                value = typ(env)
            except ValueError:
                raise ConfigError(f"{ENV_PREFIX + name.upper()}: cannot parse {env!r}") from None
        if value is not None:
            raw.setdefault(section, {})[key] = value
    return raw


def _field(path, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict) or "market" not in raw:
        raise ConfigError("config needs a 'market' section")
    unknown = set(raw) - set(DEFAULTS) - {"market"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    m = cfg["market"]
    agents_raw = m.get("agents")
    if not agents_raw:
        raise ConfigError("market.agents: at least one agent is required")
    agents = []
    for i, a in enumerate(agents_raw):
        if "gamma" not in a:
            raise ConfigError(f"market.agents[{i}].gamma: missing")
        gamma = _field(f"market.agents[{i}].gamma", lambda: float(a["gamma"]))
        if not gamma > 0:
            raise ConfigError(f"market.agents[{i}].gamma: must be positive, got {gamma}")
        endow = _field(f"market.agents[{i}].endowment",
                       lambda: Endowment.from_config(a.get("endowment", 0.0)))
        agents.append(AgentSpec(gamma, endow, str(a.get("name", f"agent{i}"))))
    market = _field("market", lambda: MarketSpec(float(m["mu"]), float(m["T"]), agents))

    g = cfg["grid"]
    hw = default_half_width(market.T, market.support_scale())
    x_min = -hw if g["x_min"] is None else g["x_min"]
    x_max = hw if g["x_max"] is None else g["x_max"]
    grid = _field("grid", lambda: GridSpec(market.T, float(x_min), float(x_max), int(g["nt"]),
                                           int(g["nx"]), float(g["alpha"])))

    s = cfg["solver"]
    if s["scheme"] not in ("implicit", "cn", "crank_nicolson"):
        raise ConfigError(f"solver.scheme: expected implicit or cn, got {s['scheme']!r}")
    if s["mode"] not in ("newton", "picard"):
        raise ConfigError(f"solver.mode: expected newton or picard, got {s['mode']!r}")
    for key, lo in (("tol", 0.0), ("damping", 0.0)):
        if not float(s[key]) > lo:
            raise ConfigError(f"solver.{key}: must be positive, got {s[key]}")
    if float(s["damping"]) > 1:
        raise ConfigError(f"solver.damping: must not exceed 1, got {s['damping']}")
    if int(s["max_iter"]) < 1:
        raise ConfigError(f"solver.max_iter: must be at least 1, got {s['max_iter']}")
    solver = {"scheme": s["scheme"], "mode": s["mode"], "tol": float(s["tol"]),
              "max_iter": int(s["max_iter"]), "damping": float(s["damping"]),
              "n_jobs": int(s["n_jobs"])}

    mc_raw = cfg["mc"]
    n_steps = grid.nt if mc_raw["n_steps"] is None else int(mc_raw["n_steps"])
    if n_steps != grid.nt:
        raise ConfigError(f"mc.n_steps: must equal grid.nt ({grid.nt}), got {n_steps}")
    mc = _field("mc", lambda: SimConfig(int(mc_raw["n_paths"]), n_steps, int(mc_raw["seed"]),
                                        float(mc_raw["x0"])))
    lam0 = _field("solve.lambda", lambda: float(cfg["solve"]["lambda"]))
    return RunConfig(market, grid, solver, mc, lam0, str(cfg["output"]["dir"]), raw)


def load_config(path, flags: dict | None = None, environ=None) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return build_config(apply_overrides(raw, flags, environ))
