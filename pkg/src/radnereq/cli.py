"""Command-line front end: ``radnereq {solve,equilibrate,verify}``.

Exit codes: 0 success, 2 configuration error or missing result directory,
3 solver failure, 4 equilibrium not converged, 5 statistical check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .agent import AgentSolution
from .config import ConfigError, RunConfig, load_config
from .equilibrium import EquilibriumResult, find_equilibrium, smallness_diagnostics, solve_agents
from .grid import SlicedField, field_from_csv, field_from_function, field_to_csv
from .montecarlo import (
    jump_statistics,
    riskless_position,
    simulate_paths,
    verify_clearing_on_paths,
    verify_optimality,
    verify_value_identity,
)
from .pde import SolverError

log = logging.getLogger("radnereq")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_NOT_CONVERGED, EXIT_STATISTICAL = 0, 2, 3, 4, 5

PERTURBATION_EPS = (0.25, 0.5)


def _meta(cfg: RunConfig, kind: str) -> dict:
    return {"artifact": kind, "version": __version__, "config_sha256": cfg.sha256}


def _meta_line(meta: dict) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n"


def _write_agent_fields(cfg: RunConfig, out: str, solutions) -> None:
    for i, s in enumerate(solutions):
        for name in ("u", "u_x", "pi"):
            field_to_csv(getattr(s, name), os.path.join(out, f"agent{i}_{name}.csv"),
                         _meta(cfg, f"agent{i}_{name}"))


def run_solve(cfg: RunConfig) -> int:
    """Solve every agent at the constant price of risk ``solve.lambda``."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    lam = SlicedField.constant(cfg.grid, cfg.solve_lambda)
    s = cfg.solver
    sols = solve_agents(lam, cfg.market, cfg.grid, min(s["tol"], 1e-10), s["scheme"], s["mode"],
                        s["n_jobs"])
    _write_agent_fields(cfg, cfg.out_dir, sols)
    log.info("wrote fields for %d agents to %s", len(sols), cfg.out_dir)
    return EXIT_OK


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def run_equilibrate(cfg: RunConfig) -> int:
    """Fixed-point run; writes lambda*, agent fields, the iteration log and a summary."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    s = cfg.solver
    kw = {"scheme": s["scheme"], "mode": s["mode"], "n_jobs": s["n_jobs"]}
    result = find_equilibrium(cfg.market, cfg.grid, tol=s["tol"], max_iter=s["max_iter"],
                              damping=s["damping"], **kw)
    out = cfg.out_dir
    field_to_csv(result.lambda_star, os.path.join(out, "lambda_star.csv"), _meta(cfg, "lambda_star"))
    _write_agent_fields(cfg, out, result.agent_solutions)
    with open(os.path.join(out, "iterations.csv"), "w") as fh:
        fh.write(_meta_line(_meta(cfg, "iterations")))
        fh.write("iter,sup_residual,holder_residual,ratio,clearing_residual\n")
        for row in result.iteration_log_rows():
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    small = smallness_diagnostics(cfg.market, cfg.grid, result, **kw)
    summary = {
        "_meta": _meta(cfg, "summary"),
        "converged": result.converged,
        "iterations": result.iterations,
        "R0": small.R0,
        "all_iterates_in_ball": small.all_in_ball,
        "gamma_bar": cfg.market.gamma_bar,
        "max_ratio": result.max_ratio,
        "clearing_residual": result.clearing_residual,
        "final_residual": result.final_residual,
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, allow_nan=True)
        fh.write("\n")
    if not result.converged:
        log.error("fixed-point iteration did not converge after %d iterations", result.iterations)
        return EXIT_NOT_CONVERGED
    log.info("converged in %d iterations, clearing residual %.3e", result.iterations,
             result.clearing_residual)
    return EXIT_OK


def load_result(cfg: RunConfig, result_dir: str) -> EquilibriumResult:
    """Rebuild an :class:`EquilibriumResult` from the files of ``run_equilibrate``."""
    lam = field_from_csv(os.path.join(result_dir, "lambda_star.csv"))
    if lam.grid != cfg.grid:
        raise ConfigError(f"grid of {result_dir} does not match the config grid")
    sols = []
    for i in range(len(cfg.market.agents)):
        parts = [field_from_csv(os.path.join(result_dir, f"agent{i}_{n}.csv"))
                 for n in ("u", "u_x", "pi")]
        sols.append(AgentSolution(*parts))
    with open(os.path.join(result_dir, "summary.json")) as fh:
        summary = json.load(fh)
    return EquilibriumResult(lam, sols, int(summary["iterations"]),
                             clearing_residual=float(summary["clearing_residual"]),
                             converged=bool(summary["converged"]))


def perturbation_fields(grid):
    """Bounded perturbation directions ``1``, ``tanh(x)`` and ``sin(x) exp(-x^2)``."""
    return [
        ("one", SlicedField.constant(grid, 1.0)),
        ("tanh", field_from_function(lambda t, x, n: np.tanh(x), grid)),
        ("sin_bump", field_from_function(lambda t, x, n: np.sin(x) * np.exp(-x**2), grid)),
    ]


def run_verify(cfg: RunConfig, result_dir: str) -> int:
    """Monte Carlo checks of an emitted equilibrium; writes ``verify_report.txt``."""
    if not os.path.isdir(result_dir):
        log.error("result directory %s does not exist", result_dir)
        return EXIT_CONFIG
    try:
        result = load_result(cfg, result_dir)
    except (OSError, KeyError, ValueError) as exc:
        log.error("cannot load results from %s: %s", result_dir, exc)
        return EXIT_CONFIG
    market = cfg.market
    paths = simulate_paths(market.mu, market.T, cfg.mc)
    lam = result.lambda_star
    rows = [("n_paths", paths.n_paths), ("n_steps", paths.n_steps), ("seed", cfg.mc.seed)]
    ok = True

    jump = jump_statistics(paths, market.mu)
    rows += [("jump_fraction", jump.fraction), ("jump_expected", jump.expected),
             ("jump_stderr", jump.stderr), ("jump_pass", jump.passed)]
    ok &= jump.passed

    clear = verify_clearing_on_paths(result, paths)
    rows += [("clearing_max", clear.max_abs_sum), ("clearing_bound", clear.bound),
             ("clearing_pass", clear.passed)]
    ok &= clear.passed

    perts = perturbation_fields(cfg.grid)
    for i, (agent, sol) in enumerate(zip(market.agents, result.agent_solutions)):
        vc = verify_value_identity(sol, lam, agent, paths)
        rows += [(f"agent{i}_mc_utility", vc.mc_mean), (f"agent{i}_mc_stderr", vc.mc_stderr),
                 (f"agent{i}_pde_value", vc.pde_value), (f"agent{i}_value_z", vc.z),
                 (f"agent{i}_value_pass", vc.passed)]
        ok &= vc.passed
        rep = verify_optimality(sol, lam, agent, paths, perts, PERTURBATION_EPS)
        for c in rep.checks:
            key = f"agent{i}_{c.label}_eps{c.eps:g}"
            rows += [(f"{key}_diff", c.diff_mean), (f"{key}_stderr", c.diff_stderr),
                     (f"{key}_per_eps2", c.degradation_per_eps2), (f"{key}_pass", c.passed)]
        ok &= rep.passed
        try:
            rl = riskless_position(sol.pi, lam, paths)
            rows += [(f"agent{i}_riskless_identity_error", rl.identity_error),
                     (f"agent{i}_riskless_max_abs", rl.max_abs)]
        except ArithmeticError as exc:
            rows.append((f"agent{i}_riskless_identity_error", str(exc)))
            ok = False
    rows.append(("all_pass", bool(ok)))
    with open(os.path.join(result_dir, "verify_report.txt"), "w") as fh:
        fh.write(_meta_line(_meta(cfg, "verify_report")))
        for k, v in rows:
            fh.write(f"{k}={_fmt(v)}\n")
    if not ok:
        log.error("statistical verification failed; see verify_report.txt")
        return EXIT_STATISTICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radnereq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", type=int, dest="max_iter")
    common.add_argument("--damping", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--scheme", choices=["implicit", "cn"])
    common.add_argument("--mode", choices=["newton", "picard"])
    common.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("solve", parents=[common], help="solve all agents at a constant price of risk")
    sub.add_parser("equilibrate", parents=[common], help="compute the equilibrium price of risk")
    p = sub.add_parser("verify", parents=[common], help="Monte Carlo checks of an equilibrium")
    p.add_argument("--results", help="directory written by equilibrate (default: --out)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: getattr(args, k) for k in ("out", "tol", "max_iter", "damping", "seed",
                                           "scheme", "mode")}
    try:
        cfg = load_config(args.config, flags)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "solve":
            return run_solve(cfg)
        if args.command == "equilibrate":
            return run_equilibrate(cfg)
        return run_verify(cfg, args.results or cfg.out_dir)
    except (SolverError, FloatingPointError, OverflowError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
