import json
import math

import numpy as np
import pytest
import yaml

import radnereq.cli as cli
from radnereq.cli import main
from radnereq.config import ConfigError, apply_overrides, build_config, load_config
from radnereq.grid import field_from_csv
from radnereq.pde import SolverError


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def base_cfg(tmp_path, **over):
    cfg = {
        "market": {"mu": 0.5, "T": 0.25, "agents": [
            {"gamma": 1.0, "name": "a", "endowment": {"both": {"kind": "tanh", "c": 1.0, "s": 1.0}}}]},
        "grid": {"nt": 20, "nx": 30, "x_min": -5.0, "x_max": 5.0},
        "solver": {"tol": 1e-9},
        "mc": {"n_paths": 4000, "seed": 7},
        "output": {"dir": str(tmp_path / "out")},
    }
    for key, val in over.items():
        cfg[key] = val
    return cfg


def constant_market():
    return {"mu": 0.5, "T": 0.5, "agents": [
        {"gamma": 1.0, "endowment": 1.0}, {"gamma": 2.0, "endowment": {"both": {"kind": "constant", "c": -1}}}]}


def test_solve_constant_market_writes_zero_pi(tmp_path):
    cfg = write_cfg(tmp_path, base_cfg(tmp_path, market=constant_market()))
    assert main(["solve", "--config", cfg]) == 0
    for i in (0, 1):
        pi = field_from_csv(tmp_path / "out" / f"agent{i}_pi.csv")
        assert np.max(np.abs(pi.values)) <= 1e-12


def test_solve_heat_config_matches_closed_form(tmp_path):
    cfg = base_cfg(tmp_path, market={"mu": 0.3, "T": 0.5, "agents": [
        {"gamma": 1.0, "endowment": {"both": {"kind": "damped_cos", "c": 1.0, "k": 1.0, "s": 0.0}}}]},
        grid={"nt": 200, "nx": 200, "x_min": -4 * math.pi, "x_max": 4 * math.pi})
    assert main(["solve", "--config", write_cfg(tmp_path, cfg)]) == 0
    u = field_from_csv(tmp_path / "out" / "agent0_u.csv")
    g = u.grid
    exact = np.exp(-(g.T - g.t)[:, None] / 2) * np.cos(g.x)[None, :]
    central = np.abs(g.x) <= 2 * math.pi
    assert np.max(np.abs(u.values[:, central, :] - exact[:, central, None])) <= 2e-3


def test_solve_round_trip_is_exact(tmp_path):
    cfg_path = write_cfg(tmp_path, base_cfg(tmp_path, solve={"lambda": 0.3}))
    assert main(["solve", "--config", cfg_path]) == 0
    cfg = load_config(cfg_path)
    from radnereq.equilibrium import solve_agents
    from radnereq.grid import SlicedField
    sols = solve_agents(SlicedField.constant(cfg.grid, 0.3), cfg.market, cfg.grid, 1e-10)
    for name in ("u", "u_x", "pi"):
        back = field_from_csv(tmp_path / "out" / f"agent0_{name}.csv")
        np.testing.assert_array_equal(back.values, getattr(sols[0], name).values)
    first = (tmp_path / "out" / "agent0_u.csv").read_text().splitlines()[0]
    assert first.startswith("# ") and "config_sha256=" in first and "version=" in first


@pytest.mark.parametrize("gamma", [0.0, -1.0])
def test_invalid_gamma_exit_2(tmp_path, capsys, gamma):
    cfg = base_cfg(tmp_path)
    cfg["market"]["agents"][0]["gamma"] = gamma
    assert main(["equilibrate", "--config", write_cfg(tmp_path, cfg)]) == 2
    assert "market.agents[0].gamma" in capsys.readouterr().err


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(extra={}),
    lambda c: c["grid"].update(nx=1),
    lambda c: c["solver"].update(scheme="rk4"),
    lambda c: c["solver"].update(damping=2.0),
    lambda c: c["mc"].update(n_steps=7),
    lambda c: c["market"]["agents"][0].update(endowment={"both": {"kind": "nope"}}),
    lambda c: c.pop("market"),
])
def test_config_errors_exit_2(tmp_path, mutate):
    cfg = base_cfg(tmp_path)
    mutate(cfg)
    assert main(["solve", "--config", write_cfg(tmp_path, cfg)]) == 2


def test_unreadable_config_exit_2(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("market: [1, 2\n")
    assert main(["solve", "--config", str(bad)]) == 2


def test_equilibrate_constant_market(tmp_path):
    cfg = write_cfg(tmp_path, base_cfg(tmp_path, market=constant_market()))
    assert main(["equilibrate", "--config", cfg]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["converged"] and summary["iterations"] == 1
    assert summary["_meta"]["config_sha256"] and summary["gamma_bar"] == pytest.approx(2 / 3)
    assert main(["equilibrate", "--config", cfg, "--tol", "1e6", "--max-iter", "1"]) == 0


def test_equilibrate_outputs_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path, base_cfg(tmp_path))
    out = tmp_path / "out"
    assert main(["equilibrate", "--config", cfg]) == 0
    names = ["lambda_star.csv", "agent0_u.csv", "agent0_u_x.csv", "agent0_pi.csv",
             "iterations.csv", "summary.json"]
    first = {n: (out / n).read_bytes() for n in names}
    log = first["iterations.csv"].decode().splitlines()
    assert log[0].startswith("# ") and log[1] == "iter,sup_residual,holder_residual,ratio,clearing_residual"
    summary = json.loads(first["summary.json"])
    assert set(summary) >= {"converged", "iterations", "R0", "gamma_bar", "max_ratio", "clearing_residual"}
    assert len(log) == 2 + summary["iterations"]
    assert main(["equilibrate", "--config", cfg]) == 0
    assert {n: (out / n).read_bytes() for n in names} == first


def test_not_converged_exit_4(tmp_path):
    cfg = write_cfg(tmp_path, base_cfg(tmp_path))
    assert main(["equilibrate", "--config", cfg, "--max-iter", "1", "--tol", "1e-15"]) == 4
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["converged"] is False and summary["iterations"] == 1


def test_solver_failure_exit_3(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise SolverError("agent a, slice n=0: Newton did not converge")

    monkeypatch.setattr(cli, "solve_agents", boom)
    assert main(["solve", "--config", write_cfg(tmp_path, base_cfg(tmp_path))]) == 3
    assert "slice n=0" in capsys.readouterr().err


def test_verify_flow(tmp_path):
    cfg = write_cfg(tmp_path, base_cfg(tmp_path))
    assert main(["verify", "--config", cfg, "--results", str(tmp_path / "nowhere")]) == 2
    assert main(["equilibrate", "--config", cfg]) == 0
    assert main(["verify", "--config", cfg]) == 0
    report = (tmp_path / "out" / "verify_report.txt").read_text().splitlines()
    assert report[0].startswith("# ") and "all_pass=True" in report
    kv = dict(line.split("=", 1) for line in report[1:])
    assert kv["seed"] == "7" and kv["agent0_value_pass"] == "True"
    assert {"agent0_one_eps0.25_pass", "agent0_tanh_eps0.5_pass", "agent0_sin_bump_eps0.5_pass"} <= set(kv)


def test_verify_statistical_failure_exit_5(tmp_path):
    cfg = write_cfg(tmp_path, base_cfg(tmp_path))
    assert main(["equilibrate", "--config", cfg]) == 0
    pi_path = tmp_path / "out" / "agent0_pi.csv"
    lines = pi_path.read_text().splitlines()
    shifted = lines[:2] + [",".join(row.split(",")[:3] + [repr(float(row.split(",")[3]) + 1.0)])
                           for row in lines[2:]]
    pi_path.write_text("\n".join(shifted) + "\n")
    assert main(["verify", "--config", cfg]) == 5
    assert "clearing_pass=False" in (tmp_path / "out" / "verify_report.txt").read_text()


def test_override_precedence(tmp_path):
    raw = base_cfg(tmp_path)
    env = {"RADNEREQ_TOL": "1e-5", "RADNEREQ_SEED": "3", "RADNEREQ_SCHEME": "cn"}
    merged = apply_overrides(raw, {"tol": 1e-6}, env)
    cfg = build_config(merged)
    assert cfg.solver["tol"] == 1e-6 and cfg.mc.seed == 3 and cfg.solver["scheme"] == "cn"
    assert build_config(apply_overrides(raw, {}, {})).solver["tol"] == 1e-9
    with pytest.raises(ConfigError, match="RADNEREQ_MAX_ITER"):
        apply_overrides(raw, {}, {"RADNEREQ_MAX_ITER": "many"})


def test_env_override_through_main(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, base_cfg(tmp_path))
    monkeypatch.setenv("RADNEREQ_OUT", str(tmp_path / "env_out"))
    assert main(["solve", "--config", cfg]) == 0
    assert (tmp_path / "env_out" / "agent0_u.csv").exists()
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "flag_out")]) == 0
    assert (tmp_path / "flag_out" / "agent0_u.csv").exists()


def test_default_domain_and_steps(tmp_path):
    raw = base_cfg(tmp_path)
    raw["grid"] = {"nt": 10, "nx": 20}
    cfg = build_config(raw)
    assert cfg.grid.x_max == -cfg.grid.x_min > 0 and cfg.mc.n_steps == 10


def test_readme_example_configs_build():
    import pathlib
    import re

    from radnereq.config import build_config

    text = (pathlib.Path(__file__).parents[1] / "README.md").read_text()
    blocks = [yaml.safe_load(b) for b in re.findall(r"```yaml\n(.*?)```", text, re.S)]
    examples = [b for b in blocks if isinstance(b.get("market", {}).get("agents"), list)]
    assert len(examples) == 6
    for raw in examples:
        build_config(raw)


def test_config_hash_ignores_output_dir_only():
    from radnereq.config import build_config

    raw = {"market": {"mu": 0.5, "T": 0.25, "agents": [{"gamma": 1.0}]}}
    base = build_config(raw).sha256
    assert build_config({**raw, "output": {"dir": "elsewhere"}}).sha256 == base
    assert build_config({**raw, "solver": {"tol": 1e-6}}).sha256 != base
