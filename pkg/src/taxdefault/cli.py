"""Batch front door: solve, simulate and emit machine-readable artifacts.

Every command resolves one configuration (defaults <- TOML <- KEY=VALUE
overrides), writes versioned outputs stamped with the config hash and seed
into the output directory, and exits nonzero with a JSON error report on any
failure.  Re-running a command with identical inputs reproduces the output
files byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import serialize
from .config import (
    ConfigError,
    config_hash,
    load_config,
    make_params,
    make_reneg_params,
    make_solver_options,
    output_dir,
)
from .model import validate_implementability
from .sim import (
    episode_windows,
    impulse_response,
    mc_moments,
    renegotiation_table,
    simulate,
    stream_paths,
)
from .solver_amss import solve_amss
from .solver_ed import SolverError, check_no_fund_raising, solve, validate_solution

COMMANDS = (
    "solve",
    "solve-amss",
    "simulate",
    "moments",
    "irf",
    "episodes",
    "reneg-table",
    "validate",
)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="taxdefault",
        description="Optimal fiscal policy with defaultable debt: solver and experiments.",
    )
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, default=None, help="TOML config file")
    ap.add_argument("--out", type=str, default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="master seed override")
    ap.add_argument("--threads", type=int, default=None, help="numba thread count (0 = all)")
    ap.add_argument("overrides", nargs="*", help="KEY=VALUE config overrides, e.g. offers.arrival=0.2")
    return ap


def _set_threads(n: int):
    if n and n > 0:
        import numba

        numba.set_num_threads(n)


def _solution_paths(out: Path):
    return out / "solution_ed.npz", out / "solution_amss.npz"


def _get_ed(cfg, chash, out, opts):
    path = _solution_paths(out)[0]
    if path.exists():
        sol, stored_cfg = serialize.load_solution(path)
        if config_hash(stored_cfg) == chash:
            return sol
    sol = solve(make_params(cfg), opts)
    serialize.save_solution(sol, path, cfg, chash)
    return sol


def _get_amss(cfg, chash, out, opts):
    path = _solution_paths(out)[1]
    if path.exists():
        sol, stored_cfg = serialize.load_solution(path)
        if config_hash(stored_cfg) == chash:
            return sol
    limits = (cfg["amss"]["b_min"], cfg["amss"]["b_max"])
    sol = solve_amss(make_params(cfg), limits=limits, options=opts)
    serialize.save_solution(sol, path, cfg, chash)
    return sol


def _paper_g_path(cfg):
    ex = cfg["experiments"]
    path = np.full(int(ex["irf_length"]), ex["irf_g_low"])
    path[int(ex["irf_high_start"]) : int(ex["irf_high_end"]) + 1] = ex["irf_g_high"]
    return path


def run(command: str, cfg: dict, out: Path, threads: int = 0) -> dict:
    """Execute one command; returns a manifest of written artifacts."""
    _set_threads(threads)
    chash = config_hash(cfg)
    seed = int(cfg["seed"])
    opts = make_solver_options(cfg)
    sim_cfg = cfg["simulation"]
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []

    if command == "solve":
        sol = solve(make_params(cfg), opts)
        serialize.save_solution(sol, _solution_paths(out)[0], cfg, chash)
        artifacts.append(str(_solution_paths(out)[0]))
        artifacts += [str(p) for p in serialize.solution_to_csvs(sol, out, "solution_ed", chash, seed)]
        log = {
            "converged": sol.converged.converged,
            "outer_iterations": sol.converged.outer_iterations,
            "final_price_residual": sol.converged.final_price_residual,
            "final_value_delta": sol.converged.final_value_delta,
            "improvement_sweeps": sol.converged.improvement_sweeps,
            "wall_time": sol.converged.wall_time,
            "threshold_violations": len(sol.threshold_violations),
            "residual_history": sol.converged.price_residuals,
        }
        (out / "convergence_ed.json").write_text(json.dumps(log, indent=2))
        artifacts.append(str(out / "convergence_ed.json"))

    elif command == "solve-amss":
        limits = (cfg["amss"]["b_min"], cfg["amss"]["b_max"])
        sol = solve_amss(make_params(cfg), limits=limits, options=opts)
        serialize.save_solution(sol, _solution_paths(out)[1], cfg, chash)
        artifacts.append(str(_solution_paths(out)[1]))
        artifacts += [str(p) for p in serialize.solution_to_csvs(sol, out, "solution_amss", chash, seed)]

    elif command == "simulate":
        sol = _get_ed(cfg, chash, out, opts)
        path = simulate(sol, int(sim_cfg["horizon"]), int(sim_cfg["burn_in"]), seed)
        artifacts.append(str(serialize.path_to_csv(path, out / "path_ed.csv", chash, seed)))

    elif command == "moments":
        sol = _get_ed(cfg, chash, out, opts)
        amss = _get_amss(cfg, chash, out, opts)
        report = mc_moments(
            sol, amss,
            n_reps=int(sim_cfg["n_reps"]),
            horizon=int(sim_cfg["horizon"]),
            burn_in=int(sim_cfg["burn_in"]),
            master_seed=seed,
            spread_filter=sim_cfg["spread_filter"],
            n_bins=int(sim_cfg["n_bins"]),
            ratio_max=sim_cfg["ratio_max"],
        )
        artifacts += [str(p) for p in serialize.moments_to_csvs(report, out, chash, seed)]

    elif command == "irf":
        sol = _get_ed(cfg, chash, out, opts)
        amss = _get_amss(cfg, chash, out, opts)
        irf = impulse_response(sol, amss, _paper_g_path(cfg))
        artifacts.append(str(serialize.irf_to_csv(irf, out / "irf.csv", chash, seed)))

    elif command == "episodes":
        sol = _get_ed(cfg, chash, out, opts)
        amss = _get_amss(cfg, chash, out, opts)
        ex = cfg["experiments"]
        panels = episode_windows(
            sol, amss,
            stream_paths(sol, amss, int(sim_cfg["n_reps"]), int(sim_cfg["horizon"]), int(sim_cfg["burn_in"]), seed),
            window=int(ex["episode_window"]),
            pre_access=int(ex["episode_pre_access"]),
            post_autarky=int(ex["episode_post_autarky"]),
            max_episodes=int(ex["episode_max"]),
        )
        artifacts.append(str(serialize.episodes_to_csv(panels, out / "episodes.csv", chash, seed)))

    elif command == "reneg-table":
        ex = cfg["experiments"]
        rows = renegotiation_table(
            lambda lam: make_reneg_params(cfg, lam),
            ex["reneg_lambdas"],
            n_reps=int(sim_cfg["n_reps"]),
            horizon=int(sim_cfg["horizon"]),
            burn_in=int(sim_cfg["burn_in"]),
            master_seed=seed,
            options=opts,
        )
        artifacts.append(str(serialize.reneg_rows_to_csv(rows, out / "reneg_table.csv", chash, seed)))

    elif command == "validate":
        ed_path = _solution_paths(out)[0]
        if not ed_path.exists():
            raise FileNotFoundError(f"no stored solution at {ed_path}; run `solve` first")
        sol, stored_cfg = serialize.load_solution(ed_path)
        checks = validate_solution(sol)
        violations, _ = check_no_fund_raising(sol)
        checks["no_fund_raising_violations"] = len(violations)
        path = simulate(sol, int(sim_cfg["horizon"]), int(sim_cfg["burn_in"]), seed)
        report = validate_implementability(path, sol, tol=1e-9)
        checks["implementability_ok"] = report.ok
        checks["implementability_violations"] = len(report.violations)
        checks["max_budget_shortfall"] = report.max_shortfall
        checks["ok"] = bool(checks["ok"] and report.ok)
        (out / "validation.json").write_text(json.dumps(checks, indent=2, sort_keys=True))
        artifacts.append(str(out / "validation.json"))
        if not checks["ok"]:
            raise RuntimeError(f"validation failed: see {out / 'validation.json'}")

    manifest = {
        "command": command,
        "config_hash": chash,
        "seed": seed,
        "artifacts": artifacts,
    }
    (out / f"manifest_{command.replace('-', '_')}.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None:
            cfg["threads"] = args.threads
        out = output_dir(cfg, args.out)
        run(args.command, cfg, out, threads=int(cfg["threads"]))
    except (ConfigError, SolverError, FileNotFoundError, RuntimeError, ValueError) as exc:
        report = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, SolverError):
            report["residuals"] = exc.residuals[-20:]
        print(json.dumps(report), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
