"""Run configuration: defaults, TOML ingestion, validation and hashing.

One config file fully determines a run.  Unknown keys are rejected so typos
fail loudly; every value is range-checked before any compute starts.  The
shipped defaults reproduce the benchmark experiments; see README for the
calibration notes behind the shock-scale default.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .model import Preferences
from .params import EconomyParams, SolverOptions
from .stochastic import DebtGrid, OfferSchedule, tauchen

__all__ = [
    "DEFAULTS",
    "ConfigError",
    "config_hash",
    "load_config",
    "make_params",
    "make_reneg_params",
    "make_solver_options",
    "output_dir",
]

ENV_OUTPUT_DIR = "TAXDEFAULT_OUTDIR"

DEFAULTS = {
    "preferences": {"beta": 0.97, "sigma": 2.0, "c1": 0.15, "kappa": 0.998},
    "shock": {
        "mean": 0.114,
        "mean_is_level": True,
        "rho": 0.56,
        # grid half-width 0.66 in logs at span 1.75; the innovation scale is
        # backed out from the spending states the benchmark experiments use
        # rather than taken literally from the quoted AR(1) fit
        "sigma_eps": 0.31246006895902323,
        "n_states": 11,
        "span": 1.75,
    },
    "offers": {"arrival": 0.47, "delta_min": 0.10, "delta_max": 0.55, "n_offers": 10},
    "debt_grid": {"b_min": 0.0, "b_max": 0.4, "n_points": 800},
    "solver": {
        "damping": 0.5,
        "tol_price": 1e-10,
        "tol_value": 1e-9,
        "max_outer": 500,
        "howard_steps": 80,
        "hysteresis": 1e-7,
        "tie_tol": 1e-11,
    },
    "amss": {"b_min": 0.0, "b_max": 0.4},
    "simulation": {
        "n_reps": 500,
        "horizon": 2500,
        "burn_in": 500,
        "spread_filter": 0.5,
        "n_bins": 100,
        "ratio_max": 1.0,
    },
    "experiments": {
        "reneg_lambdas": [0.2, 0.4, 0.6, 0.8, 1.0],
        "reneg_delta_min": 0.45,
        "reneg_delta_max": 0.90,
        "irf_g_low": 0.0915,
        "irf_g_high": 0.159,
        "irf_high_start": 2,
        "irf_high_end": 4,
        "irf_length": 25,
        "episode_window": 4,
        "episode_pre_access": 6,
        "episode_post_autarky": 4,
        "episode_max": 1000,
    },
    "output": {"directory": ""},
    "seed": 20260810,
    "threads": 0,
}


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


def _merge(base: dict, incoming: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in incoming.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a table")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _validate(cfg: dict):
    pr = cfg["preferences"]
    _require(0.0 < pr["beta"] < 1.0, f"preferences.beta must be in (0,1), got {pr['beta']}")
    _require(pr["sigma"] > 0.0 and pr["sigma"] != 1.0, "preferences.sigma must be > 0 and != 1")
    _require(0.0 < pr["c1"] < 1.0, "preferences.c1 must be in (0,1)")
    _require(0.0 < pr["kappa"] <= 1.0, "preferences.kappa must be in (0,1]")
    sh = cfg["shock"]
    _require(abs(sh["rho"]) < 1.0, "shock.rho must satisfy |rho| < 1")
    _require(sh["sigma_eps"] > 0.0, "shock.sigma_eps must be positive")
    _require(int(sh["n_states"]) >= 2, "shock.n_states must be >= 2")
    _require(sh["span"] > 0.0, "shock.span must be positive")
    _require(sh["mean"] > 0.0 if sh["mean_is_level"] else True, "shock.mean level must be positive")
    of = cfg["offers"]
    _require(0.0 <= of["arrival"] <= 1.0, "offers.arrival must be in [0,1]")
    _require(0.0 < of["delta_min"] <= of["delta_max"] < 1.0, "offers.delta range must satisfy 0 < min <= max < 1")
    _require(int(of["n_offers"]) >= 1, "offers.n_offers must be >= 1")
    dg = cfg["debt_grid"]
    _require(dg["b_min"] == 0.0, "debt_grid.b_min must be 0 (grid must contain zero debt)")
    _require(dg["b_max"] > 0.0, "debt_grid.b_max must be positive")
    _require(int(dg["n_points"]) >= 2, "debt_grid.n_points must be >= 2")
    am = cfg["amss"]
    _require(dg["b_min"] <= am["b_min"] <= am["b_max"] <= dg["b_max"], "amss limits must lie inside the debt grid")
    so = cfg["solver"]
    _require(0.0 < so["damping"] <= 1.0, "solver.damping must be in (0,1]")
    _require(so["tol_price"] > 0.0 and so["tol_value"] > 0.0, "solver tolerances must be positive")
    si = cfg["simulation"]
    _require(si["horizon"] > si["burn_in"] >= 0, "simulation.horizon must exceed burn_in")
    _require(si["n_reps"] >= 1, "simulation.n_reps must be >= 1")
    ex = cfg["experiments"]
    _require(all(0.0 < l <= 1.0 for l in ex["reneg_lambdas"]), "experiments.reneg_lambdas must be in (0,1]")
    _require(0.0 < ex["reneg_delta_min"] <= ex["reneg_delta_max"] < 1.0, "experiments.reneg delta range invalid")
    _require(ex["irf_length"] > ex["irf_high_end"] >= ex["irf_high_start"] >= 0, "experiments.irf window invalid")
    _require(int(cfg["seed"]) >= 0, "seed must be nonnegative")
    _require(int(cfg["threads"]) >= 0, "threads must be nonnegative")


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not KEY=VALUE")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare string
    node: dict = {}
    leaf = node
    parts = key.split(".")
    for part in parts[:-1]:
        leaf[part] = {}
        leaf = leaf[part]
    leaf[parts[-1]] = value
    return node


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> dict:
    """Resolve defaults, optional TOML file and KEY=VALUE overrides, validated."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        cfg = _merge(cfg, data)
    for text in overrides or []:
        cfg = _merge(cfg, _parse_override(text))
    _validate(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    """Short stable digest of the resolved configuration."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def make_params(cfg: dict) -> EconomyParams:
    pr = cfg["preferences"]
    prefs = Preferences(c1=pr["c1"], sigma=pr["sigma"], beta=pr["beta"], kappa=pr["kappa"])
    sh = cfg["shock"]
    mu_log = math.log(sh["mean"]) if sh["mean_is_level"] else sh["mean"]
    chain = tauchen(mu_log, sh["rho"], sh["sigma_eps"], int(sh["n_states"]), span=sh["span"])
    of = cfg["offers"]
    if int(of["n_offers"]) == 1:
        offers = OfferSchedule(lam=of["arrival"], deltas=np.array([of["delta_min"]]), probs=np.array([1.0]))
    else:
        offers = OfferSchedule.equidistant(of["arrival"], of["delta_min"], of["delta_max"], int(of["n_offers"]))
    dg = cfg["debt_grid"]
    debt = DebtGrid.uniform(dg["b_min"], dg["b_max"], int(dg["n_points"]))
    return EconomyParams(prefs=prefs, chain=chain, offers=offers, debt=debt)


def make_reneg_params(cfg: dict, lam: float) -> EconomyParams:
    """Economy for one renegotiation-table run: same fundamentals, the
    experiment's own offer lattice and arrival probability."""
    sub = copy.deepcopy(cfg)
    sub["offers"] = {
        "arrival": lam,
        "delta_min": cfg["experiments"]["reneg_delta_min"],
        "delta_max": cfg["experiments"]["reneg_delta_max"],
        "n_offers": cfg["offers"]["n_offers"],
    }
    return make_params(sub)


def make_solver_options(cfg: dict) -> SolverOptions:
    so = cfg["solver"]
    return SolverOptions(
        damping=so["damping"],
        tol_price=so["tol_price"],
        tol_value=so["tol_value"],
        max_outer=int(so["max_outer"]),
        howard_steps=int(so["howard_steps"]),
        hysteresis=so["hysteresis"],
        tie_tol=so["tie_tol"],
    )


def output_dir(cfg: dict, cli_out: str | None) -> Path:
    """CLI flag wins, then config, then the environment variable, then ./out."""
    for candidate in (cli_out, cfg["output"]["directory"], os.environ.get(ENV_OUTPUT_DIR)):
        if candidate:
            return Path(candidate)
    return Path("out")
