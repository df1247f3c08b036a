"""CSV and binary serialization of solutions, paths and reports.

All CSVs carry one comment line with the schema version, config hash and
seed, then a single header row; floats print with 17 significant digits so a
round-trip through text is lossless.  Re-running with identical inputs
reproduces the files byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import make_params, make_solver_options
from .sim import EpisodePanels, ImpulseResponse, MomentReport, SimPath
from .solver_amss import AMSSSolution
from .solver_ed import ConvergenceInfo, EDSolution

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "episodes_to_csv",
    "fmt",
    "irf_to_csv",
    "load_solution",
    "moments_to_csvs",
    "path_to_csv",
    "reneg_rows_to_csv",
    "save_solution",
    "solution_to_csvs",
    "write_csv",
]


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, header, rows, config_hash: str, seed: int):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# taxdefault schema={SCHEMA_VERSION} config={config_hash} seed={seed}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


# -- solution bundles ----------------------------------------------------------


def save_solution(solution, path: Path, cfg: dict, config_hash: str):
    """Binary bundle: arrays plus the resolved config that rebuilds params."""
    payload = {
        "schema": np.int64(SCHEMA_VERSION),
        "config_json": np.frombuffer(json.dumps(cfg, sort_keys=True).encode(), dtype=np.uint8),
        "config_hash": np.frombuffer(config_hash.encode(), dtype=np.uint8),
    }
    if isinstance(solution, EDSolution):
        payload["kind"] = np.frombuffer(b"ed", dtype=np.uint8)
        arrays = dict(
            v_repay=solution.v_repay,
            v_autarky=solution.v_autarky,
            price_repay=solution.price_repay,
            price_autarky=solution.price_autarky,
            policy_debt=solution.policy_debt,
            policy_revenue=solution.policy_revenue,
            policy_labor=solution.policy_labor,
            policy_tax=solution.policy_tax,
            policy_multiplier=solution.policy_multiplier,
            default=solution.default,
            accept=solution.accept,
            labor_autarky=solution.labor_autarky,
            tax_autarky=solution.tax_autarky,
            multiplier_autarky=solution.multiplier_autarky,
            threshold_g=solution.threshold_g,
            threshold_delta=solution.threshold_delta,
            allow_default=np.array([solution.allow_default]),
        )
    elif isinstance(solution, AMSSSolution):
        payload["kind"] = np.frombuffer(b"am", dtype=np.uint8)
        arrays = dict(
            value=solution.value,
            policy_debt=solution.policy_debt,
            policy_revenue=solution.policy_revenue,
            policy_labor=solution.policy_labor,
            policy_tax=solution.policy_tax,
            policy_multiplier=solution.policy_multiplier,
            limits=np.array(solution.limits),
        )
    else:
        raise TypeError(f"unsupported solution type {type(solution)!r}")
    payload.update(arrays)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, **payload)


def load_solution(path: Path):
    """Rebuild a solution object (and its params) from a binary bundle."""
    with np.load(path) as data:
        cfg = json.loads(bytes(data["config_json"]).decode())
        kind = bytes(data["kind"]).decode()
        params = make_params(cfg)
        opts = make_solver_options(cfg)
        info = ConvergenceInfo(True, 0, [], 0.0, 0.0, 0, 0.0)
        if kind == "ed":
            from .solver_ed import extract_thresholds

            default = data["default"].astype(bool)
            accept = data["accept"].astype(bool)
            _, _, violations = extract_thresholds(default, accept, params.chain, params.offers)
            sol = EDSolution(
                params=params,
                v_repay=data["v_repay"],
                v_autarky=data["v_autarky"],
                price_repay=data["price_repay"],
                price_autarky=data["price_autarky"],
                policy_debt=data["policy_debt"],
                policy_revenue=data["policy_revenue"],
                policy_labor=data["policy_labor"],
                policy_tax=data["policy_tax"],
                policy_multiplier=data["policy_multiplier"],
                default=default,
                accept=accept,
                labor_autarky=data["labor_autarky"],
                tax_autarky=data["tax_autarky"],
                multiplier_autarky=data["multiplier_autarky"],
                threshold_g=data["threshold_g"],
                threshold_delta=data["threshold_delta"],
                threshold_violations=violations,
                allow_default=bool(data["allow_default"][0]),
                converged=info,
                options=opts,
            )
        elif kind == "am":
            sol = AMSSSolution(
                params=params,
                value=data["value"],
                policy_debt=data["policy_debt"],
                policy_revenue=data["policy_revenue"],
                policy_labor=data["policy_labor"],
                policy_tax=data["policy_tax"],
                policy_multiplier=data["policy_multiplier"],
                limits=tuple(data["limits"]),
                converged=info,
                options=opts,
            )
        else:
            raise ValueError(f"unknown bundle kind {kind!r}")
    return sol, cfg


def solution_to_csvs(solution, out_dir: Path, stem: str, config_hash: str, seed: int):
    """Long-format CSV bundle: one row per (g, B) cell plus an accept table."""
    out_dir = Path(out_dir)
    params = solution.params
    g = params.chain.g_values
    b = params.debt.b_values
    ng, nb = params.n_g, params.n_b
    paths = []
    if isinstance(solution, EDSolution):
        header = [
            "g_index", "g_value", "b_index", "b_value",
            "v_repay", "v_autarky", "price_repay", "price_autarky",
            "policy_debt", "policy_revenue", "policy_tax", "default",
        ]
        rows = (
            [
                ig, g[ig], ib, b[ib],
                solution.v_repay[ig, ib], solution.v_autarky[ig, ib],
                solution.price_repay[ig, ib], solution.price_autarky[ig, ib],
                solution.policy_debt[ig, ib], solution.policy_revenue[ig, ib],
                solution.policy_tax[ig, ib], solution.default[ig, ib],
            ]
            for ig in range(ng)
            for ib in range(nb)
        )
        paths.append(write_csv(out_dir / f"{stem}_tables.csv", header, rows, config_hash, seed))
        header_a = ["g_index", "delta_index", "delta", "b_index", "b_value", "accept"]
        rows_a = (
            [ig, k, params.offers.deltas[k], ib, b[ib], solution.accept[ig, k, ib]]
            for ig in range(ng)
            for k in range(params.n_offers)
            for ib in range(nb)
        )
        paths.append(write_csv(out_dir / f"{stem}_accept.csv", header_a, rows_a, config_hash, seed))
    else:
        header = [
            "g_index", "g_value", "b_index", "b_value",
            "value", "policy_debt", "policy_revenue", "policy_tax",
        ]
        rows = (
            [
                ig, g[ig], ib, b[ib],
                solution.value[ig, ib], solution.policy_debt[ig, ib],
                solution.policy_revenue[ig, ib], solution.policy_tax[ig, ib],
            ]
            for ig in range(ng)
            for ib in range(nb)
        )
        paths.append(write_csv(out_dir / f"{stem}_tables.csv", header, rows, config_hash, seed))
    return paths


# -- simulation artifacts --------------------------------------------------------


def path_to_csv(path_obj: SimPath, out_path: Path, config_hash: str, seed: int):
    header = [
        "t", "g_index", "g_value", "phi", "debt", "debt_next", "due", "delta",
        "default", "accept", "revenue", "tax", "labor", "output", "price",
        "spread", "transfer", "multiplier",
    ]
    rows = (
        [
            t, path_obj.g_index[t], path_obj.g_value[t], path_obj.phi[t],
            path_obj.debt[t], path_obj.debt_next[t], path_obj.due[t],
            path_obj.delta[t], path_obj.default[t], path_obj.accept[t],
            path_obj.revenue[t], path_obj.tax[t], path_obj.labor[t],
            path_obj.output[t], path_obj.price[t], path_obj.spread[t],
            path_obj.transfer[t], path_obj.multiplier[t],
        ]
        for t in range(path_obj.horizon)
    )
    return write_csv(out_path, header, rows, config_hash, seed)


def moments_to_csvs(report: MomentReport, out_dir: Path, config_hash: str, seed: int):
    out_dir = Path(out_dir)
    paths = []
    edges = report.hist_bin_edges
    header = ["g_index", "model", "bin_left", "bin_right", "mass", "bandwidth", "n_obs"]

    def hist_rows():
        for model, hist, bw, n in (
            ("ed", report.hist_ed, report.bandwidth_ed, report.hist_n_ed),
            ("amss", report.hist_amss, report.bandwidth_amss, report.hist_n_amss),
        ):
            for ig in range(hist.shape[0]):
                for k in range(hist.shape[1]):
                    yield [ig, model, edges[k], edges[k + 1], hist[ig, k], bw[ig], int(n[ig])]

    paths.append(write_csv(out_dir / "moments_hist.csv", header, hist_rows(), config_hash, seed))

    header_s = ["replication", "debt_class", "tax_sd", "mean_spread"]

    def scatter_rows():
        for r in range(report.scatter.shape[0]):
            for c, label in enumerate(("low", "high")):
                yield [r, label, report.scatter[r, c, 0], report.scatter[r, c, 1]]

    paths.append(write_csv(out_dir / "moments_scatter.csv", header_s, scatter_rows(), config_hash, seed))

    summary = {
        "schema": SCHEMA_VERSION,
        "config": config_hash,
        "seed": seed,
        "default_frequency": report.default_frequency,
        "debt_ratio_median": report.debt_ratio_median,
        "tax_sd_ed": report.tax_sd_ed,
        "tax_sd_amss": report.tax_sd_amss,
        "tax_sd_ratio": report.tax_sd_ratio,
        "meta": report.meta,
    }
    if report.reneg is not None:
        summary["renegotiation"] = {
            "lam": report.reneg.lam,
            "avg_accepted_delta": report.reneg.avg_accepted_delta,
            "avg_duration_high_debt": report.reneg.avg_duration_high_debt,
            "avg_duration_low_debt": report.reneg.avg_duration_low_debt,
            "n_spells": report.reneg.n_spells,
        }
    p = out_dir / "moments.json"
    p.write_text(json.dumps(summary, indent=2, sort_keys=True))
    paths.append(p)
    return paths


def irf_to_csv(irf: ImpulseResponse, out_path: Path, config_hash: str, seed: int):
    header = [
        "t", "g", "debt_ed", "debt_amss", "surplus_ed", "surplus_amss",
        "tax_ed", "tax_amss", "nu_ed", "nu_amss",
    ]
    rows = (
        [
            int(irf.t[i]), irf.g[i], irf.debt_ed[i], irf.debt_amss[i],
            irf.surplus_ed[i], irf.surplus_amss[i], irf.tax_ed[i],
            irf.tax_amss[i], irf.nu_ed[i], irf.nu_amss[i],
        ]
        for i in range(irf.t.size)
    )
    return write_csv(out_path, header, rows, config_hash, seed)


def episodes_to_csv(panels: EpisodePanels, out_path: Path, config_hash: str, seed: int):
    header = ["t_rel", "series", "median", "p25", "p75", "n_episodes"]
    series = [
        ("g", panels.g_median, panels.g_p25, panels.g_p75),
        ("tax_ed", panels.tax_ed_median, panels.tax_ed_p25, panels.tax_ed_p75),
        ("tax_amss", panels.tax_amss_median, panels.tax_amss_p25, panels.tax_amss_p75),
        ("tax_cf", panels.tax_cf_median, panels.tax_cf_p25, panels.tax_cf_p75),
    ]
    rows = (
        [int(panels.t_rel[i]), name, med[i], lo[i], hi[i], panels.n_episodes]
        for name, med, lo, hi in series
        for i in range(panels.t_rel.size)
    )
    return write_csv(out_path, header, rows, config_hash, seed)


def reneg_rows_to_csv(rows_in, out_path: Path, config_hash: str, seed: int):
    header = [
        "lam", "avg_accepted_delta", "avg_duration_high_debt",
        "avg_duration_low_debt", "n_spells",
    ]
    rows = (
        [r.lam, r.avg_accepted_delta, r.avg_duration_high_debt, r.avg_duration_low_debt, r.n_spells]
        for r in rows_in
    )
    return write_csv(out_path, header, rows, config_hash, seed)
