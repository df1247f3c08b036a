"""Render publication-style figures from the solver toolkit's CSV artifacts.

Four figure kinds: conditional debt-ratio histogram panels (kernel-smoothed,
solid red vs dotted blue), a tax-volatility / spread scatter with one fitted
OLS line, stacked impulse-response panels, and default-episode window panels
with quartile bands.  Inputs must match the documented CSV schemas exactly; a
mismatch aborts with a descriptive message and no partial output.  Rendering
is deterministic: identical CSVs and options reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["SchemaError", "main", "render"]

# fixed savefig metadata so output bytes do not depend on the library version
_META = {"Software": "taxdefault-figures"}
_DPI = 150

KINDS = ("histogram-panel", "scatter-with-fit", "irf-panel", "episode-window-panel")

_SCHEMAS = {
    "histogram-panel": ["g_index", "model", "bin_left", "bin_right", "mass", "bandwidth", "n_obs"],
    "scatter-with-fit": ["replication", "debt_class", "tax_sd", "mean_spread"],
    "irf-panel": ["t", "g", "debt_ed", "debt_amss", "surplus_ed", "surplus_amss",
                  "tax_ed", "tax_amss", "nu_ed", "nu_amss"],
    "episode-window-panel": ["t_rel", "series", "median", "p25", "p75", "n_episodes"],
}


class SchemaError(ValueError):
    """Input CSV does not match the documented schema."""


class EmptyInputError(ValueError):
    """Degenerate input: structurally valid but holds no observations."""


def _read_csv(path: Path, kind: str) -> dict[str, list[str]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = rows[0]
    expected = _SCHEMAS[kind]
    if header != expected:
        raise SchemaError(
            f"{path}: header mismatch for kind {kind}: expected {expected}, got {header}"
        )
    cols: dict[str, list[str]] = {name: [] for name in header}
    for r in rows[1:]:
        if len(r) != len(header):
            raise SchemaError(f"{path}: ragged row {r}")
        for name, val in zip(header, r):
            cols[name].append(val)
    return cols


def _floats(col: list[str], path: Path, name: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in col])
    except ValueError as exc:
        raise SchemaError(f"{path}: column {name} is not numeric: {exc}") from exc


def _smooth(centers: np.ndarray, masses: np.ndarray, bandwidth: float, grid: np.ndarray) -> np.ndarray:
    """Gaussian-kernel density from binned masses, using the emitted bandwidth."""
    if bandwidth <= 0.0:
        bandwidth = max(1e-3, 0.5 * (centers[1] - centers[0]) if centers.size > 1 else 1e-3)
    z = (grid[:, None] - centers[None, :]) / bandwidth
    dens = (masses[None, :] * np.exp(-0.5 * z * z)).sum(axis=1)
    return dens / (bandwidth * math.sqrt(2.0 * math.pi))


def _render_histogram_panel(paths, out, options):
    cols = _read_csv(paths[0], "histogram-panel")
    g_idx = _floats(cols["g_index"], paths[0], "g_index").astype(int)
    model = np.array(cols["model"])
    left = _floats(cols["bin_left"], paths[0], "bin_left")
    right = _floats(cols["bin_right"], paths[0], "bin_right")
    mass = _floats(cols["mass"], paths[0], "mass")
    bw = _floats(cols["bandwidth"], paths[0], "bandwidth")
    centers = 0.5 * (left + right)

    panels = options.panels or sorted(set(g_idx))[1::2][:5]
    fig, axes = plt.subplots(len(panels), 1, figsize=(7.0, 1.8 * len(panels)), sharex=True)
    if len(panels) == 1:
        axes = [axes]
    x_hi = 0.0
    for sel in panels:
        m = (g_idx == sel) & (mass > 0)
        if m.any():
            x_hi = max(x_hi, right[m].max())
    x_hi = x_hi * 1.05 if x_hi > 0 else 1.0
    grid = np.linspace(0.0, x_hi, 400)
    for ax, sel in zip(axes, panels):
        for mod, color, style, label in (("ed", "red", "-", "default economy"),
                                         ("amss", "blue", ":", "risk-free baseline")):
            m = (g_idx == sel) & (model == mod)
            if not m.any():
                raise SchemaError(f"{paths[0]}: no rows for model {mod!r}, g_index {sel}")
            h = bw[m][0] * options.bandwidth_scale
            dens = _smooth(centers[m], mass[m], h, grid)
            ax.plot(grid, dens, style, color=color, lw=1.4, label=label)
        ax.set_ylabel(f"g state {sel}")
        ax.set_yticks([])
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("debt-to-output ratio")
    fig.suptitle("Debt-to-output distributions by spending state")
    fig.tight_layout()
    fig.savefig(out, dpi=_DPI, metadata=_META)
    plt.close(fig)


def _render_scatter(paths, out, options):
    cols = _read_csv(paths[0], "scatter-with-fit")
    klass = np.array(cols["debt_class"])
    tax_sd = _floats(cols["tax_sd"], paths[0], "tax_sd")
    spread = _floats(cols["mean_spread"], paths[0], "mean_spread")
    ok = np.isfinite(tax_sd) & np.isfinite(spread)
    if not ok.any():
        raise EmptyInputError(f"{paths[0]}: no finite scatter points")

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for label, color, marker in (("low", "blue", "x"), ("high", "red", "o")):
        m = ok & (klass == label)
        ax.scatter(spread[m], tax_sd[m], s=14, c=color, marker=marker,
                   label=f"{label} debt", alpha=0.7, linewidths=0.8)
    slope, icept = np.polyfit(spread[ok], tax_sd[ok], 1)
    xs = np.linspace(spread[ok].min(), spread[ok].max(), 50)
    ax.plot(xs, icept + slope * xs, "k-", lw=1.6, label="OLS fit")
    ax.set_xlabel("mean bond spread (access periods)")
    ax.set_ylabel("tax-rate standard deviation")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=_DPI, metadata=_META)
    plt.close(fig)


def _render_irf(paths, out, options):
    cols = _read_csv(paths[0], "irf-panel")
    t = _floats(cols["t"], paths[0], "t")
    series = [
        ("g", None, "spending"),
        ("debt_ed", "debt_amss", "debt"),
        ("surplus_ed", "surplus_amss", "primary surplus"),
        ("tax_ed", "tax_amss", "tax rate"),
        ("nu_ed", "nu_amss", "multiplier"),
    ]
    fig, axes = plt.subplots(len(series), 1, figsize=(7.0, 9.0), sharex=True)
    for ax, (ed_col, am_col, label) in zip(axes, series):
        ax.plot(t, _floats(cols[ed_col], paths[0], ed_col), "r-", lw=1.4,
                label="default economy" if am_col else None)
        if am_col:
            ax.plot(t, _floats(cols[am_col], paths[0], am_col), "b--", lw=1.2,
                    label="risk-free baseline")
        ax.set_ylabel(label)
    axes[1].legend(fontsize=8)
    axes[-1].set_xlabel("period")
    fig.suptitle("Impulse responses to a spending spell")
    fig.tight_layout()
    fig.savefig(out, dpi=_DPI, metadata=_META)
    plt.close(fig)


def _render_episode_panel(paths, out, options):
    cols = _read_csv(paths[0], "episode-window-panel")
    if not cols["t_rel"]:
        raise EmptyInputError(f"{paths[0]}: no episode rows")
    series = np.array(cols["series"])
    t_rel = _floats(cols["t_rel"], paths[0], "t_rel")
    med = _floats(cols["median"], paths[0], "median")
    p25 = _floats(cols["p25"], paths[0], "p25")
    p75 = _floats(cols["p75"], paths[0], "p75")
    n_ep = _floats(cols["n_episodes"], paths[0], "n_episodes")
    if n_ep.size and int(n_ep[0]) == 0:
        raise EmptyInputError(f"{paths[0]}: zero qualifying episodes")

    def pull(name):
        m = series == name
        order = np.argsort(t_rel[m], kind="stable")
        return t_rel[m][order], med[m][order], p25[m][order], p75[m][order]

    fig, axes = plt.subplots(3, 1, figsize=(7.0, 7.5), sharex=True)
    tg, mg, lg, hg = pull("g")
    axes[0].plot(tg, mg, "k-", lw=1.4)
    axes[0].plot(tg, lg, "k--", lw=0.8)
    axes[0].plot(tg, hg, "k--", lw=0.8)
    axes[0].set_ylabel("spending")

    te, me, le, he = pull("tax_ed")
    tc, mc, lc, hc = pull("tax_cf")
    axes[1].plot(te, me, "r-", lw=1.4, label="actual")
    axes[1].plot(te, le, "r--", lw=0.8)
    axes[1].plot(te, he, "r--", lw=0.8)
    axes[1].plot(tc, mc, "k:", lw=1.4, label="no-default counterfactual")
    axes[1].set_ylabel("tax, default economy")
    axes[1].legend(fontsize=8)

    ta, ma, la, ha = pull("tax_amss")
    axes[2].plot(ta, ma, "b-", lw=1.4)
    axes[2].plot(ta, la, "b--", lw=0.8)
    axes[2].plot(ta, ha, "b--", lw=0.8)
    axes[2].set_ylabel("tax, risk-free baseline")
    axes[2].set_xlabel("periods around default")
    n = int(n_ep[0]) if n_ep.size else 0
    fig.suptitle(f"Default episode windows ({n} episodes)")
    fig.tight_layout()
    fig.savefig(out, dpi=_DPI, metadata=_META)
    plt.close(fig)


_RENDERERS = {
    "histogram-panel": _render_histogram_panel,
    "scatter-with-fit": _render_scatter,
    "irf-panel": _render_irf,
    "episode-window-panel": _render_episode_panel,
}


def render(kind: str, inputs: list[Path], out: Path, panels=None, bandwidth_scale: float = 1.0):
    """Render one figure; raises SchemaError / EmptyInputError on bad input."""
    if kind not in _RENDERERS:
        raise SchemaError(f"unknown figure kind {kind!r}")
    options = argparse.Namespace(panels=panels, bandwidth_scale=bandwidth_scale)
    _RENDERERS[kind]([Path(p) for p in inputs], Path(out), options)


def _annotated_empty_panel(out: Path, message: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.axis("off")
    ax.text(0.5, 0.5, message, ha="center", va="center", fontsize=11, wrap=True)
    fig.savefig(out, dpi=_DPI, metadata=_META)
    plt.close(fig)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="render_fig", description=__doc__)
    ap.add_argument("--kind", required=True, choices=KINDS)
    ap.add_argument("--in", dest="inputs", required=True, nargs="+", type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--panels", type=int, nargs="*", default=None,
                    help="g-state indices for the histogram panels")
    ap.add_argument("--bandwidth-scale", type=float, default=1.0)
    args = ap.parse_args(argv)
    try:
        render(args.kind, args.inputs, args.out,
               panels=args.panels, bandwidth_scale=args.bandwidth_scale)
    except EmptyInputError as exc:
        _annotated_empty_panel(args.out, f"no data: {exc}")
        print(f"render_fig: {exc}", file=sys.stderr)
        return 1
    except (SchemaError, OSError) as exc:
        print(f"render_fig: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
