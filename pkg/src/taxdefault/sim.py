"""Monte Carlo simulation, impulse responses, episode windows and moments.

Each replication owns a private random stream (seed = master seed XOR the
replication index) with spending draws and offer draws on separate substreams,
so the default economy and the risk-free baseline see identical spending
paths for the same seed.  Replications are reduced to statistics one at a
time; merging is associative, so results do not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import simulate_path, sweep_access
from .params import SolverOptions
from .solver_amss import AMSSSolution
from .solver_ed import EDSolution, _labor_vec, _w_table
from .stochastic import OFFER_STREAM_SALT

__all__ = [
    "EpisodePanels",
    "ImpulseResponse",
    "MomentReport",
    "RenegotiationRow",
    "SimPath",
    "counterfactual_no_default",
    "counterfactual_tables",
    "episode_windows",
    "impulse_response",
    "mc_moments",
    "renegotiation_table",
    "simulate",
]

_MASK64 = (1 << 64) - 1


@dataclass(eq=False)
class SimPath:
    """One simulated trajectory; arrays are aligned per period.

    ``debt`` is the liability carried into the period (the frozen face value
    during autarky), ``debt_next`` the position carried out, ``due`` the
    repayment actually made (face value on repayment, the snapped restructured
    amount on re-entry, zero otherwise).  ``delta`` is 1 in access, the drawn
    offer in autarky and NaN when no offer arrived.  ``price`` is the access
    price of the chosen debt or the secondary-market price of the frozen debt.
    """

    seed: int
    burn_in: int
    phi0: int
    g_index: np.ndarray
    g_value: np.ndarray
    phi: np.ndarray
    debt: np.ndarray
    debt_next: np.ndarray
    due: np.ndarray
    delta: np.ndarray
    default: np.ndarray
    accept: np.ndarray
    revenue: np.ndarray
    tax: np.ndarray
    labor: np.ndarray
    output: np.ndarray
    price: np.ndarray
    spread: np.ndarray
    transfer: np.ndarray
    multiplier: np.ndarray

    @property
    def horizon(self) -> int:
        return self.g_index.size

    def default_events(self) -> np.ndarray:
        """Periods with a default announcement (access lost this period)."""
        phi_prev = np.empty_like(self.phi)
        phi_prev[0] = self.phi0
        phi_prev[1:] = self.phi[:-1]
        return np.flatnonzero((phi_prev == 1) & (self.default == 1))


class _SimTables:
    """Kernel-ready views of a solution's policy and price tables."""

    def __init__(self, solution):
        params = solution.params
        prefs = params.prefs
        chain, offers, debt = params.chain, params.offers, params.debt
        ng, nb, nd = params.n_g, params.n_b, params.n_offers
        self.params = params
        self.cum_rows = np.cumsum(chain.transition, axis=1)
        self.cum_probs = np.cumsum(offers.probs)
        self.deltas = offers.deltas.astype(float)
        self.b_vals = debt.b_values
        self.g_vals = chain.g_values
        self.kappa = prefs.kappa
        self.beta = prefs.beta

        if isinstance(solution, EDSolution):
            self.lam = offers.lam
            self.pol = solution.policy_debt
            self.rev = np.nan_to_num(solution.policy_revenue)
            self.labor1 = np.nan_to_num(solution.policy_labor)
            self.tax1 = np.nan_to_num(solution.policy_tax)
            self.nu1 = np.nan_to_num(solution.policy_multiplier)
            self.p1 = solution.price_repay
            self.p0 = solution.price_autarky
            self.dflt = solution.default.astype(np.uint8)
            self.acc = solution.accept.astype(np.uint8)
            self.n0g = solution.labor_autarky
            self.tax0g = solution.tax_autarky
            self.nu0g = solution.multiplier_autarky
        elif isinstance(solution, AMSSSolution):
            if (solution.policy_debt < 0).any():
                raise ValueError("baseline policy has infeasible states on the grid")
            self.lam = 0.0
            self.pol = solution.policy_debt
            self.rev = solution.policy_revenue
            self.labor1 = solution.policy_labor
            self.tax1 = solution.policy_tax
            self.nu1 = solution.policy_multiplier
            self.p1 = np.full((ng, nb), prefs.beta)
            self.p0 = np.zeros((ng, nb))
            self.dflt = np.zeros((ng, nb), dtype=np.uint8)
            self.acc = np.zeros((ng, nd, nb), dtype=np.uint8)
            self.n0g = np.zeros(ng)
            self.tax0g = np.zeros(ng)
            self.nu0g = np.zeros(ng)
        else:
            raise TypeError(f"unsupported solution type {type(solution)!r}")

        snap = np.empty((nd, nb), dtype=np.int64)
        for k, dk in enumerate(offers.deltas):
            for ib, bv in enumerate(self.b_vals):
                snap[k, ib] = debt.snap(dk * bv)
        self.snap_idx = snap


def simulate(
    solution,
    horizon: int,
    burn_in: int,
    seed: int,
    g0_index: int | None = None,
    b0_index: int | None = None,
    phi0: int = 1,
    tables: "_SimTables | None" = None,
) -> SimPath:
    """Roll one trajectory of ``horizon`` periods under the solved policies.

    The first ``burn_in`` periods are recorded but flagged for exclusion from
    statistics.  On default the economy enters autarky with the face value
    frozen; an accepted offer delta re-enters with restructured debt delta*B
    snapped to the grid.  Spreads are quoted against the risk-free rate
    ``1/beta - 1``.
    """
    if not horizon > burn_in:
        raise ValueError(f"horizon {horizon} must exceed burn_in {burn_in}")
    tab = tables if tables is not None else _SimTables(solution)
    params = tab.params
    ng, nb = params.n_g, params.n_b
    if g0_index is None:
        g0_index = ng // 2
    if b0_index is None:
        b0_index = int(np.flatnonzero(tab.b_vals == 0.0)[0])

    out = {
        "gi": np.empty(horizon, dtype=np.int64),
        "phi": np.empty(horizon, dtype=np.int8),
        "b": np.empty(horizon),
        "bnext": np.empty(horizon),
        "due": np.empty(horizon),
        "delta": np.empty(horizon),
        "d": np.empty(horizon, dtype=np.int8),
        "a": np.empty(horizon, dtype=np.int8),
        "r": np.empty(horizon),
        "tax": np.empty(horizon),
        "n": np.empty(horizon),
        "y": np.empty(horizon),
        "price": np.empty(horizon),
        "spread": np.empty(horizon),
        "transfer": np.empty(horizon),
        "nu": np.empty(horizon),
    }
    seed = seed & _MASK64
    simulate_path(
        horizon, g0_index, b0_index, phi0,
        tab.cum_rows, tab.lam, tab.cum_probs, tab.deltas,
        tab.b_vals, tab.g_vals, tab.kappa, tab.beta,
        tab.pol, tab.rev, tab.labor1, tab.tax1, tab.nu1,
        tab.p1, tab.p0, tab.dflt, tab.acc,
        tab.n0g, tab.tax0g, tab.nu0g, tab.snap_idx,
        np.uint64(seed), np.uint64(seed ^ OFFER_STREAM_SALT),
        out["gi"], out["phi"], out["b"], out["bnext"], out["due"], out["delta"],
        out["d"], out["a"], out["r"], out["tax"], out["n"], out["y"],
        out["price"], out["spread"], out["transfer"], out["nu"],
    )
    return SimPath(
        seed=seed,
        burn_in=burn_in,
        phi0=phi0,
        g_index=out["gi"],
        g_value=tab.g_vals[out["gi"]],
        phi=out["phi"],
        debt=out["b"],
        debt_next=out["bnext"],
        due=out["due"],
        delta=out["delta"],
        default=out["d"],
        accept=out["a"],
        revenue=out["r"],
        tax=out["tax"],
        labor=out["n"],
        output=out["y"],
        price=out["price"],
        spread=out["spread"],
        transfer=out["transfer"],
        multiplier=out["nu"],
    )


# -- renegotiation spells ------------------------------------------------------


def _spells(path: SimPath):
    """Completed renegotiation spells after burn-in.

    Returns (debt_ratio_at_default, duration, accepted_delta) per spell.  The
    ratio uses the defaulted face value over that period's autarky output.
    Duration counts the periods from the default announcement through the
    settlement period inclusive, so an offer accepted at the first
    opportunity gives a duration of two.  Spells still open at the end of the
    path are dropped.
    """
    out = []
    t = path.burn_in
    T = path.horizon
    while t < T:
        phi_prev = path.phi[t - 1] if t > 0 else path.phi0
        if phi_prev == 1 and path.default[t] == 1:
            start = t
            u = t
            while u < T and path.phi[u] == 0:
                u += 1
            if u < T:  # u is the settlement period (access regained)
                dur = u - start + 1
                ratio = path.debt[start] / path.output[start]
                out.append((ratio, dur, path.delta[u]))
                t = u
                continue
            return out
        t += 1
    return out


@dataclass
class RenegotiationRow:
    lam: float
    avg_accepted_delta: float
    avg_duration_high_debt: float
    avg_duration_low_debt: float
    n_spells: int


@dataclass
class MomentReport:
    """Aggregated Monte Carlo statistics for the two economies."""

    default_frequency: float
    default_frequency_per_rep: np.ndarray
    debt_ratio_median: float
    hist_bin_edges: np.ndarray
    hist_ed: np.ndarray  # (ng, nbins) masses, conditioned on the g state
    hist_amss: np.ndarray
    hist_n_ed: np.ndarray  # (ng,) observation counts per condition
    hist_n_amss: np.ndarray
    bandwidth_ed: np.ndarray
    bandwidth_amss: np.ndarray
    scatter: np.ndarray  # (n_reps, 2, 2): [rep, low/high, (tax_sd, mean_spread)]
    tax_sd_ed: float
    tax_sd_amss: float
    tax_sd_ratio: float
    reneg: RenegotiationRow | None
    episode_quantiles: "EpisodePanels | None" = None
    meta: dict = field(default_factory=dict)


def _silverman(values: np.ndarray) -> float:
    n = values.size
    if n < 2:
        return 0.0
    sd = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75.0, 25.0])
    iqr = q75 - q25
    scale = min(sd, iqr / 1.34) if iqr > 0.0 else sd
    return 0.9 * scale * n ** (-0.2)


def mc_moments(
    solution_ed: EDSolution,
    solution_amss: AMSSSolution,
    n_reps: int,
    horizon: int,
    burn_in: int,
    master_seed: int,
    spread_filter: float = 0.5,
    n_bins: int = 100,
    ratio_max: float = 1.0,
) -> MomentReport:
    """Replication-level statistics for the default economy and the baseline.

    Debt-to-output is the issued debt over contemporaneous output.  The
    conditional histograms drop observations whose period spread exceeds
    ``spread_filter``; scatter rows split each replication's access periods at
    the pooled median debt ratio.
    """
    if solution_ed.params.n_g != solution_amss.params.n_g:
        raise ValueError("solutions live on incompatible spending grids")
    tab_ed = _SimTables(solution_ed)
    tab_am = _SimTables(solution_amss)
    ng = solution_ed.params.n_g
    edges = np.linspace(0.0, ratio_max, n_bins + 1)

    per_rep = []
    n_default = 0
    n_periods = 0
    freq_rep = np.empty(n_reps)
    counts_ed = np.zeros((ng, n_bins))
    counts_am = np.zeros((ng, n_bins))
    samples_ed = [[] for _ in range(ng)]
    samples_am = [[] for _ in range(ng)]
    spells = []

    for r in range(n_reps):
        seed = (master_seed ^ r) & _MASK64
        p_ed = simulate(solution_ed, horizon, burn_in, seed, tables=tab_ed)
        p_am = simulate(solution_amss, horizon, burn_in, seed, tables=tab_am)
        sl = slice(burn_in, None)
        n_post = horizon - burn_in

        events = p_ed.default_events()
        n_ev = int((events >= burn_in).sum())
        n_default += n_ev
        n_periods += n_post
        freq_rep[r] = n_ev / n_post

        for path, counts, samples in ((p_ed, counts_ed, samples_ed), (p_am, counts_am, samples_am)):
            keep = path.spread[sl] <= spread_filter
            ratio = path.debt_next[sl][keep] / path.output[sl][keep]
            gidx = path.g_index[sl][keep]
            for ig in range(ng):
                vals = ratio[gidx == ig]
                if vals.size:
                    counts[ig] += np.histogram(vals, bins=edges)[0]
                    samples[ig].append(vals)

        access = p_ed.phi[sl] == 1
        per_rep.append(
            (
                p_ed.debt_next[sl][access] / p_ed.output[sl][access],
                p_ed.tax[sl][access],
                p_ed.spread[sl][access],
                float(np.std(p_am.tax[sl], ddof=1)),
                float(np.std(p_ed.tax[sl][access], ddof=1)) if access.sum() > 1 else np.nan,
            )
        )
        spells.extend(_spells(p_ed))

    pooled_ratio = np.concatenate([x[0] for x in per_rep]) if per_rep else np.array([])
    median_ratio = float(np.median(pooled_ratio)) if pooled_ratio.size else np.nan

    scatter = np.full((n_reps, 2, 2), np.nan)
    for r, (ratio, tax, spr, _, _) in enumerate(per_rep):
        # the low class takes the ties so it stays populated when the
        # asymptotic distribution has an atom at zero debt
        for c, mask in enumerate((ratio <= median_ratio, ratio > median_ratio)):
            if mask.sum() > 1:
                scatter[r, c, 0] = np.std(tax[mask], ddof=1)
                scatter[r, c, 1] = np.mean(spr[mask])

    tax_sd_ed = float(np.nanmean([x[4] for x in per_rep]))
    tax_sd_amss = float(np.mean([x[3] for x in per_rep]))

    def _masses(counts, samples):
        n_cond = counts.sum(axis=1)
        masses = np.divide(
            counts, n_cond[:, None], out=np.zeros_like(counts), where=n_cond[:, None] > 0
        )
        bw = np.array(
            [_silverman(np.concatenate(s)) if s else 0.0 for s in samples]
        )
        return masses, n_cond, bw

    hist_ed, n_ed, bw_ed = _masses(counts_ed, samples_ed)
    hist_am, n_am, bw_am = _masses(counts_am, samples_am)

    reneg = _reneg_row(solution_ed.params.offers.lam, spells)
    return MomentReport(
        default_frequency=n_default / n_periods if n_periods else np.nan,
        default_frequency_per_rep=freq_rep,
        debt_ratio_median=median_ratio,
        hist_bin_edges=edges,
        hist_ed=hist_ed,
        hist_amss=hist_am,
        hist_n_ed=n_ed,
        hist_n_amss=n_am,
        bandwidth_ed=bw_ed,
        bandwidth_amss=bw_am,
        scatter=scatter,
        tax_sd_ed=tax_sd_ed,
        tax_sd_amss=tax_sd_amss,
        tax_sd_ratio=tax_sd_ed / tax_sd_amss if tax_sd_amss > 0 else np.nan,
        reneg=reneg,
        meta={
            "n_reps": n_reps,
            "horizon": horizon,
            "burn_in": burn_in,
            "master_seed": master_seed,
            "spread_filter": spread_filter,
        },
    )


def _reneg_row(lam: float, spells) -> RenegotiationRow | None:
    if not spells:
        return None
    arr = np.array(spells)  # (n, 3): ratio, duration, accepted delta
    med = np.median(arr[:, 0])
    high = arr[arr[:, 0] >= med]
    low = arr[arr[:, 0] < med]
    return RenegotiationRow(
        lam=lam,
        avg_accepted_delta=float(arr[:, 2].mean()),
        avg_duration_high_debt=float(high[:, 1].mean()) if high.size else np.nan,
        avg_duration_low_debt=float(low[:, 1].mean()) if low.size else np.nan,
        n_spells=arr.shape[0],
    )


def renegotiation_table(
    make_params,
    lambdas,
    n_reps: int,
    horizon: int,
    burn_in: int,
    master_seed: int,
    options: SolverOptions | None = None,
) -> list[RenegotiationRow]:
    """Re-solve per arrival probability and tabulate renegotiation statistics.

    ``make_params(lam)`` must return the :class:`EconomyParams` for one run;
    rows report the average accepted repayment fraction and the average
    autarky duration conditional on the defaulted debt ratio falling above or
    below its pooled median.
    """
    from .solver_ed import solve

    rows = []
    for lam in lambdas:
        params = make_params(lam)
        sol = solve(params, options)
        tab = _SimTables(sol)
        spells = []
        for r in range(n_reps):
            seed = (master_seed ^ r) & _MASK64
            path = simulate(sol, horizon, burn_in, seed, tables=tab)
            spells.extend(_spells(path))
        row = _reneg_row(lam, spells)
        rows.append(
            row
            if row is not None
            else RenegotiationRow(lam, np.nan, np.nan, np.nan, 0)
        )
    return rows


# -- impulse responses ---------------------------------------------------------


@dataclass
class ImpulseResponse:
    t: np.ndarray
    g: np.ndarray  # grid levels actually used
    debt_ed: np.ndarray
    debt_amss: np.ndarray
    surplus_ed: np.ndarray
    surplus_amss: np.ndarray
    tax_ed: np.ndarray
    tax_amss: np.ndarray
    nu_ed: np.ndarray
    nu_amss: np.ndarray
    defaulted_at: int | None  # period of default in the rollout, if any


def _g_path_to_indices(chain, g_path) -> np.ndarray:
    g_path = np.asarray(g_path, dtype=float)
    g = chain.g_values
    hull_slack = g[-1] - g[0]
    if ((g_path < g[0] - hull_slack) | (g_path > g[-1] + hull_slack)).any():
        raise ValueError(
            "g_path value lies outside the grid hull by more than the grid span"
        )
    return np.array([np.argmin(np.abs(g - x)) for x in g_path], dtype=np.int64)


def impulse_response(
    solution_ed: EDSolution, solution_amss: AMSSSolution, g_path
) -> ImpulseResponse:
    """Deterministic policy rollout along a prescribed spending path.

    Spending levels are snapped to the nearest grid state (values beyond the
    hull by more than one full grid span are rejected).  Both economies start
    with zero debt and market access.  If the default economy defaults along
    the path it stays in (offer-free) autarky for the rest of the rollout.
    """
    chain = solution_ed.params.chain
    idx = _g_path_to_indices(chain, g_path)
    T = idx.size
    b_ed = solution_ed.params.debt.b_values
    b_am = solution_amss.params.debt.b_values

    out = ImpulseResponse(
        t=np.arange(T),
        g=chain.g_values[idx],
        debt_ed=np.zeros(T),
        debt_amss=np.zeros(T),
        surplus_ed=np.zeros(T),
        surplus_amss=np.zeros(T),
        tax_ed=np.zeros(T),
        tax_amss=np.zeros(T),
        nu_ed=np.zeros(T),
        nu_amss=np.zeros(T),
        defaulted_at=None,
    )

    ib = int(np.flatnonzero(b_ed == 0.0)[0])
    in_autarky = False
    prefs = solution_ed.params.prefs
    for t, ig in enumerate(idx):
        if not in_autarky and solution_ed.default[ig, ib]:
            in_autarky = True
            out.defaulted_at = t
        if in_autarky:
            out.tax_ed[t] = solution_ed.tax_autarky[ig]
            out.surplus_ed[t] = 0.0
            out.nu_ed[t] = solution_ed.multiplier_autarky[ig]
            out.debt_ed[t] = b_ed[ib]
        else:
            jb = solution_ed.policy_debt[ig, ib]
            out.tax_ed[t] = solution_ed.policy_tax[ig, ib]
            out.surplus_ed[t] = solution_ed.policy_revenue[ig, ib] - chain.g_values[ig]
            out.nu_ed[t] = solution_ed.policy_multiplier[ig, ib]
            out.debt_ed[t] = b_ed[jb]
            ib = jb

    ib = int(np.flatnonzero(b_am == 0.0)[0])
    for t, ig in enumerate(idx):
        jb = solution_amss.policy_debt[ig, ib]
        if jb < 0:
            raise ValueError("baseline rollout hit an infeasible state")
        out.tax_amss[t] = solution_amss.policy_tax[ig, ib]
        out.surplus_amss[t] = solution_amss.policy_revenue[ig, ib] - chain.g_values[ig]
        out.nu_amss[t] = solution_amss.policy_multiplier[ig, ib]
        out.debt_amss[t] = b_am[jb]
        ib = jb
    return out


# -- default episode windows and the no-default counterfactual ------------------


@dataclass
class EpisodePanels:
    """Cross-episode quantiles in a window around the default date."""

    t_rel: np.ndarray
    n_episodes: int
    g_median: np.ndarray
    g_p25: np.ndarray
    g_p75: np.ndarray
    tax_ed_median: np.ndarray
    tax_ed_p25: np.ndarray
    tax_ed_p75: np.ndarray
    tax_amss_median: np.ndarray
    tax_amss_p25: np.ndarray
    tax_amss_p75: np.ndarray
    tax_cf_median: np.ndarray  # aligned with t_rel >= 0, NaN before
    tax_cf_p25: np.ndarray
    tax_cf_p75: np.ndarray
    cf_exceeds_actual_share: float
    n_cf_infeasible: int


def counterfactual_tables(solution: EDSolution):
    """Finite-horizon overlay forbidding default for five periods.

    ``rem`` counts the remaining no-default periods after the current one:
    debt issued with ``rem >= 1`` is riskless (priced at beta), debt issued in
    the last overlay period is priced with the converged risky table, and the
    continuation reverts to the converged values.  Returns policies, taxes and
    revenues per overlay step, ordered from the default date (rem = 4) down.
    """
    params = solution.params
    prefs = params.prefs
    beta = prefs.beta
    opts = solution.options
    chain = params.chain
    g_vals, b_vals = chain.g_values, params.debt.b_values
    ng, nb = params.n_g, params.n_b
    PI = chain.transition

    w_tab, inv_ds, r_max = _w_table(prefs, 1.0, opts.labor_table_size)
    vmax = np.maximum(solution.v_repay, solution.v_autarky)

    steps = 5
    pol = np.empty((steps, ng, nb), dtype=np.int64)
    tax = np.empty((steps, ng, nb))
    rev = np.empty((steps, ng, nb))
    v_next = vmax
    proceeds_riskless = np.broadcast_to(beta * b_vals, (ng, nb)).copy()
    for rem in range(steps):  # rem = 0 first (prices risky), then riskless
        proceeds = (
            solution.price_repay * b_vals[None, :] if rem == 0 else proceeds_riskless
        )
        evb = beta * (PI @ v_next)
        v_out = np.empty((ng, nb))
        p_out = np.empty((ng, nb), dtype=np.int64)
        r_out = np.empty((ng, nb))
        f_out = np.empty((ng, nb))
        sweep_access(
            g_vals, b_vals, proceeds, evb, w_tab, inv_ds, r_max,
            0, nb - 1, opts.sentinel, v_out, p_out, r_out, f_out,
        )
        labor = _labor_vec(prefs, 1.0, r_out)
        with np.errstate(invalid="ignore"):
            tau = np.where(np.isfinite(labor), 1.0 - prefs.dH(1.0 - labor), np.nan)
        pol[rem] = p_out
        tax[rem] = tau
        rev[rem] = r_out
        v_next = v_out
    # reorder so index 0 is the default date (rem = steps-1)
    return pol[::-1].copy(), tax[::-1].copy(), rev[::-1].copy()


def counterfactual_no_default(solution: EDSolution, episodes, cf_tables=None):
    """Tax path had default been forbidden at the episode date and 4 more periods.

    ``episodes`` is an iterable of (g_indices, debt_index) pairs: the realized
    spending states from the default date on (at least 5) and the grid index
    of the defaulted face value.  Returns an (n, 5) tax array (NaN rows where
    the counterfactual hits an infeasible state) and the infeasible count.
    """
    pol, tax, _ = cf_tables if cf_tables is not None else counterfactual_tables(solution)
    steps = pol.shape[0]
    rows = []
    n_bad = 0
    for g_idx, ib in episodes:
        taxes = np.full(steps, np.nan)
        cur = ib
        ok = True
        for p in range(steps):
            ig = g_idx[p]
            jb = pol[p, ig, cur]
            if jb < 0:
                ok = False
                break
            taxes[p] = tax[p, ig, cur]
            cur = jb
        if not ok:
            n_bad += 1
            taxes[:] = np.nan
        rows.append(taxes)
    return np.array(rows), n_bad


def episode_windows(
    solution_ed: EDSolution,
    solution_amss: AMSSSolution,
    paths,
    window: int = 4,
    pre_access: int = 6,
    post_autarky: int = 4,
    max_episodes: int | None = None,
) -> EpisodePanels:
    """Quantile panels around default events, plus the no-default counterfactual.

    ``paths`` yields (default-economy path, baseline path) pairs simulated on
    common spending draws.  Qualifying episodes have at least ``pre_access``
    access periods before the default and ``post_autarky`` exclusion periods
    from the default date on.  If fewer qualify than requested the panels are
    built from what is there (the count is reported).
    """
    g_win, tax_win, amss_win = [], [], []
    cf_states = []
    actual_tax0 = []
    b_vals = solution_ed.params.debt.b_values
    cf_len = 5

    for p_ed, p_am in paths:
        T = p_ed.horizon
        for t0 in p_ed.default_events():
            if max_episodes is not None and len(g_win) >= max_episodes:
                break
            if t0 - pre_access < 0 or t0 - window < 0:
                continue
            if t0 + max(window, post_autarky - 1, cf_len - 1) >= T:
                continue
            if t0 < p_ed.burn_in:
                continue
            if not (p_ed.phi[t0 - pre_access : t0] == 1).all():
                continue
            if not (p_ed.phi[t0 : t0 + post_autarky] == 0).all():
                continue
            sl = slice(t0 - window, t0 + window + 1)
            g_win.append(p_ed.g_value[sl])
            tax_win.append(p_ed.tax[sl])
            amss_win.append(p_am.tax[sl])
            ib = int(np.flatnonzero(b_vals == p_ed.debt[t0])[0])
            cf_states.append((p_ed.g_index[t0 : t0 + cf_len].copy(), ib))
            actual_tax0.append(p_ed.tax[t0])

    t_rel = np.arange(-window, window + 1)
    n = len(g_win)
    if n == 0:
        nan = np.full(t_rel.size, np.nan)
        nan5 = np.full(t_rel.size, np.nan)
        return EpisodePanels(
            t_rel=t_rel, n_episodes=0,
            g_median=nan, g_p25=nan.copy(), g_p75=nan.copy(),
            tax_ed_median=nan.copy(), tax_ed_p25=nan.copy(), tax_ed_p75=nan.copy(),
            tax_amss_median=nan.copy(), tax_amss_p25=nan.copy(), tax_amss_p75=nan.copy(),
            tax_cf_median=nan5, tax_cf_p25=nan5.copy(), tax_cf_p75=nan5.copy(),
            cf_exceeds_actual_share=np.nan, n_cf_infeasible=0,
        )

    cf_tax, n_bad = counterfactual_no_default(solution_ed, cf_states)
    actual = np.array(actual_tax0)
    with np.errstate(invalid="ignore"):
        valid = np.isfinite(cf_tax[:, 0])
        exceed = float(np.mean(cf_tax[valid, 0] > actual[valid])) if valid.any() else np.nan

    def _q(stack):
        arr = np.array(stack)
        return (
            np.median(arr, axis=0),
            np.percentile(arr, 25.0, axis=0),
            np.percentile(arr, 75.0, axis=0),
        )

    g_med, g_lo, g_hi = _q(g_win)
    te_med, te_lo, te_hi = _q(tax_win)
    ta_med, ta_lo, ta_hi = _q(amss_win)

    pad = np.full(window, np.nan)
    with np.errstate(invalid="ignore"):
        cf_med = np.concatenate([pad, np.nanmedian(cf_tax, axis=0)])
        cf_lo = np.concatenate([pad, np.nanpercentile(cf_tax, 25.0, axis=0)])
        cf_hi = np.concatenate([pad, np.nanpercentile(cf_tax, 75.0, axis=0)])

    return EpisodePanels(
        t_rel=t_rel,
        n_episodes=n,
        g_median=g_med, g_p25=g_lo, g_p75=g_hi,
        tax_ed_median=te_med, tax_ed_p25=te_lo, tax_ed_p75=te_hi,
        tax_amss_median=ta_med, tax_amss_p25=ta_lo, tax_amss_p75=ta_hi,
        tax_cf_median=cf_med, tax_cf_p25=cf_lo, tax_cf_p75=cf_hi,
        cf_exceeds_actual_share=exceed,
        n_cf_infeasible=n_bad,
    )


def stream_paths(
    solution_ed: EDSolution,
    solution_amss: AMSSSolution,
    n_reps: int,
    horizon: int,
    burn_in: int,
    master_seed: int,
):
    """Yield (default-economy, baseline) path pairs on common spending draws."""
    tab_ed = _SimTables(solution_ed)
    tab_am = _SimTables(solution_amss)
    for r in range(n_reps):
        seed = (master_seed ^ r) & _MASK64
        yield (
            simulate(solution_ed, horizon, burn_in, seed, tables=tab_ed),
            simulate(solution_amss, horizon, burn_in, seed, tables=tab_am),
        )
