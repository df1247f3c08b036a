"""Solver for the economy with endogenous default and debt renegotiation.

Value-function iteration over the (spending, debt) grid jointly with a bond
price fixed point.  The inner loop solves the coupled access/autarky value
recursions at given prices (with Howard policy-evaluation steps between
improvement sweeps); the outer loop damps prices toward the tables implied by
the current default and acceptance policies until both agree in sup norm.

Stored prices are the ones implied exactly by the stored policies, so the
closed-form and bound checks on the price tables hold tightly; the value
tables correspond to prices within ``tol_price`` of those.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from ._kernels import sweep_access
from .model import Preferences, period_payoff
from .params import EconomyParams, SolverOptions

__all__ = [
    "ConvergenceInfo",
    "EDSolution",
    "SolverError",
    "bellman_autarky",
    "bellman_repay",
    "check_no_fund_raising",
    "extract_thresholds",
    "mean_recovery",
    "p0_closed_form_iid",
    "solve",
    "update_prices",
    "validate_solution",
]


class SolverError(RuntimeError):
    """Raised when the outer price loop fails to converge."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


@dataclass
class ConvergenceInfo:
    converged: bool
    outer_iterations: int
    price_residuals: list
    final_price_residual: float
    final_value_delta: float
    improvement_sweeps: int
    wall_time: float


@dataclass(eq=False)
class EDSolution:
    """Converged values, prices, policies and extracted thresholds."""

    params: EconomyParams
    v_repay: np.ndarray  # (ng, nb)
    v_autarky: np.ndarray  # (ng, nb)
    price_repay: np.ndarray  # (ng, nb'), price of issuing B' in state g
    price_autarky: np.ndarray  # (ng, nb), secondary-market price of frozen B
    policy_debt: np.ndarray  # (ng, nb) int64, -1 where repayment is infeasible
    policy_revenue: np.ndarray  # (ng, nb)
    policy_labor: np.ndarray
    policy_tax: np.ndarray
    policy_multiplier: np.ndarray
    default: np.ndarray  # (ng, nb) bool
    accept: np.ndarray  # (ng, nd, nb) bool
    labor_autarky: np.ndarray  # (ng,)
    tax_autarky: np.ndarray
    multiplier_autarky: np.ndarray
    threshold_g: np.ndarray  # (nb,), +inf where the column never defaults
    threshold_delta: np.ndarray  # (ng, nb), -inf where nothing is accepted
    threshold_violations: list
    allow_default: bool
    converged: ConvergenceInfo
    options: SolverOptions = field(default_factory=SolverOptions)


# -- shared numerical plumbing -------------------------------------------------


def _labor_vec(prefs: Preferences, kappa: float, revenue: np.ndarray) -> np.ndarray:
    """Vectorized Laffer-branch inversion (bisection, tolerance as scalar op)."""
    br = prefs.branch(kappa)
    r = np.asarray(revenue, dtype=float)
    out = np.full(r.shape, np.nan)
    ok = np.isfinite(r) & (r >= 0.0) & (r <= br.r_max)
    lo = np.full(np.count_nonzero(ok), br.n_bar)
    hi = np.full(lo.shape, br.n_sat)
    target = r[ok]
    while (hi - lo).max(initial=0.0) > model.BISECT_TOL:
        mid = 0.5 * (lo + hi)
        above = (kappa - prefs.dH(1.0 - mid)) * mid > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    out[ok] = 0.5 * (lo + hi)
    return out


def _w_table(prefs: Preferences, kappa: float, size: int):
    """Tabulate W on a grid uniform in sqrt(r_max - R).

    The square-root change of variables absorbs the infinite slope of the
    Laffer inversion at peak revenue, so linear interpolation of the table is
    uniformly accurate (~1e-9) including at the peak.
    """
    br = prefs.branch(kappa)
    s = np.linspace(0.0, np.sqrt(br.r_max), size)
    revenue = br.r_max - s**2
    revenue[0] = br.r_max
    revenue[-1] = 0.0
    n = _labor_vec(prefs, kappa, revenue)
    w_tab = kappa * n + prefs.H(1.0 - n)
    inv_ds = (size - 1) / np.sqrt(br.r_max)
    return w_tab, inv_ds, br.r_max


def _delta_interp_weights(params: EconomyParams):
    """Left index and weight of delta * B on the debt grid, per (offer, B)."""
    b = params.debt.b_values
    pos = params.offers.deltas[:, None] * b[None, :]
    if b.size == 1:
        left = np.zeros(pos.shape, dtype=np.int64)
        return left, np.zeros(pos.shape)
    left = np.searchsorted(b, pos, side="right") - 1
    left = np.clip(left, 0, b.size - 2)
    width = b[left + 1] - b[left]
    w = np.clip((pos - b[left]) / width, 0.0, 1.0)
    return left.astype(np.int64), w


def _restructured_values(v_repay, v_autarky, left, w):
    """max(V1 at delta*B, V0 at B) averaged over offers is built from these."""
    hi = np.minimum(left + 1, v_repay.shape[1] - 1)
    v1_lo = v_repay[:, left]
    v1_hi = v_repay[:, hi]
    return v1_lo + (v1_hi - v1_lo) * w[None, :, :]  # (ng, nd, nb)


def _acc_table(v_repay, v_autarky, left, w, probs):
    v1i = _restructured_values(v_repay, v_autarky, left, w)
    best = np.maximum(v1i, v_autarky[:, None, :])
    return np.tensordot(probs, best, axes=([0], [1]))  # (ng, nb)


def _p0_fixed_point(accept, chain, offers, beta, tol, q0=None):
    """Fixed point of the secondary-market price operator, iterated to tol.

    The operator is a contraction with modulus beta; under an iid chain the
    result matches the closed form in :func:`p0_closed_form_iid`.  ``q0``
    warm-starts the iteration (the fixed point is independent of it).
    """
    PI = chain.transition
    lam = offers.lam
    probs = offers.probs
    deltas = offers.deltas
    pay = lam * np.tensordot(probs * deltas, accept, axes=([0], [1]))  # (ng, nb)
    stay = 1.0 - lam * np.tensordot(probs, accept, axes=([0], [1]))
    q = np.zeros_like(pay) if q0 is None else q0.copy()
    while True:
        q_new = beta * (PI @ (pay + stay * q))
        if np.max(np.abs(q_new - q)) < tol:
            return q_new
        q = q_new


def update_prices(params: EconomyParams, default, accept, p0_tol: float = 1e-12):
    """Price tables implied by the default and acceptance policies.

    Returns ``(price_repay, price_autarky)``: the autarky table is the fixed
    point of the renegotiation-value operator (iterated to ``p0_tol``), and
    the access table discounts next-period repayment plus the recovery value
    of defaulted debt, with unit marginal utilities.
    """
    beta = params.prefs.beta
    p0 = _p0_fixed_point(
        accept.astype(float), params.chain, params.offers, beta, p0_tol
    )
    d = default.astype(float)
    p1 = beta * (params.chain.transition @ ((1.0 - d) + d * p0))
    return p1, p0


def p0_closed_form_iid(params: EconomyParams, accept) -> np.ndarray:
    """Closed-form secondary-market price for an iid spending chain, per B."""
    if not params.chain.iid:
        raise ValueError("closed form requires an iid chain")
    beta = params.prefs.beta
    lam = params.offers.lam
    pi_g = params.chain.transition[0]
    probs = params.offers.probs
    deltas = params.offers.deltas
    a = accept.astype(float)  # (ng, nd, nb)
    acc_prob = np.einsum("g,d,gdb->b", pi_g, probs, a)
    acc_pay = np.einsum("g,d,gdb->b", pi_g, probs * deltas, a)
    return beta * lam * acc_pay / (1.0 - beta + beta * lam * acc_prob)


# -- Bellman operators (single-cell reference implementations) ----------------


def bellman_repay(params: EconomyParams, v_repay, v_autarky, price_repay, g_index, b_index):
    """Optimal repayment value at one (g, B) cell, exact bisection payoff.

    Independent of the tabulated payoff the production sweeps use, which makes
    it a cross-check for them.  Returns ``(value, debt_index, revenue)``;
    ``debt_index`` is -1 and the value the forced-default sentinel when no
    debt choice keeps required revenue inside the Laffer curve.
    """
    prefs = params.prefs
    beta = prefs.beta
    b = params.debt.b_values
    g = params.chain.g_values[g_index]
    r_max = prefs.branch(1.0).r_max
    cont = beta * (params.chain.transition[g_index] @ np.maximum(v_repay, v_autarky))
    need = g + b[b_index] - price_repay[g_index] * b
    best, best_j, best_r = -np.inf, -1, np.nan
    for j in range(b.size):
        r = max(0.0, need[j])
        if r > r_max:
            continue
        v = period_payoff(prefs, 1.0, r) - g + cont[j]
        if v > best:
            best, best_j, best_r = v, j, r
    if best_j < 0:
        return SolverOptions().sentinel, -1, np.nan
    return best, best_j, best_r


def bellman_autarky(params: EconomyParams, v_repay, v_autarky, g_index, b_index):
    """Autarky continuation value at one (g, B) cell.

    Balanced-budget flow plus the offer lottery: with probability lam an offer
    delta arrives and the government keeps the better of re-entering with
    restructured debt delta*B (value interpolated linearly in B) or staying
    out; otherwise it stays out.
    """
    prefs = params.prefs
    beta = prefs.beta
    lam = params.offers.lam
    g = params.chain.g_values[g_index]
    flow = period_payoff(prefs, prefs.kappa, g) - g
    b = params.debt.b_values
    row = params.chain.transition[g_index]
    v0_next = v_autarky[:, b_index]
    acc = np.zeros(params.n_g)
    for k, (dk, pk) in enumerate(zip(params.offers.deltas, params.offers.probs)):
        pos = dk * b[b_index]
        j = min(max(int(np.searchsorted(b, pos, side="right")) - 1, 0), b.size - 2)
        wgt = np.clip((pos - b[j]) / (b[j + 1] - b[j]), 0.0, 1.0)
        v1i = v_repay[:, j] + (v_repay[:, j + 1] - v_repay[:, j]) * wgt
        acc += pk * np.maximum(v1i, v0_next)
    return flow + beta * (row @ (lam * acc + (1.0 - lam) * v0_next))


# -- main solver ---------------------------------------------------------------


def _inner_vfi(params, opts, p1, v1, v0, flow0, w_tab, inv_ds, r_max, left, wgt, allow_default):
    """Value iteration at fixed prices; returns values, policies and flows."""
    chain, offers, prefs = params.chain, params.offers, params.prefs
    beta = prefs.beta
    PI = chain.transition
    g_vals = chain.g_values
    b_vals = params.debt.b_values
    ng, nb = params.n_g, params.n_b
    lam, probs = offers.lam, offers.probs
    rows = np.arange(ng)[:, None]

    proceeds = p1 * b_vals[None, :]
    v1n = np.empty_like(v1)
    pol = np.empty((ng, nb), dtype=np.int64)
    rev = np.empty((ng, nb))
    flow1 = np.empty((ng, nb))
    sweeps = 0
    while True:
        vmax = np.maximum(v1, v0) if allow_default else v1
        evb = beta * (PI @ vmax)
        sweep_access(
            g_vals, b_vals, proceeds, evb, w_tab, inv_ds, r_max,
            0, nb - 1, opts.sentinel, v1n, pol, rev, flow1,
        )
        sweeps += 1
        if allow_default:
            acc = _acc_table(v1, v0, left, wgt, probs)
            v0n = flow0[:, None] + beta * (PI @ (lam * acc + (1.0 - lam) * v0))
            delta = max(np.max(np.abs(v1n - v1)), np.max(np.abs(v0n - v0)))
            v0 = v0n
        else:
            delta = np.max(np.abs(v1n - v1))
        v1 = v1n.copy()
        if delta < opts.tol_value:
            return v1, v0, pol, rev, flow1, sweeps, delta

        feasible = pol >= 0
        safe_pol = np.where(feasible, pol, 0)
        for _ in range(opts.howard_steps):
            vmax = np.maximum(v1, v0) if allow_default else v1
            evb = beta * (PI @ vmax)
            v1h = np.where(feasible, flow1 + evb[rows, safe_pol], opts.sentinel)
            if allow_default:
                acc = _acc_table(v1, v0, left, wgt, probs)
                v0 = flow0[:, None] + beta * (PI @ (lam * acc + (1.0 - lam) * v0))
            v1 = v1h


def solve(params: EconomyParams, options: SolverOptions | None = None, allow_default: bool = True) -> EDSolution:
    """Solve for values, prices, policies and thresholds.

    Outer loop: damped price update until the implied tables agree with the
    working tables to ``tol_price`` in sup norm.  Ties break toward repaying
    and accepting, and toward the smallest debt choice.  Raises
    :class:`SolverError` with the residual history on non-convergence.

    With ``allow_default=False`` the default option is removed and bonds price
    at beta; this reproduces the risk-free baseline on the same grid.
    """
    opts = options or SolverOptions()
    prefs = params.prefs
    beta = prefs.beta
    chain, offers, debt = params.chain, params.offers, params.debt
    ng, nb, nd = params.n_g, params.n_b, params.n_offers
    t0 = time.perf_counter()

    w_tab, inv_ds, r_max = _w_table(prefs, 1.0, opts.labor_table_size)
    flow0 = np.array(
        [period_payoff(prefs, prefs.kappa, g) - g for g in chain.g_values]
    )
    left, wgt = _delta_interp_weights(params)

    v1 = np.zeros((ng, nb))
    v0 = np.zeros((ng, nb))
    p1 = np.full((ng, nb), beta)
    p0 = np.zeros((ng, nb))

    if not allow_default:
        v1, v0, pol, rev, flow1, sweeps, vdelta = _inner_vfi(
            params, opts, p1, v1, v0, flow0, w_tab, inv_ds, r_max, left, wgt, False
        )
        default = np.zeros((ng, nb), dtype=bool)
        accept = np.zeros((ng, nd, nb), dtype=bool)
        v0 = np.full((ng, nb), np.nan)
        info = ConvergenceInfo(True, 0, [], 0.0, vdelta, sweeps, time.perf_counter() - t0)
        return _assemble(params, opts, v1, v0, p1, p0, pol, rev, default, accept, False, info)

    residuals = []
    omega = opts.damping
    total_sweeps = 0
    converged = False
    vdelta = np.inf
    inner_opts = opts
    attempts_left = opts.damping_retries
    prev_default = prev_accept = None
    outer = 0
    while outer < opts.max_outer:
        outer += 1
        v1, v0, pol, rev, flow1, sweeps, vdelta = _inner_vfi(
            params, inner_opts, p1, v1, v0, flow0, w_tab, inv_ds, r_max, left, wgt, True
        )
        total_sweeps += sweeps
        # tie band: at numerical indifference choose repay / accept; within
        # the (tiny) hysteresis band keep last iteration's decision, which
        # breaks pure-policy limit cycles where the discrete grid admits no
        # exactly-indifference-free fixed point
        default = v1 < v0 - opts.tie_tol
        v1i = _restructured_values(v1, v0, left, wgt)
        accept = v1i >= v0[:, None, :] - opts.tie_tol
        if prev_default is not None and opts.hysteresis > 0.0:
            hold = np.abs(v1 - v0) < opts.hysteresis
            default = np.where(hold, prev_default, default)
            hold_a = np.abs(v1i - v0[:, None, :]) < opts.hysteresis
            accept = np.where(hold_a, prev_accept, accept)
        prev_default, prev_accept = default, accept
        p0_new = _p0_fixed_point(
            accept.astype(float), chain, offers, beta, opts.p0_tol, q0=p0
        )
        d = default.astype(float)
        p1_new = beta * (chain.transition @ ((1.0 - d) + d * p0_new))

        res = max(np.max(np.abs(p1_new - p1)), np.max(np.abs(p0_new - p0)))
        residuals.append(res)
        if res < opts.tol_price:
            p1, p0 = p1_new, p0_new
            converged = True
            break
        # a residual stuck for 60 iterations means a price/policy limit
        # cycle; restart the budget with a smaller step (warm state kept)
        if (
            attempts_left > 0
            and outer >= 60
            and res > 0.9 * residuals[-60]
        ):
            attempts_left -= 1
            omega *= 0.5
            outer = 0
        # tighten the inner tolerance as prices converge so the value noise
        # stays below indifference gaps near the policy boundaries
        tol_eff = min(opts.tol_value, max(1e-3 * res, 1e-13))
        if tol_eff < inner_opts.tol_value:
            inner_opts = replace(inner_opts, tol_value=tol_eff)
        p1 = p1 + omega * (p1_new - p1)
        p0 = p0 + omega * (p0_new - p0)

    if not converged:
        raise SolverError(
            f"price loop did not converge in {opts.max_outer} iterations "
            f"(last residual {residuals[-1]:.3e})",
            residuals,
        )

    info = ConvergenceInfo(
        True, len(residuals), residuals, residuals[-1], vdelta, total_sweeps,
        time.perf_counter() - t0,
    )
    return _assemble(params, opts, v1, v0, p1, p0, pol, rev, default, accept, True, info)


def _assemble(params, opts, v1, v0, p1, p0, pol, rev, default, accept, allow_default, info):
    prefs = params.prefs
    labor = _labor_vec(prefs, 1.0, rev)
    with np.errstate(invalid="ignore"):
        tax = np.where(np.isfinite(labor), 1.0 - prefs.dH(1.0 - labor), np.nan)
        num = 1.0 - prefs.dH(1.0 - labor)
        den = num + prefs.d2H(1.0 - labor) * labor
        nu = np.where((rev > 0.0) & np.isfinite(labor), -num / den, 0.0)
        nu = np.where(np.isfinite(labor), nu, np.nan)

    n0 = _labor_vec(prefs, prefs.kappa, params.chain.g_values)
    tax0 = 1.0 - prefs.dH(1.0 - n0) / prefs.kappa
    num0 = prefs.kappa - prefs.dH(1.0 - n0)
    nu0 = -num0 / (num0 + prefs.d2H(1.0 - n0) * n0)

    thr_g, thr_d, violations = extract_thresholds(
        default, accept, params.chain, params.offers
    )
    return EDSolution(
        params=params,
        v_repay=v1,
        v_autarky=v0,
        price_repay=p1,
        price_autarky=p0,
        policy_debt=pol,
        policy_revenue=rev,
        policy_labor=labor,
        policy_tax=tax,
        policy_multiplier=nu,
        default=default,
        accept=accept,
        labor_autarky=n0,
        tax_autarky=tax0,
        multiplier_autarky=nu0,
        threshold_g=thr_g,
        threshold_delta=thr_d,
        threshold_violations=violations,
        allow_default=allow_default,
        converged=info,
        options=opts,
    )


# -- threshold extraction and structural checks --------------------------------


def extract_thresholds(default, accept, chain, offers):
    """Scan raw policies for threshold structure.

    ``threshold_g[B]`` is the smallest grid spending level with default (+inf
    if the column never defaults); ``threshold_delta[g, B]`` the largest
    accepted repayment fraction (-inf when every offer is rejected).  Raw
    policies that are not upper sets in g (default) or lower sets in delta
    (acceptance) are collected as violations, not errors: the threshold shape
    is only guaranteed in the small-offer-arrival regime.
    """
    ng, nb = default.shape
    threshold_g = np.full(nb, np.inf)
    threshold_delta = np.full((ng, nb), -np.inf)
    violations = []
    for ib in range(nb):
        col = default[:, ib]
        hit = np.flatnonzero(col)
        if hit.size:
            threshold_g[ib] = chain.g_values[hit[0]]
            tail = col[hit[0] :]
            if not tail.all():
                bad = hit[0] + np.flatnonzero(~tail)
                violations.append(("default", ib, bad.tolist()))
    for ig in range(ng):
        for ib in range(nb):
            row = accept[ig, :, ib]
            hit = np.flatnonzero(row)
            if hit.size:
                threshold_delta[ig, ib] = offers.deltas[hit[-1]]
                head = row[: hit[-1] + 1]
                if not head.all():
                    bad = np.flatnonzero(~head)
                    violations.append(("accept", ig, ib, bad.tolist()))
    return threshold_g, threshold_delta, violations


def check_no_fund_raising(solution: EDSolution, tol: float = 1e-9):
    """Verify that default states could not have raised net funds.

    For every defaulting (g, B) with B > 0, the best attainable bond revenue
    ``max_B' price(g, B') B'`` must not exceed the liability B.  Returns the
    violation list (empty in the small-arrival regime) and the per-g revenue
    curves for inspection.
    """
    b = solution.params.debt.b_values
    revenue_curve = solution.price_repay * b[None, :]
    best = revenue_curve.max(axis=1)
    violations = []
    ng, nb = solution.default.shape
    for ig in range(ng):
        for ib in range(nb):
            if solution.default[ig, ib] and b[ib] > 0.0 and best[ig] > b[ib] + tol:
                violations.append((ig, ib, float(best[ig] - b[ib])))
    return violations, revenue_curve


def mean_recovery(solution: EDSolution) -> np.ndarray:
    """Expected repaid fraction E[delta * accept] per debt level.

    Expectation over offers and the stationary law of spending; decreasing in
    the debt level when acceptance has the threshold shape.
    """
    pi_g = solution.params.chain.stationary
    probs = solution.params.offers.probs
    deltas = solution.params.offers.deltas
    return np.einsum("g,d,gdb->b", pi_g, probs * deltas, solution.accept.astype(float))


def validate_solution(solution: EDSolution, tol: float = 1e-8) -> dict:
    """Re-check the structural invariants of a (possibly reloaded) solution."""
    params = solution.params
    prefs = params.prefs
    beta = prefs.beta
    b = params.debt.b_values
    checks = {}

    zero_col = int(np.flatnonzero(b == 0.0)[0])
    checks["no_default_at_zero_debt"] = not solution.default[:, zero_col].any()

    diffs = np.diff(solution.v_repay, axis=1)
    finite = np.isfinite(solution.v_repay[:, :-1]) & np.isfinite(solution.v_repay[:, 1:])
    checks["v_repay_nonincreasing_in_debt"] = bool((diffs[finite] <= tol).all())

    p0_cap = beta * params.offers.lam * params.offers.mean_delta / (1.0 - beta)
    checks["price_autarky_bounds"] = bool(
        (solution.price_autarky >= -tol).all()
        and (solution.price_autarky <= p0_cap + tol).all()
    )
    if params.chain.iid:
        lam = params.offers.lam
        cap = beta * lam / (1.0 - beta + beta * lam)
        checks["price_autarky_iid_bound"] = bool(
            (solution.price_autarky <= cap + tol).all()
        )
        closed = p0_closed_form_iid(params, solution.accept)
        checks["price_autarky_matches_closed_form"] = bool(
            np.max(np.abs(solution.price_autarky - closed[None, :])) < 1e-10
        )
    checks["price_repay_bounds"] = bool(
        (solution.price_repay >= -tol).all()
        and (solution.price_repay <= beta + tol).all()
    )

    flows = []
    for kappa in (1.0, prefs.kappa):
        br = prefs.branch(kappa)
        for r in (0.0, br.r_max):
            w = period_payoff(prefs, kappa, r)
            flows += [abs(w - params.chain.g_values[0]), abs(w - params.chain.g_values[-1])]
    bound = max(flows) / (1.0 - beta) + 1.0
    vr = solution.v_repay[np.isfinite(solution.v_repay) & (solution.v_repay > solution.options.sentinel / 2)]
    va = solution.v_autarky[np.isfinite(solution.v_autarky)]
    checks["value_bound"] = bool(
        (np.abs(vr) <= bound).all() and (np.abs(va) <= bound).all()
    )

    rec = mean_recovery(solution)
    checks["mean_recovery_nonincreasing"] = bool((np.diff(rec) <= tol).all())

    checks["threshold_violations"] = len(solution.threshold_violations)
    checks["ok"] = all(v for k, v in checks.items() if isinstance(v, bool))
    return checks
