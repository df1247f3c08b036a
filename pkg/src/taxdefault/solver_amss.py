"""Risk-free-debt baseline with exogenous debt limits.

Without a default option the marginal utility of consumption is one in every
state, so bonds price at the discount factor and the government solves a
single value iteration over (g, B) with the budget
``R = max(0, g + B - beta * B')`` and debt restricted to an ad hoc interval.
All comparative experiments run this model on the same grid as the default
economy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._kernels import sweep_access
from .params import EconomyParams, SolverOptions
from .solver_ed import ConvergenceInfo, SolverError, _labor_vec, _w_table

__all__ = ["AMSSSolution", "solve_amss"]


@dataclass(eq=False)
class AMSSSolution:
    """Converged value and policies of the risk-free baseline."""

    params: EconomyParams
    value: np.ndarray  # (ng, nb)
    policy_debt: np.ndarray  # (ng, nb) int64, -1 where infeasible
    policy_revenue: np.ndarray
    policy_labor: np.ndarray
    policy_tax: np.ndarray
    policy_multiplier: np.ndarray
    limits: tuple  # (b_min, b_max) actually enforced
    converged: ConvergenceInfo
    options: SolverOptions = field(default_factory=SolverOptions)


def solve_amss(
    params: EconomyParams,
    limits: tuple | None = None,
    options: SolverOptions | None = None,
) -> AMSSSolution:
    """Value iteration for the risk-free baseline.

    ``limits`` restricts the debt choice to ``[b_min, b_max]`` (defaults to
    the full grid span so distribution comparisons share a support).  States
    whose revenue requirement exceeds the Laffer peak for every admissible
    debt choice get the sentinel value and a diagnostic policy of -1.
    """
    opts = options or SolverOptions()
    prefs = params.prefs
    beta = prefs.beta
    chain = params.chain
    b_vals = params.debt.b_values
    ng, nb = params.n_g, params.n_b
    t0 = time.perf_counter()

    if limits is None:
        limits = (float(b_vals[0]), float(b_vals[-1]))
    b_lo, b_hi = limits
    if b_hi < b_lo:
        raise ValueError(f"b_max {b_hi} < b_min {b_lo}")
    j_lo = int(np.searchsorted(b_vals, b_lo, side="left"))
    j_hi = int(np.searchsorted(b_vals, b_hi, side="right")) - 1
    if j_hi < j_lo:
        raise ValueError("debt limits exclude every grid point")

    w_tab, inv_ds, r_max = _w_table(prefs, 1.0, opts.labor_table_size)
    proceeds = np.broadcast_to(beta * b_vals, (ng, nb)).copy()
    PI = chain.transition
    g_vals = chain.g_values
    rows = np.arange(ng)[:, None]

    v = np.zeros((ng, nb))
    vn = np.empty_like(v)
    pol = np.empty((ng, nb), dtype=np.int64)
    rev = np.empty((ng, nb))
    flow = np.empty((ng, nb))
    sweeps = 0
    delta = np.inf
    for _ in range(200_000):
        evb = beta * (PI @ v)
        sweep_access(
            g_vals, b_vals, proceeds, evb, w_tab, inv_ds, r_max,
            j_lo, j_hi, opts.sentinel, vn, pol, rev, flow,
        )
        sweeps += 1
        delta = np.max(np.abs(vn - v))
        v = vn.copy()
        if delta < opts.tol_value:
            break
        feasible = pol >= 0
        safe_pol = np.where(feasible, pol, 0)
        for _ in range(opts.howard_steps):
            evb = beta * (PI @ v)
            v = np.where(feasible, flow + evb[rows, safe_pol], opts.sentinel)
    else:
        raise SolverError("AMSS value iteration did not converge")

    labor = _labor_vec(prefs, 1.0, rev)
    with np.errstate(invalid="ignore"):
        tax = np.where(np.isfinite(labor), 1.0 - prefs.dH(1.0 - labor), np.nan)
        num = 1.0 - prefs.dH(1.0 - labor)
        den = num + prefs.d2H(1.0 - labor) * labor
        nu = np.where((rev > 0.0) & np.isfinite(labor), -num / den, 0.0)
        nu = np.where(np.isfinite(labor), nu, np.nan)

    info = ConvergenceInfo(True, 0, [], 0.0, delta, sweeps, time.perf_counter() - t0)
    return AMSSSolution(
        params=params,
        value=v,
        policy_debt=pol,
        policy_revenue=rev,
        policy_labor=labor,
        policy_tax=tax,
        policy_multiplier=nu,
        limits=(float(b_vals[j_lo]), float(b_vals[j_hi])),
        converged=info,
        options=opts,
    )
