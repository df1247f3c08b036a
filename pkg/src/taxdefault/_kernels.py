"""Numba kernels for the Bellman sweeps and the period-by-period simulator.

Everything here is deterministic: argmax scans run in ascending debt order
(ties go to the smallest debt choice) and random draws use an explicit
splitmix64 state that mirrors :class:`taxdefault.stochastic.SplitMix64`
bit-for-bit.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

U64 = np.uint64
_GAMMA = U64(0x9E3779B97F4A7C15)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_TWO53INV = 2.0**-53


@njit(cache=True, inline="always")
def _sm_next(state):
    state = state + _GAMMA
    z = state
    z = (z ^ (z >> U64(30))) * _M1
    z = (z ^ (z >> U64(27))) * _M2
    z = z ^ (z >> U64(31))
    return state, z


@njit(cache=True, inline="always")
def _u01(state):
    state, z = _sm_next(state)
    return state, (z >> U64(11)) * _TWO53INV


@njit(cache=True, inline="always")
def _w_eval(R, r_max, inv_ds, w_tab):
    """Indirect payoff W(R), linear in sqrt(r_max - R) between table nodes."""
    s = math.sqrt(r_max - R)
    x = s * inv_ds
    k = int(x)
    if k > w_tab.size - 2:
        k = w_tab.size - 2
    return w_tab[k] + (w_tab[k + 1] - w_tab[k]) * (x - k)


@njit(cache=True, parallel=True)
def sweep_access(
    g_vals,
    b_vals,
    proceeds,  # (ng, nb) price(g, B') * B'
    evb,  # (ng, nb) beta * E[continuation | g, B']
    w_tab,
    inv_ds,
    r_max,
    j_lo,
    j_hi,
    sentinel,
    v_out,
    pol_out,
    rev_out,
    flow_out,
):
    """One improvement sweep of the market-access Bellman operator.

    For each (g, B) cell, maximizes ``W(R) - g + evb[g, B']`` over the debt
    choice, with ``R = max(0, g + B - proceeds[g, B'])``.  Cells where no
    choice keeps revenue below the Laffer peak get the sentinel value and
    policy -1 (forced default).
    """
    ng = g_vals.size
    nb = b_vals.size
    for cell in prange(ng * nb):
        ig = cell // nb
        ib = cell - ig * nb
        gb = g_vals[ig] + b_vals[ib]
        best = -1.0e300
        best_j = -1
        best_r = 0.0
        for j in range(j_lo, j_hi + 1):
            need = gb - proceeds[ig, j]
            r = need if need > 0.0 else 0.0
            if r > r_max:
                continue
            v = _w_eval(r, r_max, inv_ds, w_tab) + evb[ig, j]
            if v > best:
                best = v
                best_j = j
                best_r = r
        if best_j < 0:
            v_out[ig, ib] = sentinel
            pol_out[ig, ib] = -1
            rev_out[ig, ib] = np.nan
            flow_out[ig, ib] = sentinel
        else:
            flow = _w_eval(best_r, r_max, inv_ds, w_tab) - g_vals[ig]
            flow_out[ig, ib] = flow
            v_out[ig, ib] = flow + evb[ig, best_j]
            pol_out[ig, ib] = best_j
            rev_out[ig, ib] = best_r


@njit(cache=True)
def simulate_path(
    horizon,
    g0,
    b0_idx,
    phi0,
    cum_rows,  # (ng, ng) cumulative transition rows
    lam,
    cum_probs,  # (nd,) cumulative offer probabilities
    deltas,  # (nd,)
    b_vals,
    g_vals,
    kappa,
    beta,
    pol,  # (ng, nb) int64, -1 = forced default
    rev,  # (ng, nb)
    labor1,
    tax1,
    nu1,
    p1,  # (ng, nb)
    p0,  # (ng, nb)
    dflt,  # (ng, nb) uint8
    acc,  # (ng, nd, nb) uint8
    n0g,
    tax0g,
    nu0g,  # (ng,)
    snap_idx,  # (nd, nb) int64: grid index of delta * B
    seed_g,
    seed_offer,
    out_gi,
    out_phi,
    out_b,
    out_bnext,
    out_due,
    out_delta,
    out_d,
    out_a,
    out_r,
    out_tax,
    out_n,
    out_y,
    out_price,
    out_spread,
    out_transfer,
    out_nu,
):
    """Roll one trajectory forward under the solved policies.

    State between periods: current g index, access flag of the previous
    period, and the debt index (chosen debt under access, frozen face value
    in autarky).  The g stream advances exactly once per period after the
    first; offer draws consume the salted offer stream only in autarky.
    """
    ng = g_vals.size
    sg = seed_g
    so = seed_offer
    gi = g0
    ib = b0_idx
    phi_prev = phi0
    inv_beta = 1.0 / beta

    for t in range(horizon):
        if t > 0:
            sg, u = _u01(sg)
            row = cum_rows[gi]
            j = 0
            while j < ng - 1 and u >= row[j]:
                j += 1
            gi = j
        g = g_vals[gi]

        arrived = False
        k = -1
        if phi_prev == 0:
            so, ua = _u01(so)
            if ua < lam:
                arrived = True
                so, ud = _u01(so)
                k = 0
                nd = cum_probs.size
                while k < nd - 1 and ud >= cum_probs[k]:
                    k += 1

        if phi_prev == 1:
            d_t = dflt[gi, ib]
            a_t = 0
            delta_t = 1.0
            if d_t == 0:
                phi = 1
                due = b_vals[ib]
                state_ib = ib
            else:
                phi = 0
                due = 0.0
                state_ib = ib
        else:
            d_t = 1
            a_t = 0
            delta_t = np.nan
            due = 0.0
            state_ib = ib
            if arrived:
                delta_t = deltas[k]
                if acc[gi, k, ib] == 1:
                    sb = snap_idx[k, ib]
                    if pol[gi, sb] >= 0:
                        a_t = 1
                        due = b_vals[sb]
                        state_ib = sb
            phi = a_t

        out_gi[t] = gi
        out_phi[t] = phi
        out_b[t] = b_vals[ib]
        out_d[t] = d_t
        out_a[t] = a_t
        out_delta[t] = delta_t
        out_due[t] = due

        if phi == 1:
            jb = pol[gi, state_ib]
            r = rev[gi, state_ib]
            n = labor1[gi, state_ib]
            tax = tax1[gi, state_ib]
            price = p1[gi, jb]
            bnext = b_vals[jb]
            out_transfer[t] = (tax * n - g) + price * bnext - due
            out_nu[t] = nu1[gi, state_ib]
            out_y[t] = n
            ib = jb
        else:
            r = g
            n = n0g[gi]
            tax = tax0g[gi]
            price = p0[gi, ib]
            bnext = b_vals[ib]
            out_transfer[t] = 0.0
            out_nu[t] = nu0g[gi]
            out_y[t] = kappa * n
            # debt frozen: ib unchanged

        out_bnext[t] = bnext
        out_r[t] = r
        out_tax[t] = tax
        out_n[t] = n
        out_price[t] = price
        out_spread[t] = (1.0 / price - inv_beta) if price > 0.0 else np.inf
        phi_prev = phi
