"""Static per-period economics of the quasi-linear benchmark economy.

Households have utility ``c + H(1-n)`` with ``H(l) = c1 * l**(1-sigma) / (1-sigma)``,
so the marginal utility of consumption is identically one and all per-period
objects reduce to functions of labor ``n``, productivity ``kappa`` and spending
``g``.  This module provides the primary-surplus function, the Laffer-curve
inversion used to back labor out of a revenue requirement, the balanced-budget
(autarky) allocation, the shadow cost of the budget constraint, and the path
validator that certifies a simulated trajectory as a competitive equilibrium.

All root-finding is bisection on the high-labor / low-tax branch of the Laffer
curve, where revenue is strictly decreasing in labor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "InfeasibleRevenueError",
    "LaborAllocation",
    "LaborBranch",
    "Preferences",
    "autarky_allocation",
    "labor_from_revenue",
    "laffer_peak",
    "multiplier",
    "period_payoff",
    "surplus",
    "validate_implementability",
]

#: Absolute tolerance (in n) for all bisection root-finding on the labor branch.
BISECT_TOL = 1e-12


class InfeasibleRevenueError(ValueError):
    """Requested revenue exceeds the peak of the Laffer curve.

    Signals a state with an empty feasible set; solvers treat it as forced
    default rather than letting it propagate.
    """


@dataclass(frozen=True)
class Preferences:
    """Quasi-linear preference and discounting parameters.

    Parameters
    ----------
    c1 : float
        Leisure-utility weight; must satisfy ``0 < c1 < 1`` so that the
        marginal value of leisure at zero labor stays below productivity.
    sigma : float
        Leisure curvature, ``sigma > 0`` and ``sigma != 1``.
    beta : float
        Discount factor in (0, 1).
    kappa : float
        Productivity while in financial autarky, in (0, 1]; ``1 - kappa`` is
        the direct output cost of default.
    """

    c1: float = 0.15
    sigma: float = 2.0
    beta: float = 0.97
    kappa: float = 0.998

    def __post_init__(self):
        if not 0.0 < self.c1 < 1.0:
            raise ValueError(f"c1 must be in (0, 1), got {self.c1}")
        if self.sigma <= 0.0 or self.sigma == 1.0:
            raise ValueError(f"sigma must be positive and != 1, got {self.sigma}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must be in (0, 1), got {self.beta}")
        if not 0.0 < self.kappa <= 1.0:
            raise ValueError(f"kappa must be in (0, 1], got {self.kappa}")
        self._check_curvature()

    def _check_curvature(self):
        # H' > 0, H'' < 0 and 2 H''(l) < H'''(l) (1 - l) on a grid of (0, 1);
        # the last inequality keeps the revenue function strictly concave.
        l = np.linspace(1e-6, 1.0 - 1e-6, 257)
        if not (self.dH(l) > 0.0).all() or not (self.d2H(l) < 0.0).all():
            raise ValueError("H must be increasing and strictly concave on (0, 1)")
        if not (2.0 * self.d2H(l) < self.d3H(l) * (1.0 - l)).all():
            raise ValueError("curvature condition 2H'' < H'''(1-l) fails on (0, 1)")

    # -- leisure utility and derivatives ------------------------------------

    def H(self, l):
        return self.c1 * l ** (1.0 - self.sigma) / (1.0 - self.sigma)

    def dH(self, l):
        return self.c1 * l ** (-self.sigma)

    def d2H(self, l):
        return -self.sigma * self.c1 * l ** (-self.sigma - 1.0)

    def d3H(self, l):
        return self.sigma * (self.sigma + 1.0) * self.c1 * l ** (-self.sigma - 2.0)

    # -- branch geometry -----------------------------------------------------

    def branch(self, kappa_phi: float) -> "LaborBranch":
        """Laffer-branch anchors for productivity ``kappa_phi`` (cached)."""
        return _branch(self, float(kappa_phi))


@dataclass(frozen=True)
class LaborBranch:
    """Anchors of the relevant labor domain for one productivity level.

    ``n_bar`` is the revenue-maximizing labor (the Laffer peak), ``n_sat`` the
    zero-tax satiation point where ``H'(1-n) = kappa``, and ``r_max`` the peak
    revenue.  All balanced-budget and revenue-inversion roots live on
    ``[n_bar, n_sat]``, the branch where revenue is decreasing in labor and
    which maximizes utility among candidate roots.
    """

    kappa: float
    n_bar: float
    n_sat: float
    r_max: float


@lru_cache(maxsize=None)
def _branch(prefs: Preferences, kappa_phi: float) -> LaborBranch:
    if not 0.0 < kappa_phi <= 1.0:
        raise ValueError(f"kappa_phi must be in (0, 1], got {kappa_phi}")
    if prefs.c1 >= kappa_phi:
        raise ValueError("c1 >= kappa leaves no taxable labor (n_sat <= 0)")
    n_sat = 1.0 - (prefs.c1 / kappa_phi) ** (1.0 / prefs.sigma)

    # dz/dn = (kappa - H'(1-n)) + H''(1-n) n changes sign exactly once on
    # (0, n_sat): positive near 0, negative at n_sat.
    def slope(n):
        return kappa_phi - prefs.dH(1.0 - n) + prefs.d2H(1.0 - n) * n

    lo, hi = 1e-12, n_sat
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    n_bar = 0.5 * (lo + hi)
    r_max = (kappa_phi - prefs.dH(1.0 - n_bar)) * n_bar
    return LaborBranch(kappa=kappa_phi, n_bar=n_bar, n_sat=n_sat, r_max=r_max)


@dataclass(frozen=True)
class LaborAllocation:
    """One period's labor/tax outcome.

    ``tax = 1 - H'(1-n) / kappa_phi`` and ``revenue = (kappa_phi - H'(1-n)) n``
    by construction.
    """

    n: float
    tax: float
    revenue: float
    leisure_value: float


def surplus(prefs: Preferences, kappa_phi: float, n: float, g: float) -> float:
    """Primary surplus ``z = (kappa_phi - H'(1-n)) * n - g``.

    Negative values are deficits.  ``n = 1`` is rejected because leisure
    utility has infinite slope at zero leisure.
    """
    if not 0.0 <= n < 1.0:
        raise ValueError(f"n must be in [0, 1), got {n}")
    if g < 0.0:
        raise ValueError(f"g must be nonnegative, got {g}")
    if not 0.0 < kappa_phi <= 1.0:
        raise ValueError(f"kappa_phi must be in (0, 1], got {kappa_phi}")
    if n == 0.0:
        return -g
    return (kappa_phi - prefs.dH(1.0 - n)) * n - g


def laffer_peak(prefs: Preferences, kappa_phi: float = 1.0) -> float:
    """Labor at the peak of the revenue Laffer curve (independent of g)."""
    return prefs.branch(kappa_phi).n_bar


def labor_from_revenue(prefs: Preferences, kappa_phi: float, revenue: float) -> float:
    """Invert the Laffer curve on the branch ``[n_bar, n_sat]``.

    Returns the unique labor level there that raises ``revenue``; this is the
    utility-maximizing root of the two.  Raises
    :class:`InfeasibleRevenueError` when ``revenue`` exceeds the peak and
    ``ValueError`` for negative revenue (lump-sum taxes are not permitted).
    """
    br = prefs.branch(kappa_phi)
    if revenue < 0.0:
        raise ValueError(f"revenue must be nonnegative, got {revenue}")
    if revenue > br.r_max:
        raise InfeasibleRevenueError(
            f"revenue {revenue} exceeds Laffer peak {br.r_max} at kappa={kappa_phi}"
        )
    lo, hi = br.n_bar, br.n_sat
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if (kappa_phi - prefs.dH(1.0 - mid)) * mid > revenue:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def period_payoff(prefs: Preferences, kappa_phi: float, revenue: float) -> float:
    """Indirect per-period payoff ``W(R) = kappa n(R) + H(1 - n(R))``.

    Non-increasing and concave in ``R``; the full flow payoff in spending
    state ``g`` is ``W(R) - g``.
    """
    n = labor_from_revenue(prefs, kappa_phi, revenue)
    return kappa_phi * n + prefs.H(1.0 - n)


def autarky_allocation(prefs: Preferences, g: float) -> LaborAllocation:
    """Balanced-budget allocation during financial autarky.

    Labor solves ``z(kappa, n, g) = 0`` on the branch; the marginal utility of
    consumption is identically one under quasi-linearity.
    """
    kappa = prefs.kappa
    n = labor_from_revenue(prefs, kappa, g)
    tax = 1.0 - prefs.dH(1.0 - n) / kappa
    return LaborAllocation(
        n=n,
        tax=tax,
        revenue=(kappa - prefs.dH(1.0 - n)) * n,
        leisure_value=prefs.H(1.0 - n),
    )


def multiplier(prefs: Preferences, n: float, kappa_phi: float = 1.0) -> float:
    """Shadow cost of the budget constraint as a function of labor.

    ``nu(n) = -(kappa - H'(1-n)) / (kappa - H'(1-n) + H''(1-n) n)``, valid on
    ``(n_bar, n_sat]`` where the denominator (= dz/dn) is strictly negative.
    Decreasing in ``n``; zero at the satiation point; diverges at the Laffer
    peak, where a singularity error is raised.
    """
    br = prefs.branch(kappa_phi)
    if n > br.n_sat + 1e-12:
        raise ValueError(f"n={n} beyond satiation point {br.n_sat}")
    num = kappa_phi - prefs.dH(1.0 - n)
    den = num + prefs.d2H(1.0 - n) * n
    if den >= -1e-13:
        raise ZeroDivisionError(
            f"multiplier singular at the Laffer peak (n={n}, n_bar={br.n_bar})"
        )
    return -num / den


def tax_rate(prefs: Preferences, kappa_phi: float, n: float) -> float:
    """Linear labor tax consistent with labor supply: ``1 - H'(1-n)/kappa``."""
    return 1.0 - prefs.dH(1.0 - n) / kappa_phi


@dataclass
class ImplementabilityReport:
    """Outcome of replaying a path through the equilibrium restrictions."""

    ok: bool
    slack: np.ndarray  # per-period budget slack (= lump-sum transfer)
    violations: list  # (t, check, detail) triples
    max_shortfall: float

    def __bool__(self):
        return self.ok


def validate_implementability(path, solution, tol: float = 1e-9) -> ImplementabilityReport:
    """Check that a simulated path is consistent with a competitive equilibrium.

    Per period the budget restriction ``Z_t + phi_t (p_t B_{t+1} - due_t) >= -tol``
    must hold with ``Z_t`` recomputed from the recorded tax and labor, the
    access flag must follow ``phi_t = phi_{t-1}(1-d_t) + (1-phi_{t-1}) a_t``,
    debt must be frozen in autarky, and the recorded tax must be the one
    supported by household labor supply.  The per-period slack equals the
    nonnegative lump-sum transfer.
    """
    prefs = solution.params.prefs
    T = path.horizon
    slack = np.zeros(T)
    violations = []
    max_shortfall = 0.0
    for t in range(T):
        phi_prev = path.phi[t - 1] if t > 0 else path.phi0
        phi = path.phi[t]
        kappa_phi = 1.0 if phi == 1 else prefs.kappa
        n, tau, g = path.labor[t], path.tax[t], path.g_value[t]

        tau_ls = tax_rate(prefs, kappa_phi, n)
        if abs(tau - tau_ls) > tol:
            violations.append((t, "tax_foc", f"tax {tau} vs labor-supply tax {tau_ls}"))

        z = kappa_phi * tau * n - g
        lhs = z + phi * (path.price[t] * path.debt_next[t] - path.due[t])
        slack[t] = lhs
        if lhs < -tol:
            violations.append((t, "budget", f"slack {lhs} at state g={g}, B={path.debt[t]}"))
            max_shortfall = max(max_shortfall, -lhs)

        phi_lom = phi_prev * (1 - path.default[t]) + (1 - phi_prev) * path.accept[t]
        if phi != phi_lom:
            violations.append((t, "phi_lom", f"phi {phi} vs law of motion {phi_lom}"))
        if phi == 0 and path.debt_next[t] != path.debt[t]:
            violations.append((t, "autarky_freeze", f"debt moved {path.debt[t]} -> {path.debt_next[t]}"))
        if abs(path.transfer[t] - lhs) > tol:
            violations.append((t, "transfer", f"recorded {path.transfer[t]} vs slack {lhs}"))

    return ImplementabilityReport(
        ok=not violations,
        slack=slack,
        violations=violations,
        max_shortfall=max_shortfall,
    )
