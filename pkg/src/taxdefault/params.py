"""Economy-level parameter bundle shared by the solvers and the simulators."""

from __future__ import annotations

from dataclasses import dataclass

from .model import Preferences
from .stochastic import DebtGrid, OfferSchedule, ShockChain

__all__ = ["EconomyParams", "SolverOptions"]


@dataclass(eq=False)
class EconomyParams:
    """Preferences, shock process, offer process and debt grid for one economy."""

    prefs: Preferences
    chain: ShockChain
    offers: OfferSchedule
    debt: DebtGrid

    def __post_init__(self):
        # Every g must be financeable with a balanced budget both in access
        # and in autarky, otherwise the state space contains dead states.
        g_max = float(self.chain.g_values[-1])
        for kappa in (1.0, self.prefs.kappa):
            r_max = self.prefs.branch(kappa).r_max
            if g_max > r_max:
                raise ValueError(
                    f"g_max={g_max} exceeds peak revenue {r_max} at kappa={kappa}"
                )

    @property
    def n_g(self) -> int:
        return self.chain.n_states

    @property
    def n_b(self) -> int:
        return self.debt.n_points

    @property
    def n_offers(self) -> int:
        return self.offers.n_offers


@dataclass
class SolverOptions:
    """Tolerances and loop controls for the fixed-point solvers.

    The outer loop damps prices, ``P_new = (1-damping) P_old + damping P_implied``,
    until the implied tables are within ``tol_price`` (sup norm) of the tables
    the values were computed with.  The inner value iteration runs to
    ``tol_value`` on the improvement sweeps, with ``howard_steps`` cheap
    policy-evaluation passes between sweeps.
    """

    damping: float = 0.5
    tol_price: float = 1e-10
    tol_value: float = 1e-9
    max_outer: int = 500
    howard_steps: int = 80
    p0_tol: float = 1e-12
    tie_tol: float = 1e-11
    damping_retries: int = 3
    hysteresis: float = 1e-7
    sentinel: float = -1e12
    labor_table_size: int = 8193
