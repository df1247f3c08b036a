"""Optimal fiscal policy with defaultable debt and debt renegotiation.

Solver and simulation toolkit: a quasi-linear Ramsey taxation model where the
government may default, renegotiates via random repayment offers, and
defaulted debt trades on a secondary market; plus a risk-free-debt baseline
with exogenous limits for comparison.
"""

from .model import (
    InfeasibleRevenueError,
    LaborAllocation,
    Preferences,
    autarky_allocation,
    labor_from_revenue,
    laffer_peak,
    multiplier,
    period_payoff,
    surplus,
    validate_implementability,
)
from .params import EconomyParams, SolverOptions
from .stochastic import (
    DebtGrid,
    OfferSchedule,
    PeriodRng,
    ShockChain,
    SplitMix64,
    draw_period,
    stationary_distribution,
    tauchen,
)

__version__ = "0.1.0"
