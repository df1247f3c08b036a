import numpy as np
import pytest

from taxdefault import (
    DebtGrid,
    EconomyParams,
    OfferSchedule,
    Preferences,
    SolverOptions,
    tauchen,
)
from taxdefault.solver_amss import solve_amss
from taxdefault.solver_ed import solve

# grid half-width (in logs) and span of the shipped benchmark calibration
HALF_WIDTH = 0.66
SPAN = 1.75
SIGMA_U = HALF_WIDTH / SPAN


def sigma_eps(rho: float) -> float:
    return SIGMA_U * float(np.sqrt(1.0 - rho * rho))


@pytest.fixture(scope="session")
def prefs():
    return Preferences()


@pytest.fixture(scope="session")
def mini_params(prefs):
    """Small but economically faithful instance for fast module tests."""
    chain = tauchen(np.log(0.114), 0.56, sigma_eps(0.56), 7, span=SPAN)
    offers = OfferSchedule.equidistant(0.47, 0.10, 0.55, 6)
    debt = DebtGrid.uniform(0.0, 0.4, 120)
    return EconomyParams(prefs=prefs, chain=chain, offers=offers, debt=debt)


@pytest.fixture(scope="session")
def mini_opts():
    return SolverOptions(tol_price=1e-11, tol_value=1e-10)


@pytest.fixture(scope="session")
def mini_solution(mini_params, mini_opts):
    return solve(mini_params, mini_opts)


@pytest.fixture(scope="session")
def mini_amss(mini_params, mini_opts):
    return solve_amss(mini_params, options=mini_opts)
