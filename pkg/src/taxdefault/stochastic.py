"""Discretized stochastic environment and deterministic random streams.

The spending process is a log AR(1) discretized with Tauchen's method; the
debt-restructuring process is an offer lattice (arrival probability ``lam``
plus a discrete distribution over repayment fractions).  Random numbers come
from a small, explicit 64-bit generator (splitmix64) so that simulations are
bit-reproducible across runs and thread counts; Monte Carlo replication ``r``
uses stream seed ``master_seed XOR r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DebtGrid",
    "OfferSchedule",
    "PeriodDraw",
    "PeriodRng",
    "ShockChain",
    "SplitMix64",
    "draw_period",
    "stationary_distribution",
    "tauchen",
]

_ROW_TOL = 1e-12
_STAT_TOL = 1e-10

#: Salt separating the offer stream from the spending stream so that two
#: models simulated with the same seed see identical g paths.
OFFER_STREAM_SALT = 0xD1B54A32D192ED03

_MASK64 = (1 << 64) - 1


@dataclass(eq=False)
class ShockChain:
    """Finite-state Markov chain for government spending.

    ``g_values`` ascending spending levels, ``transition`` row-stochastic,
    ``stationary`` its left fixed point, ``iid`` true when all rows coincide.
    """

    g_values: np.ndarray
    transition: np.ndarray
    stationary: np.ndarray = field(default=None)
    iid: bool = field(default=False)

    def __post_init__(self):
        self.g_values = np.asarray(self.g_values, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        n = self.g_values.size
        if self.transition.shape != (n, n):
            raise ValueError("transition shape does not match g_values")
        if np.any(np.diff(self.g_values) <= 0.0):
            raise ValueError("g_values must be strictly increasing")
        if np.any(self.transition < 0.0):
            raise ValueError("transition has negative entries")
        if np.max(np.abs(self.transition.sum(axis=1) - 1.0)) > _ROW_TOL:
            raise ValueError("transition rows must sum to 1")
        if self.stationary is None:
            self.stationary = stationary_distribution(self.transition)
        else:
            self.stationary = np.asarray(self.stationary, dtype=float)
        if np.max(np.abs(self.stationary @ self.transition - self.stationary)) > _STAT_TOL:
            raise ValueError("stationary distribution is not invariant")
        self.iid = bool(np.max(np.abs(self.transition - self.transition[0])) < _ROW_TOL)

    @property
    def n_states(self) -> int:
        return self.g_values.size


@dataclass(eq=False)
class OfferSchedule:
    """Repayment-offer lattice: arrival probability and discrete offer law."""

    lam: float
    deltas: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.deltas = np.asarray(self.deltas, dtype=float)
        self.probs = np.asarray(self.probs, dtype=float)
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.deltas.shape != self.probs.shape or self.deltas.ndim != 1:
            raise ValueError("deltas and probs must be 1-d arrays of equal length")
        if np.any(np.diff(self.deltas) <= 0.0):
            raise ValueError("deltas must be strictly increasing")
        if np.any(self.deltas <= 0.0) or np.any(self.deltas >= 1.0):
            raise ValueError("deltas must lie in (0, 1)")
        if np.any(self.probs < 0.0) or abs(self.probs.sum() - 1.0) > _ROW_TOL:
            raise ValueError("probs must be nonnegative and sum to 1")

    @classmethod
    def equidistant(cls, lam: float, lo: float, hi: float, n: int) -> "OfferSchedule":
        """``n`` equiprobable repayment fractions equally spaced on [lo, hi]."""
        return cls(lam=lam, deltas=np.linspace(lo, hi, n), probs=np.full(n, 1.0 / n))

    @property
    def n_offers(self) -> int:
        return self.deltas.size

    @property
    def mean_delta(self) -> float:
        return float(self.probs @ self.deltas)


@dataclass(eq=False)
class DebtGrid:
    """Ascending debt levels; must contain zero exactly once."""

    b_values: np.ndarray

    def __post_init__(self):
        self.b_values = np.asarray(self.b_values, dtype=float)
        if np.any(np.diff(self.b_values) <= 0.0):
            raise ValueError("b_values must be strictly increasing")
        if int(np.sum(self.b_values == 0.0)) != 1:
            raise ValueError("b_values must contain 0 exactly once")

    @classmethod
    def uniform(cls, b_min: float = 0.0, b_max: float = 0.4, n: int = 800) -> "DebtGrid":
        return cls(np.linspace(b_min, b_max, n))

    @property
    def n_points(self) -> int:
        return self.b_values.size

    def snap(self, value: float) -> int:
        """Index of the nearest grid point (ties resolve downward)."""
        idx = int(np.searchsorted(self.b_values, value))
        if idx == 0:
            return 0
        if idx >= self.b_values.size:
            return self.b_values.size - 1
        below, above = self.b_values[idx - 1], self.b_values[idx]
        return idx - 1 if value - below <= above - value else idx


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def tauchen(
    mu_log: float,
    rho: float,
    sigma_eps: float,
    n_states: int,
    span: float = 3.0,
) -> ShockChain:
    """Discretize ``log g' = (1-rho) mu_log + rho log g + sigma_eps eps``.

    The grid is ``n_states`` equally spaced points in log-space covering
    ``mu_log +/- span`` unconditional standard deviations; transition entries
    are normal-CDF differences at half-step boundaries.  ``g_values`` are the
    exponentials of the log grid.
    """
    if not abs(rho) < 1.0:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    if sigma_eps <= 0.0:
        raise ValueError(f"sigma_eps must be positive, got {sigma_eps}")
    if n_states < 2:
        raise ValueError(f"n_states must be >= 2, got {n_states}")
    if span <= 0.0:
        raise ValueError(f"span must be positive, got {span}")

    sigma_u = sigma_eps / math.sqrt(1.0 - rho * rho)
    z = np.linspace(mu_log - span * sigma_u, mu_log + span * sigma_u, n_states)
    half = 0.5 * (z[1] - z[0])

    P = np.empty((n_states, n_states))
    for i in range(n_states):
        m = (1.0 - rho) * mu_log + rho * z[i]
        for j in range(n_states):
            if j == 0:
                P[i, j] = _norm_cdf((z[0] - m + half) / sigma_eps)
            elif j == n_states - 1:
                P[i, j] = 1.0 - _norm_cdf((z[-1] - m - half) / sigma_eps)
            else:
                P[i, j] = _norm_cdf((z[j] - m + half) / sigma_eps) - _norm_cdf(
                    (z[j] - m - half) / sigma_eps
                )
    return ShockChain(g_values=np.exp(z), transition=P)


def stationary_distribution(transition: np.ndarray, tol: float = 1e-12, max_iter: int = 10**6) -> np.ndarray:
    """Left eigenvector for eigenvalue 1 by power iteration."""
    P = np.asarray(transition, dtype=float)
    pi = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt
        pi = nxt
    raise RuntimeError(f"power iteration did not converge in {max_iter} iterations")


# -- random streams ----------------------------------------------------------


class SplitMix64:
    """splitmix64: 64-bit state advanced by the golden-ratio increment.

    Tiny, fast and documented; passes BigCrush when used as here.  One
    instance per stream; never share an instance across replications.
    """

    GAMMA = 0x9E3779B97F4A7C15

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def u01(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53


@dataclass
class PeriodRng:
    """Pair of independent streams: spending draws and offer draws.

    Keeping offers on a salted side stream means a model without offers
    (the risk-free baseline) consumes the identical g sequence for the same
    seed, which makes cross-model comparisons shock-by-shock.
    """

    seed: int
    g_stream: SplitMix64 = field(init=False)
    offer_stream: SplitMix64 = field(init=False)

    def __post_init__(self):
        self.g_stream = SplitMix64(self.seed)
        self.offer_stream = SplitMix64(self.seed ^ OFFER_STREAM_SALT)

    @classmethod
    def for_replication(cls, master_seed: int, replication: int) -> "PeriodRng":
        return cls(seed=(master_seed ^ replication) & _MASK64)


@dataclass(frozen=True)
class PeriodDraw:
    """Exogenous outcome of one period: next g index and the offer event."""

    g_index: int
    offer_arrived: bool
    delta_index: int | None
    delta: float | None


def draw_period(
    chain: ShockChain,
    offers: OfferSchedule,
    g_index: int,
    phi_prev: int,
    rng: PeriodRng,
) -> PeriodDraw:
    """Draw next-period spending and, in autarky, the repayment offer.

    With market access last period the repayment fraction is one with
    certainty; in autarky an offer arrives with probability ``lam`` and is
    drawn from the offer law.  Spending uses the g stream, offers the offer
    stream, in a fixed order so sequences are reproducible.
    """
    u = rng.g_stream.u01()
    row = chain.transition[g_index]
    g_next = int(np.searchsorted(np.cumsum(row), u, side="right"))
    g_next = min(g_next, chain.n_states - 1)

    if phi_prev == 1:
        return PeriodDraw(g_index=g_next, offer_arrived=False, delta_index=None, delta=1.0)

    if rng.offer_stream.u01() < offers.lam:
        v = rng.offer_stream.u01()
        k = int(np.searchsorted(np.cumsum(offers.probs), v, side="right"))
        k = min(k, offers.n_offers - 1)
        return PeriodDraw(g_index=g_next, offer_arrived=True, delta_index=k, delta=float(offers.deltas[k]))
    return PeriodDraw(g_index=g_next, offer_arrived=False, delta_index=None, delta=None)
