"""OFDMA operating points for the broadcast channel.

Two families live here:

* A lower bound on the delay-limited region that needs only ordinal channel
  knowledge.  Each carrier goes to the user with the best gain on it.  If
  every user wins at least ``s`` carriers, users spread their rate over the
  carriers they won with budgets fixed per rank (virtual gains ``1/zeta``
  from best-of-M order statistics).  Otherwise every user falls back to a
  fixed block of carriers on which it did not win (virtual gains
  ``1/theta`` from the loser-conditioned law).  Averaging over all ``M**K``
  equally likely winner patterns bounds the required power.
* The full-CSI allocation: carriers go to ``argmax_m mu_m h_{m,k}`` with
  the multipliers of the broadcast optimum, then each user water-fills its
  own carriers.

Powers are per carrier (total over carriers divided by ``K``), rates are
per-carrier averages in nats.  Carriers are assumed i.i.d. unit-exponential.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import optimize

from .broadcast import min_sum_power_batch
from .region import RegionBuilder
from .channel import OrderStatSpec, order_stat_inverse_moment
from .waterfill import InfeasibleError, rate_waterfill, waterfill_log_batch

__all__ = [
    "OfdmaBoundConfig",
    "zeta_moments",
    "theta_moments",
    "exponential_moments",
    "ordered_budget_power",
    "count_at_least",
    "lemma_bound_power",
    "lemma_bound_power_bruteforce",
    "prorated_split",
    "prorated_bound_power",
    "bound_boundary_point",
    "OfdmaAllocation",
    "assign_carriers",
    "ofdma_dlc_alloc",
    "ofdma_dlc_alloc_batch",
    "fdma_powers_from_multipliers",
    "FdmaRegionBuilder",
]


@dataclass(frozen=True)
class OfdmaBoundConfig:
    """Parameters of the ordinal OFDMA bound.

    s : minimum number of carriers every user must win for the first term.
    prorated : use only fixed carrier blocks sized by the rate split.
    carrier_split : fixed block sizes ``K_m`` for the fallback term;
        defaults to ``floor(K/M)`` each (or the prorated split).
    """

    s: int = 1
    prorated: bool = False
    carrier_split: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.carrier_split is not None:
            if any(k < 0 for k in self.carrier_split):
                raise ValueError("carrier split must be nonnegative")
            object.__setattr__(self, "carrier_split", tuple(int(k) for k in self.carrier_split))


# --------------------------------------------------------------------------
# inverse moments of ordered gains
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _moments(base: str, users: int, n: int) -> tuple[float, ...]:
    return tuple(order_stat_inverse_moment(OrderStatSpec(base, n, p, users)) for p in range(1, n + 1))


def zeta_moments(M: int, b: int) -> np.ndarray:
    """``E[1/X_(p)]``, ``p = 1..b``, for ``b`` carriers won by one of ``M`` users.

    Ranks are ascending (``p = b`` is the largest gain).  Infinite entries
    mark divergent moments (finite iff ``M p >= 2``).
    """
    if M < 1 or b < 0:
        raise ValueError("need M >= 1 and b >= 0")
    return np.array(_moments("best_of_M", M, b)) if b else np.zeros(0)


def theta_moments(M: int, n: int) -> np.ndarray:
    """``E[1/X_(p)]``, ``p = 1..n``, for ``n`` carriers on which the user lost."""
    if M < 2:
        raise ValueError("loser-conditioned moments need M >= 2")
    return np.array(_moments("loser", M, n)) if n else np.zeros(0)


def exponential_moments(n: int) -> np.ndarray:
    """``E[1/X_(p)]`` for ``n`` i.i.d. unit exponentials (rank 1 diverges)."""
    return np.array(_moments("exponential", 1, n)) if n else np.zeros(0)


def ordered_budget_power(moments, total_rate: float) -> float:
    """Total power of fixed per-rank rate budgets with virtual gains ``1/moment``.

    Returns ``inf`` when no rank has a finite moment and the rate is positive.
    """
    z = np.asarray(moments, dtype=float)
    if total_rate <= 0:
        return 0.0
    if z.size == 0 or not np.any(np.isfinite(z)):
        return math.inf
    with np.errstate(divide="ignore"):
        virtual = np.where(np.isfinite(z), 1.0 / z, 0.0)
    return rate_waterfill(virtual, total_rate).total_power


# --------------------------------------------------------------------------
# counting winner patterns
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def count_at_least(users: int, carriers: int, s: int) -> int:
    """Number of maps from ``carriers`` items to ``users`` users giving each >= ``s``."""
    if users == 0:
        return 1 if carriers == 0 else 0
    return sum(math.comb(carriers, c) * count_at_least(users - 1, carriers - c, s)
               for c in range(s, carriers + 1))


def _check(M: int, K: int, rates, config: OfdmaBoundConfig) -> np.ndarray:
    R = np.asarray(rates, dtype=float).ravel()
    if R.size != M:
        raise ValueError(f"expected {M} rates")
    if np.any(R < 0):
        raise ValueError("rates must be nonnegative")
    if not config.prorated and config.s * M > K:
        raise ValueError(f"s*M = {config.s * M} exceeds K = {K}")
    return R


def _fallback_sizes(M: int, K: int, R: np.ndarray, config: OfdmaBoundConfig) -> list[int]:
    if config.carrier_split is not None:
        if len(config.carrier_split) != M or sum(config.carrier_split) != K:
            raise ValueError("carrier split must have M entries summing to K")
        return list(config.carrier_split)
    if config.prorated:
        return prorated_split(R, K)
    return [K // M] * M


def lemma_bound_power(M: int, K: int, rates, config: OfdmaBoundConfig = OfdmaBoundConfig()) -> float:
    """Upper bound on the average per-carrier power needed for ``rates``.

    The sum over the ``M**K`` winner patterns depends on a pattern only
    through each user's win count, so it is collapsed with exact integer
    counts: user ``m`` wins exactly ``c`` carriers while all others win at
    least ``s`` in ``C(K, c) N_{M-1}(K - c, s)`` patterns.
    """
    R = _check(M, K, rates, config)
    if config.prorated:
        return prorated_bound_power(R, K, config.carrier_split)
    total = M**K
    s = config.s
    term1 = 0.0
    for m in range(M):
        if R[m] == 0:
            continue
        for c in range(s, K - s * (M - 1) + 1):
            weight = math.comb(K, c) * count_at_least(M - 1, K - c, s)
            if weight:
                term1 += float(Fraction(weight, total)) * ordered_budget_power(zeta_moments(M, c), K * R[m])
    covered = count_at_least(M, K, s)
    term2 = 0.0
    if covered < total:
        share = float(Fraction(total - covered, total))
        sizes = _fallback_sizes(M, K, R, config)
        fallback = sum(ordered_budget_power(theta_moments(M, sizes[m]) if M > 1
                                            else exponential_moments(sizes[m]), K * R[m])
                       for m in range(M) if R[m] > 0)
        term2 = share * fallback
    return (term1 + term2) / K


def lemma_bound_power_bruteforce(M: int, K: int, rates, config: OfdmaBoundConfig = OfdmaBoundConfig()) -> float:
    """Same bound by explicit enumeration of all ``M**K`` winner patterns."""
    R = _check(M, K, rates, config)
    if config.prorated:
        return prorated_bound_power(R, K, config.carrier_split)
    sizes = _fallback_sizes(M, K, R, config)
    acc = []
    for pattern in itertools.product(range(M), repeat=K):
        counts = np.bincount(pattern, minlength=M)
        if np.all(counts >= config.s):
            acc.extend(ordered_budget_power(zeta_moments(M, int(counts[m])), K * R[m])
                       for m in range(M) if R[m] > 0)
        else:
            acc.extend(ordered_budget_power(theta_moments(M, sizes[m]) if M > 1
                                            else exponential_moments(sizes[m]), K * R[m])
                       for m in range(M) if R[m] > 0)
    return math.fsum(acc) / M**K / K


def prorated_split(rates, K: int) -> list[int]:
    """Carrier counts proportional to the rates, largest remainder to sum to ``K``.

    Ties in the remainders go to the lower user index.
    """
    R = np.asarray(rates, dtype=float).ravel()
    if np.any(R < 0) or R.sum() <= 0:
        raise ValueError("rates must be nonnegative with a positive sum")
    quota = K * R / R.sum()
    base = np.floor(quota).astype(int)
    left = K - int(base.sum())
    order = sorted(range(R.size), key=lambda m: (-(quota[m] - base[m]), m))
    for m in order[:left]:
        base[m] += 1
    return [int(x) for x in base]


def prorated_bound_power(rates, K: int, split=None) -> float:
    """Per-carrier power of fixed carrier blocks sized by the rate split.

    Each user gets ``K_m`` carriers regardless of the fading state and
    spreads ``K R_m`` nats over them with budgets fixed per rank.
    """
    R = np.asarray(rates, dtype=float).ravel()
    sizes = prorated_split(R, K) if split is None else list(split)
    total = math.fsum(ordered_budget_power(exponential_moments(sizes[m]), K * R[m])
                      for m in range(R.size) if R[m] > 0)
    return total / K


def bound_boundary_point(M: int, K: int, direction, power_budget: float,
                         config: OfdmaBoundConfig = OfdmaBoundConfig()) -> np.ndarray:
    """Largest ``alpha * direction`` whose bound power does not exceed ``P*``."""
    d = np.asarray(direction, dtype=float).ravel()
    if np.any(d < 0) or not np.any(d > 0):
        raise ValueError("direction must be nonnegative and nonzero")
    # round-off components (e.g. cos(pi/2)) would claim carriers in a prorated split
    d = np.where(d > 1e-12 * d.max(), d, 0.0)

    def excess(alpha):
        return lemma_bound_power(M, K, alpha * d, config) - power_budget

    # finiteness of the bound does not depend on the scale of the rates
    if not math.isfinite(excess(1.0)):
        return np.zeros_like(d)
    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("bound power does not reach the budget")
    alpha = optimize.brentq(lambda a: excess(a) if a > 0 else -power_budget, 0.0, hi,
                            xtol=1e-13, rtol=1e-12, maxiter=500)
    return alpha * d


# --------------------------------------------------------------------------
# full-CSI allocation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OfdmaAllocation:
    owners: np.ndarray
    rates: np.ndarray
    powers: np.ndarray
    sum_power: float
    multipliers: np.ndarray
    repaired: int = 0


def assign_carriers(gains, multipliers, targets) -> tuple[np.ndarray, int]:
    """Owner of every carrier by the weighted-gain rule, with empty-owner repair.

    A user with positive rate and no carrier takes, among the carriers of
    the user holding most carriers, the one where its own gain is largest.
    Returns the owners and the number of repairs.
    """
    g = np.asarray(gains, dtype=float)
    M, K = g.shape
    mu = np.asarray(multipliers, dtype=float)
    t = np.asarray(targets, dtype=float)
    owners = np.argmax(mu[:, None] * g, axis=0)
    repairs = 0
    while True:
        counts = np.bincount(owners, minlength=M)
        needy = [m for m in range(M) if t[m] > 0 and counts[m] == 0]
        if not needy:
            return owners, repairs
        m = needy[0]
        donor = int(np.argmax(counts))
        if counts[donor] <= 1:
            raise InfeasibleError(f"user {m} cannot be given a carrier: fewer carriers than users")
        cand = np.flatnonzero(owners == donor)
        k = int(cand[np.argmax(g[m, cand])])
        owners[k] = m
        repairs += 1


def ofdma_dlc_alloc(gains, target, multipliers=None) -> OfdmaAllocation:
    """Exclusive carrier assignment from broadcast multipliers, then per-user water-filling."""
    g = np.atleast_2d(np.asarray(getattr(gains, "gains", gains), dtype=float))
    M, K = g.shape
    t = np.asarray(getattr(target, "rates", target), dtype=float).ravel()
    if multipliers is None:
        _, _, mu, _, _ = min_sum_power_batch(g[None], t)
        multipliers = mu[0]
    owners, repairs = assign_carriers(g, multipliers, t)
    rates = np.zeros((M, K))
    powers = np.zeros((M, K))
    for m in range(M):
        own = np.flatnonzero(owners == m)
        if t[m] == 0:
            continue
        sol = rate_waterfill(g[m, own], K * t[m])
        rates[m, own] = sol.rates
        powers[m, own] = sol.powers
    return OfdmaAllocation(owners, rates, powers, math.fsum(powers.ravel()) / K,
                           np.asarray(multipliers, dtype=float), repairs)


def fdma_powers_from_multipliers(gains, target, multipliers) -> np.ndarray:
    """Per-state FDMA sum power per carrier given broadcast multipliers ``(n, M)``.

    Each carrier goes to the user maximising ``mu_m h_mk`` (repaired so every
    user with a positive target owns a carrier); each user then water-fills
    its own rate over the carriers it owns.
    """
    g = np.asarray(gains, dtype=float)
    n, M, K = g.shape
    t = np.asarray(target, dtype=float).ravel()
    mu = np.asarray(multipliers, dtype=float)
    owners = np.argmax(mu[:, :, None] * g, axis=1)
    for i in range(n):
        counts = np.bincount(owners[i], minlength=M)
        if np.any((t > 0) & (counts == 0)):
            owners[i], _ = assign_carriers(g[i], mu[i], t)
    fdma = np.zeros(n)
    with np.errstate(divide="ignore"):
        logg = np.log(g)
    for m in range(M):
        if t[m] == 0:
            continue
        lg = np.where(owners == m, logg[:, m, :], -np.inf)
        r, _ = waterfill_log_batch(lg, K * t[m])
        with np.errstate(invalid="ignore"):
            p = np.where(r > 0, np.expm1(r) / g[:, m, :], 0.0)
        fdma += p.sum(axis=-1)
    return fdma / K


def ofdma_dlc_alloc_batch(gains, target, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Per-carrier FDMA power and broadcast power for many states ``(n, M, K)``."""
    g = np.asarray(gains, dtype=float)
    bc, _, mu, _, _ = min_sum_power_batch(g, target, tol=tol)
    return fdma_powers_from_multipliers(g, target, mu), bc


class FdmaRegionBuilder(RegionBuilder):
    """Radial boundary search for the achievable FDMA (one user per carrier) region.

    Shares the frozen draws, warm starts and tolerances of
    :class:`~ofdm_dlc.region.RegionBuilder`; only the per-state power
    differs.  Axis points coincide with the broadcast ones, since a single
    active user owns every carrier.
    """

    def state_powers(self, rates, init=None):
        rates = np.asarray(rates, dtype=float)
        self.evaluations += 1
        if init is None:
            init = self._warm_start(rates)
        _, R, mu, _, _ = min_sum_power_batch(self.gains, rates, tol=self.bc_tol, init=init)
        self._last = (rates.copy(), R)
        return fdma_powers_from_multipliers(self.gains, rates, mu), R
