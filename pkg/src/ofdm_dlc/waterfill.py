"""Per-state single-user power minimization for a total rate.

Rates are in nats per channel use.  Minimizing ``sum_k (e^{r_k} - 1)/h_k``
subject to ``sum_k r_k = R`` gives ``r_k = [log(lam * h_k)]^+`` with the
water level ``lam`` fixed by the active set ``D``:
``log lam = (R - sum_{k in D} log h_k) / |D|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InfeasibleError",
    "RegularityError",
    "WaterfillSolution",
    "SortedStates",
    "rate_waterfill",
    "min_power_for_rate",
    "waterfill_log_batch",
    "equal_power_allocation",
    "equal_power_rate",
    "equal_power_min_power",
    "equal_power_dlc",
    "equal_power_violations",
    "ordered_rate_budgets",
]


class InfeasibleError(ValueError):
    """A positive rate was requested on a state with no usable carrier."""


class RegularityError(ArithmeticError):
    """An expectation that must be finite is infinite or diverging."""


@dataclass(frozen=True)
class WaterfillSolution:
    water_level: float
    active_set: tuple[int, ...]
    rates: np.ndarray
    powers: np.ndarray
    total_power: float
    gains: np.ndarray = field(repr=False, default=None)

    @property
    def kkt_residual(self) -> float:
        """``max |e^{r_k} - lam h_k|`` over the active carriers, relative to ``lam``."""
        if not self.active_set:
            return 0.0
        return float(np.max(np.abs(np.expm1(self.rates[list(self.active_set)]) + 1.0
                                   - self.water_level * self.gains[list(self.active_set)]))) / self.water_level


def _active_count(sorted_logs: np.ndarray, total: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Active-set size and prefix log sums for descending log gains.

    ``sorted_logs`` has shape ``(n, K)``.  With ``S_d`` the sum of the ``d``
    largest log gains, carrier ``d+1`` joins iff
    ``T_d = S_d - d * log h_{d+1} < R``; ``T_d`` is nondecreasing in ``d``.
    """
    n, K = sorted_logs.shape
    with np.errstate(invalid="ignore"):
        S = np.cumsum(sorted_logs, axis=1)
        d = np.arange(1, K)
        T = S[:, :-1] - d * sorted_logs[:, 1:]
        joins = np.nan_to_num(T, nan=np.inf) < total[:, None]
    count = 1 + joins.sum(axis=1)
    count = np.where(total > 0, count, 0)
    return count, S


def waterfill_log_batch(log_gains: np.ndarray, total) -> tuple[np.ndarray, np.ndarray]:
    """Rate water-filling over many states at once.

    ``log_gains`` has shape ``(n, K)`` (``-inf`` marks unusable carriers) and
    ``total`` is a scalar or ``(n,)`` total rate.  Returns ``(rates, log_level)``.
    Ties between equal gains go to the lower carrier index.
    """
    log_gains = np.asarray(log_gains, dtype=float)
    n, K = log_gains.shape
    total = np.broadcast_to(np.asarray(total, dtype=float), (n,))
    if np.any(total < 0):
        raise ValueError("total rate must be nonnegative")
    order = np.argsort(-log_gains, axis=1, kind="stable")
    sl = np.take_along_axis(log_gains, order, axis=1)
    if np.any((sl[:, 0] == -np.inf) & (total > 0)):
        raise InfeasibleError("positive rate requested on a state with all gains zero")
    count, S = _active_count(sl, total)
    idx = np.maximum(count, 1) - 1
    S_d = np.take_along_axis(S, idx[:, None], axis=1)[:, 0]
    with np.errstate(invalid="ignore"):
        log_level = np.where(count > 0, (total - S_d) / np.maximum(count, 1), -sl[:, 0])
        rates = np.maximum(log_level[:, None] + log_gains, 0.0)
    rates = np.nan_to_num(rates, nan=0.0)
    # carriers outside the active set only reach zero up to rounding
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(K)[None, :], axis=1)
    rates = np.where(rank < count[:, None], rates, 0.0)
    return rates, log_level


def rate_waterfill(gains, total_rate: float) -> WaterfillSolution:
    """Minimum-power allocation supporting ``total_rate`` nats over the carriers."""
    h = np.asarray(gains, dtype=float).ravel()
    if np.any(h < 0):
        raise ValueError("gains must be nonnegative")
    if total_rate < 0:
        raise ValueError("total rate must be nonnegative")
    if total_rate > 0 and not np.any(h > 0):
        raise InfeasibleError("all gains are zero")
    with np.errstate(divide="ignore"):
        logs = np.log(h)
    rates, log_level = waterfill_log_batch(logs[None, :], total_rate)
    rates, log_level = rates[0], float(log_level[0])
    active = tuple(int(k) for k in np.flatnonzero(rates > 0))
    powers = np.zeros_like(h)
    if active:
        a = np.asarray(active)
        powers[a] = np.expm1(rates[a]) / h[a]
    return WaterfillSolution(math.exp(log_level), active, rates, powers, math.fsum(powers), h)


def min_power_for_rate(gains, rate: float) -> float:
    """Per-carrier power needed for a per-carrier rate ``rate`` (nats/use).

    Equals the water-filling total power for ``K * rate`` divided by ``K``.
    """
    h = np.asarray(gains, dtype=float).ravel()
    return rate_waterfill(h, h.size * rate).total_power / h.size


class SortedStates:
    """Frozen single-user states prepared for repeated power evaluations.

    Sorting and prefix sums are done once; each call to :meth:`powers`
    costs ``O(n K)``.  Used with common random numbers inside bisections.
    """

    def __init__(self, gains: np.ndarray):
        g = np.asarray(gains, dtype=float)
        if g.ndim == 1:
            g = g[None, :]
        self.gains = g
        self.n, self.K = g.shape
        with np.errstate(divide="ignore"):
            sl = np.log(-np.sort(-g, axis=1))
        if np.any(sl[:, 0] == -np.inf):
            raise InfeasibleError("a state has all gains zero")
        self.sorted_logs = sl
        with np.errstate(invalid="ignore"):
            self.S = np.cumsum(sl, axis=1)
            d = np.arange(1, self.K)
            self.T = np.nan_to_num(self.S[:, :-1] - d * sl[:, 1:], nan=np.inf)

    def powers(self, rate: float) -> np.ndarray:
        """Per-carrier minimum power of every state for per-carrier rate ``rate``."""
        total = self.K * rate
        if total <= 0:
            return np.zeros(self.n)
        count = 1 + (self.T < total).sum(axis=1)
        S_d = self.S[np.arange(self.n), count - 1]
        log_level = (total - S_d) / count
        active = np.arange(self.K)[None, :] < count[:, None]
        with np.errstate(invalid="ignore", over="ignore"):
            r = np.where(active, log_level[:, None] + self.sorted_logs, 0.0)
            p = np.where(active, np.expm1(r) * np.exp(-self.sorted_logs), 0.0)
        return p.sum(axis=1) / self.K


# --------------------------------------------------------------------------
# suboptimal laws
# --------------------------------------------------------------------------


def equal_power_allocation(rate: float, gains) -> np.ndarray:
    """Equal power on every carrier, ``e^R * prod_k h_k^(-1/K)``.

    Guarantees at least ``rate`` nats per carrier on average in every state,
    with equality as the SNR grows.
    """
    h = np.asarray(gains, dtype=float)
    with np.errstate(divide="ignore"):
        geo = np.exp(-np.mean(np.log(h), axis=-1))
    return np.broadcast_to((math.exp(rate) * geo)[..., None], h.shape).copy()


def equal_power_rate(rate: float, geo_moment: float) -> float:
    """Average per-carrier power the equal-power law spends to sustain ``rate``.

    In state ``h`` the law uses ``e^R * prod_k h_k^(-1/K)`` on every carrier,
    so its average is ``e^R * geo_moment`` with
    ``geo_moment = E[prod_k h_k^(-1/K)]``.
    """
    if not math.isfinite(geo_moment) or geo_moment <= 0:
        raise RegularityError(f"geometric inverse moment is not finite and positive: {geo_moment}")
    return math.exp(rate) * geo_moment


def equal_power_min_power(gains, rate: float, iters: int = 200) -> np.ndarray:
    """Smallest common per-carrier power achieving ``rate`` in each state.

    ``gains`` has shape ``(n, K)``; solved by vectorized bisection on the
    monotone map ``p -> mean_k log(1 + h_k p)``.
    """
    h = np.atleast_2d(np.asarray(gains, dtype=float))
    n = h.shape[0]
    if rate <= 0:
        return np.zeros(n)
    lo = np.zeros(n)
    hi = equal_power_allocation(rate, h)[:, 0]
    hi = np.where(np.isfinite(hi), hi, 1.0)
    # grow the bracket where the equal-power upper estimate is not finite
    for _ in range(200):
        short = np.mean(np.log1p(h * hi[:, None]), axis=1) < rate
        if not short.any():
            break
        hi = np.where(short, hi * 4.0, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = np.mean(np.log1p(h * mid[:, None]), axis=1) >= rate
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
        if np.all(hi - lo <= 1e-15 * hi):
            break
    return hi


def equal_power_dlc(power: float, geo_moment: float) -> float:
    """Rate sustained in every state by the equal-power law at average ``power``.

    ``geo_moment`` is ``E[prod_k h_k^(-1/K)]``.
    """
    if not math.isfinite(geo_moment) or geo_moment <= 0:
        raise RegularityError(f"geometric inverse moment is not finite and positive: {geo_moment}")
    return math.log(power / geo_moment)


def equal_power_violations(rate: float, power: float, gains) -> float:
    """Fraction of states in which a fixed equal power misses ``rate``."""
    h = np.atleast_2d(np.asarray(gains, dtype=float))
    achieved = np.mean(np.log1p(h * power), axis=1)
    return float(np.mean(achieved < rate * (1 - 1e-12)))


def ordered_rate_budgets(zetas, total_rate: float) -> np.ndarray:
    """Fixed per-rank rate budgets from inverse moments of the ordered gains.

    Rank ``p`` behaves like a carrier of gain ``1/zeta_p``; ranks with an
    infinite inverse moment get no rate.
    """
    z = np.asarray(zetas, dtype=float).ravel()
    if np.any(z <= 0):
        raise ValueError("inverse moments must be positive")
    if not np.any(np.isfinite(z)):
        raise InfeasibleError("every rank has an infinite inverse moment")
    with np.errstate(divide="ignore"):
        virtual = np.where(np.isfinite(z), 1.0 / z, 0.0)
    return rate_waterfill(virtual, total_rate).rates
