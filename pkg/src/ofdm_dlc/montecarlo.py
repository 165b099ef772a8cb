"""Seeded expectations over fading states, delay-limited capacity and ergodic capacity.

Every estimate is a function of ``(model, samples, seed)`` only: draws come
from counter-based substreams (see :mod:`ofdm_dlc.channel`) and means are
reduced with exactly rounded sums.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, stats

from .channel import ChannelModel, multiplicity, sample_gains
from .estimate import McEstimate, summarize
from .waterfill import RegularityError, SortedStates

__all__ = [
    "DivergenceWarning",
    "RegularityError",
    "StabilityReport",
    "DlcResult",
    "ProbeResult",
    "Marginal",
    "STATISTICS",
    "register_statistic",
    "stability",
    "expect",
    "su_dlc",
    "regularity_probe",
    "ergodic_capacity",
    "rank_inverse_moments",
    "ordered_budget_dlc",
    "equal_power_dlc_mc",
]

NONFINITE_LIMIT = 1e-3
DRIFT_LIMIT = 0.05
DRIFT_RUN = 3
TAIL_INDEX_LIMIT = 1.25


class DivergenceWarning(RuntimeWarning):
    """A Monte-Carlo mean is unreliable because its expectation looks infinite."""

    def __init__(self, message: str, fraction: float = 0.0):
        super().__init__(message)
        self.fraction = fraction


# --------------------------------------------------------------------------
# per-draw statistics on gain arrays of shape (n, M, K)
# --------------------------------------------------------------------------

Statistic = Callable[[np.ndarray], np.ndarray]


def _geo_inv(g):
    with np.errstate(divide="ignore"):
        return np.exp(-np.mean(np.log(g[:, 0, :]), axis=-1))


def _inv(x):
    with np.errstate(divide="ignore"):
        return 1.0 / x


STATISTICS: dict[str, Statistic] = {
    "h11": lambda g: g[:, 0, 0],
    "log_h": lambda g: np.log(g[:, 0, 0]),
    "geo_inv": _geo_inv,
    "inv_max": lambda g: _inv(g[:, 0, :].max(axis=-1)),
    "chi_inv_max": lambda g: _inv(multiplicity(g[:, 0, :]) * g[:, 0, :].max(axis=-1)),
    # mean gain over carriers equals the tap energy
    "inv_tap_energy": lambda g: _inv(g[:, 0, :].mean(axis=-1)),
    "max_gain": lambda g: g[:, 0, :].max(axis=-1),
}


def register_statistic(name: str, fn: Statistic) -> None:
    STATISTICS[name] = fn


@dataclass(frozen=True)
class StabilityReport:
    """Running-mean drift over doubling windows plus a tail-index estimate.

    ``divergent`` is set when the mean moves by more than 5% on three
    consecutive window doublings, or when the Hill estimate of the upper
    tail index is at most 1.25 (an infinite or barely finite mean).
    """

    drifts: tuple[float, ...]
    drift_flag: bool
    tail_index: float
    divergent: bool


def stability(values, first_window: int = 1000) -> StabilityReport:
    v = np.asarray(values, dtype=float).ravel()
    v = v[np.isfinite(v)]
    n = v.size
    drifts = []
    if n >= 2 * first_window:
        c = np.cumsum(v)
        w = first_window
        while 2 * w <= n:
            a, b = c[w - 1] / w, c[2 * w - 1] / (2 * w)
            drifts.append(abs(b - a) / abs(a) if a != 0 else (0.0 if b == 0 else math.inf))
            w *= 2
    run = best = 0
    for d in drifts:
        run = run + 1 if d > DRIFT_LIMIT else 0
        best = max(best, run)
    drift_flag = best >= DRIFT_RUN
    tail = _hill_index(np.abs(v))
    return StabilityReport(tuple(drifts), drift_flag, tail, drift_flag or tail <= TAIL_INDEX_LIMIT)


def _hill_index(v: np.ndarray) -> float:
    n = v.size
    k = int(math.sqrt(n))
    if k < 10:
        return math.inf
    top = np.partition(v, n - k - 1)[n - k - 1:]
    top.sort()
    ref = top[0]
    if ref <= 0:
        return math.inf
    excess = np.mean(np.log(top[1:] / ref))
    return math.inf if excess == 0 else 1.0 / excess


def _resolve(statistic) -> Statistic:
    if callable(statistic):
        return statistic
    try:
        return STATISTICS[statistic]
    except KeyError:
        raise ValueError(f"unknown statistic {statistic!r}; known: {sorted(STATISTICS)}") from None


def _gains(model: ChannelModel, samples: int, seed: int, states) -> np.ndarray:
    if states is not None:
        return np.asarray(states, dtype=float)
    return sample_gains(model, samples, seed)


def expect(model: ChannelModel, statistic, samples: int, seed: int, states=None,
           check: bool = True) -> McEstimate:
    """Mean and standard error of a per-draw statistic over fading states.

    ``statistic`` is a registered name or a callable mapping gains of shape
    ``(n, M, K)`` to ``(n,)``.  Passing ``states`` reuses a frozen draw set
    (common random numbers).  Emits :class:`DivergenceWarning` when more than
    0.1% of values are non-finite or the running mean is unstable.
    """
    if states is None and samples < 2:
        raise ValueError("samples must be >= 2")
    values = np.asarray(_resolve(statistic)(_gains(model, samples, seed, states)), dtype=float)
    est = summarize(values, seed)
    if check:
        frac = est.nonfinite / values.size
        if frac > NONFINITE_LIMIT:
            warnings.warn(DivergenceWarning(f"statistic non-finite on {frac:.3%} of draws", frac),
                          stacklevel=2)
        elif stability(values).divergent:
            warnings.warn(DivergenceWarning("running mean is unstable; expectation may be infinite",
                                            frac), stacklevel=2)
    return est


# --------------------------------------------------------------------------
# delay-limited capacity
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DlcResult:
    """Delay-limited rate (nats per channel use) at a per-carrier power budget."""

    rate: float
    power_budget: float
    estimate: McEstimate
    bisection_iterations: int
    rate_std_error: float = math.nan
    stability: StabilityReport | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "power_budget": self.power_budget,
            "rate_std_error": self.rate_std_error,
            "bisection_iterations": self.bisection_iterations,
            "power": self.estimate.to_dict(),
        }


def _mean(v: np.ndarray) -> float:
    try:
        return math.fsum(v) / v.size
    except OverflowError:
        # partial sums beyond the float range: the mean is effectively infinite
        return math.inf


def su_dlc(model: ChannelModel, power_budget: float, samples: int = 100_000, seed: int = 0,
           tol: float = 1e-3, user: int = 0, states=None, max_iter: int = 200) -> DlcResult:
    """Largest rate whose average minimum power meets ``power_budget``.

    The required power ``E[min power at rate C]`` is evaluated on one frozen
    set of draws, so it is a deterministic, strictly increasing function of
    ``C``; bisection stops once it is within ``tol * P*`` of the budget.
    ``states`` may supply gains of shape ``(n, K)`` or ``(n, M, K)``.

    Raises
    ------
    RegularityError
        If the required power has an infinite expectation (the rate is zero).
    """
    if power_budget <= 0:
        raise ValueError("power budget must be positive")
    g = _gains(model, samples, seed, states)
    if g.ndim == 3:
        g = g[:, user, :]
    frozen = SortedStates(g)
    K = frozen.K

    def avg(c):
        return _mean(frozen.powers(c))

    # the small-rate slope E[1/h_max] decides regularity of the low end; the
    # geometric inverse moment that of the high end
    probe = stability(frozen.powers(max(power_budget, 1e-6)))
    if probe.divergent:
        raise RegularityError(
            f"required power has no finite expectation (tail index {probe.tail_index:.2f}, "
            f"drifts {['%.3f' % d for d in probe.drifts]}); the delay-limited rate is zero")

    lo, hi = 0.0, max(power_budget / _mean(np.exp(-frozen.sorted_logs[:, 0])), 1e-12)
    it = 0
    while avg(hi) < power_budget:
        lo, hi = hi, 2.0 * hi
        it += 1
        if it > 2000 or not math.isfinite(hi):
            raise RegularityError("could not bracket the rate")
    c = hi
    for it in range(it, it + max_iter):
        c = 0.5 * (lo + hi)
        e = avg(c)
        if abs(e - power_budget) <= tol * power_budget:
            break
        if e < power_budget:
            lo = c
        else:
            hi = c
    powers = frozen.powers(c)
    est = summarize(powers, seed)
    # delta method: SE of the rate from the SE of the power and the local slope
    dc = max(1e-6 * max(c, 1e-9), 1e-12)
    slope = (avg(c + dc) - avg(max(c - dc, 0.0))) / (c + dc - max(c - dc, 0.0))
    rate_se = est.std_error / slope if slope > 0 else math.inf
    return DlcResult(c, power_budget, est, it + 1, rate_se, probe)


@dataclass(frozen=True)
class ProbeResult:
    estimate: McEstimate
    report: StabilityReport

    @property
    def divergent(self) -> bool:
        return self.report.divergent


def regularity_probe(model: ChannelModel, samples: int, seed: int, user: int = 0,
                     states=None) -> ProbeResult:
    """Estimate of ``E[prod_k h_k^(-1/K)]`` with its running-mean stability."""
    g = _gains(model, samples, seed, states)
    if g.ndim == 2:
        g = g[:, None, :]
    values = _geo_inv(g[:, user:user + 1, :])
    return ProbeResult(summarize(values, seed), stability(values))


# --------------------------------------------------------------------------
# ergodic capacity
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Marginal:
    """Marginal law of one carrier gain: a scipy distribution or a constant."""

    dist: object = None
    constant: float | None = None

    @classmethod
    def rayleigh(cls) -> "Marginal":
        return cls(dist=stats.expon())

    @classmethod
    def degenerate(cls, value: float = 1.0) -> "Marginal":
        if value <= 0:
            raise ValueError("constant gain must be positive")
        return cls(constant=float(value))

    def expect_above(self, fn: Callable[[float], float], threshold: float) -> float:
        """``E[fn(h) ; h > threshold]``."""
        if self.constant is not None:
            return fn(self.constant) if self.constant > threshold else 0.0
        d = self.dist
        total = 0.0
        pieces = [threshold, threshold + 1.0, math.inf]
        for a, b in zip(pieces[:-1], pieces[1:]):
            val, _ = integrate.quad(lambda h: fn(h) * d.pdf(h), a, b, epsabs=1e-13, epsrel=1e-11,
                                    limit=400)
            total += val
        return total


def ergodic_capacity(marginal: Marginal, power_budget: float, tol: float = 1e-12) -> float:
    """Per-carrier ergodic capacity with water-filling over fading states.

    Solves ``E[max(xi - 1/h, 0)] = P*`` for the water level ``xi`` and
    returns ``E[max(log(xi h), 0)]``.
    """
    if power_budget <= 0:
        raise ValueError("power budget must be positive")

    def used(xi):
        return marginal.expect_above(lambda h: xi - 1.0 / h, 1.0 / xi) - power_budget

    hi = power_budget + 1.0
    while used(hi) < 0:
        hi *= 2.0
    lo = hi / 2.0
    while used(lo) > 0 and lo > 1e-300:
        lo /= 2.0
    xi = optimize.brentq(used, lo, hi, xtol=tol * hi, rtol=4 * np.finfo(float).eps, maxiter=500)
    return marginal.expect_above(lambda h: math.log(xi * h), 1.0 / xi)


# --------------------------------------------------------------------------
# suboptimal single-user schemes
# --------------------------------------------------------------------------


def rank_inverse_moments(model: ChannelModel, samples: int = 100_000, seed: int = 0,
                         user: int = 0) -> np.ndarray:
    """``E[1/h_(p)]`` for ascending ranks ``p = 1..K`` of one user's gains.

    Carriers that are i.i.d. unit exponentials (uniform profile with
    ``L = K``) use exact quadrature.  Otherwise the moments are Monte-Carlo
    estimates, and the smallest gain is always marked divergent, because its
    density is positive at zero for Rayleigh taps.
    """
    from .channel import OrderStatSpec, order_stat_inverse_moment

    K = model.carriers
    pdp = model.pdp[user]
    if pdp.taps == K and pdp == pdp.uniform(K) and model.tap_law == "rayleigh":
        return np.array([order_stat_inverse_moment(OrderStatSpec("exponential", K, p))
                         for p in range(1, K + 1)])
    g = np.sort(sample_gains(model, samples, seed)[:, user, :], axis=-1)
    with np.errstate(divide="ignore"):
        z = np.array([math.fsum(1.0 / g[:, p]) / g.shape[0] for p in range(K)])
    z[0] = math.inf
    return z


def ordered_budget_dlc(zetas, power_budget: float) -> float:
    """Rate of the rank-only scheme with fixed per-rank budgets at per-carrier power ``P*``."""
    from .waterfill import rate_waterfill

    z = np.asarray(zetas, dtype=float)
    K = z.size
    if not np.any(np.isfinite(z)):
        return 0.0
    with np.errstate(divide="ignore"):
        virtual = np.where(np.isfinite(z), 1.0 / z, 0.0)

    def excess(c):
        return rate_waterfill(virtual, K * c).total_power / K - power_budget

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
    return optimize.brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-13)


def equal_power_dlc_mc(model: ChannelModel, power_budget: float, samples: int = 100_000,
                       seed: int = 0, user: int = 0, states=None) -> DlcResult:
    """Rate sustained by the best state-dependent common power on all carriers.

    In each state the common power is the smallest one meeting the rate;
    the rate is then raised until the average power equals ``P*``.
    """
    from .waterfill import equal_power_min_power

    g = _gains(model, samples, seed, states)
    if g.ndim == 3:
        g = g[:, user, :]
    probe = stability(np.exp(-np.mean(np.log(g), axis=-1)))
    if probe.divergent:
        raise RegularityError("geometric inverse moment looks infinite")

    def avg(c):
        return _mean(equal_power_min_power(g, c, iters=80))

    hi = 1.0
    while avg(hi) < power_budget:
        hi *= 2.0
    it = 0

    def excess(c):
        nonlocal it
        it += 1
        return avg(c) - power_budget

    c = optimize.brentq(excess, 0.0, hi, xtol=1e-10, rtol=1e-10)
    est = summarize(equal_power_min_power(g, c), seed)
    return DlcResult(c, power_budget, est, it, math.nan, probe)
