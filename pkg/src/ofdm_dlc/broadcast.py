"""Minimum sum power for a rate vector on the OFDM broadcast channel.

Each carrier uses superposition coding with successive decoding.  Users on
carrier ``k`` are ranked by decreasing gain; position 1 (strongest) is
decoded last and sees no interference, position ``q`` sees the power of
positions ``1..q-1``.  With cumulative carrier power ``P_q`` the rates
``R_q`` require

    P_q = e^{R_q} P_{q-1} + (e^{R_q} - 1) / h_q.

For this fixed order the carrier power is a convex function of the rates,
and its derivative with respect to ``R_q`` is ``exp(R_q - n_q)`` with the
noise coefficient

    n_q = -[ sum_{j>q} R_j + log(1/h_q + P_{q-1}) ].

Minimizing over one user's rates with the others fixed is therefore a rate
water-filling on virtual gains ``e^{n}``; cycling over users (Gauss-Seidel)
decreases the sum power monotonically to the optimum.  Noise power is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import GainMatrix
from .waterfill import InfeasibleError, waterfill_log_batch

__all__ = [
    "BcRateTarget",
    "BcAllocation",
    "decoding_orders",
    "noise_coefficients",
    "user_waterfill_step",
    "carrier_powers",
    "min_sum_power",
    "min_sum_power_batch",
    "bc_rate_check",
]


@dataclass(frozen=True)
class BcRateTarget:
    """Per-user rates in nats per channel use, averaged over carriers."""

    rates: tuple[float, ...]

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float).ravel()
        if np.any(~np.isfinite(r)) or np.any(r < 0):
            raise ValueError("target rates must be finite and nonnegative")
        object.__setattr__(self, "rates", tuple(float(x) for x in r))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rates)


@dataclass(frozen=True)
class BcAllocation:
    """Solution of the sum-power minimization in one fading state.

    ``per_user_rates[m, k]`` is the rate of user ``m`` on carrier ``k``;
    ``decoding_orders[k]`` lists users from strongest (decoded last) to
    weakest; ``sum_power`` is the power per carrier, i.e. the total over
    carriers divided by ``K``.
    """

    per_user_rates: np.ndarray
    decoding_orders: np.ndarray
    sum_power: float
    multipliers: np.ndarray
    powers: np.ndarray
    sweeps: int
    converged: bool
    history: tuple[float, ...] = field(default=(), repr=False)


def _as_gains(gains) -> np.ndarray:
    if isinstance(gains, GainMatrix):
        return gains.gains
    g = np.asarray(gains, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if np.any(g < 0):
        raise ValueError("gains must be nonnegative")
    return g


def decoding_orders(gains) -> np.ndarray:
    """Per-carrier user order by decreasing gain, ties to the lower user index.

    Accepts ``(M, K)`` or ``(n, M, K)`` and returns ``(K, M)`` or ``(n, K, M)``.
    """
    g = np.asarray(gains, dtype=float)
    return np.argsort(-np.swapaxes(g, -1, -2), axis=-1, kind="stable")


def _inv(h):
    with np.errstate(divide="ignore"):
        return 1.0 / h


def _sorted_view(g, R, order):
    """Inverse gains and rates in decoding order: arrays of shape (n, K, M)."""
    gt = np.swapaxes(g, -1, -2)
    Rt = np.swapaxes(R, -1, -2)
    inv_h = _inv(np.take_along_axis(gt, order, axis=-1))
    rs = np.take_along_axis(Rt, order, axis=-1)
    return inv_h, rs


def _cumulative(inv_h, rs):
    """Cumulative carrier power P_q along positions, shape (n, K, M)."""
    P = np.zeros_like(rs)
    prev = np.zeros(rs.shape[:-1])
    with np.errstate(invalid="ignore"):
        for q in range(rs.shape[-1]):
            r = rs[..., q]
            # a zero-rate position adds no power even if its gain is zero
            add = np.where(r > 0, np.expm1(r) * inv_h[..., q], 0.0)
            prev = np.exp(r) * prev + add
            P[..., q] = prev
    return P


def _noise_batch(g, R, order, m):
    """Noise coefficients of user ``m`` on every carrier, shape (n, K)."""
    inv_h, rs = _sorted_view(g, R, order)
    P = _cumulative(inv_h, rs)
    M = rs.shape[-1]
    suffix = np.cumsum(rs[..., ::-1], axis=-1)[..., ::-1]
    after = np.concatenate([suffix[..., 1:], np.zeros(rs.shape[:-1] + (1,))], axis=-1)
    before = np.concatenate([np.zeros(rs.shape[:-1] + (1,)), P[..., :-1]], axis=-1)
    pos = np.argmax(order == m, axis=-1)[..., None]
    a = np.take_along_axis(after, pos, axis=-1)[..., 0]
    ih = np.take_along_axis(inv_h, pos, axis=-1)[..., 0]
    b = np.take_along_axis(before, pos, axis=-1)[..., 0]
    with np.errstate(divide="ignore"):
        return -(a + np.log(ih + b))


def noise_coefficients(gains, rates, order, m: int) -> np.ndarray:
    """Noise coefficients ``n_{m,k}`` of user ``m`` on every carrier.

    ``gains`` and ``rates`` have shape ``(M, K)``; ``order`` has shape
    ``(K, M)`` (strongest first).  A zero gain yields ``-inf``.
    """
    g = _as_gains(gains)
    R = np.asarray(rates, dtype=float).reshape(g.shape)
    order = np.asarray(order).reshape(g.shape[1], g.shape[0])
    return _noise_batch(g[None], R[None], order[None], m)[0]


def user_waterfill_step(noise, target: float) -> tuple[np.ndarray, float]:
    """Rates ``[log mu + n_k]^+`` summing to ``target`` and the multiplier ``mu``."""
    n = np.asarray(noise, dtype=float).ravel()
    if target > 0 and not np.any(np.isfinite(n)):
        raise InfeasibleError("no usable carrier for this user")
    rates, log_mu = waterfill_log_batch(n[None, :], target)
    return rates[0], math.exp(float(log_mu[0]))


def carrier_powers(gains, rates, order=None) -> np.ndarray:
    """Total transmit power on every carrier for per-user rates.

    Shapes: gains/rates ``(M, K)`` or ``(n, M, K)``; returns ``(K,)`` or ``(n, K)``.
    """
    g = np.asarray(gains, dtype=float)
    R = np.asarray(rates, dtype=float)
    single = g.ndim == 2
    if single:
        g, R = g[None], R[None]
    order = decoding_orders(g) if order is None else np.asarray(order).reshape(g.shape[0], g.shape[2], g.shape[1])
    inv_h, rs = _sorted_view(g, R, order)
    P = _cumulative(inv_h, rs)[..., -1]
    return P[0] if single else P


def _per_user_powers(g, R, order):
    inv_h, rs = _sorted_view(g, R, order)
    P = _cumulative(inv_h, rs)
    ps = np.diff(np.concatenate([np.zeros(P.shape[:-1] + (1,)), P], axis=-1), axis=-1)
    out = np.empty_like(ps)
    np.put_along_axis(out, order, ps, axis=-1)
    return np.swapaxes(out, -1, -2)


def min_sum_power_batch(gains, target, tol: float = 1e-8, max_sweeps: int = 500, init=None,
                        orders=None):
    """Gauss-Seidel rate water-filling over many fading states at once.

    Parameters
    ----------
    gains : array, shape (n, M, K)
    target : array, shape (M,)
        Per-user rates averaged over carriers.
    tol : float
        Stop a state when a full sweep lowers its power by less than
        ``tol`` relative.
    init : array, shape (n, M, K), optional
        Feasible starting rates (e.g. a scaled previous solution).
    orders : array, shape (n, K, M) or (K, M), optional
        Fixed decoding orders (strongest position first) instead of the
        decreasing-gain order.

    Returns
    -------
    power : (n,) per-carrier sum power
    rates : (n, M, K)
    mu : (n, M) multipliers
    sweeps : (n,) sweeps used
    converged : (n,) bool
    """
    g = np.asarray(gains, dtype=float)
    n, M, K = g.shape
    target = np.asarray(target, dtype=float).ravel()
    if target.size != M:
        raise ValueError(f"target has {target.size} entries for {M} users")
    for m in range(M):
        if target[m] > 0 and np.any(np.all(g[:, m, :] <= 0, axis=-1)):
            raise InfeasibleError(f"user {m} has zero gain on every carrier in some state")
    order = decoding_orders(g) if orders is None else np.broadcast_to(orders, (n, K, M))
    R = np.zeros((n, M, K)) if init is None else np.array(init, dtype=float)
    mu = np.zeros((n, M))
    power = np.full(n, np.inf)
    sweeps = np.zeros(n, dtype=int)
    converged = np.zeros(n, dtype=bool)
    live = np.arange(n)
    users = [m for m in range(M) if target[m] > 0]
    R[:, [m for m in range(M) if target[m] == 0], :] = 0.0
    if not users:
        return np.zeros(n), R, mu, sweeps, np.ones(n, dtype=bool)
    for sweep in range(1, max_sweeps + 1):
        gl, Rl, ol = g[live], R[live], order[live]
        for m in users:
            nm = _noise_batch(gl, Rl, ol, m)
            rates, log_mu = waterfill_log_batch(nm, K * target[m])
            Rl[:, m, :] = rates
            mu[live, m] = np.exp(log_mu)
        R[live] = Rl
        new = carrier_powers(gl, Rl, ol).sum(axis=-1) / K
        old = power[live]
        sweeps[live] = sweep
        done = np.abs(old - new) <= tol * np.abs(new)
        power[live] = new
        converged[live[done]] = True
        live = live[~done]
        if live.size == 0 or M == 1:
            converged[live] = M == 1 or converged[live]
            break
    return power, R, mu, sweeps, converged


def min_sum_power(gains, target, tol: float = 1e-8, max_sweeps: int = 500,
                  orders=None) -> BcAllocation:
    """Minimum per-carrier sum power supporting ``target`` in one fading state.

    ``orders`` (shape ``(K, M)``, strongest position first) fixes the
    decoding order; by default users are ranked by decreasing gain on each
    carrier, which minimizes the sum power.
    """
    g = _as_gains(gains)
    M, K = g.shape
    t = target.as_array() if isinstance(target, BcRateTarget) else np.asarray(target, float).ravel()
    for m in range(M):
        if t[m] > 0 and not np.any(g[m] > 0):
            raise InfeasibleError(f"user {m} has zero gain on every carrier")
    order = decoding_orders(g) if orders is None else np.asarray(orders).reshape(K, M)
    history = []
    R = np.zeros((1, M, K))
    total_sweeps = 0
    converged = False
    mu = np.zeros((1, M))
    # one sweep at a time to record the power after each sweep
    prev = np.inf
    for _ in range(max_sweeps):
        power, R, mu, sw, conv = min_sum_power_batch(g[None], t, tol=0.0, max_sweeps=1, init=R,
                                                     orders=order[None])
        total_sweeps += 1
        p = float(power[0])
        history.append(p)
        if abs(prev - p) <= tol * abs(p) or M == 1 or not np.any(t > 0):
            converged = True
            break
        prev = p
    powers = _per_user_powers(g[None], R, order[None])[0]
    return BcAllocation(R[0], order, history[-1], mu[0], powers, total_sweeps, converged,
                        tuple(history))


def bc_rate_check(gains, powers, orders=None) -> np.ndarray:
    """Per-user rates, averaged over carriers, achieved by given per-user powers.

    User at position ``q`` of carrier ``k`` gets
    ``log(1 + h p / (1 + h * sum of powers at positions < q))``.
    """
    g = _as_gains(gains)
    p = np.asarray(powers, dtype=float).reshape(g.shape)
    M, K = g.shape
    order = decoding_orders(g) if orders is None else np.asarray(orders).reshape(K, M)
    out = np.zeros(M)
    for k in range(K):
        interference = 0.0
        for m in order[k]:
            h = g[m, k]
            out[m] += math.log1p(h * p[m, k] / (1.0 + h * interference))
            interference += p[m, k]
    return out / K
