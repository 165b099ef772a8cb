"""Closed-form low- and high-SNR approximations and bounds on the delay-limited rate.

Every evaluator returns a :class:`BoundReport`.  Evaluators that only hold in
a regime (low SNR, large ``P*``, parameter ranges) raise :class:`RegimeError`
outside of it rather than returning a meaningless number.

Notation: ``E_inv_max = E[1/h_max]``, ``E_geo = E[prod_k h_k^(-1/K)]`` and
``E_inv_c1 = E[1/||c||_1]`` (inverse tap energy).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .channel import OrderStatSpec, PowerDelayProfile, order_stat_inverse_moment
from .montecarlo import Marginal

__all__ = [
    "RegimeError",
    "BoundReport",
    "BOUNDS",
    "low_snr_slope",
    "low_snr_sublinear",
    "low_snr_log_approx",
    "corollary_low1_interval",
    "overshoot_factors",
    "pdp_low_upper",
    "high_snr_sandwich",
    "entropy_upper",
    "entropy_H",
    "log_gain_variance",
    "prop_high3_bound",
    "prop_high4_bound",
    "prop_high5_bound",
    "convergence_speed_lower",
    "pdp_high_upper",
    "inverse_max_moment_iid",
    "geo_moment_iid",
    "inverse_tap_energy_moment",
    "DensitySegment",
]

EULER_GAMMA = float(np.euler_gamma)


class RegimeError(ValueError):
    """A bound was requested outside the regime in which it holds."""


@dataclass(frozen=True)
class BoundReport:
    name: str
    value: float | tuple[float, float]
    validity_note: str
    constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        v = list(self.value) if isinstance(self.value, tuple) else self.value
        return {"name": self.name, "value": v, "validity_note": self.validity_note,
                "constants": dict(self.constants)}


def _check_power(P: float):
    if not P >= 0:
        raise ValueError("power must be nonnegative")


def _high_guard(P: float, K: int, guard: bool):
    _check_power(P)
    if guard and P < 10 * K:
        raise RegimeError(f"high-SNR bound needs P* >= 10K = {10 * K}, got {P}")


# --------------------------------------------------------------------------
# moments used as inputs
# --------------------------------------------------------------------------


def inverse_max_moment_iid(K: int) -> float:
    """``E[1/max]`` of ``K`` i.i.d. unit exponentials (infinite for ``K = 1``)."""
    return order_stat_inverse_moment(OrderStatSpec("exponential", K, K))


def geo_moment_iid(K: int) -> float:
    """``E[prod_k h_k^(-1/K)]`` for ``K`` i.i.d. unit exponentials: ``Gamma(1-1/K)^K``."""
    if K < 2:
        return math.inf
    return math.exp(K * special.gammaln(1.0 - 1.0 / K))


def inverse_tap_energy_moment(pdp) -> float:
    """``E[1/||c||_1]`` for Rayleigh taps with the given profile.

    Uses ``E[1/X] = int_0^inf E[exp(-t X)] dt`` with the Laplace transform
    ``prod_l 1/(1 + sigma_l t)`` of a weighted sum of exponentials.
    """
    sigma = np.asarray(pdp.variances if isinstance(pdp, PowerDelayProfile) else pdp, dtype=float)
    if sigma.size < 2:
        return math.inf

    def lt(t):
        return math.exp(-np.sum(np.log1p(sigma * t)))

    a, _ = integrate.quad(lt, 0.0, 1.0, epsabs=1e-12, epsrel=1e-11)
    b, _ = integrate.quad(lt, 1.0, math.inf, epsabs=1e-12, epsrel=1e-11, limit=400)
    return a + b


def _marginal_expect(marginal: Marginal, fn: Callable[[float], float]) -> float:
    if marginal.constant is not None:
        return fn(marginal.constant)
    d = marginal.dist
    lo, hi = d.support()
    total = 0.0
    cuts = [lo] + [x for x in (1e-8, 1e-3, 1.0) if lo < x < hi] + [hi]
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = integrate.quad(lambda h: fn(h) * d.pdf(h), a, b, epsabs=1e-12, epsrel=1e-10,
                                limit=400)
        total += val
    return total


def entropy_H(marginal: Marginal | None = None) -> BoundReport:
    """``H(F) = E[log h]`` of the marginal gain law (``-gamma`` for Rayleigh)."""
    marginal = marginal or Marginal.rayleigh()
    value = _marginal_expect(marginal, math.log)
    return BoundReport("entropy_H", value, "log-moment of the marginal gain law")


def log_gain_variance(marginal: Marginal | None = None) -> float:
    """``Var(log h)``; ``pi^2/6`` for Rayleigh."""
    marginal = marginal or Marginal.rayleigh()
    m = _marginal_expect(marginal, math.log)
    return _marginal_expect(marginal, lambda h: (math.log(h) - m) ** 2)


# --------------------------------------------------------------------------
# low SNR
# --------------------------------------------------------------------------


def low_snr_slope(E_inv_max: float) -> BoundReport:
    """Limit of ``C_d / P*`` as ``P* -> 0``: ``1 / E[1/h_max]``."""
    if not E_inv_max > 0:
        raise ValueError("E[1/h_max] must be positive")
    value = 0.0 if math.isinf(E_inv_max) else 1.0 / E_inv_max
    return BoundReport("low_snr_slope", value, "limit P* -> 0", {"E_inv_max": E_inv_max})


def low_snr_sublinear(K: int, E_inv_max: float, E_chi_inv_max: float | None = None) -> BoundReport:
    """Second-order coefficient: ``C_d ~ P*/E - q P*^2`` with
    ``q = K E[1/(chi h_max)] / (2 E[1/h_max]^3)``.

    ``chi`` is the number of carriers attaining the maximum; without it the
    continuous case ``chi = 1`` is assumed.
    """
    if not (math.isfinite(E_inv_max) and E_inv_max > 0):
        raise ValueError("E[1/h_max] must be finite and positive")
    chi_term = E_inv_max if E_chi_inv_max is None else E_chi_inv_max
    if not math.isfinite(chi_term):
        raise ValueError("E[1/(chi h_max)] must be finite")
    q = K * chi_term / (2.0 * E_inv_max**3)
    return BoundReport("low_snr_sublinear", q, "second-order term as P* -> 0",
                       {"K": K, "E_inv_max": E_inv_max, "E_chi_inv_max": chi_term})


def low_snr_log_approx(K: int, P: float, E_inv_max: float) -> BoundReport:
    """``(1/K) log(1 + K P* / E[1/h_max])``."""
    _check_power(P)
    value = math.log1p(K * P / E_inv_max) / K
    return BoundReport("low_snr_log_approx", value, "approximation, low SNR",
                       {"K": K, "P": P, "E_inv_max": E_inv_max})


def corollary_low1_interval(K: int, L: int, P: float, gamma: float = 2.0,
                            kappa: float | None = None) -> BoundReport:
    """Low-SNR enclosure ``(1/K) log(1 + kappa_i K P* log L)`` for uniform Rayleigh taps.

    ``kappa`` defaults to its smallest admissible value ``K / (L - log(L)^-gamma)``.
    """
    _check_power(P)
    if not (gamma > 1 and L > 1):
        raise RegimeError("need gamma > 1 and L > 1")
    lnL = math.log(L)
    denom = L - lnL ** (-gamma)
    if denom <= 0:
        raise RegimeError(f"L - log(L)^-gamma = {denom:.4g} <= 0: no admissible kappa")
    kmin = K / denom
    if kappa is None:
        kappa = kmin
    elif kappa < kmin * (1 - 1e-12):
        raise RegimeError(f"kappa must be >= {kmin:.6g}")
    spread = gamma * math.log(lnL) / lnL
    k1 = (1 - spread) * (1 - 1.1 * kappa / lnL ** (gamma - 1))
    k2 = (1 + spread) * (1 + 1.1 * kappa / lnL**gamma)
    if k1 <= 0:
        raise RegimeError(f"kappa_1 = {k1:.4g} <= 0: the enclosure is void for L={L}")
    lower = math.log1p(k1 * K * P * lnL) / K
    upper = math.log1p(k2 * K * P * lnL) / K
    return BoundReport("corollary_low1_interval", (lower, upper), "low SNR, uniform Rayleigh taps",
                       {"K": K, "L": L, "gamma": gamma, "kappa": kappa, "kappa1": k1, "kappa2": k2})


def overshoot_factors(K: int, L: int, a: float) -> BoundReport:
    """Factors relating the maximum of the continuous response to grid samples.

    Returns ``(1/cos(pi/(2a)), cos(pi L/(2K)))``; the lower factor is
    degenerate (zero) when ``L = K``.
    """
    if a <= 1:
        raise ValueError("oversampling factor a must exceed 1")
    up = 1.0 / math.cos(math.pi / (2.0 * a))
    low = math.cos(math.pi * L / (2.0 * K))
    degenerate = low <= 1e-12
    return BoundReport("overshoot_factors", (up, max(low, 0.0)),
                       "degenerate lower factor" if degenerate else "grid oversampling",
                       {"K": K, "L": L, "a": a, "degenerate": degenerate})


def pdp_low_upper(K: int, P: float, alpha: float, E_inv_c1: float) -> BoundReport:
    """Low-SNR upper bound ``(1/K) log(1 + K^(1+alpha) P* / E[1/||c||_1])``."""
    _check_power(P)
    if not 0 < alpha < 1:
        raise RegimeError("alpha must lie in (0, 1)")
    value = math.log1p(K ** (1 + alpha) * P / E_inv_c1) / K
    return BoundReport("pdp_low_upper", value, "upper bound, low SNR",
                       {"K": K, "alpha": alpha, "E_inv_c1": E_inv_c1})


# --------------------------------------------------------------------------
# high SNR
# --------------------------------------------------------------------------


def high_snr_sandwich(P: float, K: int, E_geo: float, guard: bool = True) -> BoundReport:
    """``log(P*/E_geo) <= C_d <= log(P* (1 + 1/K) / E_geo)``.

    The lower end is the rate of the equal-power law.
    """
    _high_guard(P, K, guard)
    if not (math.isfinite(E_geo) and E_geo > 0):
        raise RegimeError("geometric inverse moment must be finite (regular fading)")
    lower = math.log(P / E_geo)
    upper = math.log(P * (1 + 1 / K) / E_geo)
    return BoundReport("high_snr_sandwich", (lower, upper), "large P*", {"K": K, "E_geo": E_geo})


def entropy_upper(P: float, K: int, H: float | None = None, guard: bool = True) -> BoundReport:
    """``C_d <= log P* + H(F) + 1/K`` for i.i.d. carriers."""
    _high_guard(P, K, guard)
    H = entropy_H().value if H is None else H
    return BoundReport("entropy_upper", math.log(P) + H + 1.0 / K, "large P*", {"K": K, "H": H})


def prop_high3_bound(P: float, b: int, c_s: float, K: int | None = None,
                     guard: bool = True) -> BoundReport:
    """``log P* - log(b c_s (b/(b-1))^b + (1 - c_s) b)`` for densities bounded by ``c_s``."""
    if K is not None:
        _high_guard(P, K, guard)
    if b < 2:
        raise ValueError("b must be >= 2")
    if not 0 <= c_s:
        raise ValueError("c_s must be nonnegative")
    offset = math.log(b * c_s * (b / (b - 1)) ** b + (1 - c_s) * b)
    return BoundReport("prop_high3_bound", math.log(P) - offset, "large P*, bounded density",
                       {"b": b, "c_s": c_s, "offset": offset})


@dataclass(frozen=True)
class DensitySegment:
    """Interval ``[start, stop]`` on which the marginal density is monotone."""

    start: float
    stop: float
    f_start: float
    f_stop: float

    @property
    def decreasing(self) -> bool:
        return self.f_stop <= self.f_start


def prop_high4_bound(P: float, b: int, segments, K: int | None = None,
                     guard: bool = True) -> BoundReport:
    """Lower bound for independent carrier subsets with a finite marginal density.

    ``log P* - b log(b/(b-1)) - log[(sum_dec (f(a-) - f(b-)))^(1/b)
    - sum_inc a^((b-1)/b) (f(b+) - f(a+))]`` where the sums run over the
    decreasing and increasing segments of the density.
    """
    if K is not None:
        _high_guard(P, K, guard)
    if b < 2:
        raise ValueError("b must be >= 2")
    segs = [s if isinstance(s, DensitySegment) else DensitySegment(*s) for s in segments]
    if not segs:
        raise ValueError("need at least one density segment")
    if any(not (math.isfinite(s.f_start) and math.isfinite(s.f_stop)) for s in segs):
        raise RegimeError("density must be finite everywhere")
    dec = math.fsum(s.f_start - s.f_stop for s in segs if s.decreasing)
    inc = math.fsum(s.start ** ((b - 1) / b) * (s.f_stop - s.f_start) for s in segs
                    if not s.decreasing)
    inner = dec ** (1.0 / b) - inc
    if inner <= 0:
        raise RegimeError(f"bracket {inner:.4g} <= 0: bound undefined for these segments")
    value = math.log(P) - b * math.log(b / (b - 1)) - math.log(inner)
    return BoundReport("prop_high4_bound", value, "large P*, independent carrier subsets",
                       {"b": b, "decreasing_sum": dec, "increasing_sum": inc})


def prop_high5_bound(P: float, L: int, v, alpha: float, K: int | None = None,
                     guard: bool = True, density_form: str = "marginal") -> BoundReport:
    """Lower bound from Gaussian-type envelopes on the tap densities.

    With real and imaginary parts of tap ``k`` each bounded by
    ``v_k^(1/2) exp(-alpha x^2)`` the offset is
    ``log(4 pi^L prod_k v_k L^-L (L/alpha)^(L-1))``.  ``density_form="sqrt"``
    uses ``prod_k v_k^(1/2)`` instead, i.e. treats ``v_k^(1/2)`` as an
    envelope on the joint density of real and imaginary part.
    """
    if K is not None:
        _high_guard(P, K, guard)
    if L % 2:
        raise RegimeError("L must be even")
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 1:
        v = np.full(L, v[0])
    if v.size != L or np.any(v <= 0):
        raise ValueError("v must hold L positive values")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if density_form not in ("marginal", "sqrt"):
        raise ValueError("density_form must be 'marginal' or 'sqrt'")
    power = 1.0 if density_form == "marginal" else 0.5
    offset = (math.log(4) + L * math.log(math.pi) + power * np.sum(np.log(v)) - L * math.log(L)
              + (L - 1) * math.log(L / alpha))
    if alpha > 1e3 * L:
        warnings.warn("alpha far above the tap precision makes the bound vacuous", RuntimeWarning,
                      stacklevel=2)
    return BoundReport("prop_high5_bound", math.log(P) - float(offset), "large P*, even L",
                       {"L": L, "alpha": alpha, "offset": float(offset), "density_form": density_form})


def convergence_speed_lower(P: float, K: int, C: float | None = None, sigma2: float | None = None,
                            H: float | None = None, guard: bool = True) -> BoundReport:
    """``log P* - (e^H + 1/log K + C sigma^2 log^2 K / K + e^(1/2) sigma / (K^(1/2) (C - H)))``.

    Defaults are the Rayleigh values ``H = -gamma``, ``sigma^2 = pi^2/6``
    and ``C = H + 1``.
    """
    _high_guard(P, K, guard)
    if K < 2:
        raise RegimeError("need K >= 2")
    H = -EULER_GAMMA if H is None else H
    sigma2 = math.pi**2 / 6 if sigma2 is None else sigma2
    C = H + 1.0 if C is None else C
    if C <= H:
        raise RegimeError("need C > H(F)")
    lnK = math.log(K)
    terms = (math.exp(H), 1.0 / lnK, C * sigma2 * lnK**2 / K,
             math.sqrt(math.e * sigma2) / (math.sqrt(K) * (C - H)))
    return BoundReport("convergence_speed_lower", math.log(P) - math.fsum(terms), "large P* and K",
                       {"K": K, "C": C, "sigma2": sigma2, "H": H, "terms": list(terms)})


def pdp_high_upper(P: float, E_inv_c1: float, K: int | None = None,
                   guard: bool = True) -> BoundReport:
    """``log(P* / E[1/||c||_1])``."""
    if K is not None:
        _high_guard(P, K, guard)
    if not (E_inv_c1 > 0 and math.isfinite(E_inv_c1)):
        raise RegimeError("E[1/||c||_1] must be finite")
    return BoundReport("pdp_high_upper", math.log(P / E_inv_c1), "large P*", {"E_inv_c1": E_inv_c1})


@dataclass(frozen=True)
class _Entry:
    fn: Callable[..., BoundReport]
    kind: str
    regime: str
    summary: str


BOUNDS: dict[str, _Entry] = {
    "low_snr_slope": _Entry(low_snr_slope, "slope", "low", "limit of C_d/P*"),
    "low_snr_sublinear": _Entry(low_snr_sublinear, "coefficient", "low", "second-order term"),
    "low_snr_log_approx": _Entry(low_snr_log_approx, "approx", "low", "(1/K)log(1+KP/E[1/h_max])"),
    "corollary_low1_interval": _Entry(corollary_low1_interval, "interval", "low",
                                      "enclosure for uniform Rayleigh taps"),
    "overshoot_factors": _Entry(overshoot_factors, "factors", "any", "off-grid maximum factors"),
    "pdp_low_upper": _Entry(pdp_low_upper, "upper", "low", "profile-dependent upper bound"),
    "high_snr_sandwich": _Entry(high_snr_sandwich, "interval", "high", "equal-power sandwich"),
    "entropy_upper": _Entry(entropy_upper, "upper", "high", "log P + H(F) + 1/K"),
    "entropy_H": _Entry(entropy_H, "constant", "any", "E[log h]"),
    "prop_high3_bound": _Entry(prop_high3_bound, "lower", "high", "bounded-density lower bound"),
    "prop_high4_bound": _Entry(prop_high4_bound, "lower", "high", "independent-subset lower bound"),
    "prop_high5_bound": _Entry(prop_high5_bound, "lower", "high", "Gaussian-envelope lower bound"),
    "convergence_speed_lower": _Entry(convergence_speed_lower, "lower", "high",
                                      "finite-K convergence lower bound"),
    "pdp_high_upper": _Entry(pdp_high_upper, "upper", "high", "profile-dependent upper bound"),
}
