"""OFDM fading states from tap-domain randomness, plus order-statistic laws.

Gains are linear power gains ``h[m, k] = |H[m, k]|**2`` where ``H`` is the
K-point DFT of the zero-padded tap vector of user ``m``.  Noise is
normalized to unit variance throughout the package.

Seeding is counter based: draw ``i`` of a run always comes from substream
``i // CHUNK`` of the run seed, so the gain stream does not depend on how the
draws are later split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .estimate import McEstimate, summarize

__all__ = [
    "CHUNK",
    "PowerDelayProfile",
    "ChannelModel",
    "GainMatrix",
    "OrderStatSpec",
    "register_tap_law",
    "substream",
    "draw_taps",
    "taps_to_gains",
    "batch_gains",
    "sample_taps",
    "sample_gains",
    "order_stat_density",
    "order_stat_inverse_moment",
    "inverse_moment_is_finite",
    "best_of_M_cdf",
    "best_of_M_pdf",
    "loser_conditioned_cdf",
    "loser_conditioned_pdf",
    "concentration_halfwidth",
    "max_gain_stats",
]

CHUNK = 8192

TapSampler = Callable[[np.random.Generator, int, np.ndarray], np.ndarray]


def _rayleigh_taps(rng: np.random.Generator, n: int, variances: np.ndarray) -> np.ndarray:
    # CN(0, var): real and imaginary parts N(0, var/2)
    scale = np.sqrt(variances / 2.0)
    shape = (n,) + variances.shape
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return scale * (re + 1j * im)


_TAP_LAWS: dict[str, TapSampler] = {"rayleigh": _rayleigh_taps}


def register_tap_law(name: str, sampler: TapSampler) -> None:
    """Make a custom tap sampler available under ``name``.

    The sampler receives ``(rng, n, variances)`` with ``variances`` of shape
    ``(M, L)`` and must return complex taps of shape ``(n, M, L)``.
    """
    _TAP_LAWS[name] = sampler


@dataclass(frozen=True)
class PowerDelayProfile:
    variances: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("power delay profile must be a non-empty vector")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("power delay profile entries must be strictly positive")
        if abs(v.sum() - 1.0) > 1e-12:
            raise ValueError(f"power delay profile must sum to 1, got {v.sum()!r}")
        object.__setattr__(self, "variances", tuple(float(x) for x in v))

    @classmethod
    def uniform(cls, taps: int) -> "PowerDelayProfile":
        return cls(tuple([1.0 / taps] * taps))

    @classmethod
    def from_weights(cls, weights) -> "PowerDelayProfile":
        w = np.asarray(weights, dtype=float)
        if w.size == 0 or np.any(w < 0) or not w.sum() > 0:
            raise ValueError("weights must be nonnegative with a positive sum")
        return cls(tuple(w / w.sum()))

    @classmethod
    def exponential(cls, taps: int, decay: float) -> "PowerDelayProfile":
        """Profile proportional to ``exp(-decay * l)``, l = 0..taps-1."""
        return cls.from_weights(np.exp(-decay * np.arange(taps)))

    @property
    def taps(self) -> int:
        return len(self.variances)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.variances)


@dataclass(frozen=True)
class ChannelModel:
    """M users on K subcarriers, each user with its own power delay profile."""

    users: int
    carriers: int
    pdp: tuple[PowerDelayProfile, ...]
    tap_law: str = "rayleigh"

    def __post_init__(self):
        if self.users < 1 or self.carriers < 1:
            raise ValueError("need at least one user and one carrier")
        pdp = self.pdp
        if isinstance(pdp, PowerDelayProfile):
            pdp = (pdp,) * self.users
        pdp = tuple(pdp)
        if len(pdp) != self.users:
            raise ValueError(f"expected {self.users} delay profiles, got {len(pdp)}")
        for p in pdp:
            if p.taps > self.carriers:
                raise ValueError(f"delay spread L={p.taps} exceeds K={self.carriers}")
        object.__setattr__(self, "pdp", pdp)
        if self.tap_law not in _TAP_LAWS:
            raise ValueError(f"unknown tap law {self.tap_law!r}; known: {sorted(_TAP_LAWS)}")

    @classmethod
    def uniform(cls, users: int, carriers: int, taps: int, tap_law: str = "rayleigh") -> "ChannelModel":
        return cls(users, carriers, (PowerDelayProfile.uniform(taps),) * users, tap_law)

    @property
    def taps(self) -> int:
        return max(p.taps for p in self.pdp)

    def variance_matrix(self) -> np.ndarray:
        """Tap variances as an ``(M, L)`` array, zero padded for shorter profiles."""
        out = np.zeros((self.users, self.taps))
        for m, p in enumerate(self.pdp):
            out[m, : p.taps] = p.variances
        return out

    def single_user(self, m: int) -> "ChannelModel":
        return ChannelModel(1, self.carriers, (self.pdp[m],), self.tap_law)


@dataclass(frozen=True)
class GainMatrix:
    gains: np.ndarray
    taps: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.gains, dtype=float))
        if np.any(g < 0):
            raise ValueError("channel gains must be nonnegative")
        object.__setattr__(self, "gains", g)

    @property
    def users(self) -> int:
        return self.gains.shape[0]

    @property
    def carriers(self) -> int:
        return self.gains.shape[1]


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for chunk ``index`` of the run seeded by ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def draw_taps(model: ChannelModel, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Complex taps for one state (``(M, L)``) or ``n`` states (``(n, M, L)``)."""
    variances = model.variance_matrix()
    taps = _TAP_LAWS[model.tap_law](rng, 1 if n is None else n, variances)
    # zero-padded taps of shorter profiles stay exactly zero
    taps = np.where(variances > 0, taps, 0.0)
    return taps[0] if n is None else taps


def batch_gains(taps: np.ndarray, carriers: int) -> np.ndarray:
    """Squared moduli of the ``carriers``-point DFT along the last axis."""
    taps = np.asarray(taps)
    if taps.shape[-1] > carriers:
        raise ValueError(f"delay spread L={taps.shape[-1]} exceeds K={carriers}")
    spectrum = np.fft.fft(taps, n=carriers, axis=-1)
    return spectrum.real**2 + spectrum.imag**2


def taps_to_gains(taps: np.ndarray, carriers: int) -> GainMatrix:
    taps = np.atleast_2d(np.asarray(taps, dtype=complex))
    return GainMatrix(batch_gains(taps, carriers), taps)


def sample_taps(model: ChannelModel, samples: int, seed: int, start: int = 0) -> np.ndarray:
    """Taps for draws ``start .. start+samples-1`` of the run ``seed``."""
    if samples < 0:
        raise ValueError("samples must be nonnegative")
    stop = start + samples
    parts = []
    for c in range(start // CHUNK, (stop + CHUNK - 1) // CHUNK):
        block = draw_taps(model, substream(seed, c), CHUNK)
        lo = max(start - c * CHUNK, 0)
        hi = min(stop - c * CHUNK, CHUNK)
        parts.append(block[lo:hi])
    if not parts:
        return np.zeros((0, model.users, model.taps), dtype=complex)
    return np.concatenate(parts, axis=0)


def sample_gains(model: ChannelModel, samples: int, seed: int, start: int = 0) -> np.ndarray:
    """Gain states of shape ``(samples, M, K)``."""
    return batch_gains(sample_taps(model, samples, seed, start), model.carriers)


# --------------------------------------------------------------------------
# order statistics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Law:
    cdf: Callable[[np.ndarray], np.ndarray]
    sf: Callable[[np.ndarray], np.ndarray]
    pdf: Callable[[np.ndarray], np.ndarray]
    # density ~ x**small_x_exponent near zero
    small_x_exponent: int


def best_of_M_cdf(M: int, x):
    """CDF of the winning gain on a carrier among M unit-exponential users."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, (-np.expm1(-np.maximum(x, 0))) ** M, 0.0)


def _best_of_M_sf(M: int, x):
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return -np.expm1(M * np.log1p(-np.exp(-x))) if M > 1 else np.exp(-x)


def best_of_M_pdf(M: int, x):
    x = np.asarray(x, dtype=float)
    xp = np.maximum(x, 0.0)
    val = M * (-np.expm1(-xp)) ** (M - 1) * np.exp(-xp)
    return np.where(x >= 0, val, 0.0)


def loser_conditioned_cdf(M: int, x):
    """CDF of a user's gain given that another user is best on that carrier.

    Closed form of ``1 - M * int_x^inf (1-e^-t)^(M-2) (e^-x - e^-t) e^-t dt``;
    for ``M = 2`` it reduces to ``1 - exp(-2x)``.
    """
    if M < 2:
        raise ValueError("loser-conditioned law needs M >= 2")
    return 1.0 - _loser_sf(M, x)


def _loser_sf(M: int, x):
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    u = np.exp(-x)
    # M u - (1 - (1-u)^M), divided by M-1
    with np.errstate(divide="ignore"):
        val = (M * u + np.expm1(M * np.log1p(-u))) / (M - 1)
    return np.clip(np.where(x > 0, val, 1.0), 0.0, 1.0)


def loser_conditioned_pdf(M: int, x):
    if M < 2:
        raise ValueError("loser-conditioned law needs M >= 2")
    x = np.asarray(x, dtype=float)
    xp = np.maximum(x, 0.0)
    u = np.exp(-xp)
    val = M * u * -np.expm1((M - 1) * np.log1p(-u)) / (M - 1)
    val = np.where(xp > 0, val, M / (M - 1))
    return np.where(x >= 0, val, 0.0)


def _law(base: str, users: int) -> _Law:
    if base == "exponential":
        return _Law(lambda x: -np.expm1(-np.maximum(x, 0)), lambda x: np.exp(-np.maximum(x, 0)),
                    lambda x: np.where(np.asarray(x) >= 0, np.exp(-np.maximum(x, 0)), 0.0), 0)
    if base == "best_of_M":
        return _Law(lambda x: best_of_M_cdf(users, x), lambda x: _best_of_M_sf(users, x),
                    lambda x: best_of_M_pdf(users, x), users - 1)
    if base == "loser":
        if users < 2:
            raise ValueError("loser-conditioned law needs users >= 2")
        return _Law(lambda x: loser_conditioned_cdf(users, x), lambda x: _loser_sf(users, x),
                    lambda x: loser_conditioned_pdf(users, x), 0)
    raise ValueError(f"unknown base distribution {base!r}")


@dataclass(frozen=True)
class OrderStatSpec:
    """Rank ``rank`` (1 = smallest) among ``draws`` i.i.d. variables of law ``base``.

    ``base`` is one of ``"exponential"``, ``"best_of_M"`` or ``"loser"``; the
    latter two are parametrized by ``users``.
    """

    base: str
    draws: int
    rank: int
    users: int = 1

    def __post_init__(self):
        if self.draws < 1:
            raise ValueError("draws must be >= 1")
        if not 1 <= self.rank <= self.draws:
            raise ValueError(f"rank {self.rank} outside [1, {self.draws}]")
        _law(self.base, self.users)


def _log_coef(n: int, p: int) -> float:
    # n! / ((p-1)! (n-p)!)
    return special.gammaln(n + 1) - special.gammaln(p) - special.gammaln(n - p + 1)


def order_stat_density(spec: OrderStatSpec, x):
    law = _law(spec.base, spec.users)
    n, p = spec.draws, spec.rank
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        F = law.cdf(x)
        S = law.sf(x)
        val = math.exp(_log_coef(n, p)) * law.pdf(x) * F ** (p - 1) * S ** (n - p)
    return np.where(x >= 0, np.nan_to_num(val, nan=0.0), 0.0)


def inverse_moment_is_finite(spec: OrderStatSpec) -> bool:
    """Whether ``E[1/X]`` of the order statistic is finite.

    Near zero the density behaves like ``x**e`` with
    ``e = a + (p-1)(a+1)`` where ``a`` is the exponent of the base density;
    ``x**(e-1)`` is integrable at zero iff ``e >= 1``.
    """
    a = _law(spec.base, spec.users).small_x_exponent
    return a + (spec.rank - 1) * (a + 1) >= 1


def order_stat_inverse_moment(spec: OrderStatSpec, epsabs: float = 1e-11) -> float:
    """``E[1/X]`` for the order statistic, ``inf`` when it diverges."""
    if not inverse_moment_is_finite(spec):
        return math.inf

    def integrand(t):
        return float(order_stat_density(spec, t)) / t

    lo, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=epsabs, epsrel=1e-11, limit=200)
    hi, _ = integrate.quad(integrand, 1.0, math.inf, epsabs=epsabs, epsrel=1e-11, limit=200)
    return lo + hi


# --------------------------------------------------------------------------
# maximum gain statistics
# --------------------------------------------------------------------------


def concentration_halfwidth(L: int) -> float:
    """``4 log log L``, the half-width of the window around ``log L``."""
    return 4.0 * math.log(math.log(L))


def multiplicity(gains: np.ndarray, eps_rel: float = 1e-9) -> np.ndarray:
    """Number of carriers within ``eps_rel * max`` of the per-row maximum."""
    hmax = gains.max(axis=-1, keepdims=True)
    return (gains >= hmax * (1.0 - eps_rel)).sum(axis=-1)


def max_gain_stats(model: ChannelModel, samples: int, seed: int, user: int = 0,
                   eps_rel: float = 1e-9) -> dict[str, McEstimate]:
    """Monte-Carlo moments of the maximum gain of one user.

    Returns estimates of ``E[1/h_max]``, ``E[1/(chi h_max)]`` and of the
    probability that ``h_max`` lies within ``log L +- 4 log log L``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    g = sample_gains(model, samples, seed)[:, user, :]
    hmax = g.max(axis=-1)
    chi = multiplicity(g, eps_rel)
    L = model.pdp[user].taps
    out = {
        "inv_max": summarize(1.0 / hmax, seed),
        "chi_inv_max": summarize(1.0 / (chi * hmax), seed),
    }
    if L > 1 and math.log(L) > 1.0:
        w = concentration_halfwidth(L)
        inside = np.abs(hmax - math.log(L)) <= w
        out["concentration"] = summarize(inside.astype(float), seed)
    return out
