"""Canned experiment configurations producing the datasets behind each figure.

Every figure is a function ``(seed, samples, large) -> Dataset``.  A dataset
is a set of named tables (header plus rows of floats/ints/strings) and the
configuration that produced it; :mod:`ofdm_dlc.cli` writes the tables as CSV
next to a manifest.  Nothing here renders plots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bounds
from .channel import ChannelModel, sample_gains
from .montecarlo import (equal_power_dlc_mc, expect, ordered_budget_dlc, rank_inverse_moments,
                         su_dlc)
from .ofdma import FdmaRegionBuilder, OfdmaBoundConfig, bound_boundary_point
from .region import RegionBuilder

__all__ = ["Table", "Dataset", "FIGURES", "LARGE_FIGURES", "db_to_power", "run_figure"]


def db_to_power(db: float) -> float:
    """Per-carrier linear power for an SNR in dB."""
    return 10.0 ** (db / 10.0)


@dataclass
class Table:
    header: list[str]
    rows: list[list] = field(default_factory=list)


@dataclass
class Dataset:
    config: dict
    tables: dict[str, Table]


def _grid(lo: float, hi: float, step: float) -> list[float]:
    n = int(round((hi - lo) / step))
    return [lo + i * step for i in range(n + 1)]


def _iid_states(K: int, samples: int, seed: int) -> np.ndarray:
    return sample_gains(ChannelModel.uniform(1, K, K), samples, seed)[:, 0, :]


# --------------------------------------------------------------------------
# single-user figures
# --------------------------------------------------------------------------


def dlc1_ord(seed: int, samples: int, large: bool = False) -> Dataset:
    """Optimal, ordered-budget and equal-power delay-limited rates at ``L = K = 16``."""
    K = 16
    snrs = _grid(-10.0, 30.0, 5.0)
    model = ChannelModel.uniform(1, K, K)
    g = _iid_states(K, samples, seed)
    zetas = rank_inverse_moments(model)
    geo = expect(model, "geo_inv", samples, seed, states=g[:, None, :]).mean
    t = Table(["snr_db", "P", "optimal", "optimal_se", "ordered_budget", "equal_power",
               "sandwich_lower", "sandwich_upper"])
    for db in snrs:
        P = db_to_power(db)
        opt = su_dlc(model, P, states=g, seed=seed)
        eq = equal_power_dlc_mc(model, P, states=g, seed=seed)
        lo, hi = math.log(P / geo), math.log(P * (1 + 1 / K) / geo)
        t.rows.append([db, P, opt.rate, opt.rate_std_error, ordered_budget_dlc(zetas, P), eq.rate,
                       lo, hi])
    return Dataset({"carriers": K, "taps": K, "snr_db": snrs, "samples": samples},
                   {"curves": t})


def dlc1_low(seed: int, samples: int, large: bool = False) -> Dataset:
    """Low-SNR rates for ``L = K in {2, 4, 8, 16}`` with logarithmic approximations."""
    sizes = [2, 4, 8, 16]
    snrs = _grid(-30.0, 0.0, 5.0)
    t = Table(["K", "snr_db", "P", "dlc", "dlc_se", "log_approx", "log_K_scaling"])
    for K in sizes:
        model = ChannelModel.uniform(1, K, K)
        g = _iid_states(K, samples, seed)
        E = bounds.inverse_max_moment_iid(K)
        for db in snrs:
            P = db_to_power(db)
            r = su_dlc(model, P, states=g, seed=seed)
            t.rows.append([K, db, P, r.rate, r.rate_std_error,
                           bounds.low_snr_log_approx(K, P, E).value,
                           math.log1p(K * P * math.log(K)) / K])
    return Dataset({"carriers": sizes, "snr_db": snrs, "samples": samples}, {"curves": t})


def dlc1_high(seed: int, samples: int, large: bool = False) -> Dataset:
    """High-SNR rates for ``L = K in {2, 4, 8, 16}`` against ``log P + H``."""
    sizes = [2, 4, 8, 16]
    snrs = _grid(10.0, 40.0, 5.0)
    H = bounds.entropy_H().value
    t = Table(["K", "snr_db", "P", "dlc", "dlc_se", "log_P_plus_H", "sandwich_lower",
               "sandwich_upper"])
    for K in sizes:
        model = ChannelModel.uniform(1, K, K)
        g = _iid_states(K, samples, seed)
        geo = expect(model, "geo_inv", samples, seed, states=g[:, None, :], check=False).mean
        for db in snrs:
            P = db_to_power(db)
            r = su_dlc(model, P, states=g, seed=seed)
            t.rows.append([K, db, P, r.rate, r.rate_std_error, math.log(P) + H,
                           math.log(P / geo), math.log(P * (1 + 1 / K) / geo)])
    return Dataset({"carriers": sizes, "snr_db": snrs, "samples": samples, "H": H},
                   {"curves": t})


def _low_approx(K: int, seed: int, samples: int) -> Dataset:
    snrs = _grid(-40.0, -10.0, 5.0)
    model = ChannelModel.uniform(1, K, K)
    g = _iid_states(K, samples, seed)
    E = bounds.inverse_max_moment_iid(K)
    q = bounds.low_snr_sublinear(K, E).value
    t = Table(["snr_db", "P", "dlc", "dlc_se", "first_order", "second_order", "log_approx",
               "enclosure_lower", "enclosure_upper"])
    for db in snrs:
        P = db_to_power(db)
        r = su_dlc(model, P, states=g, seed=seed)
        try:
            lo, hi = bounds.corollary_low1_interval(K, K, P).value
        except bounds.RegimeError:
            lo = hi = math.nan
        t.rows.append([db, P, r.rate, r.rate_std_error, P / E, P / E - q * P * P,
                       bounds.low_snr_log_approx(K, P, E).value, lo, hi])
    return Dataset({"carriers": K, "taps": K, "snr_db": snrs, "samples": samples,
                    "E_inv_max": E, "sublinear_coefficient": q}, {"curves": t})


def dlc_low_approx_64(seed: int, samples: int, large: bool = False) -> Dataset:
    """First- and second-order low-SNR approximations at ``L = K = 64``."""
    return _low_approx(64, seed, samples)


def dlc_low_approx_1024(seed: int, samples: int, large: bool = False) -> Dataset:
    """Same as ``dlc_low_approx_64`` at ``L = K = 1024`` (requires ``large``)."""
    if not large:
        raise ValueError("figure dlc_low_approx_1024 needs --large (K = 1024)")
    return _low_approx(1024, seed, samples)


# --------------------------------------------------------------------------
# broadcast figures
# --------------------------------------------------------------------------


def _region_table(boundary) -> Table:
    t = Table([f"R_{m + 1}" for m in range(boundary.users)] + ["est_power", "std_error"])
    for p in boundary.points:
        t.rows.append([float(x) for x in p.rates] + [p.estimate.mean, p.estimate.std_error])
    return t


def _directions(count: int) -> list[np.ndarray]:
    return [np.array([math.cos(a), math.sin(a)])
            for a in np.linspace(0.0, math.pi / 2, count)]


def _bound_table(K: int, P: float, variants: list[tuple[str, OfdmaBoundConfig]],
                 count: int = 33) -> Table:
    t = Table(["R_1", "R_2", "bound_power", "s", "variant"])
    for name, cfg in variants:
        for d in _directions(count):
            r = bound_boundary_point(2, K, d, P, cfg)
            t.rows.append([float(r[0]), float(r[1]), P, cfg.s, name])
    return t


def dlc(seed: int, samples: int, large: bool = False) -> Dataset:
    """Two-user region, 7 taps, 16 carriers, 10 dB, four refinement levels."""
    K, L, db, levels = 16, 7, 10.0, 4
    b = RegionBuilder(ChannelModel.uniform(2, K, L), db_to_power(db), samples, seed)
    return Dataset({"users": 2, "carriers": K, "taps": L, "snr_db": db, "levels": levels,
                    "samples": samples}, {"region": _region_table(b.build(levels))})


def dlc_low(seed: int, samples: int, large: bool = False) -> Dataset:
    """Region at -20 dB with ordinal OFDMA bounds for ``s = 1..5``."""
    K, db, levels = 16, -20.0, 3
    P = db_to_power(db)
    b = RegionBuilder(ChannelModel.uniform(2, K, K), P, samples, seed)
    variants = [("lemma", OfdmaBoundConfig(s=s)) for s in range(1, 6)]
    return Dataset({"users": 2, "carriers": K, "taps": K, "snr_db": db, "levels": levels,
                    "samples": samples, "s": [1, 2, 3, 4, 5]},
                   {"region": _region_table(b.build(levels)), "bounds": _bound_table(K, P, variants)})


def dlc_high(seed: int, samples: int, large: bool = False) -> Dataset:
    """Region at 10 dB with bounds for ``s = 1..4``, prorated FDMA and full-CSI FDMA."""
    K, db, levels = 16, 10.0, 3
    P = db_to_power(db)
    model = ChannelModel.uniform(2, K, K)
    b = RegionBuilder(model, P, samples, seed)
    f = FdmaRegionBuilder(model, P, samples, seed)
    variants = [("lemma", OfdmaBoundConfig(s=s)) for s in range(1, 5)]
    variants.append(("prorated", OfdmaBoundConfig(prorated=True)))
    return Dataset({"users": 2, "carriers": K, "taps": K, "snr_db": db, "levels": levels,
                    "samples": samples, "s": [1, 2, 3, 4]},
                   {"region": _region_table(b.build(levels)),
                    "fdma_region": _region_table(f.build(levels)),
                    "bounds": _bound_table(K, P, variants)})


FIGURES: dict[str, Callable[..., Dataset]] = {
    "dlc1_ord": dlc1_ord,
    "dlc1_low": dlc1_low,
    "dlc1_high": dlc1_high,
    "dlc_low_approx_64": dlc_low_approx_64,
    "dlc_low_approx_1024": dlc_low_approx_1024,
    "dlc": dlc,
    "dlc_low": dlc_low,
    "dlc_high": dlc_high,
}

LARGE_FIGURES = frozenset({"dlc_low_approx_1024"})

# draws per figure at desk scale
DEFAULT_SAMPLES = {
    "dlc1_ord": 20_000,
    "dlc1_low": 50_000,
    "dlc1_high": 50_000,
    "dlc_low_approx_64": 50_000,
    "dlc_low_approx_1024": 10_000,
    "dlc": 10_000,
    "dlc_low": 10_000,
    "dlc_high": 10_000,
}


def run_figure(name: str, seed: int = 0, samples: int | None = None,
               large: bool = False) -> Dataset:
    if name not in FIGURES:
        raise KeyError(f"unknown figure {name!r}; valid ids: {', '.join(FIGURES)}")
    if name in LARGE_FIGURES and not large:
        raise ValueError(f"figure {name} needs --large")
    n = DEFAULT_SAMPLES[name] if samples is None else samples
    return FIGURES[name](seed, n, large)
