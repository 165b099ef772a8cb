"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL - details`` line; the lines
are printed in the terminal summary (see ``conftest.py``) and when this file
is run directly with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import special

from ofdm_dlc import bounds
from ofdm_dlc.broadcast import min_sum_power
from ofdm_dlc.channel import ChannelModel, concentration_halfwidth, max_gain_stats, sample_gains
from ofdm_dlc.cli import run
from ofdm_dlc.montecarlo import Marginal, ergodic_capacity, expect, su_dlc
from ofdm_dlc.ofdma import (OfdmaBoundConfig, bound_boundary_point, lemma_bound_power,
                            lemma_bound_power_bruteforce, ofdma_dlc_alloc_batch)
from ofdm_dlc.region import RegionBuilder
from ofdm_dlc.waterfill import rate_waterfill

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES  # noqa: E402

LN2 = math.log(2)


def record(n, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


# --------------------------------------------------------------------------
# 1. entropy constant
# --------------------------------------------------------------------------


def test_criterion_1_entropy_constant():
    t0 = time.perf_counter()
    H = bounds.entropy_H(Marginal.rayleigh()).value
    dt = time.perf_counter() - t0
    ok = abs(H - (-0.57722)) <= 1e-4 and dt < 1.0
    record(1, ok, f"H = {H:.7f} (target -0.57722 +- 1e-4), {dt:.3f} s")
    assert ok


# --------------------------------------------------------------------------
# 2. low-SNR slope
# --------------------------------------------------------------------------


def test_criterion_2_low_snr_slope():
    t0 = time.perf_counter()
    K = 2
    oracle = sum((-1) ** j * j * special.comb(K, j) * math.log(j) for j in range(1, K + 1))
    r = su_dlc(ChannelModel.uniform(1, K, K), 1e-3, samples=1_000_000, seed=2)
    dt = time.perf_counter() - t0
    slope = r.rate / 1e-3
    target = 1 / oracle
    ok = (math.isclose(oracle, 2 * LN2, rel_tol=1e-12)
          and 0.95 * target <= slope <= 1.05 * target and dt < 60)
    record(2, ok, f"C_d/P* = {slope:.5f}, 1/(2 ln 2) = {target:.5f}, "
                  f"ratio {slope / target:.4f}, {dt:.1f} s")
    assert ok


# --------------------------------------------------------------------------
# 3. high-SNR sandwich
# --------------------------------------------------------------------------


def test_criterion_3_high_snr_sandwich():
    t0 = time.perf_counter()
    P = 1e4
    details, ok = [], True
    for K in (2, 4, 8, 16):
        model = ChannelModel.uniform(1, K, K)
        g = sample_gains(model, 100_000, seed=K)
        geo = expect(model, "geo_inv", 0, K, states=g, check=False)
        r = su_dlc(model, P, seed=K, states=g[:, 0, :], tol=1e-4)
        se = math.hypot(r.rate_std_error, geo.std_error / geo.mean)
        lo = math.log(P / geo.mean) - 3 * se
        hi = math.log(P * (1 + 1 / K) / geo.mean) + 3 * se
        inside = lo <= r.rate <= hi
        ok &= inside
        details.append(f"K={K}: {lo:.4f} <= {r.rate:.4f} <= {hi:.4f}")
        if K == 2:
            # the K=2 moment is Gamma(1/2)^2 = pi; its variance is infinite,
            # so the cross-check uses a relative tolerance
            cross = abs(geo.mean - math.pi) <= 0.03 * math.pi
            ok &= cross
            details.append(f"E(h_bar) K=2 {geo.mean:.4f} vs pi")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    record(3, ok, "; ".join(details) + f"; {dt:.1f} s")
    assert ok


# --------------------------------------------------------------------------
# 4. water-filling oracle
# --------------------------------------------------------------------------


def _grid_min_power(h, R, n=201, zooms=6):
    """Brute-force minimum of sum (e^r_k - 1)/h_k over the simplex, by zooming grids."""
    lo1, hi1, lo2, hi2 = 0.0, R, 0.0, R
    best = math.inf
    for _ in range(zooms):
        r1 = np.linspace(lo1, hi1, n)[:, None]
        r2 = np.linspace(lo2, hi2, n)[None, :]
        r3 = R - r1 - r2
        with np.errstate(invalid="ignore"):
            p = np.where(r3 >= 0, np.expm1(r1) / h[0] + np.expm1(r2) / h[1] + np.expm1(r3) / h[2],
                         np.inf)
        i, j = np.unravel_index(np.argmin(p), p.shape)
        best = min(best, p[i, j])
        w1, w2 = (hi1 - lo1) / (n - 1) * 4, (hi2 - lo2) / (n - 1) * 4
        c1, c2 = r1[i, 0], r2[0, j]
        lo1, hi1 = max(0.0, c1 - w1), min(R, c1 + w1)
        lo2, hi2 = max(0.0, c2 - w2), min(R, c2 + w2)
    return best


def test_criterion_4_waterfill_oracle():
    rng = np.random.default_rng(4)
    worst_gap = worst_kkt = 0.0
    for _ in range(100):
        h = rng.exponential(size=3)
        R = rng.uniform(0.1, 5.0)
        sol = rate_waterfill(h, R)
        worst_gap = max(worst_gap, abs(sol.total_power - _grid_min_power(h, R)))
        worst_kkt = max(worst_kkt, sol.kkt_residual)
    ok = worst_gap <= 1e-5 and worst_kkt <= 1e-9
    record(4, ok, f"max |power - grid| = {worst_gap:.2e} (<= 1e-5), max KKT residual "
                  f"{worst_kkt:.2e} (<= 1e-9)")
    assert ok


# --------------------------------------------------------------------------
# 5. broadcast oracle
# --------------------------------------------------------------------------


def _bc_grid_k2(g, t, n=121, zooms=6):
    """Exhaustive grid over both users' carrier splits for M=2, K=2.

    Carrier power with the stronger user s decoded last:
    ``(e^{r_s} - 1)/h_s * e^{r_w} + (e^{r_w} - 1)/h_w``.
    """
    K = 2

    def carrier(h1, h2, r1, r2):
        s_first = h1 >= h2
        hs, hw = np.where(s_first, h1, h2), np.where(s_first, h2, h1)
        rs, rw = np.where(s_first, r1, r2), np.where(s_first, r2, r1)
        return np.expm1(rs) / hs * np.exp(rw) + np.expm1(rw) / hw

    T1, T2 = K * t[0], K * t[1]
    lo1, hi1, lo2, hi2 = 0.0, T1, 0.0, T2
    best = math.inf
    for _ in range(zooms):
        a = np.linspace(lo1, hi1, n)[:, None]
        b = np.linspace(lo2, hi2, n)[None, :]
        p = (carrier(g[0, 0], g[1, 0], a, b) + carrier(g[0, 1], g[1, 1], T1 - a, T2 - b)) / K
        i, j = np.unravel_index(np.argmin(p), p.shape)
        best = min(best, p[i, j])
        w1, w2 = (hi1 - lo1) / (n - 1) * 4, (hi2 - lo2) / (n - 1) * 4
        lo1, hi1 = max(0.0, a[i, 0] - w1), min(T1, a[i, 0] + w1)
        lo2, hi2 = max(0.0, b[0, j] - w2), min(T2, b[0, j] + w2)
    return best


def test_criterion_5_broadcast_oracle():
    g = np.array([[2.0], [1.0]])
    opt = min_sum_power(g, [LN2, LN2], tol=1e-12).sum_power
    # the stated value 2.5 is the power of the order that decodes the weak user last
    rev = min_sum_power(g, [LN2, LN2], tol=1e-12, orders=[[1, 0]]).sum_power
    literal = abs(opt - 2.5) <= 1e-8
    reversed_ok = abs(rev - 2.5) <= 1e-8
    optimal_closed = abs(opt - 2.0) <= 1e-8  # p1 = 1/2, p2 = 1 + p1

    rng = np.random.default_rng(5)
    grid_gap = 0.0
    for _ in range(10):
        gg = rng.exponential(size=(2, 2))
        t = rng.uniform(0.1, 1.0, size=2)
        grid_gap = max(grid_gap, abs(min_sum_power(gg, t, tol=1e-12).sum_power
                                     - _bc_grid_k2(gg, t)))
    grid_ok = grid_gap <= 1e-4

    monotone = True
    for _ in range(1000):
        M = int(rng.integers(2, 4))
        K = int(rng.integers(1, 9))
        gg = rng.exponential(size=(M, K))
        t = rng.uniform(0.0, 1.5, size=M)
        h = np.array(min_sum_power(gg, t).history)
        monotone &= bool(np.all(np.diff(h) <= 1e-12 * h[:-1]))

    ok = literal and grid_ok and monotone
    record(5, ok, f"min sum power for gains (2,1), rates (ln2, ln2) = {opt:.10f} "
                  f"(stated 2.5: {'met' if literal else 'NOT met'}; optimal-order closed form 2.0: "
                  f"{'met' if optimal_closed else 'not met'}; reversed order gives {rev:.10f}); "
                  f"K=2 grid max gap {grid_gap:.2e} (<= 1e-4); monotone sweeps on 1000 states: "
                  f"{monotone}")
    assert reversed_ok and optimal_closed and grid_ok and monotone
    assert literal, "stated value 2.5 is the reversed-order power; the minimum is 2.0"


# --------------------------------------------------------------------------
# 6. region properties
# --------------------------------------------------------------------------


def test_criterion_6_region_properties():
    t0 = time.perf_counter()
    P = 10.0
    model = ChannelModel.uniform(2, 16, 7)
    b = RegionBuilder(model, P, samples=10_000, seed=7)
    boundary = b.build(levels=4)
    pts = boundary.as_array()

    axis_ok, axis_txt = True, []
    for m in range(2):
        own = su_dlc(model, P, seed=7, states=b.gains[:, m, :], tol=1e-4)
        ref = su_dlc(model.single_user(m), P, samples=100_000, seed=1000 + m, tol=1e-4)
        se = math.hypot(own.rate_std_error, ref.rate_std_error)
        axis_ok &= abs(b.axis_points()[m] - ref.rate) <= 3 * se
        axis_txt.append(f"{b.axis_points()[m]:.4f} vs {ref.rate:.4f} (3SE {3 * se:.4f})")

    convex = all(b.contains(0.5 * (pts[i] + pts[j])) for i, j in boundary.adjacent_pairs())

    mirror_ok = True
    for p in boundary.points:
        if not p.computed:
            est = b.average_power(p.rates)
            mirror_ok &= abs(est.mean - P) <= 3 * est.std_error + b.tol * P
    dt = time.perf_counter() - t0
    ok = axis_ok and convex and mirror_ok and dt < 600
    record(6, ok, f"axis {'; '.join(axis_txt)}; midpoint convexity {convex}; "
                  f"mirror {mirror_ok}; {len(pts)} points, {dt:.0f} s")
    assert ok


# --------------------------------------------------------------------------
# 7. OFDMA bound behavior
# --------------------------------------------------------------------------


def _sum_rate(snr_db, s):
    r = bound_boundary_point(2, 16, [1.0, 1.0], 10 ** (snr_db / 10), OfdmaBoundConfig(s=s))
    return float(r.sum())


def test_criterion_7_ofdma_bound_behavior():
    high = [_sum_rate(10.0, s) for s in range(1, 6)]
    low = [_sum_rate(-20.0, s) for s in range(1, 6)]
    up_then_down = all(a < b for a, b in zip(high[:4], high[1:4])) and high[4] < high[3]
    degrades = all(a > b for a, b in zip(low, low[1:]))

    rng = np.random.default_rng(7)
    worst = 0.0
    for K in range(2, 11):
        for s in range(1, K // 2 + 1):
            R = rng.uniform(0.0, 1.0, size=2)
            a = lemma_bound_power(2, K, R, OfdmaBoundConfig(s=s))
            b = lemma_bound_power_bruteforce(2, K, R, OfdmaBoundConfig(s=s))
            worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    collapse = worst <= 1e-10
    ok = up_then_down and degrades and collapse
    record(7, ok, "10 dB sum rates s=1..5: " + ", ".join(f"{x:.4f}" for x in high)
           + "; -20 dB: " + ", ".join(f"{x:.6f}" for x in low)
           + f"; collapse vs brute force max rel diff {worst:.1e}")
    assert ok


# --------------------------------------------------------------------------
# 8. concentration of the maximum gain
# --------------------------------------------------------------------------


def test_criterion_8_concentration():
    L = 64
    st = max_gain_stats(ChannelModel.uniform(1, L, L), 100_000, seed=8)
    w = concentration_halfwidth(L)
    lnL = math.log(L)
    # L = K i.i.d. unit-exponential carriers: P(max <= x) = (1 - e^-x)^L
    oracle = (1 - math.exp(-(lnL + w))) ** L - (1 - math.exp(-max(lnL - w, 0.0))) ** L
    p = st["concentration"].mean
    ok = p >= 0.99
    record(8, ok, f"empirical {p:.5f} >= 0.99 (closed form {oracle:.5f})")
    assert ok


# --------------------------------------------------------------------------
# 9. dominance chain
# --------------------------------------------------------------------------


def test_criterion_9_dominance_chain():
    rng = np.random.default_rng(9)
    fdma_gap = math.inf
    for M, K, L in ((2, 8, 8), (2, 16, 7), (3, 16, 4)):
        g = sample_gains(ChannelModel.uniform(M, K, L), 300, seed=K + M)
        t = rng.uniform(0.1, 1.0, size=M)
        fdma, bc = ofdma_dlc_alloc_batch(g, t)
        fdma_gap = min(fdma_gap, float(np.min((fdma - bc) / bc)))
    fdma_ok = fdma_gap >= -1e-9

    erg_ok = True
    for K in (2, 4, 16):
        for P in (0.1, 1.0, 10.0, 100.0):
            r = su_dlc(ChannelModel.uniform(1, K, K), P, samples=20_000, seed=K)
            erg_ok &= r.rate <= ergodic_capacity(Marginal.rayleigh(), P) + 3 * r.rate_std_error

    hs_ok = True
    for K in (2, 4, 8, 16, 32, 64):
        for P in np.geomspace(10 * K, 1e8, 9):
            geo = bounds.geo_moment_iid(K)
            lows = [bounds.high_snr_sandwich(P, K, geo).value[0],
                    bounds.prop_high3_bound(P, 2, 1.0, K).value,
                    bounds.prop_high4_bound(P, 2, [(0.0, math.inf, 1.0, 0.0)], K).value,
                    bounds.prop_high5_bound(P, K, K / math.pi, float(K), K).value,
                    bounds.convergence_speed_lower(P, K).value]
            ups = [bounds.high_snr_sandwich(P, K, geo).value[1],
                   bounds.entropy_upper(P, K).value]
            hs_ok &= max(lows) <= min(ups)
    ok = fdma_ok and erg_ok and hs_ok
    record(9, ok, f"FDMA >= broadcast per state (min rel gap {fdma_gap:.1e}); "
                  f"DLC <= ergodic {erg_ok}; high-SNR lower <= upper {hs_ok}")
    assert ok


# --------------------------------------------------------------------------
# 10. determinism
# --------------------------------------------------------------------------


def test_criterion_10_determinism(tmp_path):
    cases = {
        "su": ["su-dlc", "--carriers", "16", "--snr-db", "10", "--samples", "20000", "--seed", "7"],
        "region": ["bc-region", "--users", "2", "--carriers", "8", "--taps", "4", "--snr-db", "5",
                   "--levels", "2", "--samples", "2000", "--seed", "7"],
        "ofdma": ["ofdma-bounds", "--carriers", "16", "--snr-db", "10", "--s", "1", "2",
                  "--directions", "5"],
    }
    same = True
    for name, argv in cases.items():
        outs = []
        for rep in range(2):
            path = tmp_path / f"{name}{rep}.csv"
            assert run(argv + ["--out", str(path)]) == 0
            outs.append(path.read_bytes() + Path(str(path) + ".manifest.json").read_bytes())
        same &= outs[0] == outs[1]
    figs = []
    for rep in range(2):
        d = tmp_path / f"fig{rep}"
        assert run(["figure", "dlc1_low", "--samples", "3000", "--out-dir", str(d)]) == 0
        figs.append((d / "curves.csv").read_bytes() + (d / "manifest.json").read_bytes())
    same &= figs[0] == figs[1]
    record(10, same, f"byte-identical CSV and manifests for {len(cases) + 1} repeated runs")
    assert same


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
