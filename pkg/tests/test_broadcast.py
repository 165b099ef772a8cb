import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ofdm_dlc.broadcast import (
    BcRateTarget, bc_rate_check, carrier_powers, decoding_orders, min_sum_power,
    min_sum_power_batch)
from ofdm_dlc.waterfill import InfeasibleError, rate_waterfill

LN2 = math.log(2)


def test_degraded_single_carrier():
    g = np.array([[2.0], [1.0]])
    best = min_sum_power(g, [LN2, LN2])
    # strong user decoded last: p1 = 1/2, p2 = 1 + p1
    assert best.sum_power == pytest.approx(2.0, abs=1e-12)
    rev = min_sum_power(g, [LN2, LN2], orders=[[1, 0]])
    assert rev.sum_power == pytest.approx(2.5, abs=1e-12)


def test_single_user_is_waterfilling(rng):
    h = rng.exponential(size=(1, 8))
    a = min_sum_power(h, [0.7])
    assert a.sum_power == pytest.approx(rate_waterfill(h[0], 8 * 0.7).total_power / 8, rel=1e-12)


def grid_power(g, t, n=801):
    K = g.shape[1]
    best = math.inf
    r = np.linspace(0, K * t[0], n)
    for a in r:
        r1 = np.array([a, K * t[0] - a])
        s = np.linspace(0, K * t[1], n)
        r2 = np.stack([s, K * t[1] - s], axis=1)
        R = np.stack([np.broadcast_to(r1, r2.shape), r2], axis=1)
        p = np.array([carrier_powers(g, Ri).sum() for Ri in R]) / K
        best = min(best, p.min())
    return best


def test_two_carrier_grid(rng):
    for _ in range(3):
        g = rng.exponential(size=(2, 2))
        t = rng.uniform(0.2, 1.0, size=2)
        opt = min_sum_power(g, t, tol=1e-12).sum_power
        grid = grid_power(g, t, n=301)
        assert opt <= grid + 1e-9
        assert grid - opt <= 1e-3 * grid


def test_rates_are_met_and_history_monotone(rng):
    for _ in range(20):
        g = rng.exponential(size=(3, 6))
        t = rng.uniform(0.0, 1.0, size=3)
        a = min_sum_power(g, BcRateTarget(tuple(t)))
        np.testing.assert_allclose(bc_rate_check(g, a.powers), t, atol=1e-9)
        h = np.array(a.history)
        assert np.all(np.diff(h) <= 1e-12 * h[:-1])
        assert a.converged


def test_batch_matches_single(rng):
    g = rng.exponential(size=(20, 2, 4))
    t = np.array([0.4, 0.9])
    p, R, mu, _, _ = min_sum_power_batch(g, t, tol=1e-12)
    for i in range(20):
        assert p[i] == pytest.approx(min_sum_power(g[i], t, tol=1e-12).sum_power, rel=1e-8)
    np.testing.assert_allclose(R.sum(axis=-1), 4 * np.broadcast_to(t, (20, 2)), rtol=1e-9)


def test_decoding_orders_rank_by_gain():
    g = np.array([[1.0, 3.0], [2.0, 1.0], [2.0, 0.5]])
    np.testing.assert_array_equal(decoding_orders(g), [[1, 2, 0], [0, 1, 2]])


def test_infeasible_and_invalid_targets():
    with pytest.raises(InfeasibleError):
        min_sum_power(np.array([[0.0, 0.0], [1.0, 1.0]]), [0.5, 0.5])
    with pytest.raises(ValueError):
        BcRateTarget((-1.0, 1.0))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), M=st.integers(2, 3), K=st.integers(1, 5))
def test_optimal_order_never_worse_than_permutations(seed, M, K):
    rng = np.random.default_rng(seed)
    g = rng.exponential(size=(M, K)) + 1e-3
    t = rng.uniform(0.05, 0.8, size=M)
    best = min_sum_power(g, t, tol=1e-12).sum_power
    for perm in itertools.permutations(range(M)):
        other = min_sum_power(g, t, tol=1e-12, orders=np.tile(perm, (K, 1))).sum_power
        assert best <= other * (1 + 1e-7)
