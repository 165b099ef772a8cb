import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from ofdm_dlc import bounds
from ofdm_dlc.channel import PowerDelayProfile
from ofdm_dlc.montecarlo import Marginal

EULER = 0.5772156649015329


def test_entropy_and_log_variance():
    assert math.isclose(bounds.entropy_H().value, -EULER, abs_tol=1e-9)
    assert math.isclose(bounds.log_gain_variance(), math.pi**2 / 6, rel_tol=1e-7)
    assert bounds.entropy_H(Marginal.degenerate(2.0)).value == pytest.approx(math.log(2.0))


def test_iid_moments():
    assert math.isclose(bounds.inverse_max_moment_iid(2), 2 * math.log(2), rel_tol=1e-9)
    # alternating-sum oracle: E[1/max] = sum_j (-1)^(j+1) C(K,j) log j ... K=3
    K = 3
    alt = sum((-1) ** j * j * special.comb(K, j) * math.log(j) for j in range(1, K + 1))
    assert math.isclose(bounds.inverse_max_moment_iid(K), alt, rel_tol=1e-8)
    assert math.isclose(bounds.geo_moment_iid(2), math.pi, rel_tol=1e-12)
    assert bounds.geo_moment_iid(1) == math.inf or not math.isfinite(bounds.geo_moment_iid(1))


def test_inverse_tap_energy():
    assert math.isclose(bounds.inverse_tap_energy_moment(PowerDelayProfile.uniform(2)), 2.0,
                        rel_tol=1e-8)
    assert math.isclose(bounds.inverse_tap_energy_moment(PowerDelayProfile.uniform(16)), 16 / 15,
                        rel_tol=1e-8)


def test_low_snr_family():
    E = bounds.inverse_max_moment_iid(2)
    assert math.isclose(bounds.low_snr_slope(E).value, 1 / (2 * math.log(2)))
    q = bounds.low_snr_sublinear(2, E).value
    assert math.isclose(q, 2 / (2 * E**2))
    P = 1e-4
    approx = bounds.low_snr_log_approx(2, P, E).value
    assert approx == pytest.approx(P / E - q * P * P, rel=1e-6)


def test_corollary_interval_regimes():
    lo, hi = bounds.corollary_low1_interval(64, 64, 1e-3).value
    assert 0 < lo < hi
    with pytest.raises(bounds.RegimeError):
        bounds.corollary_low1_interval(2, 2, 1e-3)
    with pytest.raises(bounds.RegimeError):
        bounds.corollary_low1_interval(64, 64, 1e-3, kappa=0.5)


def test_high_snr_guard():
    with pytest.raises(bounds.RegimeError):
        bounds.high_snr_sandwich(1.0, 16, 2.0)
    assert bounds.high_snr_sandwich(1.0, 16, 2.0, guard=False).value[0] == math.log(0.5)
    with pytest.raises(bounds.RegimeError):
        bounds.high_snr_sandwich(1e4, 16, math.inf)


def test_prop_high5_forms():
    a = bounds.prop_high5_bound(1e4, 16, 16 / math.pi, 16.0)
    assert a.constants["offset"] == pytest.approx(math.log(4))
    b = bounds.prop_high5_bound(1e4, 4, 4 / math.pi, 4.0, density_form="sqrt")
    assert b.constants["offset"] == pytest.approx(0.9032, abs=1e-3)
    with pytest.raises(bounds.RegimeError):
        bounds.prop_high5_bound(1e4, 3, 1.0, 1.0)


def test_prop_high4_rayleigh_and_regime():
    r = bounds.prop_high4_bound(1e4, 2, [(0.0, math.inf, 1.0, 0.0)])
    assert r.value == pytest.approx(math.log(1e4) - math.log(4))
    with pytest.raises(bounds.RegimeError):
        bounds.prop_high4_bound(1e4, 2, [(0.0, 1.0, 0.0, 5.0)])


def test_convergence_terms():
    r = bounds.convergence_speed_lower(1e6, 64, C=1.0)
    np.testing.assert_allclose(r.constants["terms"], [0.5615, 0.2404, 0.4445, 0.1676], atol=1e-4)


@settings(max_examples=60, deadline=None)
@given(K=st.sampled_from([2, 4, 8, 16, 32, 64]), db=st.floats(0.0, 50.0))
def test_lower_bounds_below_upper_bounds(K, db):
    # guard region: P* >= 10 K
    P = 10 * K * 10 ** (db / 10)
    uppers = [bounds.entropy_upper(P, K).value,
              bounds.high_snr_sandwich(P, K, bounds.geo_moment_iid(K)).value[1]]
    lowers = [bounds.high_snr_sandwich(P, K, bounds.geo_moment_iid(K)).value[0],
              bounds.prop_high3_bound(P, 2, 1.0, K).value,
              bounds.prop_high4_bound(P, 2, [(0.0, math.inf, 1.0, 0.0)], K).value,
              bounds.convergence_speed_lower(P, K).value]
    if K % 2 == 0:
        lowers.append(bounds.prop_high5_bound(P, K, K / math.pi, float(K), K).value)
    assert max(lowers) <= min(uppers)


def test_registry_and_serialization():
    assert set(bounds.BOUNDS) >= {"high_snr_sandwich", "entropy_upper", "prop_high5_bound"}
    d = bounds.entropy_upper(1e4, 16).to_dict()
    assert d["name"] == "entropy_upper" and isinstance(d["value"], float)
