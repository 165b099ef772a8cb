import csv
import io
import math

import numpy as np
import pytest

from ofdm_dlc.channel import ChannelModel, PowerDelayProfile
from ofdm_dlc.montecarlo import su_dlc
from ofdm_dlc.region import RegionBuilder


@pytest.fixture(scope="module")
def builder():
    return RegionBuilder(ChannelModel.uniform(2, 4, 4), 1.0, samples=2000, seed=3)


@pytest.fixture(scope="module")
def boundary(builder):
    return builder.build(levels=2)


def test_axis_points_are_single_user_rates(builder):
    axis = builder.axis_points()
    for m in range(2):
        r = su_dlc(builder.model, 1.0, states=builder.gains[:, m, :], tol=1e-5).rate
        assert axis[m] == pytest.approx(r, rel=1e-3)


def test_boundary_points_meet_budget(builder, boundary):
    assert len(boundary.points) == 5
    for p in boundary.points:
        assert abs(p.estimate.mean - 1.0) <= 1e-3 + 1e-12


def test_boundary_is_convex(builder, boundary):
    pts = boundary.as_array()
    for i, j in boundary.adjacent_pairs():
        assert builder.contains(0.5 * (pts[i] + pts[j]))
    # and points beyond the boundary are outside
    assert not builder.contains(1.05 * pts[2], slack=0.0)


def test_mirrored_points_lie_on_boundary():
    model = ChannelModel.uniform(2, 4, 4)
    b = RegionBuilder(model, 1.0, 4000, 3)
    r = b.build(2, mirror=True)
    mirrored = [p for p in r.points if not p.computed]
    assert len(mirrored) == 2
    for p in mirrored:
        est = b.average_power(p.rates)
        assert abs(est.mean - 1.0) <= 3 * est.std_error + b.tol


def test_refine_adds_midpoints(builder, boundary):
    finer = builder.refine(boundary, 1)
    assert len(finer.points) == 9 and finer.levels == 3


def test_csv_round_trip(boundary):
    text = boundary.to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["R_1", "R_2", "est_power", "std_error"]
    back = np.array([[float(x) for x in r[:2]] for r in rows[1:]])
    np.testing.assert_array_equal(back, boundary.as_array())


def test_asymmetric_users_are_not_mirrored():
    pdp = (PowerDelayProfile.uniform(4), PowerDelayProfile.from_weights([0.9, 0.1]))
    b = RegionBuilder(ChannelModel(2, 4, pdp), 1.0, 1000, 0)
    assert not b.symmetric()


def test_three_users_and_limits():
    b = RegionBuilder(ChannelModel.uniform(3, 4, 4), 1.0, 500, 1, tol=1e-2)
    r = b.build(levels=1)
    assert len(r.points) == 6 and len(r.triangles) == 4
    for p in r.points:
        assert p.estimate.mean <= 1.0 * (1 + 1e-2) + 1e-12
    with pytest.raises(NotImplementedError):
        RegionBuilder(ChannelModel.uniform(4, 4, 4), 1.0, 100, 0).build(1)
    with pytest.raises(ValueError):
        RegionBuilder(ChannelModel.uniform(2, 4, 4), -1.0)
