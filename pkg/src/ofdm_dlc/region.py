"""Boundary of the broadcast delay-limited rate region at a sum-power budget.

A rate vector is in the region when the average (over fading states) of
its per-state minimum sum power does not exceed ``P*``.  The boundary is
traced by radial search: for a direction ``d`` the map
``alpha -> E[min sum power(alpha d)]`` is increasing, so the boundary point
is found by one-dimensional root finding.  Directions start at the axis
points (single-user rates) and are refined by midpoints of adjacent
boundary points.

All power evaluations of one build share one frozen draw set, which makes
the power map deterministic and keeps the boundary internally consistent.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .broadcast import min_sum_power_batch
from .channel import ChannelModel, sample_gains
from .estimate import McEstimate, summarize
from .montecarlo import su_dlc

__all__ = ["BoundaryPoint", "RegionBoundary", "RegionBuilder"]


@dataclass(frozen=True)
class BoundaryPoint:
    rates: np.ndarray
    estimate: McEstimate
    # standard error of the radial scale, relative to the point
    rate_std_error: float = math.nan
    computed: bool = True


@dataclass
class RegionBoundary:
    """Ordered boundary points at a power budget.

    For two users points run from the ``R_1`` axis to the ``R_2`` axis;
    for three users they are listed in generation order.
    """

    points: list[BoundaryPoint]
    power_budget: float
    users: int
    levels: int = 0
    triangles: list[tuple[int, int, int]] = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        return np.array([p.rates for p in self.points])

    def adjacent_pairs(self) -> list[tuple[int, int]]:
        if self.users == 2 or not self.triangles:
            return [(i, i + 1) for i in range(len(self.points) - 1)]
        edges = set()
        for a, b, c in self.triangles:
            for e in ((a, b), (b, c), (a, c)):
                edges.add(tuple(sorted(e)))
        return sorted(edges)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"R_{m + 1}" for m in range(self.users)] + ["est_power", "std_error"])
        for p in self.points:
            w.writerow([repr(float(x)) for x in p.rates]
                       + [repr(p.estimate.mean), repr(p.estimate.std_error)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


class _Found(Exception):
    def __init__(self, alpha):
        self.alpha = alpha


class RegionBuilder:
    """Evaluates average minimum sum power on a frozen draw set.

    Parameters
    ----------
    model : ChannelModel
    power_budget : float
        Per-carrier sum-power budget ``P*``.
    samples, seed : int
        Size and seed of the frozen draw set.
    tol : float
        Relative power tolerance of each boundary point.
    bc_tol : float
        Relative stopping tolerance of the per-state solver.  Its power
        error is a few tens of ``bc_tol``, far below ``tol`` at the default.
    states : array (n, M, K), optional
        Use these gains instead of drawing.
    """

    def __init__(self, model: ChannelModel, power_budget: float, samples: int = 10_000,
                 seed: int = 0, tol: float = 1e-3, bc_tol: float = 1e-6, states=None):
        if power_budget <= 0:
            raise ValueError("power budget must be positive")
        self.model = model
        self.power_budget = float(power_budget)
        self.seed = seed
        self.tol = tol
        self.bc_tol = bc_tol
        self.gains = sample_gains(model, samples, seed) if states is None else np.asarray(states, float)
        self.M = self.gains.shape[1]
        self.K = self.gains.shape[2]
        self.evaluations = 0
        self._axis = None
        self._last = None

    # -- power evaluations -------------------------------------------------

    def _warm_start(self, rates):
        """Previous solution rescaled user by user to the new targets."""
        if self._last is None:
            return None
        old, R = self._last
        init = np.empty_like(R)
        for m in range(self.M):
            if old[m] > 0:
                init[:, m, :] = R[:, m, :] * (rates[m] / old[m])
            else:
                # any feasible row will do: spread the rate evenly
                init[:, m, :] = rates[m]
        return init

    def state_powers(self, rates, init=None):
        """Per-state minimum sum power and the optimal per-carrier rates."""
        rates = np.asarray(rates, dtype=float)
        self.evaluations += 1
        if init is None:
            init = self._warm_start(rates)
        p, R, _, _, _ = min_sum_power_batch(self.gains, rates, tol=self.bc_tol, init=init)
        self._last = (rates.copy(), R)
        return p, R

    def average_power(self, rates) -> McEstimate:
        p, _ = self.state_powers(rates)
        return summarize(p, self.seed)

    def contains(self, rates, slack: float | None = None) -> bool:
        """Whether ``rates`` is supportable on average within ``P* (1 + slack)``.

        ``slack`` defaults to twice the build tolerance.
        """
        rates = np.asarray(rates, dtype=float)
        if np.all(rates == 0):
            return True
        slack = 2 * self.tol if slack is None else slack
        return self.average_power(rates).mean <= self.power_budget * (1 + slack)

    # -- boundary search ---------------------------------------------------

    def axis_points(self) -> np.ndarray:
        """Single-user delay-limited rates of every user on the frozen draws."""
        if self._axis is None:
            self._axis = np.array([
                su_dlc(self.model, self.power_budget, seed=self.seed, tol=self.tol * 0.1,
                       states=self.gains[:, m, :]).rate
                for m in range(self.M)])
        return self._axis

    def scale_to_boundary(self, direction) -> BoundaryPoint:
        """Boundary point ``alpha * direction`` with average power ``P*``."""
        d = np.asarray(direction, dtype=float).ravel()
        if d.size != self.M or np.any(d < 0) or not np.any(d > 0):
            raise ValueError("direction must be nonnegative, nonzero and of length M")
        axis = self.axis_points()
        pos = d > 0
        a_max = float(np.min(axis[pos] / d[pos]))
        P = self.power_budget
        seen = []

        def f(alpha):
            p, _ = self.state_powers(alpha * d)
            mean = math.fsum(p) / p.size
            seen.append((alpha, mean, p))
            if alpha > 0 and abs(mean - P) <= self.tol * P:
                raise _Found(alpha)
            return mean - P

        try:
            if f(a_max) <= 0:
                alpha = a_max
            else:
                alpha = optimize.brentq(lambda a: f(a) if a > 0 else -P, 0.0, a_max,
                                        xtol=1e-14 * a_max, rtol=1e-13, maxiter=200)
        except _Found as hit:
            alpha = hit.alpha
        # largest evaluated scale meeting the budget; this is the root for a
        # continuous power map and stays feasible if the map jumps across P*
        feasible = [s for s in seen if s[1] <= P * (1 + self.tol)]
        if feasible:
            a, mean, p = max(feasible, key=lambda s: s[0])
        else:
            a, mean, p = min(seen, key=lambda s: abs(s[0] - alpha))
        est = summarize(p, self.seed)
        # delta method for the radial scale from the two closest evaluations
        rate_se = math.nan
        others = [s for s in seen if s[0] != a and s[0] > 0]
        if others:
            b, mb, _ = min(others, key=lambda s: abs(s[0] - a))
            slope = (mb - mean) / (b - a)
            if slope > 0:
                rate_se = est.std_error / slope / a
        return BoundaryPoint(a * d, est, rate_se)

    # -- region construction -----------------------------------------------

    def symmetric(self) -> bool:
        pdp = self.model.pdp
        return all(p == pdp[0] for p in pdp)

    def build(self, levels: int = 4, mirror: bool | None = None) -> RegionBoundary:
        """Axis points plus ``levels`` rounds of midpoint refinement.

        For two users this gives ``2**levels + 1`` points.  With ``mirror``
        (default: when all users share one delay profile) only the sector
        next to the ``R_1`` axis is computed and the rest is reflected.
        """
        if self.M == 1:
            axis = self.axis_points()
            return RegionBoundary([BoundaryPoint(axis.copy(), self.average_power(axis), 0.0)],
                                  self.power_budget, 1, 0)
        if self.M == 2:
            return self._build2(levels, self.symmetric() if mirror is None else mirror)
        if self.M == 3:
            return self._build3(levels)
        raise NotImplementedError("region tracing is implemented for up to three users")

    def _axis_boundary(self, m: int) -> BoundaryPoint:
        axis = self.axis_points()
        r = np.zeros(self.M)
        r[m] = axis[m]
        return BoundaryPoint(r, self.average_power(r), math.nan)

    def _build2(self, levels: int, mirror: bool) -> RegionBoundary:
        if mirror and levels >= 1:
            a = self._axis_boundary(0)
            b = self._axis_boundary(1)
            # symmetric users: the diagonal direction is the midpoint of the axes
            diag = self.scale_to_boundary(0.5 * (a.rates + b.rates))
            half = self._refine_chain([a, diag], levels - 1)
            mirrored = [BoundaryPoint(p.rates[::-1].copy(), p.estimate, p.rate_std_error, False)
                        for p in reversed(half[:-1])]
            pts = half + mirrored
        else:
            pts = self._refine_chain([self._axis_boundary(0), self._axis_boundary(1)], levels)
        return RegionBoundary(pts, self.power_budget, 2, levels)

    def _refine_chain(self, pts: list[BoundaryPoint], levels: int) -> list[BoundaryPoint]:
        for _ in range(levels):
            out = [pts[0]]
            for p, q in zip(pts[:-1], pts[1:]):
                out.append(self.scale_to_boundary(0.5 * (p.rates + q.rates)))
                out.append(q)
            pts = out
        return pts

    def refine(self, boundary: RegionBoundary, iterations: int = 1) -> RegionBoundary:
        """Further midpoint refinement of an existing two-user boundary."""
        if boundary.users != 2:
            raise NotImplementedError("incremental refinement is implemented for two users")
        pts = self._refine_chain(list(boundary.points), iterations)
        return RegionBoundary(pts, boundary.power_budget, 2, boundary.levels + iterations)

    def _build3(self, levels: int) -> RegionBoundary:
        pts = [self._axis_boundary(m) for m in range(3)]
        tris = [(0, 1, 2)]
        mid_cache: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in mid_cache:
                pts.append(self.scale_to_boundary(0.5 * (pts[i].rates + pts[j].rates)))
                mid_cache[key] = len(pts) - 1
            return mid_cache[key]

        for _ in range(levels):
            new = []
            for a, b, c in tris:
                ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
                new += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
            tris = new
        return RegionBoundary(pts, self.power_budget, 3, levels, tris)
