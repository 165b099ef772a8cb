"""Monte-Carlo estimate container and the order-independent reduction behind it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["McEstimate", "summarize"]


@dataclass(frozen=True)
class McEstimate:
    """Sample mean of a per-draw statistic with its standard error."""

    mean: float
    std_error: float
    samples: int
    seed: int | None = None
    nonfinite: int = 0

    def interval(self, width: float = 3.0) -> tuple[float, float]:
        return self.mean - width * self.std_error, self.mean + width * self.std_error

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "samples": self.samples,
            "seed": self.seed,
            "nonfinite": self.nonfinite,
        }


def summarize(values: np.ndarray, seed: int | None = None) -> McEstimate:
    """Mean and standard error of ``values`` using exactly rounded sums.

    ``math.fsum`` makes the result independent of how the values were
    partitioned across workers, as long as the concatenation order is fixed.
    Non-finite entries are dropped and counted.
    """
    values = np.asarray(values, dtype=float).ravel()
    finite = np.isfinite(values)
    bad = int(values.size - finite.sum())
    v = values[finite]
    n = v.size
    if n == 0:
        return McEstimate(math.nan, math.nan, 0, seed, bad)
    try:
        mean = math.fsum(v) / n
    except OverflowError:
        return McEstimate(math.inf, math.inf, n, seed, bad)
    if n > 1:
        with np.errstate(over="ignore"):
            dev = (v - mean) ** 2
        try:
            se = math.sqrt(math.fsum(dev) / (n - 1) / n)
        except OverflowError:
            se = math.inf
    else:
        se = math.inf
    return McEstimate(mean, se, n, seed, bad)
