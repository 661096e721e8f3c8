"""Adaptive deviation threshold T = K*(mean + std) and K calibration.

mean/std are accumulated over the deviations seen while the classifier is
still training; K is picked on held-in bearings by maximizing verdict
accuracy over a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class DeviationStats:
    """Streaming mean and population standard deviation (Welford)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, deviation: float) -> None:
        deviation = float(deviation)
        if deviation < 0 or not math.isfinite(deviation):
            raise ValueError(f"deviation must be finite and >= 0, got {deviation}")
        self.n += 1
        delta = deviation - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (deviation - self.mean)

    @property
    def std(self) -> float:
        if self.n == 0:
            return 0.0
        return math.sqrt(max(self.m2, 0.0) / self.n)


@dataclass(frozen=True)
class Threshold:
    k: float
    t: float


def threshold(stats: DeviationStats, k: float) -> Threshold:
    """T = K * (mean + std) of the training-phase deviations."""
    if k <= 0:
        raise ValueError("K must be positive")
    if stats.n < 2:
        raise ValueError(f"need at least 2 training deviations, have {stats.n}")
    return Threshold(k=float(k), t=float(k) * (stats.mean + stats.std))


def classify_sample(deviation: float, t: float) -> bool:
    """True iff anomalous: deviation strictly above the threshold."""
    return deviation > t


@dataclass(frozen=True)
class BearingVerdict:
    max_deviation: float
    threshold: Threshold
    faulty: bool
    convergence_length: int

    @property
    def state(self) -> str:
        return "faulty" if self.faulty else "healthy"


def bearing_verdict(
    deviation_trace: np.ndarray, thr: Threshold, convergence_index: int
) -> BearingVerdict:
    """Verdict from the worst post-convergence deviation.

    convergence_index is the 1-based count of training samples (the trace up
    to and including the convergence sample); everything after it is the
    inference region the verdict is judged on.
    """
    trace = np.asarray(deviation_trace, dtype=float)
    inference = trace[convergence_index:]
    if inference.size == 0:
        raise ValueError("empty inference region: nothing to judge")
    max_dev = float(inference.max())
    return BearingVerdict(
        max_deviation=max_dev,
        threshold=thr,
        faulty=classify_sample(max_dev, thr.t),
        convergence_length=int(convergence_index),
    )


@dataclass(frozen=True)
class BearingCalibrationRow:
    """Per-bearing summary used to pick K: its own training stats, its worst
    inference deviation, and whether it truly failed."""

    label: str
    mu_t: float
    sigma_t: float
    max_deviation: float
    faulty: bool


def default_k_grid() -> np.ndarray:
    """0.5 .. 100 in steps of 0.5 (covers both reported operating points)."""
    return np.arange(0.5, 100.0 + 0.25, 0.5)


def accuracy_at_k(rows: list[BearingCalibrationRow], k: float) -> float:
    """Fraction of bearings whose verdict at this K matches ground truth."""
    if not rows:
        raise ValueError("no bearings to score")
    correct = sum(
        1
        for r in rows
        if classify_sample(r.max_deviation, k * (r.mu_t + r.sigma_t)) == r.faulty
    )
    return correct / len(rows)


def accuracy_vs_k(
    rows: list[BearingCalibrationRow], k_grid: np.ndarray
) -> list[tuple[float, float]]:
    """(K, accuracy%) step curve over the grid."""
    grid = np.asarray(k_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty K grid")
    return [(float(k), 100.0 * accuracy_at_k(rows, float(k))) for k in grid]


def calibrate_k(rows: list[BearingCalibrationRow], k_grid: np.ndarray) -> float:
    """Midpoint of the widest contiguous max-accuracy plateau on the grid.

    The midpoint keeps the operating point as far as possible from the Ks
    where some bearing's verdict flips.
    """
    grid = np.asarray(k_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty K grid")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("K grid must be strictly ascending")
    acc = np.array([accuracy_at_k(rows, float(k)) for k in grid])
    best = acc.max()
    best_mask = acc == best

    widest = None  # (width, start_idx, end_idx)
    start = None
    for i, hit in enumerate(list(best_mask) + [False]):
        if hit and start is None:
            start = i
        elif not hit and start is not None:
            width = grid[i - 1] - grid[start]
            if widest is None or width > widest[0]:
                widest = (width, start, i - 1)
            start = None
    _, lo, hi = widest
    return float((grid[lo] + grid[hi]) / 2.0)
