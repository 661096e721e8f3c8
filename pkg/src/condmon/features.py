"""Time-domain preprocessing and the five handcrafted vibration features.

The handcrafted features are computed on the raw series; the smoothed
(block-averaged) series is what the learned feature extractor consumes.
"""

from __future__ import annotations

import numpy as np

SMOOTH_WINDOW = 5

FEATURE_NAMES = ("rms", "kurtosis", "skewness", "crest_factor", "peak_to_peak")


class ZeroVarianceError(ValueError):
    """A statistic is undefined because the signal is constant (dead sensor)."""


def _as_signal(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {x.shape}")
    if x.size == 0:
        raise ValueError("empty signal")
    return x


def average_downsample(raw) -> np.ndarray:
    """Mean of every consecutive block of SMOOTH_WINDOW samples.

    Knocks out high-frequency noise and shrinks the sample by 5x; the output
    preserves the global mean of the input exactly.
    """
    x = _as_signal(raw)
    if x.size % SMOOTH_WINDOW != 0:
        raise ValueError(
            f"signal length {x.size} is not divisible by {SMOOTH_WINDOW}"
        )
    return x.reshape(-1, SMOOTH_WINDOW).mean(axis=1)


def rms(x) -> float:
    """Root mean square."""
    x = _as_signal(x)
    return float(np.sqrt(np.mean(np.square(x))))


def _central_moment_base(x: np.ndarray) -> tuple[np.ndarray, float]:
    # Returns (deviations from mean, second central moment with divisor n).
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if m2 <= 0.0:
        raise ZeroVarianceError("zero variance: moment statistics undefined")
    return d, m2


def kurtosis(x) -> float:
    """Non-excess kurtosis m4 / m2^2 (moments with divisor n; normal ~ 3)."""
    x = _as_signal(x)
    d, m2 = _central_moment_base(x)
    return float(np.mean(d**4) / m2**2)


def skewness(x) -> float:
    """Skewness m3 / m2^(3/2) (moments with divisor n)."""
    x = _as_signal(x)
    d, m2 = _central_moment_base(x)
    return float(np.mean(d**3) / m2**1.5)


def crest_factor(x) -> float:
    """Peak absolute amplitude over RMS; sensitive to impulsive defects."""
    x = _as_signal(x)
    r = rms(x)
    if r == 0.0:
        raise ZeroVarianceError("all-zero signal has no crest factor")
    return float(np.max(np.abs(x)) / r)


def peak_to_peak(x) -> float:
    """max(x) - min(x)."""
    x = _as_signal(x)
    return float(np.max(x) - np.min(x))


def handcrafted_vector(raw) -> np.ndarray:
    """The five features of the raw (unaveraged) series, in FEATURE_NAMES order."""
    x = _as_signal(raw)
    return np.array(
        [rms(x), kurtosis(x), skewness(x), crest_factor(x), peak_to_peak(x)]
    )
