"""Muscle-tension (jaw clench) detection by median-channel-variance threshold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import Epoch


class EmgError(ValueError):
    pass


@dataclass(frozen=True)
class EmgCalibration:
    m_rest: tuple[float, ...]
    m_clench: tuple[float, ...]
    threshold: float
    window_s: float
    overlap_warning: bool


def median_channel_variance(epoch: Epoch) -> float:
    """Variance of the channel with the median variance (lower-median for even C)."""
    if epoch.n_samples < 2:
        raise EmgError("degenerate epoch")
    variances = np.sort(epoch.data.var(axis=1))
    return float(variances[(len(variances) - 1) // 2])


def calibrate_emg(rest: list[Epoch], clench: list[Epoch]) -> EmgCalibration:
    """Threshold = midpoint of max rest variance and min clench variance.

    Overlapping calibration distributions still yield a threshold; the
    overlap_warning flag is set instead of failing.
    """
    if not rest or not clench:
        raise EmgError("need at least one trial per class")
    m_rest = tuple(median_channel_variance(e) for e in rest)
    m_clench = tuple(median_channel_variance(e) for e in clench)
    threshold = (max(m_rest) + min(m_clench)) / 2.0
    return EmgCalibration(
        m_rest=m_rest,
        m_clench=m_clench,
        threshold=threshold,
        window_s=rest[0].duration_s,
        overlap_warning=max(m_rest) >= min(m_clench),
    )


def detect_clench(calib: EmgCalibration, window: Epoch) -> bool:
    """True iff the window's median channel variance strictly exceeds the threshold."""
    if abs(window.duration_s - calib.window_s) > 0.1 * calib.window_s:
        raise EmgError(
            f"window duration {window.duration_s:.3f}s differs from calibration "
            f"{calib.window_s:.3f}s by more than 10%"
        )
    return median_channel_variance(window) > calib.threshold
