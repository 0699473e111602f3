"""Frequency-tagged stimulus classification via canonical correlation.

A bank of sin/cos reference signals (fundamental + 2nd harmonic) is built
per candidate frequency; the epoch is scored against each by the maximum
canonical correlation and candidates are ranked by it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .signal import Epoch

RIDGE_SCALE = 1e-8


class CcaError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceSignalBank:
    """Per-frequency 4 x N_s reference matrices [sin f; cos f; sin 2f; cos 2f]."""

    frequencies: tuple[float, ...]
    fs: float
    n_samples: int
    signals: dict[float, np.ndarray]


@dataclass(frozen=True)
class CcaResult:
    rho: dict[float, float]
    w_x: dict[float, np.ndarray]
    w_y: dict[float, np.ndarray]
    ranking: tuple[float, ...]  # frequencies, best first

    @property
    def best(self) -> float:
        return self.ranking[0]


def build_reference_bank(frequencies, fs: float, n_samples: int) -> ReferenceSignalBank:
    """Reference signals evaluated at t_k = k/fs, k = 1..n_samples."""
    if n_samples < 8:
        raise CcaError("need at least 8 samples")
    signals = {}
    t = np.arange(1, n_samples + 1) / fs
    for f in frequencies:
        if 2 * f >= fs / 2:
            raise CcaError(f"2nd harmonic of {f} Hz exceeds Nyquist {fs / 2} Hz")
        signals[float(f)] = np.vstack(
            [
                np.sin(2 * np.pi * f * t),
                np.cos(2 * np.pi * f * t),
                np.sin(4 * np.pi * f * t),
                np.cos(4 * np.pi * f * t),
            ]
        )
    return ReferenceSignalBank(
        frequencies=tuple(float(f) for f in frequencies),
        fs=fs,
        n_samples=n_samples,
        signals=signals,
    )


def _ridge(c: np.ndarray) -> np.ndarray:
    tr = np.trace(c)
    if tr <= 0:
        raise CcaError("rank-deficient covariance: signals are constant")
    return c + RIDGE_SCALE * tr / c.shape[0] * np.eye(c.shape[0])


def cca_max_correlation(x: np.ndarray, y: np.ndarray):
    """Largest canonical correlation between row-spaces of x and y.

    Returns (rho, w_x, w_y). Rows are mean-centered internally; small
    ridge terms stabilize the auto-covariances.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[1] != y.shape[1]:
        raise CcaError("x and y must have the same number of samples")
    n = x.shape[1]
    if n <= x.shape[0] + y.shape[0]:
        raise CcaError("too few samples for the channel count")
    xc = x - x.mean(axis=1, keepdims=True)
    yc = y - y.mean(axis=1, keepdims=True)
    cxx = _ridge(xc @ xc.T / n)
    cyy = _ridge(yc @ yc.T / n)
    cxy = xc @ yc.T / n

    # rho^2 = max eig of Cxx^{-1/2} Cxy Cyy^{-1} Cyx Cxx^{-1/2}
    cxx_isqrt = sla.inv(sla.sqrtm(cxx).real)
    m = cxx_isqrt @ cxy @ sla.solve(cyy, cxy.T, assume_a="pos") @ cxx_isqrt
    m = (m + m.T) / 2
    vals, vecs = sla.eigh(m)
    rho2 = float(np.clip(vals[-1], 0.0, None))
    rho = float(min(np.sqrt(rho2), 1.0))
    w_x = cxx_isqrt @ vecs[:, -1]
    w_y = sla.solve(cyy, cxy.T @ w_x, assume_a="pos")
    ny = float(np.sqrt(w_y @ cyy @ w_y))
    if ny > 0:
        w_y = w_y / ny
    return rho, w_x, w_y


def classify_ssvep(epoch: Epoch, bank: ReferenceSignalBank) -> CcaResult:
    """Rank the bank's frequencies by canonical correlation with the epoch.

    Expects an epoch already restricted to visual channels and
    notch-filtered. Ties break toward the lower frequency.
    """
    if epoch.n_samples != bank.n_samples:
        raise CcaError(
            f"epoch length {epoch.n_samples} != bank length {bank.n_samples}"
        )
    rho, w_x, w_y = {}, {}, {}
    for f in bank.frequencies:
        r, wx, wy = cca_max_correlation(epoch.data, bank.signals[f])
        rho[f], w_x[f], w_y[f] = r, wx, wy
    ranking = tuple(sorted(bank.frequencies, key=lambda f: (-rho[f], f)))
    return CcaResult(rho=rho, w_x=w_x, w_y=w_y, ranking=ranking)
