"""Savitzky-Golay smoothing: moving least-squares polynomial filtering.

Interior points use the classical fixed convolution weights; points within
half a window of either edge are smoothed by refitting the polynomial on the
truncated one-sided window and evaluating it at the point itself. Polynomials
of degree <= order therefore pass through unchanged everywhere, boundaries
included.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def _validate(window: int, order: int) -> None:
    if window < 3 or window % 2 == 0:
        raise DataError(f"window must be an odd integer >= 3, got {window}")
    if order < 0:
        raise DataError(f"polynomial order must be >= 0, got {order}")
    if order >= window:
        raise DataError(f"polynomial order {order} must be < window {window}")


def savgol_coeffs(window: int, order: int) -> np.ndarray:
    """Interior smoothing weights: least-squares polynomial value at the window center.

    The smoothed value at an interior point i is ``coeffs @ y[i-h : i+h+1]``
    with h = window // 2.
    """
    _validate(window, order)
    half = window // 2
    offsets = np.arange(-half, half + 1, dtype=float)
    design = np.vander(offsets, order + 1, increasing=True)
    # value at offset 0 is coefficient 0 of the LS fit: weights are the first
    # row of the pseudoinverse of the design matrix
    return np.linalg.pinv(design)[0]


def savitzky_golay(series, window: int, order: int) -> np.ndarray:
    """Smooth a 1-D series with a degree-``order`` moving polynomial fit."""
    _validate(window, order)
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise DataError(f"series must be 1-D, got shape {y.shape}")
    n = y.shape[0]
    if n < window:
        raise DataError(f"series of length {n} is shorter than window {window}")

    half = window // 2
    out = np.empty(n)
    weights = savgol_coeffs(window, order)
    out[half : n - half] = np.correlate(y, weights, mode="valid")

    for i in list(range(half)) + list(range(n - half, n)):
        lo = max(0, i - half)
        hi = min(n - 1, i + half)
        offsets = np.arange(lo, hi + 1, dtype=float) - i
        design = np.vander(offsets, order + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(design, y[lo : hi + 1], rcond=None)
        out[i] = coef[0]
    return out
