"""The six focus measures used as physics features.

The order of :data:`METRIC_NAMES` is a serialization contract: it fixes the
per-patch layout of every feature vector and feature CSV column.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .image import _log, _separable, _sobel, as_gray, gaussian_taps, log_response, quantize, sobel_gradients

METRIC_NAMES = (
    "entropy",           # M1
    "log_energy",        # M2
    "tenengrad",         # M3
    "brenner",           # M4
    "gray_variance",     # M5
    "max_abs_gradient",  # M6
)
N_METRICS = len(METRIC_NAMES)


def entropy(img) -> float:
    """Shannon entropy (bits) of the 256-bin intensity histogram."""
    return _entropy(as_gray(img))


def _entropy(a: np.ndarray) -> float:
    counts = np.bincount(quantize(a).ravel(), minlength=256)
    p = counts[counts > 0] / a.size
    return float(-np.sum(p * np.log2(p))) + 0.0


def log_energy(img, sigma: float = 1.0) -> float:
    """Sum of squared Laplacian-of-Gaussian responses."""
    r = log_response(img, sigma)
    return float(np.sum(r * r))


def tenengrad(img) -> float:
    gx, gy = sobel_gradients(img)
    return float(np.sum(gx * gx + gy * gy))


def brenner(img) -> float:
    """Sum of squared differences between pixels two columns apart (no padding)."""
    img = as_gray(img)
    if img.shape[1] < 3:
        raise InvalidInputError(f"Brenner needs width >= 3, got {img.shape[1]}")
    return _brenner(img)


def _brenner(a: np.ndarray) -> float:
    d = a[:, 2:] - a[:, :-2]
    return float(np.sum(d * d))


def gray_variance(img) -> float:
    """Population variance of all intensities."""
    return _variance(as_gray(img))


def _variance(a: np.ndarray) -> float:
    d = a - a.mean()
    return float(np.sum(d * d) / a.size)


def max_abs_gradient(img) -> float:
    gx, gy = sobel_gradients(img)
    return float(np.sqrt(np.max(gx * gx + gy * gy)))


def metric_vector(img, sigma: float = 1.0) -> np.ndarray:
    """All six measures in canonical order."""
    img = as_gray(img)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise InvalidInputError(f"metric_vector needs at least 3x3 pixels, got {img.shape[1]}x{img.shape[0]}")
    g = gaussian_taps(sigma)
    if len(g) > min(img.shape):
        raise InvalidInputError(f"LoG kernel {len(g)}x{len(g)} larger than image {img.shape[1]}x{img.shape[0]}")
    return unchecked_vector(img, g)


def unchecked_vector(a: np.ndarray, taps: np.ndarray | None) -> np.ndarray:
    """Metric vector of a validated float64 array.

    ``taps`` is the 1-D Gaussian for M2, or None to leave M2 at 0.  Arrays
    narrower than 3 pixels get 0 for the gradient measures and Brenner;
    callers are responsible for reporting that.
    """
    out = np.zeros(N_METRICS)
    out[0] = _entropy(a)
    if taps is not None:
        r = _log(_separable(a, taps, taps))
        out[1] = float(np.sum(r * r))
    if a.shape[0] >= 3 and a.shape[1] >= 3:
        gx, gy = _sobel(a)
        mag2 = gx * gx + gy * gy
        out[2] = float(np.sum(mag2))
        out[5] = float(np.sqrt(np.max(mag2)))
    if a.shape[1] >= 3:
        out[3] = _brenner(a)
    out[4] = _variance(a)
    return out
