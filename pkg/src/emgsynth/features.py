"""Per-channel summary features for window classification baselines."""

from __future__ import annotations

import numpy as np


def rms(x):
    """Root mean square per channel of a (T, C) window."""
    return np.sqrt(np.mean(np.asarray(x, dtype=np.float64) ** 2, axis=0))


def mav(x):
    """Mean absolute value per channel."""
    return np.mean(np.abs(np.asarray(x, dtype=np.float64)), axis=0)


def zero_crossing_rate(x):
    """Fraction of consecutive sample pairs that change sign, per channel."""
    arr = np.asarray(x, dtype=np.float64)
    signs = np.signbit(arr)
    return np.mean(signs[1:] != signs[:-1], axis=0)


def window_features(x):
    """Feature vector [rms | mav | zero-crossing rate], length 3*C."""
    return np.concatenate([rms(x), mav(x), zero_crossing_rate(x)])


def feature_matrix(windows):
    """Stack window feature vectors into an (n, 3*C) design matrix."""
    return np.stack([window_features(w) for w in windows])
