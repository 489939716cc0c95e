"""Illumination coefficient maps for nighttime backgrounds.

The initial map is the min-max normalized HSV value channel.  Pixels at or
below the low threshold, or at or above the high one, are halved.  Rain
is barely visible in deep shadow and inside light sources.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import ContractError, check_image

DEFAULT_TAU1 = 0.2
DEFAULT_TAU2 = 0.8


@dataclass(frozen=True)
class ThresholdPair:
    tau1: float = DEFAULT_TAU1
    tau2: float = DEFAULT_TAU2

    def __post_init__(self):
        if not (0.0 <= self.tau1 < 1.0 and 0.0 < self.tau2 <= 1.0 and self.tau1 < self.tau2):
            raise ContractError(
                f"invalid thresholds tau1={self.tau1}, tau2={self.tau2}; "
                "need 0 <= tau1 < tau2 <= 1"
            )


def estimate_initial(background):
    """Min-max normalized V channel of ``background``.

    A flat V plane (max == min) is returned unnormalized.
    """
    rgb = check_image(background, channels=3, name="background")
    v = rgb.max(axis=-1)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return v.copy()
    return (v - lo) / (hi - lo)


def apply_threshold_mask(n, thresholds=ThresholdPair()):
    """Halve every value ``<= tau1`` or ``>= tau2``; keep the band between."""
    arr = check_image(n, channels=1, name="illumination")
    outside = (arr <= thresholds.tau1) | (arr >= thresholds.tau2)
    return np.where(outside, arr / 2.0, arr)


def estimate(background, thresholds=ThresholdPair()):
    return apply_threshold_mask(estimate_initial(background), thresholds)


class IlluminationEstimator(TransformerMixin, BaseEstimator):
    """Transform RGB backgrounds into illumination coefficient maps.

    Accepts a single ``(H, W, 3)`` image or a stack ``(N, H, W, 3)``.
    """

    def __init__(self, tau1=DEFAULT_TAU1, tau2=DEFAULT_TAU2):
        self.tau1 = tau1
        self.tau2 = tau2

    def fit(self, X=None, y=None):
        self.thresholds_ = ThresholdPair(self.tau1, self.tau2)
        return self

    def transform(self, X):
        thresholds = getattr(self, "thresholds_", None) or ThresholdPair(self.tau1, self.tau2)
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 4:
            return np.stack([estimate(img, thresholds) for img in arr])
        return estimate(arr, thresholds)
