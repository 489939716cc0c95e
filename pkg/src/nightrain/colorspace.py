"""Colour-space conversions and channel extraction.

YCbCr uses the full-range analysis matrix below with its exact numerical
inverse.  HSV and YUV (BT.601) are delegated to scikit-image; HSL and
CIELAB (D65, sRGB) are computed here.

Signed channels (Cb, Cr, U, V of YUV, a*, b*) are shifted by +0.5 when
extracted for histogramming, see :func:`extract_channel`.
"""

import numpy as np
from skimage import color as skcolor
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import ContractError, check_image

_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.169, -0.331, 0.5],
        [0.5, -0.419, -0.081],
    ]
)

# a*, b* are divided by this before the +0.5 histogram shift.
LAB_AB_SCALE = 256.0

SPACES = {
    "rgb": ("R", "G", "B"),
    "ycbcr": ("Y", "Cb", "Cr"),
    "hsv": ("H", "S", "V"),
    "hsl": ("H", "S", "L"),
    "yuv": ("Y", "U", "V"),
    "lab": ("L", "A", "B"),
}

# (space, channel index) pairs whose values are signed around zero.
_SIGNED = {("ycbcr", 1), ("ycbcr", 2), ("yuv", 1), ("yuv", 2), ("lab", 1), ("lab", 2)}


def canonical_matrix():
    """The fixed RGB -> YCbCr weights as a fresh (3, 3) array."""
    return _YCBCR.copy()


def apply_matrix(img, m):
    """Per-pixel matrix-vector product ``out[..., c] = sum_k m[c, k] * img[..., k]``.

    The result is not clamped; chroma outputs are signed.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim < 1 or arr.shape[-1] != 3:
        raise ContractError(f"apply_matrix needs 3 channels, got shape {arr.shape}")
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise ContractError("conversion matrix must be a finite 3x3 array")
    return arr @ m.T


def rgb_to_ycbcr(img):
    return apply_matrix(check_image(img, channels=3), _YCBCR)


def ycbcr_to_rgb(planes, clamp=True):
    """Invert :func:`rgb_to_ycbcr` with the numerical inverse of its matrix."""
    out = apply_matrix(planes, np.linalg.inv(_YCBCR))
    return np.clip(out, 0.0, 1.0) if clamp else out


def rgb_to_hsv(img):
    """Hexcone HSV with hue as a fraction of a full turn in [0, 1).

    Gray pixels get hue 0, black pixels saturation 0.
    """
    return skcolor.rgb2hsv(check_image(img, channels=3))


def hsv_to_rgb(planes):
    return skcolor.hsv2rgb(np.asarray(planes, dtype=np.float64))


def rgb_to_hsl(img):
    """HSL with ``L = (max + min) / 2``; hue as in :func:`rgb_to_hsv`."""
    rgb = check_image(img, channels=3)
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    light = (mx + mn) / 2.0
    denom = 1.0 - np.abs(2.0 * light - 1.0)
    sat = np.zeros_like(light)
    np.divide(delta, denom, out=sat, where=(delta > 0) & (denom > 0))
    hue = skcolor.rgb2hsv(rgb)[..., 0]
    return np.stack([hue, np.clip(sat, 0.0, 1.0), light], axis=-1)


def hsl_to_rgb(planes):
    hsl = np.asarray(planes, dtype=np.float64)
    h, s, light = hsl[..., 0], hsl[..., 1], hsl[..., 2]
    chroma = (1.0 - np.abs(2.0 * light - 1.0)) * s
    v = light + chroma / 2.0
    sv = np.zeros_like(v)
    np.divide(chroma, v, out=sv, where=v > 0)
    return skcolor.hsv2rgb(np.stack([h, sv, v], axis=-1))


def rgb_to_yuv(img):
    """BT.601 YUV; U and V are signed."""
    return skcolor.rgb2yuv(check_image(img, channels=3))


def yuv_to_rgb(planes, clamp=True):
    out = skcolor.yuv2rgb(np.asarray(planes, dtype=np.float64))
    return np.clip(out, 0.0, 1.0) if clamp else out


# linear sRGB -> XYZ (D65)
_SRGB_TO_XYZ = np.array(
    [
        [0.412453, 0.357580, 0.180423],
        [0.212671, 0.715160, 0.072169],
        [0.019334, 0.119193, 0.950227],
    ]
)
# reference white taken from the same matrix so grays get a* = b* = 0
_WHITE = _SRGB_TO_XYZ.sum(axis=1)


def rgb_to_lab(img):
    """CIELAB (D65, sRGB primaries) with L rescaled to [0, 1]; a*, b* in native units."""
    rgb = check_image(img, channels=3)
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    t = (lin @ _SRGB_TO_XYZ.T) / _WHITE
    eps = (6.0 / 29.0) ** 3
    f = np.where(t > eps, np.cbrt(t), t / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    light = (116.0 * f[..., 1] - 16.0) / 100.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([light, a, b], axis=-1)


_FORWARD = {
    "rgb": lambda img: check_image(img, channels=3).copy(),
    "ycbcr": rgb_to_ycbcr,
    "hsv": rgb_to_hsv,
    "hsl": rgb_to_hsl,
    "yuv": rgb_to_yuv,
    "lab": rgb_to_lab,
}

_INVERSE = {
    "rgb": lambda planes: np.asarray(planes, dtype=np.float64).copy(),
    "ycbcr": lambda planes: ycbcr_to_rgb(planes, clamp=False),
    "hsv": hsv_to_rgb,
    "hsl": hsl_to_rgb,
    "yuv": lambda planes: yuv_to_rgb(planes, clamp=False),
}


def convert(img, space):
    try:
        fn = _FORWARD[space.lower()]
    except KeyError:
        raise ContractError(f"unknown colour space {space!r}") from None
    return fn(img)


def resolve_channel(space, channel):
    """Map a channel name or index to ``(space_key, index)``."""
    key = space.lower()
    if key not in SPACES:
        raise ContractError(f"unknown colour space {space!r}")
    names = SPACES[key]
    if isinstance(channel, str):
        lowered = [n.lower() for n in names]
        if channel.lower() not in lowered:
            raise ContractError(f"space {space!r} has no channel {channel!r}")
        return key, lowered.index(channel.lower())
    idx = int(channel)
    if not 0 <= idx < 3:
        raise ContractError(f"channel index {channel} out of range for {space!r}")
    return key, idx


def extract_channel(img, space, channel):
    """Convert ``img`` to ``space`` and return one channel as a [0, 1] plane.

    Signed channels are shifted by +0.5 (a* and b* are first divided by 256)
    and then clipped, so a neutral gray maps to 0.5.
    """
    key, idx = resolve_channel(space, channel)
    plane = convert(img, key)[..., idx]
    if key == "lab" and idx > 0:
        plane = plane / LAB_AB_SCALE
    if (key, idx) in _SIGNED:
        plane = plane + 0.5
    return np.clip(plane, 0.0, 1.0)


class ColorSpaceTransformer(TransformerMixin, BaseEstimator):
    """Stateless transformer between RGB images and another colour space.

    Parameters
    ----------
    space : str
        One of ``rgb``, ``ycbcr``, ``hsv``, ``hsl``, ``yuv``, ``lab``.
        ``lab`` has no inverse.
    """

    def __init__(self, space="ycbcr"):
        self.space = space

    def fit(self, X, y=None):
        if self.space.lower() not in SPACES:
            raise ContractError(f"unknown colour space {self.space!r}")
        return self

    def transform(self, X):
        return convert(X, self.space)

    def inverse_transform(self, X):
        key = self.space.lower()
        if key not in _INVERSE:
            raise ContractError(f"no inverse implemented for {self.space!r}")
        return _INVERSE[key](X)
