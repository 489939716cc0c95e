"""Pixel I/O, channel histograms and full-reference quality metrics.

All images are float64 numpy arrays in [0, 1]; see :mod:`nightrain._validation`
for the accepted shapes.
"""

from dataclasses import dataclass
import os

import numpy as np
from PIL import Image as PILImage
from scipy import signal

from ._validation import ContractError, ImageDecodeError, check_image, check_same_shape

N_BINS = 256
PSNR_CAP = 100.0
CHI2_EPS = 1e-9

# Pillow modes that are 8 bits per sample gray or RGB (alpha is dropped).
_GRAY_MODES = ("L", "LA")
_RGB_MODES = ("RGB", "RGBA")


def load_png(path):
    """Read an 8-bit grayscale or RGB PNG into a float image in [0, 1].

    Grayscale files give an ``(H, W)`` plane, RGB files ``(H, W, 3)``.
    Alpha channels are discarded.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.format != "PNG":
                raise ImageDecodeError(f"{path}: not a PNG file ({im.format})")
            mode = im.mode
            if mode in _GRAY_MODES:
                arr = np.asarray(im.convert("L"))
            elif mode in _RGB_MODES:
                arr = np.asarray(im.convert("RGB"))
            else:
                raise ImageDecodeError(
                    f"{path}: unsupported PNG mode {mode!r} (need 8-bit gray or RGB)"
                )
    except ImageDecodeError:
        raise
    except OSError as exc:
        raise ImageDecodeError(f"{path}: cannot decode PNG ({exc})") from exc
    return arr.astype(np.float64) / 255.0


def to_uint8(img):
    """Quantize a [0, 1] image to uint8 with round-half-to-even of ``v * 255``."""
    arr = check_image(img)
    return np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(img, path):
    """Write ``img`` as an 8-bit PNG (gray for planes, RGB for 3 channels).

    Values are clamped to [0, 1] and quantized with ``round(v * 255)``, so a
    save/load roundtrip moves each value by at most 1/510.
    """
    data = to_uint8(img)
    mode = "L" if data.ndim == 2 else "RGB"
    path = os.fspath(path)
    PILImage.fromarray(data, mode=mode).save(path, format="PNG", optimize=False)


@dataclass(frozen=True)
class Histogram:
    """256-bin intensity histogram; bin ``k`` covers ``[k/256, (k+1)/256)``."""

    bins: np.ndarray
    channel_label: str = ""

    @property
    def total(self):
        return int(self.bins.sum())


def histogram(plane, channel_label=""):
    """Count the values of a single-channel plane into 256 bins.

    Values equal to 1.0 land in the last bin.
    """
    arr = check_image(plane, name="plane")
    if arr.ndim != 2:
        raise ContractError("histogram needs a single-channel plane")
    idx = np.clip(np.floor(arr * N_BINS).astype(np.int64), 0, N_BINS - 1)
    bins = np.bincount(idx.ravel(), minlength=N_BINS).astype(np.int64)
    return Histogram(bins=bins, channel_label=channel_label)


def histogram_distance(a, b, metric="L1"):
    """Distance between two histograms of equal mass.

    ``L1`` is the total absolute bin difference divided by the pixel count
    (so fully displaced mass scores 2).  ``chi2`` is
    ``sum((a - b)**2 / (a + b + 1e-9))`` on raw counts.
    """
    if a.total != b.total:
        raise ContractError(f"histogram totals differ: {a.total} vs {b.total}")
    ha = a.bins.astype(np.float64)
    hb = b.bins.astype(np.float64)
    if metric == "L1":
        return float(np.abs(ha - hb).sum() / a.total)
    if metric == "chi2":
        return float(np.sum((ha - hb) ** 2 / (ha + hb + CHI2_EPS)))
    raise ContractError(f"unknown histogram metric {metric!r}")


def psnr(a, b):
    """Peak signal-to-noise ratio in dB for peak value 1.0.

    The MSE is taken over every pixel and channel together.  Identical
    images report :data:`PSNR_CAP` (100 dB) instead of infinity.
    """
    x = check_image(a, name="a")
    y = check_image(b, name="b")
    check_same_shape(x, y)
    mse = np.mean((x - y) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(1.0 / mse)))


def gaussian_window(size=11, sigma=1.5):
    """Normalized 2-D Gaussian window of odd side ``size``."""
    half = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_plane(x, y, window, c1, c2):
    def filt(z):
        return signal.correlate(z, window, mode="valid", method="direct")

    mu_x = filt(x)
    mu_y = filt(y)
    xx = filt(x * x) - mu_x * mu_x
    yy = filt(y * y) - mu_y * mu_y
    xy = filt(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def ssim(a, b, *, win_size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Mean structural similarity over all fully-covered 11x11 windows.

    Gaussian-weighted statistics (sigma 1.5), population covariances.
    Colour images are scored per channel and averaged.
    """
    x = check_image(a, name="a")
    y = check_image(b, name="b")
    check_same_shape(x, y)
    if min(x.shape[:2]) < win_size:
        raise ContractError(
            f"image {x.shape[:2]} smaller than the {win_size}x{win_size} SSIM window"
        )
    window = gaussian_window(win_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    if x.ndim == 2:
        return _ssim_plane(x, y, window, c1, c2)
    scores = [_ssim_plane(x[..., c], y[..., c], window, c1, c2) for c in range(x.shape[2])]
    return float(np.mean(scores))
