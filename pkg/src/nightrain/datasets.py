"""Synthetic nighttime backgrounds for demos and tests.

Real night street photographs are not shipped; these stand-ins have the
statistics that matter to the synthesis pipeline: a dark, slightly noisy
scene with a few bright, tinted light sources and their glow.
"""

import os

import numpy as np
from scipy import ndimage

from ._seeding import make_rng
from .imagecore import save_png

_LAMP_TINTS = np.array([
    [1.00, 0.78, 0.45],  # sodium
    [1.00, 0.95, 0.85],  # warm white
    [0.85, 0.92, 1.00],  # LED
    [1.00, 0.35, 0.25],  # tail light
])


def make_night_background(seed=0, height=96, width=128, n_lamps=(2, 5)):
    """Dark RGB scene in [0, 1] with ``n_lamps`` glowing light sources."""
    rng = make_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    base = 0.03 + 0.06 * (yy / max(height - 1, 1))
    texture = ndimage.gaussian_filter(rng.normal(0.0, 1.0, (height, width)), 3.0)
    texture /= np.abs(texture).max() + 1e-12
    scene = np.clip(base + 0.03 * texture, 0.0, 1.0)
    img = np.stack([scene * 0.9, scene * 0.95, scene * 1.1], axis=-1)

    count = int(rng.integers(n_lamps[0], n_lamps[1] + 1))
    for _ in range(count):
        cy, cx = rng.uniform(0.1 * height, 0.9 * height), rng.uniform(0.1 * width, 0.9 * width)
        glow = rng.uniform(0.12, 0.3) * min(height, width)
        core = rng.uniform(2.0, 5.0)
        tint = _LAMP_TINTS[rng.integers(len(_LAMP_TINTS))]
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        light = 0.75 * np.exp(-d2 / (2.0 * glow**2)) + np.exp(-d2 / (2.0 * core**2))
        img = img + light[..., None] * tint
    return np.clip(img, 0.0, 1.0)


def write_night_backgrounds(directory, count, seed=0, height=96, width=128):
    """Save ``count`` backgrounds as ``bg_0000.png`` ... and return their paths."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i in range(count):
        path = os.path.join(directory, f"bg_{i:04d}.png")
        save_png(make_night_background(seed + i, height, width), path)
        paths.append(path)
    return paths
