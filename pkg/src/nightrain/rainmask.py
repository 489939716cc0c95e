"""Seeded procedural rain-streak and raindrop masks.

Streaks: sparse bright noise convolved with a rasterized motion-blur line and
a Gaussian across the line (sets the width), scaled by a transparency gain.
Drops: perturbed circles ``r0 * (1 + sum_m a_m cos(m phi) sin(theta))``
filled with a rim-bright radial profile, plus the binary occlusion mask.

Angles for streaks are in degrees from vertical.  With image rows growing
downward, a positive angle moves the lower end of a streak to the right.
"""

from dataclasses import asdict, dataclass, field, replace
import math

import numpy as np
from scipy.signal import convolve2d

from ._seeding import make_rng
from ._validation import ContractError

STREAK_RANGES = {
    "noise_count": (50, 200),
    "length": (20, 50),
    "theta": (-30.0, 30.0),
    "width": (3.0, 7.0),
    "transparency": (0.4, 0.9),
}
DROP_RANGES = {
    "drop_count": (10, 60),
    "base_radius": (3.0, 12.0),
    "mode_amplitude": (-0.15, 0.15),
    "brightness": (0.6, 1.0),
}
N_DROP_MODES = 3
DROP_SUPERSAMPLE = 4
DROP_RADIUS_JITTER = 0.2
# sigma of the along-line falloff of the width kernel, in pixels
_WIDTH_KERNEL_PARALLEL_SIGMA = 0.5


@dataclass(frozen=True)
class StreakParams:
    noise_count: int
    length: int
    theta: float
    width: float
    transparency: float

    def __post_init__(self):
        if self.noise_count < 0:
            raise ContractError("noise_count must be >= 0")
        if self.length < 1:
            raise ContractError("streak length must be >= 1")
        if abs(self.theta) > 45:
            raise ContractError("streak angle must lie in [-45, 45] degrees")
        if self.width <= 0:
            raise ContractError("streak width must be > 0")
        if not 0.0 <= self.transparency <= 1.0:
            raise ContractError("transparency must lie in [0, 1]")


@dataclass(frozen=True)
class DropParams:
    drop_count: int
    base_radius: float
    mode_amplitudes: tuple = field(default=())
    brightness: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode_amplitudes", tuple(float(a) for a in self.mode_amplitudes))
        if self.drop_count < 0:
            raise ContractError("drop_count must be >= 0")
        if self.base_radius <= 0:
            raise ContractError("base_radius must be > 0")
        if sum(abs(a) for a in self.mode_amplitudes) >= 1.0:
            raise ContractError(
                "sum of |mode amplitudes| must be < 1 or the drop outline self-intersects"
            )
        if not 0.0 <= self.brightness <= 1.0:
            raise ContractError("brightness must lie in [0, 1]")


@dataclass
class RainMask:
    """A rain layer in [0, 1]; drop masks also carry the binary occlusion mask."""

    plane: np.ndarray
    kind: str
    binary: np.ndarray = None


def params_to_dict(params):
    d = asdict(params)
    if "mode_amplitudes" in d:
        d["mode_amplitudes"] = list(d["mode_amplitudes"])
    return d


def override_params(params, overrides):
    if not overrides:
        return params
    unknown = set(overrides) - set(asdict(params))
    if unknown:
        raise ContractError(f"unknown {type(params).__name__} fields: {sorted(unknown)}")
    return replace(params, **overrides)


def sample_params(kind, seed):
    """Draw streak or drop parameters uniformly from the default ranges."""
    rng = make_rng(seed)
    if kind == "streak":
        r = STREAK_RANGES
        return StreakParams(
            noise_count=int(rng.integers(r["noise_count"][0], r["noise_count"][1] + 1)),
            length=int(rng.integers(r["length"][0], r["length"][1] + 1)),
            theta=float(rng.uniform(*r["theta"])),
            width=float(rng.uniform(*r["width"])),
            transparency=float(rng.uniform(*r["transparency"])),
        )
    if kind == "drop":
        r = DROP_RANGES
        return DropParams(
            drop_count=int(rng.integers(r["drop_count"][0], r["drop_count"][1] + 1)),
            base_radius=float(rng.uniform(*r["base_radius"])),
            mode_amplitudes=tuple(rng.uniform(*r["mode_amplitude"], size=N_DROP_MODES)),
            brightness=float(rng.uniform(*r["brightness"])),
        )
    raise ContractError(f"unknown mask kind {kind!r}")


def gen_noise(n, height, width, seed):
    """Plane with exactly ``n`` pixels set to uniform values in (0.5, 1]."""
    if n < 0:
        raise ContractError("noise count must be >= 0")
    if n > height * width:
        raise ContractError(f"cannot place {n} noise pixels in a {height}x{width} plane")
    rng = make_rng(seed)
    plane = np.zeros(height * width)
    idx = rng.choice(height * width, size=n, replace=False)
    plane[idx] = 1.0 - 0.5 * rng.random(n)
    return plane.reshape(height, width)


def bresenham(x0, y0, x1, y1):
    """Integer pixels of the line from (x0, y0) to (x1, y1), endpoints included."""
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    points = []
    while True:
        points.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _round_half_up(v):
    return int(math.floor(v + 0.5))


def motion_blur_kernel(length, theta):
    """Square ``length x length`` kernel holding a line through the centre.

    The line is rasterized with Bresenham between the rounded endpoints at
    half-length either side of the centre, and normalized to sum 1.
    """
    length = int(length)
    if length < 1:
        raise ContractError("kernel length must be >= 1")
    if abs(theta) > 45:
        raise ContractError("kernel angle must lie in [-45, 45] degrees")
    kernel = np.zeros((length, length))
    c = (length - 1) / 2.0
    rad = math.radians(theta)
    sx, sy = c * math.sin(rad), c * math.cos(rad)
    x0, y0 = _round_half_up(c - sx), _round_half_up(c - sy)
    x1, y1 = _round_half_up(c + sx), _round_half_up(c + sy)
    for x, y in bresenham(x0, y0, x1, y1):
        kernel[y, x] = 1.0
    return kernel / kernel.sum()


def width_kernel(width, theta):
    """Normalized Gaussian spread across the streak direction, sigma = width / 3."""
    sigma = width / 3.0
    radius = int(math.ceil(3.0 * sigma))
    rad = math.radians(theta)
    dy, dx = np.mgrid[-radius : radius + 1, -radius : radius + 1].astype(np.float64)
    across = dx * math.cos(rad) - dy * math.sin(rad)
    along = dx * math.sin(rad) + dy * math.cos(rad)
    g = np.exp(-(across**2) / (2.0 * sigma**2)) * np.exp(
        -(along**2) / (2.0 * _WIDTH_KERNEL_PARALLEL_SIGMA**2)
    )
    return g / g.sum()


def streak_kernel(length, theta, width):
    """Motion-blur line widened by :func:`width_kernel` (full convolution, sum 1)."""
    return convolve2d(motion_blur_kernel(length, theta), width_kernel(width, theta), mode="full")


def stamp(points, values, kernel, height, width):
    """Zero-padded convolution of a sparse point set with ``kernel``.

    Kernel anchor is ``(kh // 2, kw // 2)``.  Points are accumulated in the
    order given, so the result is bit-reproducible.
    """
    kh, kw = kernel.shape
    ah, aw = kh // 2, kw // 2
    out = np.zeros((height, width))
    for (r, c), v in zip(points, values):
        top, left = r - ah, c - aw
        r0, c0 = max(top, 0), max(left, 0)
        r1, c1 = min(top + kh, height), min(left + kw, width)
        if r0 >= r1 or c0 >= c1:
            continue
        out[r0:r1, c0:c1] += v * kernel[r0 - top : r1 - top, c0 - left : c1 - left]
    return out


def gen_streak_mask(params, height, width, seed):
    """Rain-streak layer for ``params`` on a ``height x width`` grid.

    The widened kernel is rescaled to unit peak, so an isolated streak from
    a noise value ``v`` peaks near ``transparency * v``.  Overlaps add and
    the result is clamped to [0, 1].
    """
    noise = gen_noise(params.noise_count, height, width, seed)
    rows, cols = np.nonzero(noise)
    if rows.size == 0:
        return RainMask(plane=np.zeros((height, width)), kind="streak")
    kernel = streak_kernel(params.length, params.theta, params.width)
    kernel = kernel / kernel.max()
    layer = stamp(zip(rows.tolist(), cols.tolist()), noise[rows, cols], kernel, height, width)
    plane = np.clip(params.transparency * layer, 0.0, 1.0)
    return RainMask(plane=plane, kind="streak")


def drop_boundary(params, phi, theta_shape):
    """Drop outline radius at azimuth ``phi`` for shape angle ``theta_shape`` (radians).

    Mode ``m`` has amplitude ``params.mode_amplitudes[m - 1]`` and temporal
    profile ``sin(theta_shape)``.
    """
    if sum(abs(a) for a in params.mode_amplitudes) >= 1.0:
        raise ContractError("sum of |mode amplitudes| must be < 1")
    phi = np.asarray(phi, dtype=np.float64)
    pert = np.zeros_like(phi)
    for m, a in enumerate(params.mode_amplitudes, start=1):
        pert = pert + a * np.cos(m * phi)
    return params.base_radius * (1.0 + pert * math.sin(theta_shape))


def _rim_profile(q):
    # dim centre, bright rim: crude stand-in for refraction
    return 0.35 + 0.65 * np.clip(q, 0.0, 1.0) ** 2


def rasterize_drop(params, cy, cx, radius, theta_shape, phase, height, width,
                   supersample=DROP_SUPERSAMPLE):
    """Coverage and shading of a single drop.

    Returns ``((r0, r1, c0, c1), coverage, shade)`` over the part of its
    bounding box inside the image, or None.  Pixel ``(i, j)`` spans
    ``[i, i+1) x [j, j+1)``.
    """
    scaled = replace(params, base_radius=radius)
    reach = radius * (1.0 + sum(abs(a) for a in params.mode_amplitudes))
    r_lo, r_hi = max(int(math.floor(cy - reach)), 0), min(int(math.ceil(cy + reach)), height)
    c_lo, c_hi = max(int(math.floor(cx - reach)), 0), min(int(math.ceil(cx + reach)), width)
    if r_lo >= r_hi or c_lo >= c_hi:
        return None
    offs = (np.arange(supersample) + 0.5) / supersample
    ys = (np.arange(r_lo, r_hi)[:, None] + offs[None, :]).ravel()
    xs = (np.arange(c_lo, c_hi)[:, None] + offs[None, :]).ravel()
    yy, xx = np.meshgrid(ys - cy, xs - cx, indexing="ij")
    dist = np.hypot(yy, xx)
    bound = drop_boundary(scaled, np.arctan2(yy, xx) - phase, theta_shape)
    inside = (dist <= bound).astype(np.float64)
    nr, nc = r_hi - r_lo, c_hi - c_lo
    coverage = inside.reshape(nr, supersample, nc, supersample).mean(axis=(1, 3))
    q = (dist / bound).reshape(nr, supersample, nc, supersample).mean(axis=(1, 3))
    shade = _rim_profile(q)
    return (r_lo, r_hi, c_lo, c_hi), coverage, shade


def gen_drop_mask(params, height, width, seed, *, radius_jitter=DROP_RADIUS_JITTER,
                  centers=None):
    """Raindrop layer ``D`` and binary occlusion mask ``M``.

    Each drop gets a seeded centre (unless ``centers`` is given), a radius
    jitter of ``+-radius_jitter``, a random shape angle and a random rotation.
    ``M`` is 1 where a drop covers more than half of a pixel.
    """
    rng = make_rng(seed)
    plane = np.zeros((height, width))
    binary = np.zeros((height, width))
    for i in range(params.drop_count):
        cy, cx = rng.uniform(0.0, height), rng.uniform(0.0, width)
        if centers is not None:
            cy, cx = centers[i]
        radius = params.base_radius * (1.0 + rng.uniform(-radius_jitter, radius_jitter))
        theta_shape = rng.uniform(0.0, math.pi)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        hit = rasterize_drop(params, cy, cx, radius, theta_shape, phase, height, width)
        if hit is None:
            continue
        (r0, r1, c0, c1), coverage, shade = hit
        layer = params.brightness * shade * coverage
        plane[r0:r1, c0:c1] = np.maximum(plane[r0:r1, c0:c1], layer)
        binary[r0:r1, c0:c1] = np.maximum(binary[r0:r1, c0:c1], coverage > 0.5)
    return RainMask(plane=np.clip(plane, 0.0, 1.0), kind="drop", binary=binary)
