"""Composite rain layers onto nighttime backgrounds.

Rain-streak images are ``f[B, S * I]``.  Raindrop images are
``f[(1 - M) * rho(B), D * I]``.  ``I`` is the illumination map, ``rho`` a
disk defocus blur and ``f`` the merge: ``linear`` adds and clamps, ``conv``
smooths the rain layer with a 3x3 binomial kernel first.

The four ablation variants switch these stages on one at a time:

====== ====== ====== ============ =======
name   merge  sigma  rho (drops)
====== ====== ====== ============ =======
D1     linear off    off
D2     conv   off    off
D3     conv   on     off
full   conv   on     on
====== ====== ====== ============ =======
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from . import illumination as illum_mod
from . import rainmask
from ._seeding import derive_seed
from ._validation import ContractError, check_image, check_same_hw

KINDS = ("RS", "RD", "SD")
MERGE_MODES = ("linear", "conv")
DEFAULT_DEFOCUS_RADIUS = 3

_BINOMIAL_3x3 = np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16.0

VARIANTS = {
    "D1": dict(merge_mode="linear", use_illumination=False, use_defocus=False),
    "D2": dict(merge_mode="conv", use_illumination=False, use_defocus=False),
    "D3": dict(merge_mode="conv", use_illumination=True, use_defocus=False),
    "full": dict(merge_mode="conv", use_illumination=True, use_defocus=True),
}


@dataclass(frozen=True)
class SynthesisConfig:
    kind: str = "RS"
    tau1: float = illum_mod.DEFAULT_TAU1
    tau2: float = illum_mod.DEFAULT_TAU2
    merge_mode: str = "conv"
    use_illumination: bool = True
    use_defocus: bool = True
    defocus_radius: int = DEFAULT_DEFOCUS_RADIUS
    seed: int = 0
    streak_overrides: dict = field(default_factory=dict)
    drop_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.merge_mode not in MERGE_MODES:
            raise ContractError(f"merge_mode must be one of {MERGE_MODES}, got {self.merge_mode!r}")
        if self.defocus_radius < 0:
            raise ContractError("defocus_radius must be >= 0")
        self.thresholds  # validates tau1/tau2

    @property
    def thresholds(self):
        return illum_mod.ThresholdPair(self.tau1, self.tau2)

    @classmethod
    def variant(cls, name, **kwargs):
        """Config for one of the ablation variants ``D1``, ``D2``, ``D3``, ``full``."""
        try:
            toggles = VARIANTS[name]
        except KeyError:
            raise ContractError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None
        return cls(**{**toggles, **kwargs})


@dataclass
class SynthesisResult:
    """Everything produced for one background; ``stages`` holds per-stage layers."""

    rainy: np.ndarray
    clean: np.ndarray
    stages: list = field(default_factory=list)

    @property
    def params(self):
        return {s["stage"]: rainmask.params_to_dict(s["params"]) for s in self.stages}


def _rain_plane(rain):
    plane = rain.plane if isinstance(rain, rainmask.RainMask) else rain
    return check_image(plane, channels=1, name="rain")


def blend_illumination(mask, illum):
    """Modulate a rain layer by the illumination map (elementwise product)."""
    plane = _rain_plane(mask)
    coeff = check_image(illum, channels=1, name="illumination")
    check_same_hw(plane, coeff, ("mask", "illumination"))
    out = plane * coeff
    if isinstance(mask, rainmask.RainMask):
        return replace(mask, plane=out)
    return out


def _add_rain(background, plane):
    bg = check_image(background, name="background")
    check_same_hw(bg, plane, ("background", "rain"))
    if bg.ndim == 3:
        plane = plane[:, :, None]
    return np.clip(bg + plane, 0.0, 1.0)


def linear_merge(background, rain):
    """``clamp(B + rain)``, the same rain value added to every channel."""
    return _add_rain(background, _rain_plane(rain))


def conv_merge(background, rain):
    """Smooth the rain layer with the 1-2-1 binomial kernel, then add and clamp.

    Zero padding at the border.  A zero rain layer returns ``background``
    unchanged bit for bit.
    """
    plane = ndimage.convolve(_rain_plane(rain), _BINOMIAL_3x3, mode="constant", cval=0.0)
    return _add_rain(background, plane)


def merge(background, rain, mode):
    if mode == "linear":
        return linear_merge(background, rain)
    if mode == "conv":
        return conv_merge(background, rain)
    raise ContractError(f"unknown merge mode {mode!r}")


def disk_kernel(radius):
    """Normalized disk of integer offsets with ``x**2 + y**2 <= radius**2``."""
    r = int(np.floor(radius))
    y, x = np.mgrid[-r : r + 1, -r : r + 1]
    disk = (x * x + y * y <= radius * radius).astype(np.float64)
    return disk / disk.sum()


def defocus_blur(img, radius):
    """Disk blur of each channel; symmetric padding keeps flat images flat."""
    arr = check_image(img)
    if radius < 0:
        raise ContractError("defocus radius must be >= 0")
    if radius == 0:
        return arr.copy()
    k = disk_kernel(radius)
    if arr.ndim == 2:
        return ndimage.correlate(arr, k, mode="reflect")
    return np.stack(
        [ndimage.correlate(arr[..., c], k, mode="reflect") for c in range(arr.shape[2])], axis=-1
    )


def _illumination_for(background, cfg):
    if cfg.use_illumination:
        return illum_mod.estimate(background, cfg.thresholds)
    return np.ones(background.shape[:2])


def composite_streak(background, streak, illum, merge_mode="conv"):
    return merge(background, blend_illumination(streak, illum), merge_mode)


def composite_drop(background, drop, illum, merge_mode="conv", defocus_radius=0):
    """``f[(1 - M) * rho(B), D * I]`` for a drop mask carrying its binary ``M``."""
    bg = check_image(background, channels=3, name="background")
    occlusion = drop.binary if drop.binary is not None else np.zeros(bg.shape[:2])
    base = defocus_blur(bg, defocus_radius) if defocus_radius > 0 else bg
    base = (1.0 - occlusion)[:, :, None] * base
    return merge(base, blend_illumination(drop, illum), merge_mode)


def _streak_stage(background, cfg):
    h, w = background.shape[:2]
    params = rainmask.sample_params("streak", derive_seed(cfg.seed, "params"))
    params = rainmask.override_params(params, cfg.streak_overrides)
    mask = rainmask.gen_streak_mask(params, h, w, derive_seed(cfg.seed, "mask"))
    illum = _illumination_for(background, cfg)
    rainy = composite_streak(background, mask, illum, cfg.merge_mode)
    return rainy, dict(stage="streak", seed=cfg.seed, params=params, mask=mask, illumination=illum)


def _drop_stage(background, cfg):
    h, w = background.shape[:2]
    params = rainmask.sample_params("drop", derive_seed(cfg.seed, "params"))
    params = rainmask.override_params(params, cfg.drop_overrides)
    mask = rainmask.gen_drop_mask(params, h, w, derive_seed(cfg.seed, "mask"))
    illum = _illumination_for(background, cfg)
    radius = cfg.defocus_radius if cfg.use_defocus else 0
    rainy = composite_drop(background, mask, illum, cfg.merge_mode, radius)
    return rainy, dict(stage="drop", seed=cfg.seed, params=params, mask=mask, illumination=illum)


def synthesize_detailed(background, cfg):
    """Run the configured pipeline and keep the intermediate layers.

    ``SD`` runs the streak stage with seed ``derive_seed(seed, 0)`` and then
    the drop stage on its output with ``derive_seed(seed, 1)``.
    """
    bg = check_image(background, channels=3, name="background")
    if cfg.kind == "RS":
        rainy, info = _streak_stage(bg, cfg)
        return SynthesisResult(rainy=rainy, clean=bg.copy(), stages=[info])
    if cfg.kind == "RD":
        rainy, info = _drop_stage(bg, cfg)
        return SynthesisResult(rainy=rainy, clean=bg.copy(), stages=[info])
    streaked, s_info = _streak_stage(bg, replace(cfg, seed=derive_seed(cfg.seed, 0)))
    rainy, d_info = _drop_stage(streaked, replace(cfg, seed=derive_seed(cfg.seed, 1)))
    return SynthesisResult(rainy=rainy, clean=bg.copy(), stages=[s_info, d_info])


def synthesize_streak(background, cfg):
    """Streak-only pair ``(rainy, clean)``; defocus never applies here."""
    res = synthesize_detailed(background, replace(cfg, kind="RS"))
    return res.rainy, res.clean


def synthesize_drop(background, cfg):
    """Drop-only pair ``(rainy, clean)``; ``clean`` is the sharp background."""
    res = synthesize_detailed(background, replace(cfg, kind="RD"))
    return res.rainy, res.clean


def synthesize(background, cfg):
    res = synthesize_detailed(background, cfg)
    return res.rainy, res.clean


class RainSynthesizer(TransformerMixin, BaseEstimator):
    """Transformer from clean nighttime backgrounds to rainy renderings.

    Parameters mirror :class:`SynthesisConfig`.  A stack ``(N, H, W, 3)`` is
    rendered image by image with seeds ``derive_seed(seed, i)``.
    """

    def __init__(self, kind="RS", tau1=0.2, tau2=0.8, merge_mode="conv",
                 use_illumination=True, use_defocus=True,
                 defocus_radius=DEFAULT_DEFOCUS_RADIUS, seed=0,
                 streak_overrides=None, drop_overrides=None):
        self.kind = kind
        self.tau1 = tau1
        self.tau2 = tau2
        self.merge_mode = merge_mode
        self.use_illumination = use_illumination
        self.use_defocus = use_defocus
        self.defocus_radius = defocus_radius
        self.seed = seed
        self.streak_overrides = streak_overrides
        self.drop_overrides = drop_overrides

    def _config(self, seed=None):
        params = self.get_params()
        params["streak_overrides"] = dict(params["streak_overrides"] or {})
        params["drop_overrides"] = dict(params["drop_overrides"] or {})
        if seed is not None:
            params["seed"] = seed
        return SynthesisConfig(**params)

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        return self

    def transform_pairs(self, X):
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 4:
            return [synthesize(img, self._config(derive_seed(self.seed, i)))
                    for i, img in enumerate(arr)]
        return synthesize(arr, self._config())

    def transform(self, X):
        out = self.transform_pairs(X)
        if isinstance(out, list):
            return np.stack([rainy for rainy, _ in out])
        return out[0]


def rain_illumination_correlation(rainy, clean, rain_plane, illum, presence=0.1):
    """Pearson correlation of rain magnitude with illumination where rain is present.

    Rain magnitude is the channel-mean ``|rainy - clean|``.  Pixels count
    as rainy where ``rain_plane`` (the mask before illumination blending)
    reaches ``presence`` times its maximum.  Returns NaN without rain.
    """
    mag = np.abs(check_image(rainy) - check_image(clean))
    if mag.ndim == 3:
        mag = mag.mean(axis=-1)
    plane = _rain_plane(rain_plane)
    coeff = check_image(illum, channels=1, name="illumination")
    peak = plane.max()
    if peak <= 0:
        return float("nan")
    support = plane >= presence * peak
    a, b = mag[support], coeff[support]
    if a.size < 2 or a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])
