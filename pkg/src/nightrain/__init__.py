"""Illumination-aware nighttime rain synthesis and colour-space converter lab."""

from .colorspace import ColorSpaceTransformer, canonical_matrix
from .compositor import RainSynthesizer, SynthesisConfig, synthesize
from .csclab import IIGAggregator, LearnableConverter, train_recover
from .illumination import IlluminationEstimator, ThresholdPair
from .imagecore import load_png, psnr, save_png, ssim
from ._validation import ContractError, ImageDecodeError

__version__ = "0.1.0"

__all__ = [
    "ColorSpaceTransformer",
    "ContractError",
    "IIGAggregator",
    "IlluminationEstimator",
    "ImageDecodeError",
    "LearnableConverter",
    "RainSynthesizer",
    "SynthesisConfig",
    "ThresholdPair",
    "canonical_matrix",
    "load_png",
    "psnr",
    "save_png",
    "ssim",
    "synthesize",
    "train_recover",
]
