import numpy as np
import pytest
from sklearn.base import clone

from nightrain import (ColorSpaceTransformer, IIGAggregator, IlluminationEstimator,
                       LearnableConverter, RainSynthesizer)

ESTIMATORS = [
    ColorSpaceTransformer("hsv"),
    IlluminationEstimator(0.25, 0.75),
    RainSynthesizer(kind="SD", seed=4, streak_overrides={"length": 25}),
    LearnableConverter(hidden=6, max_iter=3),
    IIGAggregator(window_radius=2, decay_sigma=1.0),
]


@pytest.mark.parametrize("est", ESTIMATORS, ids=lambda e: type(e).__name__)
def test_clone_preserves_params(est):
    twin = clone(est)
    assert twin is not est
    assert twin.get_params() == est.get_params()


@pytest.mark.parametrize("est", ESTIMATORS, ids=lambda e: type(e).__name__)
def test_set_params_roundtrip(est):
    params = est.get_params()
    twin = clone(est).set_params(**params)
    assert twin.get_params() == params


def test_transformers_fit_transform(night_bg):
    plane = night_bg[..., 0]
    assert ColorSpaceTransformer("ycbcr").fit_transform(night_bg).shape == night_bg.shape
    assert IlluminationEstimator().fit_transform(night_bg).shape == plane.shape
    assert IIGAggregator().fit_transform(plane).shape == plane.shape
    rainy = RainSynthesizer(seed=1).fit_transform(night_bg)
    assert rainy.shape == night_bg.shape and not np.array_equal(rainy, night_bg)


def test_converter_fit_reduces_loss(rng):
    x = rng.random((128, 3))
    conv = LearnableConverter(hidden=6, max_iter=200, learning_rate=0.05).fit(x, x[:, ::-1])
    assert len(conv.loss_curve_) == 200
    assert conv.loss_curve_[-1] < conv.loss_curve_[0]
    assert conv.transform(x).shape == x.shape


def test_converter_warm_start(rng):
    x = rng.random((64, 3))
    conv = LearnableConverter(hidden=4, max_iter=5).fit(x, x)
    w = conv.get_weights()
    conv.set_params(warm_start=True, max_iter=1).fit(x, x)
    assert conv.loss_curve_[0] < LearnableConverter(hidden=4, max_iter=1).fit(x, x).loss_curve_[0]
    assert not np.array_equal(conv.get_weights(), w)
