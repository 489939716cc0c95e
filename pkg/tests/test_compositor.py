from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nightrain import compositor as cp
from nightrain import illumination, rainmask
from nightrain._seeding import derive_seed
from nightrain._validation import ContractError

NO_STREAKS = {"noise_count": 0}
NO_DROPS = {"drop_count": 0}


def test_blend_examples():
    mask = np.full((4, 4), 0.6)
    assert not cp.blend_illumination(mask, np.zeros((4, 4))).any()
    np.testing.assert_array_equal(cp.blend_illumination(mask, np.ones((4, 4))), mask)
    assert cp.blend_illumination(mask, np.full((4, 4), 0.5))[0, 0] == pytest.approx(0.3)


def test_blend_keeps_mask_type():
    m = rainmask.RainMask(np.full((2, 2), 0.4), "drop", np.ones((2, 2)))
    out = cp.blend_illumination(m, np.full((2, 2), 0.5))
    assert isinstance(out, rainmask.RainMask)
    np.testing.assert_allclose(out.plane, 0.2)
    assert out.binary is m.binary


def test_blend_shape_mismatch():
    with pytest.raises(ContractError):
        cp.blend_illumination(np.zeros((4, 4)), np.zeros((4, 5)))


def test_conv_merge_single_pixel():
    bg = np.full((5, 5, 3), 0.5)
    rain = np.zeros((5, 5))
    rain[2, 2] = 0.16
    gain = cp.conv_merge(bg, rain)[..., 0] - 0.5
    # hand convolution with [[1,2,1],[2,4,2],[1,2,1]] / 16
    expected = np.zeros((5, 5))
    expected[1:4, 1:4] = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]]) * 0.01
    np.testing.assert_allclose(gain, expected, atol=1e-15)
    assert np.all(cp.conv_merge(bg, rain)[..., 0] == cp.conv_merge(bg, rain)[..., 2])


def test_merge_clamps():
    assert np.all(cp.conv_merge(np.full((4, 4, 3), 0.95), np.full((4, 4), 0.3))[1:3, 1:3] == 1.0)
    out = cp.linear_merge(np.full((2, 2, 3), 0.9), np.full((2, 2), 0.3))
    assert np.all(out == 1.0)
    np.testing.assert_allclose(cp.linear_merge(np.full((2, 2, 3), 0.5), np.full((2, 2), 0.3)), 0.8)


@pytest.mark.parametrize("mode", cp.MERGE_MODES)
def test_zero_rain_is_identity(mode, night_bg):
    out = cp.merge(night_bg, np.zeros(night_bg.shape[:2]), mode)
    assert np.array_equal(out, night_bg)


def test_merge_unknown_mode():
    with pytest.raises(ContractError):
        cp.merge(np.zeros((2, 2, 3)), np.zeros((2, 2)), "screen")


def test_disk_kernel_radius_two():
    k = cp.disk_kernel(2)
    # integer offsets with x^2 + y^2 <= 4: 1 + 4 + 4 + 4 = 13
    assert np.count_nonzero(k) == 13
    np.testing.assert_allclose(k[k > 0], 1 / 13)


def test_defocus_impulse():
    img = np.zeros((9, 9))
    img[4, 4] = 1.0
    out = cp.defocus_blur(img, 2)
    np.testing.assert_allclose(out, np.pad(cp.disk_kernel(2), 2), atol=1e-15)


def test_defocus_identity_and_flat(night_bg):
    assert np.array_equal(cp.defocus_blur(night_bg, 0), night_bg)
    np.testing.assert_allclose(cp.defocus_blur(np.full((10, 12, 3), 0.3), 3), 0.3, atol=1e-15)
    with pytest.raises(ContractError):
        cp.defocus_blur(night_bg, -1)


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (6, 7, 3), elements=st.floats(0, 1)), st.integers(0, 4))
def test_defocus_within_range(img, radius):
    out = cp.defocus_blur(img, radius)
    assert out.min() >= img.min() - 1e-12 and out.max() <= img.max() + 1e-12


@pytest.mark.parametrize("kind", cp.KINDS)
@pytest.mark.parametrize("variant", sorted(cp.VARIANTS))
def test_null_rain_identity(kind, variant, night_bg):
    cfg = cp.SynthesisConfig.variant(variant, kind=kind, use_defocus=False, seed=4,
                                     streak_overrides=NO_STREAKS, drop_overrides=NO_DROPS)
    rainy, clean = cp.synthesize(night_bg, cfg)
    assert np.array_equal(rainy, night_bg)
    assert np.array_equal(clean, night_bg)


def test_dark_regions_stay_dark():
    bg = np.zeros((40, 40, 3))
    bg[:, 20:] = 0.5
    bg[0, 39] = 1.0
    illum = illumination.estimate(bg)
    assert np.all(illum[:, :20] == 0)
    rainy, _ = cp.synthesize_streak(bg, cp.SynthesisConfig(seed=1, streak_overrides={"noise_count": 200}))
    # the 3x3 merge kernel spreads rain one pixel into the dark half
    assert np.array_equal(rainy[:, :19], bg[:, :19])
    assert not np.array_equal(rainy, bg)


def test_full_occlusion_gives_black():
    bg = np.full((6, 6, 3), 0.7)
    drop = rainmask.RainMask(np.zeros((6, 6)), "drop", np.ones((6, 6)))
    for mode in cp.MERGE_MODES:
        assert not cp.composite_drop(bg, drop, np.ones((6, 6)), mode, defocus_radius=2).any()


def test_drop_composition_contract(night_bg):
    cfg = cp.SynthesisConfig(kind="RD", seed=9)
    res = cp.synthesize_detailed(night_bg, cfg)
    stage = res.stages[0]
    m = stage["mask"]
    base = (1 - m.binary)[..., None] * cp.defocus_blur(night_bg, cfg.defocus_radius)
    expected = cp.conv_merge(base, m.plane * stage["illumination"])
    np.testing.assert_array_equal(res.rainy, expected)
    assert np.array_equal(res.clean, night_bg)


def test_d1_is_plain_linear_addition(night_bg):
    cfg = cp.SynthesisConfig.variant("D1", seed=2)
    res = cp.synthesize_detailed(night_bg, cfg)
    plane = res.stages[0]["mask"].plane
    np.testing.assert_array_equal(res.rainy, np.clip(night_bg + plane[..., None], 0, 1))


def test_rs_dispatch_and_determinism(night_bg):
    cfg = cp.SynthesisConfig(seed=17)
    a = cp.synthesize(night_bg, cfg)
    b = cp.synthesize_streak(night_bg, cfg)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[0], cp.synthesize(night_bg, cfg)[0])
    assert not np.array_equal(a[0], cp.synthesize(night_bg, replace(cfg, seed=18))[0])


def test_sd_is_composition_of_stages(night_bg):
    cfg = cp.SynthesisConfig(kind="SD", seed=5)
    streaked, _ = cp.synthesize_streak(night_bg, replace(cfg, seed=derive_seed(5, 0)))
    expected, _ = cp.synthesize_drop(streaked, replace(cfg, seed=derive_seed(5, 1)))
    rainy, clean = cp.synthesize(night_bg, cfg)
    assert np.array_equal(rainy, expected)
    assert np.array_equal(clean, night_bg)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(cp.KINDS), st.sampled_from(sorted(cp.VARIANTS)), st.integers(0, 2**40))
def test_outputs_in_range(kind, variant, seed):
    bg = np.random.default_rng(seed % 1000).random((24, 28, 3)) * 0.6
    rainy, _ = cp.synthesize(bg, cp.SynthesisConfig.variant(variant, kind=kind, seed=seed))
    assert rainy.min() >= 0.0 and rainy.max() <= 1.0


def test_config_validation():
    with pytest.raises(ContractError):
        cp.SynthesisConfig(kind="XX")
    with pytest.raises(ContractError):
        cp.SynthesisConfig(merge_mode="screen")
    with pytest.raises(ContractError):
        cp.SynthesisConfig(defocus_radius=-1)
    with pytest.raises(ContractError):
        cp.SynthesisConfig(tau1=0.9, tau2=0.1)
    with pytest.raises(ContractError):
        cp.SynthesisConfig.variant("D9")


def test_synthesizer_stack_seeds(night_bg):
    stack = np.stack([night_bg, night_bg])
    est = cp.RainSynthesizer(seed=3).fit()
    out = est.transform(stack)
    expected = cp.synthesize(night_bg, cp.SynthesisConfig(seed=derive_seed(3, 1)))[0]
    assert np.array_equal(out[1], expected)
    assert not np.array_equal(out[0], out[1])


def test_correlation_measure():
    clean = np.zeros((10, 10, 3))
    plane = np.zeros((10, 10))
    plane[2:8, 2:8] = 1.0
    illum = np.tile(np.linspace(0, 1, 10), (10, 1))
    rainy = clean + (plane * illum)[..., None]
    assert cp.rain_illumination_correlation(rainy, clean, plane, illum) == pytest.approx(1.0)
    assert np.isnan(cp.rain_illumination_correlation(clean, clean, np.zeros((10, 10)), illum))
