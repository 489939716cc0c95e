import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from nightrain import colorspace, csclab, imagecore
from nightrain._validation import ContractError

W = colorspace.canonical_matrix()


def bypass_at_w():
    return csclab.LearnableConverter(bypass=True).initialize(phi=W)


def random_batch(seed, n=64):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 3))
    return x, rng.normal(size=(n, 3))


def test_bypass_matrix_is_phi():
    assert np.array_equal(csclab.effective_matrix(bypass_at_w()), W)


def test_zero_output_layer_gives_zero_matrix():
    conv = csclab.LearnableConverter(hidden=8).initialize()
    conv.W2_[:] = 0.0
    conv.b2_[:] = 0.0
    assert np.array_equal(conv.effective_matrix(), np.zeros((3, 3)))


def test_effective_matrix_deterministic():
    a = csclab.LearnableConverter(hidden=8, random_state=4).initialize()
    b = csclab.LearnableConverter(hidden=8, random_state=4).initialize()
    assert np.array_equal(a.effective_matrix(), b.effective_matrix())


def test_non_finite_weights_rejected():
    conv = csclab.LearnableConverter(hidden=4).initialize()
    conv.b2_[0] = np.nan
    with pytest.raises(ContractError):
        conv.effective_matrix()
    with pytest.raises(ContractError):
        csclab.LearnableConverter().effective_matrix()


def test_convert_examples(rng):
    conv = bypass_at_w()
    np.testing.assert_allclose(csclab.convert(np.ones((1, 1, 3)), conv)[0, 0], [1, 0, 0],
                               atol=1e-15)
    mlp = csclab.LearnableConverter(hidden=8).initialize()
    img = rng.random((4, 5, 3))
    np.testing.assert_array_equal(csclab.convert(img, mlp),
                                  colorspace.apply_matrix(img, mlp.effective_matrix()))


@settings(max_examples=25)
@given(arrays(np.float64, (3, 3, 3), elements=st.floats(0, 1)), st.floats(-2, 2))
def test_convert_linear(img, alpha):
    conv = csclab.LearnableConverter(hidden=6, random_state=1).initialize()
    np.testing.assert_allclose(csclab.convert(alpha * img, conv),
                               alpha * csclab.convert(img, conv), atol=1e-6)


@pytest.mark.parametrize("loss", csclab.DIFFERENTIABLE_LOSSES)
@pytest.mark.parametrize("bypass", [False, True])
@pytest.mark.parametrize("seed", range(4))
def test_gradient_matches_finite_differences(loss, bypass, seed):
    conv = csclab.LearnableConverter(hidden=8, bypass=bypass, random_state=seed).initialize()
    batch = random_batch(100 + seed)
    analytic = csclab.gradient(conv, batch, loss)
    numeric = csclab.finite_diff_gradient(conv, batch, loss)
    assert csclab.max_relative_error(analytic, numeric) < 1e-4


def test_finite_diff_restores_weights():
    conv = csclab.LearnableConverter(hidden=4).initialize()
    w = conv.get_weights()
    csclab.finite_diff_gradient(conv, random_batch(0), "mse")
    assert np.array_equal(conv.get_weights(), w)


def test_gradient_vanishes_at_solution():
    x = np.random.default_rng(0).random((50, 3))
    g = csclab.gradient(bypass_at_w(), (x, x @ W.T))
    assert np.linalg.norm(g) < 1e-8


def test_duplicated_batch_same_gradient():
    conv = csclab.LearnableConverter(hidden=8).initialize()
    x, y = random_batch(3)
    g1 = csclab.gradient(conv, (x, y))
    g2 = csclab.gradient(conv, (np.concatenate([x, x]), np.concatenate([y, y])))
    np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)


def test_unknown_loss_has_no_gradient():
    with pytest.raises(ContractError):
        csclab.gradient(bypass_at_w(), random_batch(0), "ssim")


def test_central_difference_toy():
    assert csclab.central_difference(lambda w: float(w[0] ** 2), 3.0)[0] == \
        pytest.approx(6.0, abs=1e-6)
    with pytest.raises(ContractError):
        csclab.central_difference(lambda w: 0.0, 1.0, step=0.0)
    with pytest.raises(ContractError):
        csclab.finite_diff_gradient(bypass_at_w(), random_batch(0), step=0.0)


def test_max_relative_error():
    assert csclab.max_relative_error([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert csclab.max_relative_error([2.0], [1.0]) == pytest.approx(0.5)


def test_train_from_solution():
    _, mse = csclab.train_recover(seed=1, epochs=5, converter=bypass_at_w())
    assert mse < 1e-12


def test_train_short_run_deterministic():
    a, mse_a = csclab.train_recover(seed=2, epochs=50, hidden=8, n_samples=256, n_holdout=64)
    b, mse_b = csclab.train_recover(seed=2, epochs=50, hidden=8, n_samples=256, n_holdout=64)
    assert a.loss_curve_ == b.loss_curve_
    assert mse_a == mse_b
    assert a.loss_curve_[-1] < a.loss_curve_[0]


def test_train_contracts():
    with pytest.raises(ContractError):
        csclab.train_recover(epochs=0)
    conv = csclab.LearnableConverter(hidden=4, learning_rate=1e6, max_iter=50)
    x, y = random_batch(0)
    with pytest.raises(csclab.TrainingError):
        conv.fit(x, y * 1e3)


def test_weight_file_roundtrip(tmp_path):
    conv = csclab.LearnableConverter(hidden=5, random_state=9).initialize()
    path = tmp_path / "w.txt"
    csclab.save_converter(conv, path)
    text = path.read_text().splitlines()
    assert text[0] == csclab.MAGIC and text[1] == "hidden 5"
    back = csclab.load_converter(path)
    assert np.array_equal(back.get_weights(), conv.get_weights())
    assert np.array_equal(back.effective_matrix(), conv.effective_matrix())


def test_weight_file_rejects_junk(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("hello\n")
    with pytest.raises(ContractError):
        csclab.load_converter(path)
    path.write_text(f"{csclab.MAGIC}\nhidden 1\nbypass 1\ncount 9\n1.0\n")
    with pytest.raises(ContractError):
        csclab.load_converter(path)


def test_mse_examples():
    a = np.full((4, 4), 0.3)
    assert csclab.loss_mse(a, a) == 0.0
    assert csclab.loss_mse(a, a + 0.1) == pytest.approx(0.01)
    b = np.random.default_rng(0).random((4, 4))
    assert csclab.loss_mse(a, b) == csclab.loss_mse(b, a)


@given(st.floats(0, 1))
def test_charbonnier_closed_form(d):
    a = np.zeros((3, 3))
    assert csclab.loss_charbonnier(a, a + d) == pytest.approx(math.sqrt(d * d + 1e-6), rel=1e-12)
    assert csclab.loss_charbonnier(a, a + d) >= 1e-3


def test_ssim_loss(rng):
    a = rng.random((16, 16, 3))
    b = rng.random((16, 16, 3))
    assert csclab.loss_ssim(a, a) == 0.0
    assert csclab.loss_ssim(a, b) == 1.0 - imagecore.ssim(a, b)
    assert 0.0 <= csclab.loss_ssim(a, b) <= 2.0


def test_edge_loss(rng):
    gt = rng.random((10, 10, 3))
    o = rng.random((10, 10, 3))
    assert csclab.loss_edge(gt, gt) == 0.0
    assert csclab.loss_edge(o, np.full((10, 10, 3), 0.4)) == 0.0
    doubled = gt + 2 * (o - gt)
    assert csclab.loss_edge(doubled, gt) == pytest.approx(2 * csclab.loss_edge(o, gt), rel=1e-12)


def test_edge_map_scaled_to_unit_peak(rng):
    e = csclab.edge_map(rng.random((8, 8)))
    assert e.max() == 1.0 and e.min() >= 0.0


def test_loss_total_floor(rng):
    img = rng.random((16, 16, 3))
    y = rng.random((16, 16))
    assert csclab.loss_total(img, img, y, y) == pytest.approx(1e-3, abs=1e-12)
    assert csclab.LossWeights().alpha == 0.5


def test_loss_total_alpha_zero_drops_edge(rng):
    o, gt = rng.random((16, 16, 3)), rng.random((16, 16, 3))
    y = rng.random((16, 16))
    no_edge = csclab.loss_total(o, gt, y, y, csclab.LossWeights(alpha=0.0))
    expected = csclab.loss_ssim(o, gt) + csclab.loss_charbonnier(o, gt)
    assert no_edge == pytest.approx(expected, abs=1e-15)


def test_iig_examples():
    np.testing.assert_allclose(csclab.iig_aggregate(np.full((7, 9), 0.3)), 0.3, atol=1e-15)
    plane = np.random.default_rng(0).random((6, 6))
    assert np.array_equal(csclab.iig_aggregate(plane, window_radius=0), plane)
    impulse = np.zeros((5, 5))
    impulse[2, 2] = 1.0
    out = csclab.iig_aggregate(impulse, window_radius=1, decay_sigma=math.inf)
    expected = np.zeros((5, 5))
    expected[1:4, 1:4] = 1 / 9
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_iig_contract():
    with pytest.raises(ContractError):
        csclab.iig_aggregate(np.zeros((3, 3)), window_radius=-1)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)),
              elements=st.floats(0, 1)),
       st.integers(0, 3), st.floats(0.3, 5))
def test_iig_convex_combination(plane, radius, sigma):
    out = csclab.iig_aggregate(plane, radius, sigma)
    lo = ndimage.minimum_filter(plane, size=2 * radius + 1, mode="nearest")
    hi = ndimage.maximum_filter(plane, size=2 * radius + 1, mode="nearest")
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_weights_sum_to_one():
    w = csclab.aggregation_weights(3, 1.5)
    assert w.min() >= 0 and w.sum() == pytest.approx(1.0, abs=1e-15)
