"""Learnable colour-space converter, training losses and local aggregation.

The converter maps a 3x3 parameter matrix ``phi`` through a small MLP
(9 -> hidden -> 9, tanh) and uses the reshaped output as a per-pixel linear
transform.  In ``bypass`` mode the MLP is skipped and ``phi`` is the matrix
itself, which embeds the fixed YCbCr transform exactly.

Gradients are computed analytically for the MSE and Charbonnier paths and
can be cross-checked against :func:`finite_diff_gradient`.
"""

from dataclasses import dataclass
import os

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from . import colorspace, imagecore
from ._seeding import derive_seed, make_rng
from ._validation import ContractError, check_image, check_same_shape

DEFAULT_HIDDEN = 32
DEFAULT_LR = 1e-2
DEFAULT_EPOCHS = 5000
DEFAULT_SAMPLES = 4096
DEFAULT_HOLDOUT = 1024
FD_STEP = 1e-5
MAGIC = "NIGHTRAIN-CSC 1"
DIFFERENTIABLE_LOSSES = ("mse", "charbonnier")


class TrainingError(RuntimeError):
    """Gradient descent produced a non-finite loss."""


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.5
    epsilon: float = 1e-3


class LearnableConverter(TransformerMixin, BaseEstimator):
    """Colour converter whose 3x3 matrix is ``MLP(phi)``.

    Parameters
    ----------
    hidden : int
        Width of the hidden layer.
    bypass : bool
        Use ``phi`` directly as the matrix (no MLP parameters).
    learning_rate : float
        Step size of full-batch gradient descent in :meth:`fit`.
    max_iter : int
        Number of gradient-descent steps.
    loss : {"mse", "charbonnier"}
        Training objective on the per-pixel outputs.
    random_state : int
        Seed for weight initialization.
    warm_start : bool
        Continue from the current weights instead of re-initializing.

    Attributes
    ----------
    phi_, W1_, b1_, W2_, b2_ : ndarray
        Weights (the MLP ones are absent in bypass mode).
    loss_curve_ : list of float
        Training loss before each step.
    """

    def __init__(self, hidden=DEFAULT_HIDDEN, bypass=False, learning_rate=DEFAULT_LR,
                 max_iter=DEFAULT_EPOCHS, loss="mse", random_state=0, warm_start=False):
        self.hidden = hidden
        self.bypass = bypass
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.loss = loss
        self.random_state = random_state
        self.warm_start = warm_start

    # weights ---------------------------------------------------------------

    def initialize(self, phi=None):
        """Draw fresh weights; ``phi`` overrides the drawn parameter matrix."""
        rng = make_rng(self.random_state)
        self.phi_ = rng.normal(0.0, 0.5, size=9)
        if phi is not None:
            self.phi_ = np.asarray(phi, dtype=np.float64).reshape(9).copy()
        if not self.bypass:
            h = self.hidden
            self.W1_ = rng.normal(0.0, 1.0 / 3.0, size=(h, 9))
            self.b1_ = np.zeros(h)
            self.W2_ = rng.normal(0.0, 1.0 / np.sqrt(h), size=(9, h))
            self.b2_ = np.zeros(9)
        self.loss_curve_ = []
        return self

    def _shapes(self):
        if self.bypass:
            return [("phi_", (9,))]
        h = self.hidden
        return [("phi_", (9,)), ("W1_", (h, 9)), ("b1_", (h,)), ("W2_", (9, h)), ("b2_", (9,))]

    @property
    def n_weights(self):
        return sum(int(np.prod(s)) for _, s in self._shapes())

    def get_weights(self):
        self._check_initialized()
        return np.concatenate([getattr(self, name).ravel() for name, _ in self._shapes()])

    def set_weights(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_weights,):
            raise ContractError(f"expected {self.n_weights} weights, got {vec.shape}")
        pos = 0
        for name, shape in self._shapes():
            size = int(np.prod(shape))
            setattr(self, name, vec[pos : pos + size].reshape(shape).copy())
            pos += size
        return self

    def _check_initialized(self):
        if not hasattr(self, "phi_"):
            raise ContractError("converter has no weights; call initialize() or fit()")

    # forward / backward ----------------------------------------------------

    def _forward(self):
        self._check_initialized()
        if self.bypass:
            return self.phi_.copy(), None
        a = np.tanh(self.W1_ @ self.phi_ + self.b1_)
        return self.W2_ @ a + self.b2_, a

    def effective_matrix(self):
        m, _ = self._forward()
        if not np.all(np.isfinite(m)):
            raise ContractError("converter weights produce a non-finite matrix")
        return m.reshape(3, 3)

    def _backward(self, grad_m, a):
        if self.bypass:
            return grad_m.copy()
        g_W2 = np.outer(grad_m, a)
        g_z = (self.W2_.T @ grad_m) * (1.0 - a * a)
        g_W1 = np.outer(g_z, self.phi_)
        g_phi = self.W1_.T @ g_z
        return np.concatenate([g_phi, g_W1.ravel(), g_z, g_W2.ravel(), grad_m])

    def loss_and_gradient(self, X, Y, loss="mse", epsilon=LossWeights.epsilon):
        """Batch loss and its gradient with respect to :meth:`get_weights`."""
        X, Y = _pixels(X), _pixels(Y)
        check_same_shape(X, Y, ("inputs", "targets"))
        m, a = self._forward()
        resid = X @ m.reshape(3, 3).T - Y
        count = resid.size
        if loss == "mse":
            value = float(np.mean(resid**2))
            g_out = 2.0 * resid / count
        elif loss == "charbonnier":
            root = np.sqrt(resid**2 + epsilon**2)
            value = float(np.mean(root))
            g_out = resid / root / count
        else:
            raise ContractError(
                f"loss {loss!r} has no analytic gradient; use one of {DIFFERENTIABLE_LOSSES}"
            )
        grad_m = (g_out.T @ X).ravel()
        return value, self._backward(grad_m, a)

    # estimator API ---------------------------------------------------------

    def fit(self, X, y):
        """Full-batch gradient descent from RGB pixels ``X`` to targets ``y``."""
        if self.max_iter < 1:
            raise ContractError("max_iter must be >= 1")
        if not (self.warm_start and hasattr(self, "phi_")):
            self.initialize()
        self.loss_curve_ = []
        w = self.get_weights()
        for _ in range(self.max_iter):
            with np.errstate(over="ignore", invalid="ignore"):
                value, grad = self.loss_and_gradient(X, y, self.loss)
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                raise TrainingError(f"loss diverged at step {len(self.loss_curve_)}")
            self.loss_curve_.append(value)
            w = w - self.learning_rate * grad
            self.set_weights(w)
        return self

    def transform(self, X):
        return convert(X, self)


def _pixels(arr):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ContractError(f"expected trailing channel axis of size 3, got {arr.shape}")
    return arr.reshape(-1, 3)


def effective_matrix(converter):
    return converter.effective_matrix()


def convert(img, converter):
    """Apply the converter's effective matrix to every pixel (signed output)."""
    return colorspace.apply_matrix(img, converter.effective_matrix())


def gradient(converter, batch, loss="mse", epsilon=LossWeights.epsilon):
    X, Y = batch
    return converter.loss_and_gradient(X, Y, loss, epsilon)[1]


def batch_loss(converter, batch, loss="mse", epsilon=LossWeights.epsilon):
    X, Y = batch
    return converter.loss_and_gradient(X, Y, loss, epsilon)[0]


def central_difference(func, x, step=FD_STEP):
    """Central-difference gradient of scalar ``func`` at ``x`` (scalar or vector)."""
    if step <= 0:
        raise ContractError("finite-difference step must be > 0")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    grad = np.empty_like(x)
    for i in range(x.size):
        up = x.copy()
        down = x.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (func(up) - func(down)) / (2.0 * step)
    return grad


def finite_diff_gradient(converter, batch, loss="mse", step=FD_STEP,
                         epsilon=LossWeights.epsilon):
    """Numerical gradient of the batch loss; restores the converter's weights."""
    if step <= 0:
        raise ContractError("finite-difference step must be > 0")
    w0 = converter.get_weights()

    def f(w):
        converter.set_weights(w)
        return batch_loss(converter, batch, loss, epsilon)

    try:
        return central_difference(f, w0, step)
    finally:
        converter.set_weights(w0)


def max_relative_error(analytic, numeric, floor=1e-6):
    """``max |a - n| / max(|a|, |n|, floor)`` over all entries."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))


def recovery_data(seed, n_samples=DEFAULT_SAMPLES, n_holdout=DEFAULT_HOLDOUT):
    """Uniform random RGB triples and their canonical YCbCr images."""
    rng = make_rng(derive_seed(seed, "data"))
    w = colorspace.canonical_matrix()
    x_train = rng.random((n_samples, 3))
    x_hold = rng.random((n_holdout, 3))
    return (x_train, x_train @ w.T), (x_hold, x_hold @ w.T)


def train_recover(seed=0, epochs=DEFAULT_EPOCHS, lr=DEFAULT_LR, *, hidden=DEFAULT_HIDDEN,
                  n_samples=DEFAULT_SAMPLES, n_holdout=DEFAULT_HOLDOUT, converter=None):
    """Train a converter to reproduce the canonical YCbCr matrix.

    Returns ``(converter, held_out_mse)``.  Passing an initialized
    ``converter`` trains it in place from its current weights.
    """
    if epochs < 1:
        raise ContractError("epochs must be >= 1")
    (x, y), (x_hold, y_hold) = recovery_data(seed, n_samples, n_holdout)
    if converter is None:
        converter = LearnableConverter(hidden=hidden, random_state=derive_seed(seed, "init"))
    else:
        converter.set_params(warm_start=True)
    converter.set_params(learning_rate=lr, max_iter=epochs, loss="mse")
    converter.fit(x, y)
    held_out = float(np.mean((convert(x_hold, converter) - y_hold) ** 2))
    if not np.isfinite(held_out):
        raise TrainingError("held-out loss is not finite")
    return converter, held_out


# weight file format ---------------------------------------------------------

def save_converter(converter, path):
    """Write weights as text: magic line, ``hidden``/``bypass``/``count`` lines, one float per line."""
    w = converter.get_weights()
    lines = [MAGIC, f"hidden {int(converter.hidden)}", f"bypass {int(bool(converter.bypass))}",
             f"count {w.size}"]
    lines += [repr(float(v)) for v in w]
    with open(os.fspath(path), "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_converter(path):
    with open(os.fspath(path), encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise ContractError(f"{path}: not a converter weight file")
    header = {}
    for line in lines[1:4]:
        key, _, value = line.partition(" ")
        header[key] = int(value)
    if set(header) != {"hidden", "bypass", "count"}:
        raise ContractError(f"{path}: malformed header")
    values = np.array([float(v) for v in lines[4:]])
    if values.size != header["count"]:
        raise ContractError(f"{path}: expected {header['count']} values, found {values.size}")
    conv = LearnableConverter(hidden=header["hidden"], bypass=bool(header["bypass"]))
    conv.initialize()
    return conv.set_weights(values)


# losses ----------------------------------------------------------------------

def loss_mse(y_pred, y_gt):
    a = check_image(y_pred, name="y_pred")
    b = check_image(y_gt, name="y_gt")
    check_same_shape(a, b)
    return float(np.mean((b - a) ** 2))


def loss_charbonnier(o, gt, eps=LossWeights.epsilon):
    """Mean of the per-element ``sqrt(d**2 + eps**2)``; never below ``eps``."""
    a = check_image(o, name="o")
    b = check_image(gt, name="gt")
    check_same_shape(a, b)
    return float(np.mean(np.sqrt((a - b) ** 2 + eps**2)))


def loss_ssim(o, gt):
    return 1.0 - imagecore.ssim(o, gt)


def edge_map(gt):
    """|3x3 Laplacian| of ``gt`` per channel, scaled so the maximum is 1."""
    arr = check_image(gt, name="gt")
    if arr.ndim == 2:
        lap = np.abs(ndimage.laplace(arr, mode="nearest"))
    else:
        lap = np.stack(
            [np.abs(ndimage.laplace(arr[..., c], mode="nearest")) for c in range(arr.shape[2])],
            axis=-1,
        )
    peak = lap.max()
    return lap / peak if peak > 0 else np.zeros_like(lap)


def loss_edge(o, gt):
    a = check_image(o, name="o")
    b = check_image(gt, name="gt")
    check_same_shape(a, b)
    return float(np.mean(edge_map(b) * np.abs(b - a)))


def loss_total(o, gt, y_pred, y_gt, weights=LossWeights()):
    return (
        loss_mse(y_pred, y_gt)
        + loss_ssim(o, gt)
        + loss_charbonnier(o, gt, weights.epsilon)
        + weights.alpha * loss_edge(o, gt)
    )


# illumination aggregation ---------------------------------------------------

def aggregation_weights(window_radius, decay_sigma):
    """Gaussian distance weights over a ``(2r+1)**2`` window, summing to 1."""
    if window_radius < 0:
        raise ContractError("window radius must be >= 0")
    if not decay_sigma > 0:
        raise ContractError("decay sigma must be > 0")
    r = int(window_radius)
    y, x = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
    w = np.exp(-(x * x + y * y) / (2.0 * decay_sigma**2))
    return w / w.sum()


def iig_aggregate(plane, window_radius=3, decay_sigma=1.5):
    """Distance-weighted local average of a plane.

    Out-of-image neighbours are dropped and the remaining weights
    renormalized, so the output is a convex combination of each window.
    """
    arr = check_image(plane, channels=1, name="plane")
    w = aggregation_weights(window_radius, decay_sigma)
    if w.shape == (1, 1):
        return arr.copy()
    num = ndimage.correlate(arr, w, mode="constant", cval=0.0)
    den = ndimage.correlate(np.ones_like(arr), w, mode="constant", cval=0.0)
    return num / den


class IIGAggregator(TransformerMixin, BaseEstimator):
    def __init__(self, window_radius=3, decay_sigma=1.5):
        self.window_radius = window_radius
        self.decay_sigma = decay_sigma

    def fit(self, X=None, y=None):
        self.weights_ = aggregation_weights(self.window_radius, self.decay_sigma)
        return self

    def transform(self, X):
        return iig_aggregate(X, self.window_radius, self.decay_sigma)
