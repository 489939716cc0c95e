"""Input validation helpers shared by every module.

Images are plain numpy arrays: ``(H, W)`` for single-channel planes and
``(H, W, 3)`` for colour images.  ``(H, W, 1)`` is accepted wherever a plane
is expected and squeezed.
"""

import numpy as np


class ContractError(ValueError):
    """An argument violates a documented precondition."""


class ImageDecodeError(OSError):
    """A PNG file could not be decoded into a supported image."""


def check_image(img, *, channels=None, name="image", finite=True):
    """Return ``img`` as a float64 array after shape and value checks.

    Parameters
    ----------
    img : array_like
        Candidate image.
    channels : {None, 1, 3}
        Required channel count.  ``1`` returns a 2-D plane.
    name : str
        Used in error messages.
    finite : bool
        Reject NaN/inf values.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
        raise ContractError(f"{name}: expected (H, W) or (H, W, 3), got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ContractError(f"{name}: empty image")
    n_channels = 1 if arr.ndim == 2 else 3
    if channels is not None and n_channels != channels:
        raise ContractError(f"{name}: expected {channels} channel(s), got {n_channels}")
    if finite and not np.all(np.isfinite(arr)):
        raise ContractError(f"{name}: contains non-finite values")
    return arr


def check_same_shape(a, b, names=("a", "b")):
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {names[0]} {a.shape} vs {names[1]} {b.shape}")


def check_same_hw(a, b, names=("a", "b")):
    if a.shape[:2] != b.shape[:2]:
        raise ContractError(
            f"size mismatch: {names[0]} {a.shape[:2]} vs {names[1]} {b.shape[:2]}"
        )


def n_channels(img):
    return 1 if img.ndim == 2 else img.shape[2]
