"""Image primitives: grayscale conversion, 2-D convolution with selectable
boundary handling, sliding-window pooling, gradient operators, and kernel
constructors.

Conventions
-----------
* Grayscale images are float64 (H, W); color frames are float64 (H, W, 3)
  RGB in [0, 1]. Filter outputs are deliberately NOT clamped to [0, 1];
  only frames written to disk are.
* "reflect" boundary means half-sample symmetric extension (the edge pixel
  is repeated: ``c b a | a b c``), i.e. numpy's ``symmetric`` pad mode.
* For even kernel sizes the output grid aligns with a pad of ``k // 2``
  before and ``(k - 1) // 2`` after, which reproduces the usual "same"
  alignment of scipy.signal.convolve2d.

Every function is pure and deterministic; repeated calls on equal inputs
return bit-identical arrays.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import convolve2d as _convolve2d_raw

from .errors import DimensionError, ParameterError
from .validation import check_frame, check_gray, check_kernel

#: BT.601 luma weights used for RGB -> grayscale conversion.
GRAYSCALE_WEIGHTS = np.array([0.299, 0.587, 0.114])

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])

_PAD_MODES = {"reflect": "symmetric", "zero": "constant", "periodic": "wrap"}


def to_grayscale(frame) -> np.ndarray:
    """Convert an RGB frame in [0, 1] to a single luma channel.

    Uses the BT.601 weights 0.299 R + 0.587 G + 0.114 B, so an all-white
    frame maps to exactly 1.0.
    """
    arr = check_frame(frame)
    return arr @ GRAYSCALE_WEIGHTS


def convolve2d(img, kernel, padding: str = "reflect") -> np.ndarray:
    """Discrete 2-D convolution (kernel flipped) with selectable boundary.

    Parameters
    ----------
    img : array_like, 2-D
    kernel : array_like, 2-D
    padding : {"reflect", "zero", "periodic", "valid"}
        "reflect"/"zero"/"periodic" preserve the image size; "valid"
        shrinks it by (kh - 1, kw - 1) and requires the kernel to fit
        inside the image.
    """
    arr = check_gray(img)
    ker = check_kernel(kernel)
    kh, kw = ker.shape
    if padding == "valid":
        if kh > arr.shape[0] or kw > arr.shape[1]:
            raise DimensionError(
                f"kernel {ker.shape} larger than image {arr.shape} with valid padding"
            )
        return _convolve2d_raw(arr, ker, mode="valid")
    if padding not in _PAD_MODES:
        raise ParameterError(f"unknown padding mode {padding!r}")
    padded = np.pad(
        arr,
        ((kh // 2, (kh - 1) // 2), (kw // 2, (kw - 1) // 2)),
        mode=_PAD_MODES[padding],
    )
    return _convolve2d_raw(padded, ker, mode="valid")


def lp_pool(img, p: int, size: int) -> np.ndarray:
    """Sliding-window lp pooling with stride 1 over the valid extent.

    Each output value is ``((1/size**2) * sum(|x| ** p)) ** (1/p)`` over a
    ``size x size`` window. Output shape shrinks by (size - 1) per axis.
    """
    arr = check_gray(img)
    if p not in (1, 2):
        raise ParameterError(f"pooling exponent must be 1 or 2, got {p!r}")
    size = _checked_window(size, arr, bounded=True)
    powered = np.abs(arr) ** p
    windows = sliding_window_view(powered, (size, size))
    pooled = windows.mean(axis=(-2, -1))
    if p == 1:
        return pooled
    return np.sqrt(pooled)


def avg_pool_padded(img, size: int) -> np.ndarray:
    """Sliding mean with reflect padding; output size equals input size."""
    arr = check_gray(img)
    size = _checked_window(size, arr, bounded=False)
    box = np.full((size, size), 1.0 / (size * size))
    return convolve2d(arr, box, padding="reflect")


def sobel_gradient(img) -> np.ndarray:
    """Gradient magnitude sqrt(Gx**2 + Gy**2) from the 3x3 Sobel pair.

    Reflect padding keeps the output the same size as the input. Requires
    an image of at least 3x3.
    """
    arr = _at_least(img, 3, "sobel_gradient")
    gx = convolve2d(arr, SOBEL_X, padding="reflect")
    gy = convolve2d(arr, SOBEL_Y, padding="reflect")
    return np.hypot(gx, gy)


def laplacian(img) -> np.ndarray:
    """3x3 Laplacian response with reflect padding, same-size output."""
    arr = _at_least(img, 3, "laplacian")
    return convolve2d(arr, LAPLACIAN_KERNEL, padding="reflect")


def box_kernel(size: int) -> np.ndarray:
    """Uniform size x size kernel normalized to sum 1."""
    if not isinstance(size, (int, np.integer)) or size < 1:
        raise ParameterError(f"box kernel size must be a positive int, got {size!r}")
    return np.full((size, size), 1.0 / (size * size))


def gaussian_psf(size: int, sigma: float) -> np.ndarray:
    """Sampled isotropic Gaussian kernel normalized to sum exactly 1.

    Parameters
    ----------
    size : odd positive int, side length
    sigma : positive width in pixels

    Normalization is finished with a correction on the center weight,
    measured through the same convolution reduction used by convolve2d,
    so filtering a flat image leaves it exactly flat. Without it the
    float sum lands a few ulp away from 1 and constants drift.
    """
    if not isinstance(size, (int, np.integer)) or size < 1 or size % 2 == 0:
        raise ParameterError(f"psf size must be a positive odd int, got {size!r}")
    if not np.isfinite(sigma) or sigma <= 0:
        raise ParameterError(f"psf sigma must be positive, got {sigma!r}")
    half = size // 2
    coords = np.arange(size, dtype=np.float64) - half
    sq = coords[:, None] ** 2 + coords[None, :] ** 2
    weights = np.exp(-sq / (2.0 * float(sigma) ** 2))
    weights /= weights.sum()
    ones = np.ones((size, size))
    for _ in range(4):
        residual = 1.0 - float(_convolve2d_raw(ones, weights, mode="valid")[0, 0])
        if residual == 0.0:
            break
        weights[half, half] += residual
    return weights


def _checked_window(size, arr: np.ndarray, bounded: bool) -> int:
    if not isinstance(size, (int, np.integer)) or size < 1:
        raise ParameterError(f"window size must be a positive int, got {size!r}")
    if bounded and size > min(arr.shape):
        raise DimensionError(
            f"window size {size} larger than image {arr.shape}"
        )
    return int(size)


def _at_least(img, minimum: int, op: str) -> np.ndarray:
    arr = check_gray(img)
    if arr.shape[0] < minimum or arr.shape[1] < minimum:
        raise DimensionError(
            f"{op} needs at least {minimum}x{minimum}, got {arr.shape}"
        )
    return arr
