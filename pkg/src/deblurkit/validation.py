"""Input validation helpers.

Arrays flow through the toolkit as plain numpy float64: color frames are
(H, W, 3) RGB with values in [0, 1], grayscale working images are (H, W)
and may leave [0, 1] after filtering. The helpers below normalize dtype,
check the documented invariants, and raise the package's error types so
callers never see raw numpy exceptions for contract violations.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, InputError, ParameterError

#: Tolerance for "this kernel sums to one" checks on point-spread functions.
PSF_SUM_TOL = 1e-9


def check_gray(img, name: str = "image") -> np.ndarray:
    """Validate a grayscale working image: 2-D, finite, float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be at least 1x1, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InputError(f"{name} contains NaN or Inf values")
    return arr


def check_frame(frame, name: str = "frame") -> np.ndarray:
    """Validate a color frame: (H, W, 3), finite, values in [0, 1]."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be at least 1x1, got shape {arr.shape[:2]}")
    if not np.isfinite(arr).all():
        raise InputError(f"{name} contains NaN or Inf values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InputError(
            f"{name} values must lie in [0, 1], got range "
            f"[{arr.min():.6g}, {arr.max():.6g}]"
        )
    return arr


def check_kernel(kernel, name: str = "kernel") -> np.ndarray:
    """Validate a filter kernel: 2-D, nonempty, finite."""
    arr = np.asarray(kernel, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"{name} must be a nonempty 2-D array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ParameterError(f"{name} contains NaN or Inf weights")
    return arr


def check_psf(kernel, name: str = "psf") -> np.ndarray:
    """Validate a point-spread function: a kernel whose weights sum to 1."""
    arr = check_kernel(kernel, name)
    total = float(arr.sum())
    if abs(total - 1.0) > PSF_SUM_TOL:
        raise ParameterError(f"{name} must sum to 1 within {PSF_SUM_TOL:g}, got {total!r}")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    """Raise InputError unless the two arrays share a shape."""
    if a.shape != b.shape:
        raise InputError(f"{what} must share dimensions, got {a.shape} vs {b.shape}")
