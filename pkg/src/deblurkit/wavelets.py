"""Separable 2-D discrete wavelet analysis with 6-tap and 10-tap Daubechies
filters, plus the periodic-mode inverse used by reconstruction tests.

Filter coefficients were computed from the defining spectral factorization
at 60-digit precision and rounded once to float64 (the widely reprinted
tables carry errors around 1e-12, large enough to leak a visible response
on constant images). The decomposition pair is

    lo[j] = h[L - 1 - j]          (reversed scaling filter)
    hi[j] = (-1)**j * h[j]        (quadrature mirror)

and analysis correlates the extended signal with each filter, keeping every
second position (even phase). Sub-band naming is (vertical, horizontal):
``hl`` means highpass along the vertical axis and lowpass along the
horizontal axis, so it responds to horizontal stripes.

Boundary modes:

* ``symmetric`` (default): half-sample symmetric extension by L - 1 on each
  side. Works for any image with both dimensions >= 2, including images
  smaller than the filter. Band sizes are floor((n + L) / 2).
* ``periodic``: circular extension, even sizes only, band sizes n / 2.
  The transform is orthonormal for n >= L, which makes Parseval sums and
  perfect reconstruction exact up to rounding; used by tests.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, ParameterError
from .validation import check_gray

#: Orthonormal Daubechies scaling filters, named by tap count.
DAUBECHIES_6 = np.array([
    0.33267055295008263,
    0.8068915093110925,
    0.45987750211849154,
    -0.13501102001025458,
    -0.08544127388202666,
    0.03522629188570953,
])
DAUBECHIES_10 = np.array([
    0.16010239797419293,
    0.6038292697971896,
    0.7243085284377729,
    0.13842814590132074,
    -0.24229488706638203,
    -0.032244869584638375,
    0.07757149384004572,
    -0.006241490212798274,
    -0.012580751999081999,
    0.0033357252854737712,
])

_SCALING_FILTERS = {
    "daubechies-6": DAUBECHIES_6,
    "daubechies-10": DAUBECHIES_10,
}


class SubBands(NamedTuple):
    """One decomposition level: approximation plus three detail bands."""

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray


def decomposition_filters(wavelet: str) -> tuple[np.ndarray, np.ndarray]:
    """Return the (lowpass, highpass) analysis pair for a wavelet name."""
    if wavelet not in _SCALING_FILTERS:
        raise ParameterError(
            f"unknown wavelet {wavelet!r}; expected one of {sorted(_SCALING_FILTERS)}"
        )
    h = _SCALING_FILTERS[wavelet]
    lo = h[::-1].copy()
    hi = h * np.where(np.arange(h.size) % 2 == 0, 1.0, -1.0)
    return lo, hi


def dwt2(img, wavelet: str, levels: int = 1, mode: str = "symmetric") -> SubBands:
    """Separable 2-D wavelet analysis, returning the requested level's bands.

    Parameters
    ----------
    img : array_like, 2-D
    wavelet : {"daubechies-6", "daubechies-10"}
    levels : 1 or 2; level 2 recurses on the ``ll`` band.
    mode : {"symmetric", "periodic"}

    Raises
    ------
    DimensionError
        If any level's input drops below 2 pixels per axis, or in periodic
        mode if a dimension is odd.
    """
    arr = check_gray(img)
    if levels not in (1, 2):
        raise ParameterError(f"levels must be 1 or 2, got {levels!r}")
    lo, hi = decomposition_filters(wavelet)
    bands = _single_level(arr, lo, hi, mode)
    for _ in range(levels - 1):
        bands = _single_level(bands.ll, lo, hi, mode)
    return bands


def idwt2(bands: SubBands, wavelet: str, size: tuple[int, int]) -> np.ndarray:
    """Invert one periodic-mode analysis level back to a ``size`` image.

    Only the periodic mode is invertible here; it is the adjoint of the
    orthonormal analysis transform, used by reconstruction tests.
    """
    lo, hi = decomposition_filters(wavelet)
    h, w = size
    # Undo the horizontal split first, then the vertical one, mirroring the
    # analysis order (vertical first, horizontal second).
    low_v = _synth_axis1(bands.ll, bands.lh, lo, hi, w)
    high_v = _synth_axis1(bands.hl, bands.hh, lo, hi, w)
    return _synth_pair_axis0(low_v, high_v, lo, hi, h)


def _single_level(arr: np.ndarray, lo: np.ndarray, hi: np.ndarray, mode: str) -> SubBands:
    if mode not in ("symmetric", "periodic"):
        raise ParameterError(f"unknown boundary mode {mode!r}")
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise DimensionError(f"image {arr.shape} too small for wavelet analysis")
    if mode == "periodic" and (arr.shape[0] % 2 or arr.shape[1] % 2):
        raise DimensionError(f"periodic mode needs even dimensions, got {arr.shape}")
    low_v = _analyze_axis0(arr, lo, mode)
    high_v = _analyze_axis0(arr, hi, mode)
    return SubBands(
        ll=_analyze_axis0(low_v.T, lo, mode).T,
        lh=_analyze_axis0(low_v.T, hi, mode).T,
        hl=_analyze_axis0(high_v.T, lo, mode).T,
        hh=_analyze_axis0(high_v.T, hi, mode).T,
    )


def _analyze_axis0(arr: np.ndarray, filt: np.ndarray, mode: str) -> np.ndarray:
    taps = filt.size
    if mode == "symmetric":
        ext = np.pad(arr, ((taps - 1, taps - 1), (0, 0)), mode="symmetric")
    else:
        ext = np.pad(arr, ((0, taps - 1), (0, 0)), mode="wrap")
    windows = sliding_window_view(ext, taps, axis=0)[::2]
    return np.einsum("kwt,t->kw", windows, filt)


def _synth_pair_axis0(low: np.ndarray, high: np.ndarray, lo: np.ndarray,
                      hi: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, low.shape[1]))
    up_lo = np.zeros((n, low.shape[1]))
    up_hi = np.zeros((n, high.shape[1]))
    up_lo[::2] = low
    up_hi[::2] = high
    for j in range(lo.size):
        out += lo[j] * np.roll(up_lo, j, axis=0)
        out += hi[j] * np.roll(up_hi, j, axis=0)
    return out


def _synth_axis1(low: np.ndarray, high: np.ndarray, lo: np.ndarray,
                 hi: np.ndarray, n: int) -> np.ndarray:
    return _synth_pair_axis0(low.T, high.T, lo, hi, n).T
