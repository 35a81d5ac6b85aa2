"""Shared fixtures: texture corpus, frame builders, lazy video sources."""

from __future__ import annotations

import numpy as np
import pytest

from deblurkit.imagecore import convolve2d, gaussian_psf


def make_texture_corpus(n: int = 20, size: int = 32) -> list[np.ndarray]:
    """Twenty textured grayscale images: noise, smoothed noise, waves, blocks."""
    images = []
    rng = np.random.default_rng(2024)
    for i in range(n):
        kind = i % 4
        if kind == 0:
            img = rng.random((size, size))
        elif kind == 1:
            img = convolve2d(
                rng.random((size, size)), gaussian_psf(5, 0.8), padding="reflect"
            )
        elif kind == 2:
            freq = rng.integers(2, 6)
            yy, xx = np.mgrid[0:size, 0:size]
            img = 0.5 + 0.45 * np.sin(2 * np.pi * freq * xx / size) * np.cos(
                2 * np.pi * freq * yy / size
            )
        else:
            img = np.kron(
                rng.random((size // 4, size // 4)), np.ones((4, 4))
            )
        images.append(np.clip(img, 0.0, 1.0))
    return images


@pytest.fixture(scope="session")
def texture_corpus() -> list[np.ndarray]:
    return make_texture_corpus()


def gray_to_frame(gray: np.ndarray) -> np.ndarray:
    """Replicate a grayscale image into an RGB frame."""
    return np.stack([gray, gray, gray], axis=2)


class RolledTextureSource:
    """Lazy high-frame-rate clip: a base texture translating one pixel/frame.

    Only the frames a consumer indexes are materialized, which keeps long
    synthetic sources cheap.
    """

    def __init__(self, base_gray: np.ndarray, length: int):
        self._base = np.clip(np.asarray(base_gray, dtype=np.float64), 0.0, 1.0)
        self._length = int(length)

    def __len__(self) -> int:
        return self._length

    def __getitem__(self, index: int) -> np.ndarray:
        if not 0 <= index < self._length:
            raise IndexError(index)
        rolled = np.roll(self._base, -index, axis=1)
        return np.stack([rolled, rolled, rolled], axis=2)


def smooth_texture(rng: np.random.Generator, shape=(64, 64), sigma: float = 2.0):
    """A normalized smooth random texture in [0.15, 0.85]."""
    raw = convolve2d(rng.random(shape), gaussian_psf(9, sigma), padding="periodic")
    span = raw.max() - raw.min()
    return (raw - raw.min()) / span * 0.7 + 0.15


def make_deconvolution_corpus() -> dict[str, np.ndarray]:
    """Five smooth structured 64x64 images for deconvolution tests.

    Band-limited content (smoothed noise, a soft disk, sinusoid weaves,
    smoothed blocks) is what multiplicative deconvolution recovers well;
    each entry regains several dB after a Gaussian blur, with comfortable
    margin over the 2 dB floor the tests assert.
    """
    rng = np.random.default_rng(2025)
    size = 64

    def normalized(img, lo=0.1, hi=0.9):
        img = img - img.min()
        peak = img.max()
        if peak > 0:
            img = img / peak
        return lo + (hi - lo) * img

    corpus = {}
    corpus["smooth_noise"] = normalized(
        convolve2d(rng.random((size, size)), gaussian_psf(9, 1.2), padding="reflect")
    )
    yy, xx = np.mgrid[0:size, 0:size]
    disk = ((yy - 32) ** 2 + (xx - 32) ** 2 <= 18**2).astype(float)
    corpus["soft_disk"] = normalized(
        convolve2d(disk, gaussian_psf(9, 1.5), padding="reflect")
    )
    t = np.arange(size)
    corpus["sine_weave"] = normalized(
        np.outer(np.sin(2 * np.pi * 3 * t / size), np.cos(2 * np.pi * 2 * t / size))
        + 0.5 * np.outer(np.cos(2 * np.pi * 5 * t / size), np.sin(2 * np.pi * 4 * t / size))
    )
    blocks = np.kron(rng.random((8, 8)), np.ones((8, 8)))
    corpus["soft_blocks"] = normalized(
        convolve2d(blocks, gaussian_psf(9, 1.5), padding="reflect")
    )
    corpus["broad_noise"] = normalized(
        convolve2d(rng.random((size, size)), gaussian_psf(13, 2.0), padding="reflect")
    )
    return corpus


@pytest.fixture(scope="session")
def deconvolution_corpus() -> dict[str, np.ndarray]:
    return make_deconvolution_corpus()
