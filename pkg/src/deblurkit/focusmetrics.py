"""Six autofocus sharpness metrics and per-frame feature assembly.

Each metric maps a grayscale image to one nonnegative scalar that shrinks
as the image gets blurrier. ``feature_vector`` runs all six on a color
frame with a shared pooling window and fixed ordering, which is the input
schema of the sharp/blur detector.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DimensionError, InputError
from .imagecore import (
    avg_pool_padded,
    convolve2d,
    laplacian,
    lp_pool,
    sobel_gradient,
    to_grayscale,
)
from .validation import check_gray
from .wavelets import dwt2

FEATURE_NAMES = ("mis3", "gra7", "lap1", "sta3", "dct3", "wav1")
FEATURE_SCHEMA_VERSION = 1
DEFAULT_POOL_SIZE = 11

#: 8x8 zero-sum contrast mask: a 2x2 sign pattern expanded by 4x4 blocks.
DCT3_MASK = np.kron(np.array([[1.0, -1.0], [-1.0, 1.0]]), np.ones((4, 4)))


@dataclass(frozen=True)
class FocusFeatures:
    """The six sharpness scalars for one frame, plus the pooling window."""

    mis3: float
    gra7: float
    lap1: float
    sta3: float
    dct3: float
    wav1: float
    pool_size: int = DEFAULT_POOL_SIZE

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES])


def mis3(img, pool_size: int = DEFAULT_POOL_SIZE) -> float:
    """Neighborhood contrast: sum of |center - neighbor| over 3x3, pooled.

    The contrast map uses reflect padding; it is l1-pooled over
    ``pool_size`` windows and averaged globally.
    """
    arr = check_gray(img)
    if arr.shape[0] < 3 or arr.shape[1] < 3:
        raise DimensionError(f"mis3 needs at least 3x3, got {arr.shape}")
    padded = np.pad(arr, 1, mode="symmetric")
    contrast = np.zeros_like(arr)
    height, width = arr.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            shifted = padded[1 + di:1 + di + height, 1 + dj:1 + dj + width]
            contrast += np.abs(arr - shifted)
    return float(lp_pool(contrast, 1, pool_size).mean())


def gra7(img, pool_size: int = DEFAULT_POOL_SIZE) -> float:
    """Tenengrad variance: pooled squared deviation of Sobel magnitude."""
    grad = sobel_gradient(img)
    deviation = (grad - avg_pool_padded(grad, pool_size)) ** 2
    return float(lp_pool(deviation, 2, pool_size).mean())


def lap1(img, pool_size: int = DEFAULT_POOL_SIZE) -> float:
    """Energy of the Laplacian response, l2-pooled then averaged."""
    response = laplacian(img) ** 2
    return float(lp_pool(response, 2, pool_size).mean())


def sta3(img, pool_size: int = DEFAULT_POOL_SIZE) -> float:
    """Gray-level variance against a local reflect-padded mean."""
    arr = check_gray(img)
    deviation = (arr - avg_pool_padded(arr, pool_size)) ** 2
    return float(lp_pool(deviation, 2, pool_size).mean())


def dct3(img) -> float:
    """Mean absolute response to the 8x8 zero-sum block mask."""
    arr = check_gray(img)
    if arr.shape[0] < 8 or arr.shape[1] < 8:
        raise DimensionError(f"dct3 needs at least 8x8, got {arr.shape}")
    response = convolve2d(arr, DCT3_MASK, padding="reflect")
    return float(np.abs(response).mean())


def wav1(img) -> float:
    """Sum of absolute detail coefficients from two wavelet analyses.

    Takes the level-1 hl and hh bands of the 6-tap Daubechies filter and
    the level-2 lh band of the 10-tap filter; band sizes differ, so the
    aggregate is a plain sum, not a mean.
    """
    arr = check_gray(img)
    level1 = dwt2(arr, "daubechies-6", levels=1)
    level2 = dwt2(arr, "daubechies-10", levels=2)
    return float(
        np.abs(level1.hl).sum() + np.abs(level1.hh).sum() + np.abs(level2.lh).sum()
    )


def feature_vector(frame, pool_size: int = DEFAULT_POOL_SIZE) -> FocusFeatures:
    """Grayscale a frame and compute all six metrics with one pool size."""
    gray = to_grayscale(frame)

    def run(name, metric, *args):
        try:
            return metric(gray, *args)
        except DimensionError as exc:
            raise DimensionError(f"frame too small for {name}: {exc}") from exc

    return FocusFeatures(
        mis3=run("mis3", mis3, pool_size),
        gra7=run("gra7", gra7, pool_size),
        lap1=run("lap1", lap1, pool_size),
        sta3=run("sta3", sta3, pool_size),
        dct3=run("dct3", dct3),
        wav1=run("wav1", wav1),
        pool_size=pool_size,
    )


class FocusFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer: a sequence of RGB frames to an (n, 6) matrix.

    Columns follow FEATURE_NAMES order. ``fit`` is a no-op so the extractor
    slots into sklearn pipelines ahead of the sharp/blur classifier.
    """

    def __init__(self, pool_size: int = DEFAULT_POOL_SIZE):
        self.pool_size = pool_size

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        rows = [feature_vector(frame, self.pool_size).as_array() for frame in X]
        if not rows:
            return np.zeros((0, len(FEATURE_NAMES)))
        return np.vstack(rows)


def write_features_csv(path, features: np.ndarray, labels=None) -> None:
    """Dump an (n, 6) feature matrix, with optional 0/1 labels, as CSV.

    The first line is a schema-version comment; the header fixes the
    column order that readers must see again.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != len(FEATURE_NAMES):
        raise InputError(f"feature matrix must be (n, 6), got {features.shape}")
    if labels is not None and len(labels) != features.shape[0]:
        raise InputError("labels length does not match feature rows")
    with open(path, "w", newline="") as handle:
        handle.write(f"# feature-schema-version: {FEATURE_SCHEMA_VERSION}\n")
        writer = csv.writer(handle)
        header = ["frame_index", *FEATURE_NAMES]
        if labels is not None:
            header.append("label")
        writer.writerow(header)
        for index, row in enumerate(features):
            out = [index, *[repr(float(v)) for v in row]]
            if labels is not None:
                out.append(int(labels[index]))
            writer.writerow(out)


def read_features_csv(path):
    """Read a feature CSV back into (indices, features, labels-or-None).

    Rejects files whose schema version or column order differ from the
    writer's, so silently permuted metric columns cannot slip through.
    """
    with open(path, newline="") as handle:
        first = handle.readline().strip()
        expected = f"# feature-schema-version: {FEATURE_SCHEMA_VERSION}"
        if first != expected:
            raise InputError(
                f"bad or missing feature schema line {first!r}; expected {expected!r}"
            )
        reader = csv.reader(handle)
        header = next(reader, None)
        base = ["frame_index", *FEATURE_NAMES]
        if header is None or (header != base and header != base + ["label"]):
            raise InputError(f"unexpected feature header {header!r}")
        has_labels = header == base + ["label"]
        indices, rows, labels = [], [], []
        for record in reader:
            if not record:
                continue
            indices.append(int(record[0]))
            rows.append([float(v) for v in record[1:7]])
            if has_labels:
                labels.append(int(record[7]))
    features = np.array(rows) if rows else np.zeros((0, len(FEATURE_NAMES)))
    return (
        np.array(indices, dtype=int),
        features,
        np.array(labels, dtype=int) if has_labels else None,
    )
