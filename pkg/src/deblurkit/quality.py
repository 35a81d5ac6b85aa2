"""Restoration quality measurement: PSNR, SSIM, video reports, ratio tables.

PSNR uses a signal peak of 1.0 (frames live in [0, 1]) and reports a perfect
match as positive infinity, which serializes as the string ``"inf"`` so JSON
output stays portable.  SSIM is computed on the luminance channel with an
11x11 Gaussian window (sigma 1.5), stability constants (0.01)^2 and
(0.03)^2, and averaged over window positions fully inside the image.

``evaluate_video`` aggregates the two metrics over a clip.  Frames with
infinite PSNR are left out of the mean and counted separately; when every
frame is perfect the mean itself is reported as infinity.

``ratio_report`` lays out measured sharp-frame ratios as a table of videos
by target ratios with a final row of column averages, the shape used to
check that synthesized datasets hit their requested ratios.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, InputError
from .imagecore import convolve2d, gaussian_psf, to_grayscale
from .synth import BlurVideo, measured_ratio
from .validation import check_same_shape

SSIM_WINDOW_SIZE = 11
SSIM_WINDOW_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; inf when identical."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    check_same_shape(x, y, what="psnr inputs")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("psnr inputs must be finite")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * math.log10(mse)


def _luminance(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        return to_grayscale(arr)
    if arr.ndim == 2:
        return arr
    raise InputError(f"expected a 2-D or (H, W, 3) image, got shape {arr.shape}")


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity of the luminance channels of two images.

    Local means, variances and covariance come from valid-mode convolution
    with the Gaussian window, so only fully supported window positions
    contribute.  Identical inputs score exactly 1.0.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    check_same_shape(x, y, what="ssim inputs")
    lum_x = _luminance(x)
    lum_y = _luminance(y)
    if not (np.all(np.isfinite(lum_x)) and np.all(np.isfinite(lum_y))):
        raise InputError("ssim inputs must be finite")
    if min(lum_x.shape) < SSIM_WINDOW_SIZE:
        raise DimensionError(
            f"ssim needs images of at least {SSIM_WINDOW_SIZE}x"
            f"{SSIM_WINDOW_SIZE}, got {lum_x.shape}"
        )
    window = gaussian_psf(SSIM_WINDOW_SIZE, SSIM_WINDOW_SIGMA)

    def smooth(img: np.ndarray) -> np.ndarray:
        return convolve2d(img, window, padding="valid")

    mu_x = smooth(lum_x)
    mu_y = smooth(lum_y)
    var_x = smooth(lum_x * lum_x) - mu_x * mu_x
    var_y = smooth(lum_y * lum_y) - mu_y * mu_y
    cov = smooth(lum_x * lum_y) - mu_x * mu_y
    numerator = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    denominator = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(numerator / denominator))


@dataclass(frozen=True)
class EvalReport:
    """Per-frame and summary quality numbers for one restored clip."""

    psnr_values: tuple[float, ...]
    ssim_values: tuple[float, ...]
    mean_psnr: float
    mean_ssim: float
    frame_count: int
    infinite_psnr_count: int
    dataset_id: str | None = None
    ratio_target: float | None = None


def evaluate_video(
    restored: Sequence[np.ndarray],
    reference: Sequence[np.ndarray],
    *,
    dataset_id: str | None = None,
    ratio_target: float | None = None,
) -> EvalReport:
    """Score a restored clip against its ground truth frame by frame."""
    if len(restored) != len(reference):
        raise InputError(
            f"restored has {len(restored)} frames, reference has {len(reference)}"
        )
    if not len(restored):
        raise InputError("cannot evaluate an empty clip")
    psnr_values = []
    ssim_values = []
    for i, (y, g) in enumerate(zip(restored, reference)):
        try:
            psnr_values.append(psnr(y, g))
            ssim_values.append(ssim(y, g))
        except InputError as exc:
            raise InputError(f"frame {i}: {exc}") from exc
    finite = [v for v in psnr_values if math.isfinite(v)]
    infinite_count = len(psnr_values) - len(finite)
    mean_psnr = float(np.mean(finite)) if finite else float("inf")
    return EvalReport(
        psnr_values=tuple(psnr_values),
        ssim_values=tuple(ssim_values),
        mean_psnr=mean_psnr,
        mean_ssim=float(np.mean(ssim_values)),
        frame_count=len(psnr_values),
        infinite_psnr_count=infinite_count,
        dataset_id=dataset_id,
        ratio_target=ratio_target,
    )


def _json_safe(value: float) -> float | str:
    return "inf" if math.isinf(value) else float(value)


def _json_restore(value: float | str) -> float:
    return float("inf") if value == "inf" else float(value)


def write_eval_json(path: str | Path, report: EvalReport) -> None:
    """Serialize an EvalReport; infinite PSNR values become the string "inf"."""
    payload = {
        "psnr": [_json_safe(v) for v in report.psnr_values],
        "ssim": [float(v) for v in report.ssim_values],
        "summary": {
            "mean_psnr": _json_safe(report.mean_psnr),
            "mean_ssim": float(report.mean_ssim),
            "frame_count": report.frame_count,
            "infinite_psnr_count": report.infinite_psnr_count,
        },
        "dataset_id": report.dataset_id,
        "ratio_target": report.ratio_target,
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_eval_json(path: str | Path) -> EvalReport:
    """Read a report written by ``write_eval_json``."""
    with open(path) as handle:
        payload = json.load(handle)
    try:
        summary = payload["summary"]
        return EvalReport(
            psnr_values=tuple(_json_restore(v) for v in payload["psnr"]),
            ssim_values=tuple(float(v) for v in payload["ssim"]),
            mean_psnr=_json_restore(summary["mean_psnr"]),
            mean_ssim=float(summary["mean_ssim"]),
            frame_count=int(summary["frame_count"]),
            infinite_psnr_count=int(summary["infinite_psnr_count"]),
            dataset_id=payload.get("dataset_id"),
            ratio_target=payload.get("ratio_target"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not an evaluation report: {exc}") from exc


AVERAGE_ROW_ID = "average"


@dataclass(frozen=True)
class RatioReport:
    """Measured sharp-frame ratios laid out as videos by target ratios.

    ``table[i, j]`` is the measured ratio of video ``video_ids[i]`` at
    target ``targets[j]``, NaN where that combination was not provided.
    ``column_averages[j]`` averages the present entries of column ``j``.
    """

    video_ids: tuple[str, ...]
    targets: tuple[float, ...]
    table: np.ndarray
    column_averages: tuple[float, ...]


def ratio_report(
    datasets: Sequence[tuple[str, float, "BlurVideo | Sequence[bool]"]],
) -> RatioReport:
    """Tabulate measured ratios per video and target with column averages.

    Each entry is (video id, target ratio, video or label sequence).  Rows
    keep first-appearance order; columns are the distinct targets in
    ascending order.
    """
    if not len(datasets):
        raise InputError("datasets must be non-empty")
    video_ids: list[str] = []
    measured: dict[tuple[str, float], float] = {}
    targets: set[float] = set()
    for video_id, target, video in datasets:
        key = (str(video_id), float(target))
        if key in measured:
            raise InputError(
                f"duplicate entry for video {key[0]!r} at target {key[1]!r}"
            )
        if key[0] not in video_ids:
            video_ids.append(key[0])
        targets.add(key[1])
        measured[key] = measured_ratio(video)
    target_order = tuple(sorted(targets))
    table = np.full((len(video_ids), len(target_order)), np.nan)
    for (video_id, target), value in measured.items():
        table[video_ids.index(video_id), target_order.index(target)] = value
    averages = tuple(
        float(np.mean(column[~np.isnan(column)])) for column in table.T
    )
    return RatioReport(
        video_ids=tuple(video_ids),
        targets=target_order,
        table=table,
        column_averages=averages,
    )


def write_ratio_csv(path: str | Path, report: RatioReport) -> None:
    """Write the ratio table: one row per video, a final column-average row."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["video_id"] + [repr(t) for t in report.targets])
        for i, video_id in enumerate(report.video_ids):
            row: list[str] = [video_id]
            for j in range(len(report.targets)):
                value = report.table[i, j]
                row.append("" if np.isnan(value) else repr(float(value)))
            writer.writerow(row)
        writer.writerow(
            [AVERAGE_ROW_ID] + [repr(float(v)) for v in report.column_averages]
        )


def read_ratio_csv(path: str | Path) -> RatioReport:
    """Read a table written by ``write_ratio_csv``."""
    with open(path, "r", newline="") as handle:
        rows = list(csv.reader(handle))
    if len(rows) < 3 or not rows[0] or rows[0][0] != "video_id":
        raise InputError(f"{path}: not a ratio table")
    targets = tuple(float(t) for t in rows[0][1:])
    body, average_row = rows[1:-1], rows[-1]
    if not average_row or average_row[0] != AVERAGE_ROW_ID:
        raise InputError(f"{path}: missing {AVERAGE_ROW_ID!r} row")
    video_ids = tuple(row[0] for row in body)
    table = np.full((len(body), len(targets)), np.nan)
    for i, row in enumerate(body):
        if len(row) != len(targets) + 1:
            raise InputError(f"{path}: malformed row {row!r}")
        for j, cell in enumerate(row[1:]):
            if cell:
                table[i, j] = float(cell)
    averages = tuple(float(v) for v in average_row[1:])
    return RatioReport(
        video_ids=video_ids, targets=targets, table=table, column_averages=averages
    )
