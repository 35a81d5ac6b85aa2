"""Synthetic blur/sharp dataset generation by temporal frame averaging.

A high-frame-rate source sequence is cut into consecutive non-overlapping
windows. Each window of length ``w`` collapses to one output frame (the
mean of its members), a binary label (sharp when ``w <= 5``), and a ground
truth (the window's central source frame). The window sampler draws the
sharp class with probability ``sharp_ratio`` and then a length uniformly
from the class's window set, so the expected fraction of sharp frames
matches the configured ratio.

Disk layout per synthesized video::

    <out>/blur/000000.png ...   averaged frames
    <out>/gt/000000.png ...     per-frame ground truths
    <out>/manifest.json         ratios, seed, windows, offsets, labels

Sampling is sequential and seed-deterministic: one uniform draw for the
class and one integer draw for the window length per attempt, including
the final attempt that overflows the source and stops the loop. That
stream order is part of the reproducibility contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, ParameterError
from .pngio import read_frame_dir, write_frame_dir
from .validation import check_frame

SHARP_WINDOW_LIMIT = 5  # windows this short are labeled sharp
WINDOW_UNIVERSE = range(1, 16)

DEFAULT_SHARP_WINDOWS = (1, 2, 3, 4, 5)
DEFAULT_BLUR_WINDOWS = (7, 8, 9, 10, 11, 12, 13)


@dataclass(frozen=True)
class SynthConfig:
    """Sampler settings: target sharp ratio, window sets, RNG seed."""

    sharp_ratio: float
    seed: int
    sharp_windows: tuple = DEFAULT_SHARP_WINDOWS
    blur_windows: tuple = DEFAULT_BLUR_WINDOWS

    def __post_init__(self):
        if not 0.0 <= self.sharp_ratio <= 0.5:
            raise ParameterError(
                f"sharp_ratio must lie in [0, 0.5], got {self.sharp_ratio!r}"
            )
        sharp = tuple(int(w) for w in self.sharp_windows)
        blur = tuple(int(w) for w in self.blur_windows)
        if not sharp or any(w < 1 or w > SHARP_WINDOW_LIMIT for w in sharp):
            raise ParameterError(
                f"sharp windows must be a nonempty subset of 1..{SHARP_WINDOW_LIMIT}"
            )
        if not blur or any(w <= SHARP_WINDOW_LIMIT or w > max(WINDOW_UNIVERSE) for w in blur):
            raise ParameterError(
                f"blur windows must be a nonempty subset of "
                f"{SHARP_WINDOW_LIMIT + 1}..{max(WINDOW_UNIVERSE)}"
            )
        object.__setattr__(self, "sharp_windows", sharp)
        object.__setattr__(self, "blur_windows", blur)


@dataclass
class BlurVideo:
    """A synthesized sequence: frames, labels, ground truths, bookkeeping."""

    frames: np.ndarray          # (N, H, W, 3) averaged output frames
    labels: np.ndarray          # (N,) bool, True = sharp
    ground_truths: np.ndarray   # (N, H, W, 3) central source frames
    window_lengths: np.ndarray  # (N,) int
    offsets: np.ndarray         # (N,) int, start of each window in the source
    source_length: int

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def sample_windows(source_length: int, config: SynthConfig, rng) -> np.ndarray:
    """Draw window lengths until the next draw would overflow the source.

    Every attempt consumes one class draw and one length draw from ``rng``
    even when the attempt overflows; the overflowing draw is discarded and
    sampling stops, leaving any tail frames unused.
    """
    source_length = int(source_length)
    if source_length < max(config.blur_windows):
        raise InputError(
            f"source length {source_length} shorter than the largest blur "
            f"window {max(config.blur_windows)}"
        )
    windows = []
    consumed = 0
    while True:
        take_sharp = rng.random() < config.sharp_ratio
        pool = config.sharp_windows if take_sharp else config.blur_windows
        window = int(pool[rng.integers(len(pool))])
        if consumed + window > source_length:
            break
        windows.append(window)
        consumed += window
    return np.array(windows, dtype=int)


def synthesize(source, config: SynthConfig, windows=None) -> BlurVideo:
    """Average a source sequence into a labeled blur/sharp video.

    Parameters
    ----------
    source : indexable sequence of (H, W, 3) frames in [0, 1]; anything
        supporting len() and integer indexing works, so large sources can
        be generated lazily.
    config : SynthConfig; its seed drives the window sampler.
    windows : optional explicit window-length vector. When given, sampling
        is skipped entirely (the lengths are validated instead), which
        pins down exact window placements in tests.
    """
    source_length = len(source)
    if windows is None:
        rng = np.random.default_rng(config.seed)
        windows = sample_windows(source_length, config, rng)
    else:
        windows = np.asarray(windows, dtype=int)
        if windows.ndim != 1 or windows.size == 0:
            raise InputError("explicit windows must be a nonempty 1-D sequence")
        if (windows < 1).any() or (windows > max(WINDOW_UNIVERSE)).any():
            raise InputError(
                f"explicit windows must lie in 1..{max(WINDOW_UNIVERSE)}"
            )
        if int(windows.sum()) > source_length:
            raise InputError(
                f"windows sum to {int(windows.sum())}, source has {source_length}"
            )

    offsets = np.concatenate([[0], np.cumsum(windows)[:-1]]).astype(int)
    labels = windows <= SHARP_WINDOW_LIMIT

    blur_frames = []
    truth_frames = []
    for start, window in zip(offsets, windows):
        first = check_frame(source[int(start)])
        total = first.copy()
        for step in range(1, int(window)):
            total += check_frame(source[int(start) + step])
        blur_frames.append(total / float(window))
        truth_frames.append(check_frame(source[int(start) + int(window) // 2]))

    return BlurVideo(
        frames=np.stack(blur_frames) if blur_frames else np.zeros((0, 1, 1, 3)),
        labels=labels,
        ground_truths=np.stack(truth_frames) if truth_frames else np.zeros((0, 1, 1, 3)),
        window_lengths=windows.copy(),
        offsets=offsets,
        source_length=source_length,
    )


def measured_ratio(video) -> float:
    """Fraction of sharp labels in a video (or raw label sequence)."""
    labels = video.labels if isinstance(video, BlurVideo) else np.asarray(video, dtype=bool)
    if labels.size == 0:
        raise InputError("cannot measure the sharp ratio of an empty video")
    return float(np.count_nonzero(labels) / labels.size)


def write_dataset(video: BlurVideo, out_dir, *, target_ratio=None, seed=None,
                  bit_depth: int = 8) -> Path:
    """Write blur/, gt/, and manifest.json for a synthesized video."""
    out_dir = Path(out_dir)
    write_frame_dir(out_dir / "blur", video.frames, bit_depth=bit_depth)
    write_frame_dir(out_dir / "gt", video.ground_truths, bit_depth=bit_depth)
    manifest = {
        "ratio_target": None if target_ratio is None else float(target_ratio),
        "ratio_measured": measured_ratio(video),
        "seed": None if seed is None else int(seed),
        "windows": [int(w) for w in video.window_lengths],
        "offsets": [int(o) for o in video.offsets],
        "labels": [int(l) for l in video.labels],
        "source_length": int(video.source_length),
        "frame_count": len(video),
        "bit_depth": int(bit_depth),
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def read_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.is_file():
        raise InputError(f"no manifest.json in {str(dataset_dir)!r}")
    with open(path) as handle:
        return json.load(handle)


def load_dataset(dataset_dir) -> BlurVideo:
    """Read a dataset directory written by write_dataset back into memory."""
    dataset_dir = Path(dataset_dir)
    manifest = read_manifest(dataset_dir)
    frames = np.stack(read_frame_dir(dataset_dir / "blur"))
    truths = np.stack(read_frame_dir(dataset_dir / "gt"))
    labels = np.array(manifest["labels"], dtype=bool)
    if frames.shape[0] != labels.shape[0] or truths.shape[0] != labels.shape[0]:
        raise InputError(
            f"dataset {str(dataset_dir)!r} is inconsistent: "
            f"{frames.shape[0]} blur frames, {truths.shape[0]} ground truths, "
            f"{labels.shape[0]} labels"
        )
    return BlurVideo(
        frames=frames,
        labels=labels,
        ground_truths=truths,
        window_lengths=np.array(manifest["windows"], dtype=int),
        offsets=np.array(manifest["offsets"], dtype=int),
        source_length=int(manifest["source_length"]),
    )
