"""PNG frame and frame-sequence I/O.

Frames live on disk as 8-bit or 16-bit PNG files, values mapped linearly
between [0, 1] and the integer range. Sequences are directories of
``000000.png``-style files; ordering is by zero-padded index. OpenCV does
the encoding, which is deterministic for identical pixel data, so reruns
with identical seeds produce byte-identical directories.
"""

from __future__ import annotations

import os
from pathlib import Path

import cv2
import numpy as np

from .errors import InputError, ParameterError
from .validation import check_frame

FRAME_PATTERN = "{:06d}.png"


def frame_filename(index: int) -> str:
    return FRAME_PATTERN.format(index)


def read_frame(path) -> np.ndarray:
    """Read a PNG into a float64 (H, W, 3) RGB frame in [0, 1]."""
    path = os.fspath(path)
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InputError(f"cannot read image file {path!r}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise InputError(f"unsupported PNG sample type {raw.dtype} in {path!r}")
    arr = raw.astype(np.float64) / scale
    if arr.ndim == 2:
        arr = np.stack([arr, arr, arr], axis=-1)
    elif arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return arr[:, :, ::-1].copy()  # BGR -> RGB


def write_frame(path, frame, bit_depth: int = 8) -> None:
    """Write a [0, 1] RGB frame as PNG, clamping before quantization."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InputError(f"frame must have shape (H, W, 3), got {arr.shape}")
    if bit_depth == 8:
        scale, dtype = 255.0, np.uint8
    elif bit_depth == 16:
        scale, dtype = 65535.0, np.uint16
    else:
        raise ParameterError(f"bit depth must be 8 or 16, got {bit_depth!r}")
    clipped = np.clip(arr, 0.0, 1.0)
    quantized = np.rint(clipped * scale).astype(dtype)
    path = os.fspath(path)
    if not cv2.imwrite(path, quantized[:, :, ::-1]):
        raise InputError(f"cannot write image file {path!r}")


def read_frame_dir(directory) -> list[np.ndarray]:
    """Read every PNG in a directory, sorted by filename; validates frames."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"frame directory {str(directory)!r} does not exist")
    paths = sorted(directory.glob("*.png"))
    if not paths:
        raise InputError(f"no PNG frames found in {str(directory)!r}")
    frames = [check_frame(read_frame(p), name=p.name) for p in paths]
    first = frames[0].shape
    for p, f in zip(paths, frames):
        if f.shape != first:
            raise InputError(
                f"frame {p.name} has shape {f.shape[:2]}, expected {first[:2]}"
            )
    return frames


def write_frame_dir(directory, frames, bit_depth: int = 8) -> list[Path]:
    """Write a frame sequence as 000000.png, 000001.png, ... in a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for index, frame in enumerate(frames):
        target = directory / frame_filename(index)
        write_frame(target, frame, bit_depth=bit_depth)
        written.append(target)
    return written


def probe_bit_depth(directory) -> int:
    """Report the PNG bit depth (8 or 16) of the first frame in a directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"frame directory {str(directory)!r} does not exist")
    paths = sorted(directory.glob("*.png"))
    if not paths:
        raise InputError(f"no PNG frames found in {str(directory)!r}")
    raw = cv2.imread(os.fspath(paths[0]), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InputError(f"cannot read image file {str(paths[0])!r}")
    if raw.dtype == np.uint8:
        return 8
    if raw.dtype == np.uint16:
        return 16
    raise InputError(
        f"{paths[0].name}: unsupported PNG sample type {raw.dtype}"
    )
