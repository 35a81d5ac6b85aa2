"""Frame restoration: iterative deconvolution and the full pipeline.

The deconvolution routine is multiplicative Richardson-Lucy.  Starting from
the observed image as the initial estimate, each iteration blurs the current
estimate with the point-spread function, divides the observation by that
prediction, blurs the quotient with the flipped point-spread function, and
multiplies it into the estimate.  The quotient denominator is floored at
``epsilon`` rather than offset by it: ``observed / max(predicted, epsilon)``
is arithmetically identical to the plain quotient wherever the prediction is
at least ``epsilon``, and merely bounded where it would otherwise explode.
The floored form keeps two useful fixed points exact:

* a unit-impulse point-spread function reproduces the input bit for bit, and
* a constant image under any normalized point-spread function stays constant
  bit for bit (the blur preserves constants exactly because the kernel
  weights are normalized to machine-exact unit sum, see ``gaussian_psf``).

An optional total-variation factor divides each update by
``1 - tv_weight * div(grad I / |grad I|)``; it damps noise amplification at
high iteration counts and is off by default.

Backends for the per-frame restorer:

``passthrough``
    returns the current frame unchanged,
``rl_deconv``
    runs Richardson-Lucy on the current frame channel by channel,
``external``
    hands the frame triplet to a user-supplied command line via 16-bit PNG
    files and reads the result back.

``run_pipeline`` ties everything together: score every frame with the
detector, locate the most recent sharp frame within the lookback horizon,
and restore each frame with the configured backend, recording for every
frame the probability, the label, the reference index and the branch taken.
"""

from __future__ import annotations

import csv
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .detector import DetectorModel, find_closest_sharp
from .errors import BackendError, InputError, ParameterError
from .focusmetrics import DEFAULT_POOL_SIZE, feature_vector
from .imagecore import convolve2d, gaussian_psf
from .pngio import read_frame, write_frame
from .validation import check_frame, check_gray, check_psf

DEFAULT_PSF_SIZE = 9
DEFAULT_PSF_SIGMA = 1.5
DEFAULT_RL_ITERATIONS = 5

_BACKENDS = ("passthrough", "rl_deconv", "external")
_BOUNDARIES = ("reflect", "periodic")


def default_psf() -> np.ndarray:
    """The stock restoration kernel: 9x9 Gaussian with sigma 1.5."""
    return gaussian_psf(DEFAULT_PSF_SIZE, DEFAULT_PSF_SIGMA)


@dataclass(frozen=True)
class ReeConfig:
    """Settings for the edge-restoration (deconvolution) stage.

    ``boundary`` selects how the internal blurs extend the image past its
    edges.  ``reflect`` is the default used everywhere in production;
    ``periodic`` exists because circular convolution conserves total flux
    exactly, which makes conservation properties testable.
    """

    psf: np.ndarray = field(default_factory=default_psf)
    iterations: int = DEFAULT_RL_ITERATIONS
    tv_weight: float = 0.0
    epsilon: float = 1e-8
    boundary: str = "reflect"

    def __post_init__(self) -> None:
        check_psf(self.psf, name="psf")
        if not isinstance(self.iterations, int) or self.iterations < 1:
            raise ParameterError("iterations must be a positive integer")
        if not 0.0 <= float(self.tv_weight) < 1.0:
            raise ParameterError("tv_weight must lie in [0, 1)")
        if not float(self.epsilon) > 0.0:
            raise ParameterError("epsilon must be positive")
        if self.boundary not in _BOUNDARIES:
            raise ParameterError(
                f"boundary must be one of {_BOUNDARIES}, got {self.boundary!r}"
            )


@dataclass(frozen=True)
class RestorerSpec:
    """Which restorer runs on each frame, and how.

    ``ree_config`` only matters for the ``rl_deconv`` backend; when left as
    None the backend reuses the pipeline's own edge-restoration settings so
    the already-computed intermediate can be returned directly.  ``command``
    is the argv prefix for the ``external`` backend; file arguments are
    appended by the caller protocol (see ``restore_frame``).
    """

    backend: str = "passthrough"
    ree_config: ReeConfig | None = None
    command: Sequence[str] | None = None
    timeout: float = 120.0

    def __post_init__(self) -> None:
        if self.backend not in _BACKENDS:
            raise ParameterError(
                f"backend must be one of {_BACKENDS}, got {self.backend!r}"
            )
        if self.backend == "external":
            if not self.command:
                raise ParameterError("external backend requires a command")
            object.__setattr__(self, "command", tuple(str(c) for c in self.command))
        if not float(self.timeout) > 0.0:
            raise ParameterError("timeout must be positive")


class Triplet(NamedTuple):
    """A frame with its temporal neighbours (edges replicate)."""

    previous: np.ndarray
    current: np.ndarray
    next: np.ndarray


@dataclass(frozen=True)
class FrameRecord:
    """Per-frame pipeline outcome."""

    frame_index: int
    probability: float
    label: bool
    closest_sharp: int | None
    branch: str


@dataclass(frozen=True)
class PipelineConfig:
    """End-to-end pipeline settings."""

    lookback: int = 7
    pool_size: int = DEFAULT_POOL_SIZE
    ree: ReeConfig = field(default_factory=ReeConfig)
    restorer: RestorerSpec = field(default_factory=RestorerSpec)
    jobs: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.lookback, int) or self.lookback < 1:
            raise ParameterError("lookback must be a positive integer")
        if not isinstance(self.pool_size, int) or self.pool_size < 1:
            raise ParameterError("pool_size must be a positive integer")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            raise ParameterError("jobs must be a positive integer")


def richardson_lucy(
    image: np.ndarray,
    psf: np.ndarray,
    iterations: int = DEFAULT_RL_ITERATIONS,
    *,
    tv_weight: float = 0.0,
    epsilon: float = 1e-8,
    boundary: str = "reflect",
) -> np.ndarray:
    """Deconvolve a non-negative image by iterative multiplicative updates.

    Works on a single 2-D plane or channel by channel on an (H, W, 3)
    stack.  The estimate starts from the observation itself.
    """
    check_psf(psf, name="psf")
    if boundary not in _BOUNDARIES:
        raise ParameterError(
            f"boundary must be one of {_BOUNDARIES}, got {boundary!r}"
        )
    if not isinstance(iterations, int) or iterations < 0:
        raise ParameterError("iterations must be a non-negative integer")
    if not float(epsilon) > 0.0:
        raise ParameterError("epsilon must be positive")
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[2] != 3:
            raise InputError(
                f"colour input must have 3 channels, got shape {arr.shape}"
            )
        planes = [
            richardson_lucy(
                arr[:, :, c],
                psf,
                iterations,
                tv_weight=tv_weight,
                epsilon=epsilon,
                boundary=boundary,
            )
            for c in range(3)
        ]
        return np.stack(planes, axis=2)
    check_gray(arr, name="image")
    if np.any(arr < 0.0):
        raise InputError("image must be non-negative for multiplicative updates")

    pad = "reflect" if boundary == "reflect" else "periodic"
    flipped = psf[::-1, ::-1].copy()
    estimate = arr.copy()
    for _ in range(iterations):
        predicted = convolve2d(estimate, psf, padding=pad)
        quotient = arr / np.maximum(predicted, epsilon)
        estimate = estimate * convolve2d(quotient, flipped, padding=pad)
        if tv_weight > 0.0:
            estimate = _total_variation_damp(estimate, tv_weight, epsilon)
    return estimate


def _total_variation_damp(
    estimate: np.ndarray, tv_weight: float, epsilon: float
) -> np.ndarray:
    """Divide the estimate by a smoothness factor built from its gradient."""
    gy, gx = np.gradient(estimate)
    magnitude = np.maximum(np.hypot(gx, gy), epsilon)
    divergence = np.gradient(gx / magnitude, axis=1) + np.gradient(
        gy / magnitude, axis=0
    )
    divisor = np.clip(1.0 - tv_weight * divergence, 0.1, None)
    return estimate / divisor


def ree(frame: np.ndarray, config: ReeConfig | None = None) -> np.ndarray:
    """Restore edges of a colour frame and clamp the result back to [0, 1]."""
    cfg = config if config is not None else ReeConfig()
    check_frame(frame, name="frame")
    restored = richardson_lucy(
        frame,
        cfg.psf,
        cfg.iterations,
        tv_weight=cfg.tv_weight,
        epsilon=cfg.epsilon,
        boundary=cfg.boundary,
    )
    return np.clip(restored, 0.0, 1.0)


def restore_frame(
    x: Triplet,
    c: Triplet | None,
    sharp: np.ndarray | None,
    spec: RestorerSpec,
) -> np.ndarray:
    """Produce the output frame for one time step.

    ``x`` holds raw frames, ``c`` the edge-restored versions of the same
    frames (may be None when the backend does not need them), and ``sharp``
    the raw reference frame when the pipeline found one within its horizon.
    """
    if spec.backend == "passthrough":
        return x.current
    if spec.backend == "rl_deconv":
        if spec.ree_config is None and c is not None:
            return c.current
        return ree(x.current, spec.ree_config)
    if c is None:
        raise InputError("external backend requires the edge-restored triplet")
    return _run_external(spec, c, sharp)


def _run_external(
    spec: RestorerSpec, c: Triplet, sharp: np.ndarray | None
) -> np.ndarray:
    """Invoke the external restorer protocol.

    The command receives ``--current``, ``--prev`` and ``--next`` paths to
    16-bit PNG files holding the edge-restored triplet, ``--sharp`` with the
    reference frame when one exists, and ``--out`` naming the file it must
    write.  A non-zero exit status, a timeout, a missing output file or an
    output whose size differs from the input all raise ``BackendError``.
    """
    command = list(spec.command or ())
    with tempfile.TemporaryDirectory(prefix="deblurkit-ext-") as tmp:
        root = Path(tmp)
        paths = {
            "--current": root / "current.png",
            "--prev": root / "prev.png",
            "--next": root / "next.png",
        }
        write_frame(paths["--current"], c.current, bit_depth=16)
        write_frame(paths["--prev"], c.previous, bit_depth=16)
        write_frame(paths["--next"], c.next, bit_depth=16)
        if sharp is not None:
            paths["--sharp"] = root / "sharp.png"
            write_frame(paths["--sharp"], sharp, bit_depth=16)
        out_path = root / "out.png"
        argv = command + [
            flag_or_path
            for flag, path in paths.items()
            for flag_or_path in (flag, str(path))
        ]
        argv += ["--out", str(out_path)]
        try:
            completed = subprocess.run(
                argv,
                capture_output=True,
                text=True,
                timeout=spec.timeout,
                check=False,
            )
        except FileNotFoundError as exc:
            raise BackendError(
                f"external restorer not found: {command[0]!r}",
                command=argv,
            ) from exc
        except subprocess.TimeoutExpired as exc:
            raise BackendError(
                f"external restorer timed out after {spec.timeout:g}s",
                command=argv,
            ) from exc
        if completed.returncode != 0:
            raise BackendError(
                "external restorer exited with status "
                f"{completed.returncode}",
                command=argv,
                returncode=completed.returncode,
                stderr=completed.stderr,
            )
        if not out_path.is_file():
            raise BackendError(
                "external restorer did not write its output file",
                command=argv,
                stderr=completed.stderr,
            )
        try:
            result = read_frame(out_path)
        except InputError as exc:
            raise BackendError(
                f"external restorer wrote an unreadable image: {exc}",
                command=argv,
            ) from exc
    if result.shape != c.current.shape:
        raise BackendError(
            "external restorer changed the frame size: "
            f"expected {c.current.shape}, got {result.shape}",
            command=argv,
        )
    return result


def _triplet(frames: Sequence[np.ndarray], index: int) -> Triplet:
    """Neighbourhood of ``index`` with replicated edges."""
    last = len(frames) - 1
    return Triplet(
        previous=frames[max(index - 1, 0)],
        current=frames[index],
        next=frames[min(index + 1, last)],
    )


def parallel_map(
    fn: Callable[[np.ndarray], np.ndarray],
    items: Sequence[np.ndarray],
    jobs: int,
) -> list[np.ndarray]:
    """Map a pure per-frame function over frames, in order, on jobs threads."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_pipeline(
    frames: Sequence[np.ndarray],
    model: DetectorModel | None,
    config: PipelineConfig | None = None,
    *,
    oracle_labels: Sequence[bool] | None = None,
) -> tuple[list[np.ndarray], list[FrameRecord]]:
    """Restore a whole clip and report what happened to each frame.

    Stages, in order: score every frame with the sharpness detector (or take
    ``oracle_labels`` verbatim, in which case ``model`` may be None), find
    for each frame the most recent frame labelled sharp within ``lookback``
    strictly earlier frames, then run the configured restorer on each frame.
    The branch is ``"sharp"`` when a reference frame exists and ``"self"``
    when the frame must stand alone.

    Returns the restored frames and one record per frame, both in input
    order.
    """
    cfg = config if config is not None else PipelineConfig()
    frame_list = list(frames)
    if not frame_list:
        raise InputError("frames must be a non-empty sequence")
    for i, frame in enumerate(frame_list):
        check_frame(frame, name=f"frames[{i}]")
        if frame.shape != frame_list[0].shape:
            raise InputError(
                "frames must share one size: frame 0 is "
                f"{frame_list[0].shape}, frame {i} is {frame.shape}"
            )

    n = len(frame_list)
    if oracle_labels is not None:
        labels = [bool(v) for v in oracle_labels]
        if len(labels) != n:
            raise InputError(
                f"oracle_labels has {len(labels)} entries for {n} frames"
            )
        probabilities = [1.0 if v else 0.0 for v in labels]
    else:
        if model is None:
            raise InputError("a detector model is required without oracle labels")

        def extract(frame: np.ndarray) -> np.ndarray:
            return feature_vector(frame, pool_size=cfg.pool_size).as_array()

        features = np.stack(parallel_map(extract, frame_list, cfg.jobs))
        probabilities = [float(p) for p in model.predict_proba(features)]
        labels = [p >= model.threshold for p in probabilities]

    closest = [find_closest_sharp(labels, i, lookback=cfg.lookback) for i in range(n)]

    backend = cfg.restorer.backend
    restored_inputs: list[np.ndarray] | None = None
    if backend in ("rl_deconv", "external"):
        stage_cfg = cfg.restorer.ree_config if backend == "rl_deconv" else None
        effective = stage_cfg if stage_cfg is not None else cfg.ree

        def restore_edges(frame: np.ndarray) -> np.ndarray:
            return ree(frame, effective)

        restored_inputs = parallel_map(restore_edges, frame_list, cfg.jobs)

    outputs: list[np.ndarray] = []
    records: list[FrameRecord] = []
    for i in range(n):
        x = _triplet(frame_list, i)
        c = _triplet(restored_inputs, i) if restored_inputs is not None else None
        reference = frame_list[closest[i]] if closest[i] is not None else None
        spec = cfg.restorer
        if backend == "rl_deconv" and spec.ree_config is not None:
            # The per-frame stage already used the backend's own settings.
            spec = RestorerSpec(backend="rl_deconv")
        outputs.append(restore_frame(x, c, reference, spec))
        records.append(
            FrameRecord(
                frame_index=i,
                probability=probabilities[i],
                label=labels[i],
                closest_sharp=closest[i],
                branch="sharp" if closest[i] is not None else "self",
            )
        )
    return outputs, records


PIPELINE_CSV_HEADER = ("frame_index", "probability", "label", "t_i", "branch")


def write_pipeline_csv(path: str | Path, records: Sequence[FrameRecord]) -> None:
    """Write per-frame pipeline records; a missing reference serializes as -1."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PIPELINE_CSV_HEADER)
        for record in records:
            t_i = -1 if record.closest_sharp is None else record.closest_sharp
            writer.writerow(
                [
                    record.frame_index,
                    repr(float(record.probability)),
                    int(record.label),
                    t_i,
                    record.branch,
                ]
            )


def read_pipeline_csv(path: str | Path) -> list[FrameRecord]:
    """Read records written by ``write_pipeline_csv``."""
    with open(path, "r", newline="") as handle:
        reader = csv.reader(handle)
        rows = list(reader)
    if not rows or tuple(rows[0]) != PIPELINE_CSV_HEADER:
        raise InputError(f"{path}: not a pipeline record file")
    records = []
    for row in rows[1:]:
        if len(row) != len(PIPELINE_CSV_HEADER):
            raise InputError(f"{path}: malformed row {row!r}")
        t_i = int(row[3])
        records.append(
            FrameRecord(
                frame_index=int(row[0]),
                probability=float(row[1]),
                label=bool(int(row[2])),
                closest_sharp=None if t_i == -1 else t_i,
                branch=row[4],
            )
        )
    return records
