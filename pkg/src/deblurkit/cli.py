"""Command-line interface: batch jobs over PNG-sequence videos.

Videos are directories of PNG frames (sorted by filename), never container
files, so every byte an invocation produces is a deterministic function of
the inputs, the flags and the seed.  A dataset directory produced by
``synth`` holds ``blur/``, ``gt/`` and ``manifest.json``; commands that take
``--video`` accept either a plain frame directory or such a dataset root.

Configuration precedence is flags, then ``--config`` JSON file, then
built-in defaults.  The config file may only set tuning keys (pool size,
gamma, iteration counts and the like); input and output paths always come
from flags.  Every successful run leaves a ``run.json`` provenance record
next to (or inside) its output with the resolved configuration, the seed,
the tool version and a timestamp.

Exit codes: 0 success, 1 validation or runtime failure (single-line
``error: ...`` on stderr), 2 usage problems.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .detector import DetectorModel, find_closest_sharp, fit_detector, write_detection_csv
from .errors import InputError, ParameterError, ToolkitError
from .focusmetrics import DEFAULT_POOL_SIZE, feature_vector, read_features_csv, write_features_csv
from .imagecore import gaussian_psf
from .pngio import probe_bit_depth, read_frame_dir, write_frame_dir
from .quality import evaluate_video, ratio_report, write_eval_json, write_ratio_csv
from .restore import (
    DEFAULT_PSF_SIGMA,
    DEFAULT_PSF_SIZE,
    DEFAULT_RL_ITERATIONS,
    PipelineConfig,
    ReeConfig,
    RestorerSpec,
    parallel_map,
    ree,
    run_pipeline,
    write_pipeline_csv,
)
from .synth import SynthConfig, read_manifest, synthesize, write_dataset

PROG = "deblurkit"

DEFAULT_LOOKBACK = 7

#: Tuning keys a --config file may provide, with their built-in defaults.
#: Path arguments are deliberately not configurable this way.
_TUNING_DEFAULTS: dict[str, dict[str, object]] = {
    "synth": {"bit_depth": 8},
    "features": {"k": DEFAULT_POOL_SIZE, "jobs": 1},
    "train-detector": {
        "learning_rate": 0.1,
        "max_iter": 5000,
        "tol": 1e-6,
        "l2_penalty": 1e-4,
        "threshold": 0.5,
    },
    "detect": {"k": DEFAULT_POOL_SIZE, "gamma": DEFAULT_LOOKBACK, "jobs": 1},
    "ree": {
        "iterations": DEFAULT_RL_ITERATIONS,
        "tv_weight": 0.0,
        "epsilon": 1e-8,
        "psf_size": DEFAULT_PSF_SIZE,
        "psf_sigma": DEFAULT_PSF_SIGMA,
        "bit_depth": "auto",
        "jobs": 1,
    },
    "deblur": {
        "backend": "rl_deconv",
        "k": DEFAULT_POOL_SIZE,
        "gamma": DEFAULT_LOOKBACK,
        "iterations": DEFAULT_RL_ITERATIONS,
        "tv_weight": 0.0,
        "epsilon": 1e-8,
        "psf_size": DEFAULT_PSF_SIZE,
        "psf_sigma": DEFAULT_PSF_SIGMA,
        "command": None,
        "timeout": 120.0,
        "bit_depth": "auto",
        "jobs": 1,
    },
    "eval": {},
    "eval-ratios": {},
}


class _UsageError(Exception):
    """A malformed invocation that argparse could not catch itself."""


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise InputError(f"cannot read config file {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise InputError(f"config file {path!r} must hold a JSON object")
    return payload


def _resolve(args: argparse.Namespace, command: str) -> dict:
    """Merge flag values, config-file values and defaults for one command."""
    defaults = _TUNING_DEFAULTS[command]
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise ParameterError(
                f"config file keys not recognized for {command!r}: "
                + ", ".join(unknown)
            )
    resolved = {}
    for key, default in defaults.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
        elif key in file_cfg:
            resolved[key] = file_cfg[key]
        else:
            resolved[key] = default
    return resolved


def _bit_depth(value: object, input_dir: Path | None = None) -> int:
    """Turn a bit-depth setting (8, 16 or "auto") into a concrete depth."""
    if value in ("auto", None):
        if input_dir is None:
            raise ParameterError("bit_depth 'auto' needs an input directory")
        return probe_bit_depth(input_dir)
    depth = int(value)  # type: ignore[arg-type]
    if depth not in (8, 16):
        raise ParameterError(f"bit_depth must be 8 or 16, got {value!r}")
    return depth


def _write_run_record(out_target: Path, command: str, config: dict, seed=None) -> Path:
    """Record provenance next to (file output) or inside (dir output) the artifact."""
    record = {
        "command": command,
        "config": config,
        "seed": seed,
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    out_target = Path(out_target)
    if out_target.is_dir():
        path = out_target / "run.json"
    else:
        path = out_target.with_name(out_target.name + ".run.json")
    with open(path, "w") as handle:
        json.dump(record, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def _frames_dir(path: Path, role: str = "blur") -> Path:
    """Resolve a --video style argument to the directory holding frames.

    A dataset root (contains manifest.json plus the requested subdirectory)
    resolves to that subdirectory; anything else is taken as a plain frame
    directory.
    """
    path = Path(path)
    if (path / "manifest.json").is_file() and (path / role).is_dir():
        return path / role
    return path


def _dataset_labels(video_arg: Path, explicit_manifest: str | None, n_frames: int):
    """Labels for a frame directory, from an adjacent or explicit manifest.

    Returns None when no manifest can be found (features then carry no label
    column).
    """
    manifest = None
    if explicit_manifest is not None:
        manifest_path = Path(explicit_manifest)
        if manifest_path.is_dir():
            manifest = read_manifest(manifest_path)
        else:
            try:
                with open(manifest_path) as handle:
                    manifest = json.load(handle)
            except OSError as exc:
                raise InputError(f"cannot read manifest {str(manifest_path)!r}: {exc}") from exc
    else:
        video_arg = Path(video_arg)
        for candidate in (video_arg, video_arg.parent):
            if (candidate / "manifest.json").is_file():
                manifest = read_manifest(candidate)
                break
        if manifest is None:
            return None
    labels = manifest.get("labels")
    if labels is None:
        raise InputError("manifest has no labels")
    if len(labels) != n_frames:
        raise InputError(
            f"manifest lists {len(labels)} labels for {n_frames} frames"
        )
    return np.asarray(labels, dtype=bool)


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "synth")
    depth = _bit_depth(cfg["bit_depth"])
    ratio = float(args.ratio)
    seed = int(args.seed)
    source = read_frame_dir(args.hfr)
    video = synthesize(source, SynthConfig(sharp_ratio=ratio, seed=seed))
    out = Path(args.out)
    write_dataset(video, out, target_ratio=ratio, seed=seed, bit_depth=depth)
    _write_run_record(
        out,
        "synth",
        {"hfr": str(args.hfr), "ratio": ratio, "out": str(out), "bit_depth": depth},
        seed=seed,
    )
    return 0


def _cmd_features(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "features")
    k = int(cfg["k"])
    jobs = int(cfg["jobs"])
    frame_dir = _frames_dir(Path(args.video))
    frames = read_frame_dir(frame_dir)
    labels = _dataset_labels(frame_dir, args.manifest, len(frames))

    def extract(frame: np.ndarray) -> np.ndarray:
        return feature_vector(frame, pool_size=k).as_array()

    features = np.stack(parallel_map(extract, frames, jobs))
    write_features_csv(args.out, features, labels)
    _write_run_record(
        Path(args.out),
        "features",
        {"video": str(args.video), "k": k, "jobs": jobs, "out": str(args.out)},
    )
    return 0


def _cmd_train_detector(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "train-detector")
    _, features, labels = read_features_csv(args.features)
    if labels is None:
        raise InputError(
            f"feature file {args.features!r} has no label column; "
            "extract features from a synthesized dataset to train"
        )
    model = fit_detector(
        features,
        labels,
        learning_rate=float(cfg["learning_rate"]),
        max_iter=int(cfg["max_iter"]),
        tol=float(cfg["tol"]),
        l2_penalty=float(cfg["l2_penalty"]),
        threshold=float(cfg["threshold"]),
    )
    model.save(args.out)
    _write_run_record(
        Path(args.out),
        "train-detector",
        {
            "features": str(args.features),
            "out": str(args.out),
            **{key: cfg[key] for key in sorted(cfg)},
        },
    )
    return 0


def _cmd_detect(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "detect")
    k = int(cfg["k"])
    gamma = int(cfg["gamma"])
    jobs = int(cfg["jobs"])
    frames = read_frame_dir(_frames_dir(Path(args.video)))
    model = DetectorModel.load(args.model)

    def extract(frame: np.ndarray) -> np.ndarray:
        return feature_vector(frame, pool_size=k).as_array()

    features = np.stack(parallel_map(extract, frames, jobs))
    probabilities = model.predict_proba(features)
    labels = probabilities >= model.threshold
    rows = [
        (
            i,
            float(probabilities[i]),
            bool(labels[i]),
            find_closest_sharp(labels, i, lookback=gamma),
        )
        for i in range(len(frames))
    ]
    write_detection_csv(args.out, rows)
    _write_run_record(
        Path(args.out),
        "detect",
        {
            "video": str(args.video),
            "model": str(args.model),
            "k": k,
            "gamma": gamma,
            "jobs": jobs,
            "out": str(args.out),
        },
    )
    return 0


def _ree_config(cfg: dict) -> ReeConfig:
    return ReeConfig(
        psf=gaussian_psf(int(cfg["psf_size"]), float(cfg["psf_sigma"])),
        iterations=int(cfg["iterations"]),
        tv_weight=float(cfg["tv_weight"]),
        epsilon=float(cfg["epsilon"]),
    )


def _cmd_ree(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "ree")
    jobs = int(cfg["jobs"])
    frame_dir = _frames_dir(Path(args.video))
    frames = read_frame_dir(frame_dir)
    ree_cfg = _ree_config(cfg)
    restored = parallel_map(lambda frame: ree(frame, ree_cfg), frames, jobs)
    depth = _bit_depth(cfg["bit_depth"], frame_dir)
    out = Path(args.out)
    write_frame_dir(out, restored, bit_depth=depth)
    _write_run_record(
        out,
        "ree",
        {
            "video": str(args.video),
            "iterations": int(cfg["iterations"]),
            "tv_weight": float(cfg["tv_weight"]),
            "epsilon": float(cfg["epsilon"]),
            "psf_size": int(cfg["psf_size"]),
            "psf_sigma": float(cfg["psf_sigma"]),
            "bit_depth": depth,
            "jobs": jobs,
            "out": str(out),
        },
    )
    return 0


def _cmd_deblur(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "deblur")
    backend = str(cfg["backend"])
    command = cfg["command"]
    argv_prefix = shlex.split(command) if isinstance(command, str) else command
    restorer = RestorerSpec(
        backend=backend,
        command=argv_prefix,
        timeout=float(cfg["timeout"]),
    )
    pipeline_cfg = PipelineConfig(
        lookback=int(cfg["gamma"]),
        pool_size=int(cfg["k"]),
        ree=_ree_config(cfg),
        restorer=restorer,
        jobs=int(cfg["jobs"]),
    )
    frame_dir = _frames_dir(Path(args.video))
    frames = read_frame_dir(frame_dir)
    model = DetectorModel.load(args.model)
    outputs, records = run_pipeline(frames, model, pipeline_cfg)
    depth = _bit_depth(cfg["bit_depth"], frame_dir)
    out = Path(args.out)
    write_frame_dir(out, outputs, bit_depth=depth)
    write_pipeline_csv(out / "records.csv", records)
    _write_run_record(
        out,
        "deblur",
        {
            "video": str(args.video),
            "model": str(args.model),
            "backend": backend,
            "k": int(cfg["k"]),
            "gamma": int(cfg["gamma"]),
            "iterations": int(cfg["iterations"]),
            "tv_weight": float(cfg["tv_weight"]),
            "epsilon": float(cfg["epsilon"]),
            "psf_size": int(cfg["psf_size"]),
            "psf_sigma": float(cfg["psf_sigma"]),
            "command": command,
            "timeout": float(cfg["timeout"]),
            "bit_depth": depth,
            "jobs": int(cfg["jobs"]),
            "out": str(out),
        },
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    if getattr(args, "eval_command", None) == "ratios":
        return _cmd_eval_ratios(args)
    if not (args.restored and args.gt and args.out):
        raise _UsageError(
            "eval requires --restored, --gt and --out (or the 'ratios' mode)"
        )
    restored = read_frame_dir(Path(args.restored))
    reference = read_frame_dir(_frames_dir(Path(args.gt), role="gt"))
    report = evaluate_video(restored, reference)
    write_eval_json(args.out, report)
    _write_run_record(
        Path(args.out),
        "eval",
        {"restored": str(args.restored), "gt": str(args.gt), "out": str(args.out)},
    )
    return 0


def _cmd_eval_ratios(args: argparse.Namespace) -> int:
    entries = []
    for dataset in args.datasets:
        manifest = read_manifest(dataset)
        target = manifest.get("ratio_target")
        if target is None:
            raise InputError(
                f"dataset {str(dataset)!r} has no ratio_target in its manifest"
            )
        labels = manifest.get("labels")
        if labels is None:
            raise InputError(
                f"dataset {str(dataset)!r} has no labels in its manifest"
            )
        entries.append((Path(dataset).name, float(target), [bool(v) for v in labels]))
    report = ratio_report(entries)
    write_ratio_csv(args.out, report)
    _write_run_record(
        Path(args.out),
        "eval ratios",
        {"datasets": [str(d) for d in args.datasets], "out": str(args.out)},
    )
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "features": _cmd_features,
    "train-detector": _cmd_train_detector,
    "detect": _cmd_detect,
    "ree": _cmd_ree,
    "deblur": _cmd_deblur,
    "eval": _cmd_eval,
}


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        metavar="JSON",
        help="JSON file of tuning keys; flags override it, it overrides defaults",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Blur-aware video restoration toolkit over PNG frame directories.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    # dest must not be "command": the deblur subparser owns a --command flag
    # whose default would otherwise clobber the selected subcommand name.
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="average an HFR clip into a labeled blur/sharp dataset")
    p.add_argument("--hfr", required=True, metavar="DIR", help="high-frame-rate source frames")
    p.add_argument("--ratio", required=True, type=float, help="target sharp-frame ratio in [0, 0.5]")
    p.add_argument("--seed", required=True, type=int, help="RNG seed (mandatory: no silent entropy)")
    p.add_argument("--out", required=True, metavar="DIR", help="dataset output directory")
    p.add_argument("--bit-depth", dest="bit_depth", type=int, choices=(8, 16))
    _add_config_flag(p)

    p = sub.add_parser("features", help="compute the six sharpness features per frame")
    p.add_argument("--video", required=True, metavar="DIR")
    p.add_argument("--k", type=int, help="pooling kernel size (default 11)")
    p.add_argument("--jobs", type=int)
    p.add_argument("--manifest", metavar="PATH", help="manifest supplying labels (else autodetected)")
    p.add_argument("--out", required=True, metavar="CSV")
    _add_config_flag(p)

    p = sub.add_parser("train-detector", help="fit the logistic sharp/blur detector")
    p.add_argument("--features", required=True, metavar="CSV", help="labeled feature file")
    p.add_argument("--out", required=True, metavar="MODEL.json")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--l2-penalty", dest="l2_penalty", type=float)
    p.add_argument("--threshold", type=float)
    _add_config_flag(p)

    p = sub.add_parser("detect", help="score frames and locate closest sharp references")
    p.add_argument("--video", required=True, metavar="DIR")
    p.add_argument("--model", required=True, metavar="MODEL.json")
    p.add_argument("--k", type=int)
    p.add_argument("--gamma", type=int, help="lookback horizon (default 7)")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", required=True, metavar="CSV")
    _add_config_flag(p)

    p = sub.add_parser("ree", help="restore edges of every frame by deconvolution")
    p.add_argument("--video", required=True, metavar="DIR")
    p.add_argument("--iterations", type=int)
    p.add_argument("--tv-weight", dest="tv_weight", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--psf-size", dest="psf_size", type=int)
    p.add_argument("--psf-sigma", dest="psf_sigma", type=float)
    p.add_argument("--bit-depth", dest="bit_depth", choices=("8", "16", "auto"))
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flag(p)

    p = sub.add_parser("deblur", help="run the full detect-and-restore pipeline")
    p.add_argument("--video", required=True, metavar="DIR")
    p.add_argument("--model", required=True, metavar="MODEL.json")
    p.add_argument("--backend", choices=("passthrough", "rl_deconv", "external"))
    p.add_argument("--k", type=int)
    p.add_argument("--gamma", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--tv-weight", dest="tv_weight", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--psf-size", dest="psf_size", type=int)
    p.add_argument("--psf-sigma", dest="psf_sigma", type=float)
    p.add_argument("--command", help="external restorer command line (shell-quoted)")
    p.add_argument("--timeout", type=float)
    p.add_argument("--bit-depth", dest="bit_depth", choices=("8", "16", "auto"))
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flag(p)

    p = sub.add_parser("eval", help="score restored frames, or tabulate dataset ratios")
    p.add_argument("--restored", metavar="DIR")
    p.add_argument("--gt", metavar="DIR")
    p.add_argument("--out", metavar="JSON")
    _add_config_flag(p)
    eval_sub = p.add_subparsers(dest="eval_command", metavar="MODE")
    p_ratios = eval_sub.add_parser(
        "ratios", help="tabulate measured sharp ratios of synthesized datasets"
    )
    p_ratios.add_argument("--datasets", required=True, nargs="+", metavar="DIR")
    p_ratios.add_argument("--out", required=True, metavar="CSV")
    _add_config_flag(p_ratios)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.subcommand](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ToolkitError, OSError) as exc:
        message = " ".join(str(exc).split()) or exc.__class__.__name__
        print(f"error: {message}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
