"""deblurkit: video deblurring support toolkit.

Builds and evaluates the classical side of a sharp-frame-aware video
deblurring stack: synthetic blur/sharp dataset generation by temporal
frame averaging, six autofocus sharpness metrics, a logistic-regression
sharp/blur detector with a windowed closest-sharp search, Richardson-Lucy
edge emphasis, a pipeline orchestrator with a pluggable restorer backend,
and PSNR/SSIM/ratio evaluation reports.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    BackendError,
    DimensionError,
    InputError,
    ParameterError,
    ToolkitError,
    TrainingError,
    ValidationError,
)
from .detector import (
    DetectorModel,
    SharpFrameClassifier,
    evaluate_detector,
    find_closest_sharp,
    fit_detector,
    predict_sharp,
)
from .focusmetrics import (
    FEATURE_NAMES,
    FocusFeatureExtractor,
    FocusFeatures,
    feature_vector,
)
from .quality import EvalReport, RatioReport, evaluate_video, psnr, ratio_report, ssim
from .restore import (
    PipelineConfig,
    ReeConfig,
    RestorerSpec,
    Triplet,
    ree,
    restore_frame,
    richardson_lucy,
    run_pipeline,
)
from .synth import BlurVideo, SynthConfig, measured_ratio, synthesize

__all__ = [
    "__version__",
    "ToolkitError",
    "ValidationError",
    "DimensionError",
    "ParameterError",
    "InputError",
    "TrainingError",
    "BackendError",
    "FEATURE_NAMES",
    "FocusFeatures",
    "FocusFeatureExtractor",
    "feature_vector",
    "DetectorModel",
    "SharpFrameClassifier",
    "fit_detector",
    "predict_sharp",
    "find_closest_sharp",
    "evaluate_detector",
    "BlurVideo",
    "SynthConfig",
    "synthesize",
    "measured_ratio",
    "ReeConfig",
    "RestorerSpec",
    "PipelineConfig",
    "Triplet",
    "richardson_lucy",
    "ree",
    "restore_frame",
    "run_pipeline",
    "psnr",
    "ssim",
    "EvalReport",
    "RatioReport",
    "evaluate_video",
    "ratio_report",
]
