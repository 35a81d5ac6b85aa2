"""Sharp/blur frame classification and the windowed closest-sharp search.

The classifier is a plain logistic regression over the six sharpness
features, fitted by full-batch gradient descent with a fixed schedule so
results are bit-reproducible. Features are z-scored with statistics from
the training set; the fitted state serializes to a small JSON document.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .errors import InputError, TrainingError
from .focusmetrics import FEATURE_NAMES, FocusFeatures

MODEL_SCHEMA_VERSION = 1

#: Serialized stand-in for "no sharp frame found" in reports.
NO_SHARP_FRAME = -1


@dataclass(frozen=True)
class DetectorModel:
    """Frozen logistic-regression state plus standardization statistics."""

    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    threshold: float = 0.5
    schema_version: int = MODEL_SCHEMA_VERSION

    def __post_init__(self):
        for name in ("weights", "feature_means", "feature_stds"):
            value = np.asarray(getattr(self, name), dtype=np.float64)
            if value.shape != (len(FEATURE_NAMES),):
                raise InputError(f"{name} must have shape (6,), got {value.shape}")
            object.__setattr__(self, name, value)
        if (self.feature_stds <= 0).any():
            raise InputError("feature_stds must all be positive")
        if not 0.0 < self.threshold < 1.0:
            raise InputError(f"threshold must lie in (0, 1), got {self.threshold!r}")

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.feature_means) / self.feature_stds

    def predict_proba(self, X) -> np.ndarray:
        """Sharp-class probability for each row of a feature matrix."""
        X = _as_feature_matrix(X)
        return expit(self.standardize(X) @ self.weights + self.bias)

    def predict(self, X) -> np.ndarray:
        """Boolean sharp labels: probability >= threshold."""
        return self.predict_proba(X) >= self.threshold

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "weights": [float(v) for v in self.weights],
            "bias": float(self.bias),
            "feature_means": [float(v) for v in self.feature_means],
            "feature_stds": [float(v) for v in self.feature_stds],
            "threshold": float(self.threshold),
            "feature_names": list(FEATURE_NAMES),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DetectorModel":
        version = payload.get("schema_version")
        if version != MODEL_SCHEMA_VERSION:
            raise InputError(f"unsupported detector schema version {version!r}")
        names = payload.get("feature_names")
        if names is not None and tuple(names) != FEATURE_NAMES:
            raise InputError(f"model feature order {names!r} does not match {FEATURE_NAMES}")
        return cls(
            weights=np.array(payload["weights"], dtype=np.float64),
            bias=float(payload["bias"]),
            feature_means=np.array(payload["feature_means"], dtype=np.float64),
            feature_stds=np.array(payload["feature_stds"], dtype=np.float64),
            threshold=float(payload.get("threshold", 0.5)),
        )

    def save(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "DetectorModel":
        with open(path) as handle:
            return cls.from_dict(json.load(handle))

    def with_threshold(self, threshold: float) -> "DetectorModel":
        return replace(self, threshold=float(threshold))


class SharpFrameClassifier(ClassifierMixin, BaseEstimator):
    """Logistic-regression sharp/blur classifier with a fixed fit schedule.

    Parameters
    ----------
    learning_rate : gradient-descent step size.
    max_iter : iteration budget for full-batch descent.
    tol : stop when the gradient infinity-norm drops below this.
    l2_penalty : ridge strength on the weights (bias unpenalized).
    threshold : sharp-label cutoff on the predicted probability.

    The fit is deterministic: zero initialization, full-batch gradients,
    no shuffling, so identical inputs give bit-identical models.
    """

    def __init__(self, learning_rate: float = 0.1, max_iter: int = 5000,
                 tol: float = 1e-6, l2_penalty: float = 1e-4,
                 threshold: float = 0.5):
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tol = tol
        self.l2_penalty = l2_penalty
        self.threshold = threshold

    def fit(self, X, y) -> "SharpFrameClassifier":
        X = _as_feature_matrix(X)
        y = np.asarray(y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise InputError(f"labels must be (n,) matching X, got {y.shape}")
        if X.shape[0] < 2:
            raise TrainingError("need at least 2 training samples")
        y = y.astype(np.float64)
        if not np.isin(y, (0.0, 1.0)).all():
            raise InputError("labels must be binary 0/1")
        if len(np.unique(y)) < 2:
            raise TrainingError("training set contains a single class")

        means = X.mean(axis=0)
        stds = X.std(axis=0)
        degenerate = stds == 0.0
        if degenerate.any():
            names = [FEATURE_NAMES[i] for i in np.flatnonzero(degenerate)]
            warnings.warn(
                f"constant feature column(s) {names}; std replaced by 1",
                RuntimeWarning,
                stacklevel=2,
            )
            stds = np.where(degenerate, 1.0, stds)

        Z = (X - means) / stds
        n = Z.shape[0]
        weights = np.zeros(Z.shape[1])
        bias = 0.0
        iterations = 0
        for iterations in range(1, int(self.max_iter) + 1):
            prob = expit(Z @ weights + bias)
            residual = prob - y
            grad_w = Z.T @ residual / n + self.l2_penalty * weights
            grad_b = float(residual.mean())
            if max(np.abs(grad_w).max(), abs(grad_b)) < self.tol:
                iterations -= 1
                break
            weights -= self.learning_rate * grad_w
            bias -= self.learning_rate * grad_b

        self.model_ = DetectorModel(
            weights=weights,
            bias=bias,
            feature_means=means,
            feature_stds=stds,
            threshold=self.threshold,
        )
        self.coef_ = weights.reshape(1, -1)
        self.intercept_ = np.array([bias])
        self.n_iter_ = iterations
        self.classes_ = np.array([0, 1])
        return self

    def _check_fitted(self) -> DetectorModel:
        model = getattr(self, "model_", None)
        if model is None:
            raise NotFittedError("SharpFrameClassifier is not fitted yet")
        return model

    def decision_function(self, X) -> np.ndarray:
        model = self._check_fitted()
        return model.standardize(_as_feature_matrix(X)) @ model.weights + model.bias

    def predict_proba(self, X) -> np.ndarray:
        sharp = expit(self.decision_function(X))
        return np.column_stack([1.0 - sharp, sharp])

    def predict(self, X) -> np.ndarray:
        model = self._check_fitted()
        return (expit(self.decision_function(X)) >= model.threshold).astype(int)


def fit_detector(X, y, **params) -> DetectorModel:
    """Convenience wrapper: fit a SharpFrameClassifier, return its model."""
    return SharpFrameClassifier(**params).fit(X, y).model_


def predict_sharp(model: DetectorModel, features) -> tuple[float, bool]:
    """Score one feature vector: (sharp probability, sharp label)."""
    row = _as_feature_matrix(features)
    if row.shape[0] != 1:
        raise InputError(f"expected a single feature vector, got {row.shape[0]} rows")
    probability = float(model.predict_proba(row)[0])
    return probability, probability >= model.threshold


def find_closest_sharp(labels, index: int, lookback: int = 7):
    """Most recent sharp-labeled index strictly before ``index``.

    Scans ``max(0, index - lookback) .. index - 1`` and returns the largest
    index whose label is sharp, or None when the window has none (always
    the case at index 0). The current frame itself is never a candidate.
    """
    labels = np.asarray(labels, dtype=bool)
    if not 0 <= index < labels.shape[0]:
        raise InputError(f"frame index {index} outside sequence of {labels.shape[0]}")
    if lookback < 1:
        raise InputError(f"lookback must be >= 1, got {lookback!r}")
    for candidate in range(index - 1, max(0, index - lookback) - 1, -1):
        if labels[candidate]:
            return candidate
    return None


@dataclass(frozen=True)
class DetectionScores:
    """Binary classification tallies with sharp as the positive class."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    true_positives: int
    false_positives: int
    false_negatives: int
    true_negatives: int
    #: False when no positive prediction exists, so precision (and f1)
    #: are reported as 0 by convention rather than left undefined.
    precision_defined: bool = True


def evaluate_detector(y_true, y_pred) -> DetectionScores:
    """Accuracy/precision/recall/F1 with sharp (1) as the positive class."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    if y_true.size == 0:
        raise InputError("cannot evaluate an empty test set")
    if y_true.shape != y_pred.shape:
        raise InputError(f"label shapes differ: {y_true.shape} vs {y_pred.shape}")
    tp = int(np.sum(y_true & y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    tn = int(np.sum(~y_true & ~y_pred))
    accuracy = (tp + tn) / y_true.size
    precision_defined = (tp + fp) > 0
    precision = tp / (tp + fp) if precision_defined else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return DetectionScores(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        true_negatives=tn,
        precision_defined=precision_defined,
    )


def write_detection_csv(path, rows) -> None:
    """Write per-frame detection records.

    Each row is (frame_index, probability, sharp_label, closest_sharp) with
    closest_sharp serialized as -1 when no sharp frame was found.
    """
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["frame_index", "probability", "label", "t_i"])
        for index, probability, label, closest in rows:
            writer.writerow([
                int(index),
                repr(float(probability)),
                int(label),
                NO_SHARP_FRAME if closest is None else int(closest),
            ])


def read_detection_csv(path):
    """Read back detection records; -1 maps to None for closest_sharp."""
    out = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["frame_index", "probability", "label", "t_i"]:
            raise InputError(f"unexpected detection header {header!r}")
        for record in reader:
            if not record:
                continue
            closest = int(record[3])
            out.append((
                int(record[0]),
                float(record[1]),
                bool(int(record[2])),
                None if closest == NO_SHARP_FRAME else closest,
            ))
    return out


def _as_feature_matrix(X) -> np.ndarray:
    if isinstance(X, FocusFeatures):
        X = X.as_array()[None, :]
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != len(FEATURE_NAMES):
        raise InputError(f"feature matrix must be (n, 6), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise InputError("feature matrix contains NaN or Inf")
    return arr
