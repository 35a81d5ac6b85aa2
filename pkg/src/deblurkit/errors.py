"""Exception types shared across the toolkit.

The CLI maps ValidationError subclasses to exit code 1 with a single-line
machine-parseable message; anything else is a genuine bug and propagates.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for every error raised deliberately by this package."""


class ValidationError(ToolkitError, ValueError):
    """An input, parameter, or state failed a documented contract."""


class DimensionError(ValidationError):
    """Image or kernel dimensions incompatible with the requested operation."""


class ParameterError(ValidationError):
    """A configuration parameter is outside its documented domain."""


class InputError(ValidationError):
    """Runtime data is malformed: NaNs, empty sets, missing files, bad ranges."""


class TrainingError(ValidationError):
    """Detector fitting cannot proceed (e.g. a single-class training set)."""


class BackendError(ToolkitError, RuntimeError):
    """An external restorer backend failed; carries captured diagnostics."""

    def __init__(self, message: str, *, command=None, returncode=None, stderr=None):
        super().__init__(message)
        self.command = command
        self.returncode = returncode
        self.stderr = stderr
