"""Input checks shared by the functional API and the estimators."""
from __future__ import annotations

import numpy as np


class SolverError(RuntimeError):
    """An iterative solver hit its cap before meeting tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual={residual:.3e})")
        self.residual = residual


def check_simplex(x, n_channels=None, atol=1e-9, name="x") -> np.ndarray:
    """Return ``x`` as a float array after checking it lies on the simplex (last axis)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        raise ValueError(f"{name} must be a vector of channel shares")
    if n_channels is not None and arr.shape[-1] != n_channels:
        raise ValueError(f"{name} has {arr.shape[-1]} entries, expected {n_channels}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(arr < -atol):
        raise ValueError(f"{name} has negative entries")
    if np.any(np.abs(arr.sum(axis=-1) - 1.0) > atol):
        raise ValueError(f"{name} does not sum to 1")
    return arr


def check_interior(x, name="x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0.0):
        raise ValueError(f"{name} must have strictly positive entries")
    return arr


def check_assignment(assignment, n_channels: int, name="assignment") -> np.ndarray:
    arr = np.asarray(assignment)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d array of channel indices")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError(f"{name} must hold integer channel indices")
        arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= n_channels:
        raise ValueError(f"{name} references a channel outside 0..{n_channels - 1}")
    return arr


def check_fraction(value, name, *, open_low=True, open_high=False) -> float:
    value = float(value)
    low_ok = value > 0.0 if open_low else value >= 0.0
    high_ok = value < 1.0 if open_high else value <= 1.0
    if not (low_ok and high_ok):
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise ValueError(f"{name} must lie in {lo}0, 1{hi}, got {value!r}")
    return value


def check_positive_int(value, name) -> int:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
