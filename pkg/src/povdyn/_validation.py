"""Small input-validation helpers used across modules."""
from __future__ import annotations

import numpy as np

from .exceptions import DomainError


def check_positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be finite and > 0, got {value!r}")
    return float(value)


def check_nonnegative(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError(f"{name} must be finite and >= 0")
    return arr


def as_1d(name, values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def check_increasing(name, grid):
    grid = as_1d(name, grid)
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise DomainError(f"{name} must be strictly increasing with >= 2 points")
    return grid
