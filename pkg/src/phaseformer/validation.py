"""Input validation helpers used at the public boundaries of the package."""

import numpy as np

from .errors import ContractError, ShapeError


def as_matrix(a, name="matrix"):
    """Coerce to a finite 2-D float64 array, raising ShapeError/ContractError."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite entries")
    return arr


def as_series(x, name="series", min_len=1):
    """Coerce to a finite 1-D float64 array of at least min_len entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if arr.size < min_len:
        raise ContractError(f"{name} needs at least {min_len} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite entries")
    return arr


def check_finite(arr, name="result"):
    """Raise ContractError if arr has NaN or Inf entries."""
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite entries")
    return arr


def check_count(n, name, minimum=1):
    """Validate an integer count, returning it as a plain int."""
    k = int(n)
    if k != n or k < minimum:
        raise ContractError(f"{name} must be an integer >= {minimum}, got {n!r}")
    return k
