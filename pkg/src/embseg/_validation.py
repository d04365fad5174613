"""Small input-validation helpers used by the public constructors."""

import numpy as np

from .errors import DimensionMismatchError, InvariantError


def as_float_array(data, name, ndim, dtype=np.float32):
    arr = np.array(data, dtype=dtype, order="C", copy=True)
    if arr.ndim != ndim:
        raise InvariantError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if any(s < 1 for s in arr.shape):
        raise InvariantError(f"{name} must have positive extent on every axis, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvariantError(f"{name} contains NaN or Inf")
    return arr


def check_range(arr, lo, hi, name):
    if arr.size and (arr.min() < lo or arr.max() > hi):
        raise InvariantError(f"{name} values must lie in [{lo}, {hi}]")


def check_same_grid(a, b, what):
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatchError(
            f"{what}: grids differ, {a.height}x{a.width} vs {b.height}x{b.width}"
        )


def check_positive(value, name):
    if not value > 0:
        raise InvariantError(f"{name} must be > 0, got {value!r}")


def check_non_negative(value, name):
    if value < 0:
        raise InvariantError(f"{name} must be >= 0, got {value!r}")
