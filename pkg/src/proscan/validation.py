"""Input validation helpers built on top of :mod:`sklearn.utils.validation`."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array, column_or_1d


def check_1d(values, name="array", *, min_length=1, dtype=np.float64):
    """Return ``values`` as a finite 1-D float array of at least ``min_length``."""
    arr = column_or_1d(check_array(np.atleast_1d(values), ensure_2d=False, dtype=dtype,
                                   ensure_min_samples=0), warn=False)
    if arr.size < min_length:
        raise ValueError(f"{name} needs at least {min_length} samples, got {arr.size}")
    return arr


def check_grid(wavelengths, name="wavelength grid", *, min_length=2):
    """Strictly increasing positive grid."""
    grid = check_1d(wavelengths, name, min_length=min_length)
    if np.any(grid <= 0):
        raise ValueError(f"{name} must be positive")
    if np.any(np.diff(grid) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return grid


def check_xy(x, y, names=("x", "y"), *, min_length=2):
    x = check_1d(x, names[0], min_length=min_length)
    y = check_1d(y, names[1], min_length=min_length)
    if x.shape != y.shape:
        raise ValueError(f"{names[0]} and {names[1]} differ in length ({x.size} vs {y.size})")
    return x, y


def check_positive(value, name, *, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (strict and value == 0):
        raise ValueError(f"{name} must be {'> 0' if strict else '>= 0'}, got {value!r}")
    return float(value)


def check_odd_window(window, length):
    if not isinstance(window, numbers.Integral) or window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window!r}")
    if window > length:
        raise ValueError(f"window {window} exceeds series length {length}")
    return int(window)
