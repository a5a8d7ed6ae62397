"""Small input checks shared by every module."""

import numbers

import numpy as np


def check_matrix(X, name, rows=None, cols=None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if rows is not None and X.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got {X.shape[0]}")
    if cols is not None and X.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def check_vector(v, name, size=None):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if size is not None and v.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def check_positive(x, name, strict=True):
    if not isinstance(x, numbers.Real) or not np.isfinite(x):
        raise ValueError(f"{name} must be a finite real number, got {x!r}")
    if strict and x <= 0:
        raise ValueError(f"{name} must be > 0, got {x}")
    if not strict and x < 0:
        raise ValueError(f"{name} must be >= 0, got {x}")
    return float(x)


def check_time(t):
    if not isinstance(t, numbers.Real) or not np.isfinite(t) or t < 0:
        raise ValueError(f"time must be a finite real >= 0, got {t!r}")
    return float(t)
