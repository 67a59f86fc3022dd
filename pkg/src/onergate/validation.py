"""Input checks shared by the estimators and the command-line front end."""
import numbers

import numpy as np

from .atom import check_density

__all__ = [
    "check_density",
    "check_periods",
    "check_positive",
    "check_nonnegative",
    "check_probability",
    "check_angle",
]


def check_periods(X, name="X"):
    """Return modulation periods as a 1-D float array.

    Accepts a scalar, a 1-D sequence or an (n, 1) column as used by
    scikit-learn style ``fit``/``predict`` calls.
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    elif arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"{name} must have a single column of periods, got shape {arr.shape}")
        arr = arr[:, 0]
    elif arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D or a single column, got {arr.ndim} dimensions")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(arr <= 0):
        raise ValueError(f"{name} must contain positive periods")
    return arr


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a non-negative finite number, got {value!r}")
    return float(value)


def check_probability(value, name, allow_zero=True):
    value = float(value)
    lo_ok = value >= 0 if allow_zero else value > 0
    if not (lo_ok and value <= 1):
        raise ValueError(f"{name} must lie in {'[0' if allow_zero else '(0'}, 1], got {value!r}")
    return value


def check_angle(value, name="theta"):
    value = float(value)
    if not 0 <= value <= np.pi:
        raise ValueError(f"{name} must lie in [0, pi], got {value!r}")
    return value
