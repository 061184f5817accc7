"""Small input-validation helpers shared across modules."""

import numbers

import numpy as np

from .exceptions import ConfigError, GeometryError, GridError


def check_vec3(v, name="vector"):
    """Return ``v`` as a finite float array of shape (3,)."""
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise GeometryError(f"{name} must have shape (3,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name} has non-finite components")
    return arr


def check_positive(value, name, allow_zero=False):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ConfigError(f"must be a finite real number, got {value!r}", field=name)
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ConfigError(f"must be {bound}, got {value!r}", field=name)
    return float(value)


def check_index(index, size, name="index"):
    if not isinstance(index, numbers.Integral) or not 0 <= index < size:
        raise GeometryError(f"{name} {index!r} out of range [0, {size})")
    return int(index)


def check_pmf(pmf, name="pmf"):
    """Validate a count -> probability map and return it with int keys."""
    if not pmf:
        raise ConfigError("empty probability mass function", field=name)
    out = {}
    for k, p in pmf.items():
        if int(k) != k or k < 0:
            raise ConfigError(f"support value {k!r} is not a non-negative integer", field=name)
        if not np.isfinite(p) or p < 0:
            raise ConfigError(f"probability {p!r} is invalid", field=name)
        out[int(k)] = float(p)
    if abs(sum(out.values()) - 1.0) > 1e-12:
        raise ConfigError(f"probabilities sum to {sum(out.values())!r}, not 1", field=name)
    return out


def check_sorted_axis(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise GridError(f"{name} must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise GridError(f"{name} has non-finite entries")
    if arr.size > 1 and np.any(np.diff(arr) <= 0):
        raise GridError(f"{name} must be strictly increasing")
    return arr
