"""Small argument checks shared by the estimator, the config loader and the CLI."""

from __future__ import annotations

import math
from numbers import Real

import numpy as np

HALF_PI = 0.5 * math.pi


def check_scalar(value, name: str, *, lo=None, hi=None, lo_open=False, hi_open=False) -> float:
    """Return ``value`` as float after a range check (raises ValueError)."""
    if isinstance(value, bool) or not isinstance(value, (Real, np.floating, np.integer)):
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ValueError(f"{name} must be a real number, got {value!r}") from None
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"{name} must be finite, got {v}")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ValueError(f"{name}={v} outside the admissible range {'(' if lo_open else '['}{lo}, "
                         f"{hi if hi is not None else 'inf'}{')' if hi_open or hi is None else ']'}")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ValueError(f"{name}={v} outside the admissible range {'(' if lo_open else '['}{lo}, "
                         f"{hi}{')' if hi_open else ']'}")
    return v


def check_int(value, name: str, *, lo=None) -> int:
    if isinstance(value, bool):
        raise ValueError(f"{name} must be an integer")
    try:
        iv = int(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be an integer, got {value!r}") from None
    if iv != float(value):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if lo is not None and iv < lo:
        raise ValueError(f"{name}={iv} must be >= {lo}")
    return iv


def check_theta1(value) -> float:
    return check_scalar(value, "theta1", lo=0.0, hi=HALF_PI, lo_open=True)


def check_theta2(value) -> float:
    return check_scalar(value, "theta2", lo=0.0, hi=HALF_PI)


def check_poles(poles, delta: float) -> list:
    """Real poles strictly left of ``-delta``."""
    arr = np.atleast_1d(np.asarray(poles, dtype=float))
    if arr.size == 0:
        raise ValueError("at least one pole is required")
    if np.any(arr >= -delta):
        raise ValueError(f"poles {arr.tolist()} must lie left of -delta={-delta}")
    return arr.tolist()


def check_sector(k_phi, dk_phi) -> tuple:
    k = check_scalar(k_phi, "k_phi", lo=0.0, lo_open=True)
    dk = check_scalar(dk_phi, "dk_phi", lo=0.0, hi=k, lo_open=True, hi_open=True)
    return k, dk


def check_is_fitted(obj, attrs=("basis_",)) -> None:
    """Raise if an estimator has not been fitted (sklearn's helper does the work)."""
    from sklearn.utils.validation import check_is_fitted as _sk_check

    _sk_check(obj, list(attrs))
