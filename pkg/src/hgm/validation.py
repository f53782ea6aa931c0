"""Argument checks used by the public entry points."""

import math
import numbers

import numpy as np

from hgm.exceptions import ParameterError


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_real(value, name, low=-math.inf, high=math.inf, low_open=False, high_open=False):
    """Return ``value`` as a float after checking it lies in the given interval."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ParameterError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")
    too_low = value <= low if low_open else value < low
    too_high = value >= high if high_open else value > high
    if too_low or too_high:
        lb = "(" if low_open else "["
        rb = ")" if high_open else "]"
        raise ParameterError(f"{name} must lie in {lb}{low}, {high}{rb}, got {value}")
    return value


def check_unit_interval(value, name):
    return check_real(value, name, 0.0, 1.0)


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``.

    Accepts ``None``, an integer, a sequence of integers (hashed through
    ``SeedSequence``) or an existing generator, which is returned as is.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    if isinstance(seed, (list, tuple)):
        return np.random.default_rng(list(seed))
    raise ParameterError(f"cannot build a random generator from {seed!r}")
