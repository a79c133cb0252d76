"""Kummer's confluent hypergeometric function for real arguments."""
from __future__ import annotations

import math

import numpy as np

from ..exceptions import HypergeometricOverflowError, PoleError

_MAX_TERMS = 20000
_EXP_LIMIT = 700.0


def _series(a, b, z):
    # z >= 0 here; summation stops once terms are shrinking and negligible
    total = 1.0
    term = 1.0
    for k in range(_MAX_TERMS):
        ratio = (a + k) / (b + k) * z / (k + 1)
        term *= ratio
        if term == 0.0:
            return total
        total += term
        if abs(term) < 1e-16 * abs(total) and abs(ratio) < 1.0:
            return total
    raise ArithmeticError(f"1F1 series did not converge for a={a}, b={b}, z={z}")


def _kummer_scalar(a, b, z):
    if b <= 0 and float(b).is_integer():
        raise PoleError(f"1F1 has a pole at non-positive integer b={b}")
    if z == 0.0:
        return 1.0
    if abs(z) > _EXP_LIMIT:
        raise HypergeometricOverflowError(
            f"exp(z) out of range in Kummer transformation: a={a}, b={b}, z={z}, "
            f"limit |z| <= {_EXP_LIMIT}")
    if z > 0:
        return _series(a, b, z)
    return math.exp(z) * _series(b - a, b, -z)


_kummer_ufunc = np.frompyfunc(_kummer_scalar, 3, 1)


def kummer_1f1(a, b, z):
    """Confluent hypergeometric function ``1F1(a; b; z)``.

    The Taylor series is always summed at a non-negative argument; for
    ``z < 0`` Kummer's transformation ``F(a,b,z) = e^z F(b-a,b,-z)`` is applied
    first. Arguments broadcast like numpy ufuncs.

    Raises
    ------
    PoleError
        If ``b`` is zero or a negative integer.
    HypergeometricOverflowError
        If ``|z|`` exceeds 700 (no asymptotic branch is provided).
    """
    if np.ndim(a) == 0 and np.ndim(b) == 0 and np.ndim(z) == 0:
        return _kummer_scalar(float(a), float(b), float(z))
    return _kummer_ufunc(np.asarray(a, float), np.asarray(b, float),
                         np.asarray(z, float)).astype(float)
