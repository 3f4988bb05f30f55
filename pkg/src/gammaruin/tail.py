"""Standard normal tail ``Psi(x) = P(N > x)`` accurate deep into the tail.

``scipy.special.erfc`` loses a few digits for large arguments; above
``x = 3`` we use ``phi(x) * M(x)`` with the Mills ratio ``M`` from its
continued fraction and a compensated ``exp(-x^2/2)``.  :func:`log_psi`
stays finite where ``Psi`` underflows.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

__all__ = ["psi", "log_psi", "mills_ratio", "LOG_SPACE_THRESHOLD"]

LOG_SPACE_THRESHOLD = 38.0
_SWITCH = 3.0
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SPLIT = 134217729.0  # 2^27 + 1


def mills_ratio(x: float) -> float:
    """``Psi(x) / phi(x)`` for ``x >= 3`` by the modified Lentz algorithm."""
    tiny = 1e-300
    # M(x) = 1/(x + 1/(x + 2/(x + 3/(x + ...))))
    f = x
    c = x
    d = 0.0
    for k in range(1, 500):
        d = x + k * d
        d = tiny if d == 0.0 else d
        c = x + k / c
        c = tiny if c == 0.0 else c
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return 1.0 / f


def _half_square(x: float) -> tuple[float, float]:
    """``x^2/2`` as an unevaluated sum ``hi + lo`` (Dekker split)."""
    t = _SPLIT * x
    xh = t - (t - x)
    xl = x - xh
    return 0.5 * xh * xh, 0.5 * (2.0 * xh * xl + xl * xl)


def _psi_scalar(x: float) -> float:
    if x < _SWITCH:
        return 0.5 * float(special.erfc(x / math.sqrt(2.0)))
    hi, lo = _half_square(x)
    return math.exp(-hi) * math.exp(-lo) * mills_ratio(x) / math.sqrt(2.0 * math.pi)


def _log_psi_scalar(x: float) -> float:
    if x < _SWITCH:
        return math.log(0.5 * float(special.erfc(x / math.sqrt(2.0)))) if x > -8 else math.log1p(-_psi_scalar(-x))
    hi, lo = _half_square(x)
    return -hi - lo - _LOG_SQRT_2PI + math.log(mills_ratio(x))


def psi(x):
    """``P(N > x)`` elementwise; underflows to 0 beyond ``x ~ 38.5``."""
    if np.ndim(x) == 0:
        return _psi_scalar(float(x))
    return np.vectorize(_psi_scalar, otypes=[float])(x)


def log_psi(x):
    """``log P(N > x)`` elementwise, finite for every real ``x``."""
    if np.ndim(x) == 0:
        return _log_psi_scalar(float(x))
    return np.vectorize(_log_psi_scalar, otypes=[float])(x)
