"""The gamma-reflected transform and grid passage times.

``W(t) = X(t) - c t - gamma * min_{0 <= s <= t} (X(s) - c s)``, the minimum
taken over the closed interval, so ``W`` is evaluated with one running
minimum.  Passage detection uses the strict inequality ``W > u``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .path_sampler import GridSpec, PathSample

__all__ = [
    "ReflectedPath",
    "PassagePair",
    "ResolutionWarning",
    "reflect",
    "reflect_values",
    "sup_and_passages",
    "batch_passages",
    "check_resolution",
]

RESOLUTION_FACTOR = 50.0


class ResolutionWarning(UserWarning):
    """Grid step too coarse for the scale of a passage-time limit."""


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    return gamma


@dataclass(frozen=True, eq=False)
class ReflectedPath:
    grid: GridSpec
    w_values: np.ndarray
    c: float
    gamma: float


@dataclass(frozen=True)
class PassagePair:
    """First and last grid time with ``W > u`` (both ``None`` without ruin)."""

    tau1: float | None
    tau2: float | None
    u: float

    def __post_init__(self):
        if (self.tau1 is None) != (self.tau2 is None):
            raise ValueError("tau1 and tau2 must both be present or both absent")
        if self.tau1 is not None and self.tau1 > self.tau2:
            raise ValueError("tau1 must not exceed tau2")

    @property
    def ruined(self) -> bool:
        return self.tau1 is not None


def reflect_values(values: np.ndarray, times: np.ndarray, c: float, gamma: float) -> np.ndarray:
    """``W`` for path rows ``values`` (last axis is time)."""
    gamma = _check_gamma(gamma)
    drifted = np.asarray(values, dtype=float) - c * np.asarray(times, dtype=float)
    return drifted - gamma * np.minimum.accumulate(drifted, axis=-1)


def reflect(path: PathSample, c: float, gamma: float) -> ReflectedPath:
    """Apply the reflection to one sampled path."""
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    gamma = _check_gamma(gamma)
    w = reflect_values(path.values, path.grid.times, c, gamma)
    return ReflectedPath(path.grid, w, float(c), gamma)


def sup_and_passages(rp: ReflectedPath, u: float) -> tuple[float, PassagePair]:
    """Grid supremum of ``W`` and the first/last exceedance times of ``u``."""
    if not u > 0:
        raise ValueError(f"u must be positive, got {u}")
    w = rp.w_values
    sup = float(w.max())
    if sup <= u:
        return sup, PassagePair(None, None, float(u))
    above = np.flatnonzero(w > u)
    return sup, PassagePair(float(above[0] * rp.grid.step), float(above[-1] * rp.grid.step), float(u))


def batch_passages(values: np.ndarray, step: float, c: float, gamma: float, u: float) -> tuple[np.ndarray, np.ndarray]:
    """First and last exceedance index per row (``-1`` when none), compiled path."""
    gamma = _check_gamma(gamma)
    times = np.arange(values.shape[1]) * step
    return kernels.reflected_passages(np.asarray(values) - c * times, gamma, u)


def check_resolution(step: float, scale: float, what: str = "passage scale") -> bool:
    """Warn when ``step > scale / 50``; returns whether the grid is fine enough."""
    if not (math.isfinite(scale) and scale > 0):
        raise ValueError(f"scale must be positive, got {scale}")
    ok = step <= scale / RESOLUTION_FACTOR
    if not ok:
        warnings.warn(f"grid step {step:g} exceeds {what} {scale:g} / {RESOLUTION_FACTOR:g}", ResolutionWarning, stacklevel=2)
    return ok
