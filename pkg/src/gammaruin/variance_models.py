"""Variance functions of Gaussian processes with stationary increments.

A centred process with stationary increments is determined in law by its
variance function ``sigma2(t) = Var X(t)``.  This module builds the model
families used throughout the package (multiplex fBm, integrated stationary
processes, plain power laws), carries their regular-variation indices and
the two limit classifications that select an asymptotic regime:

* ``phi_class``: the limit of ``sigma2(u) / u`` as ``u -> inf`` (zero, finite, infinite);
* ``b_at_zero``: the behaviour of ``sigma2(s) / s`` as ``s -> 0``.

Models are immutable and picklable (the callables are bound methods of small
law objects), so they can be shipped to worker processes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "PhiKind",
    "PhiClass",
    "BKind",
    "BClass",
    "VarianceModel",
    "Correlation",
    "AssumptionCheck",
    "ValidationReport",
    "multiplex_fbm_model",
    "brownian_model",
    "power_model",
    "integrated_model",
    "exponential_correlation",
    "power_correlation",
    "tabulated_correlation",
    "validate_assumptions",
    "local_index",
]

ArrayLike = Any


class PhiKind(str, enum.Enum):
    ZERO = "zero"
    FINITE = "finite"
    INFINITE = "infinite"


@dataclass(frozen=True)
class PhiClass:
    """Limit of ``sigma2(u) / u`` at infinity."""

    kind: PhiKind
    value: float | None = None

    def __post_init__(self):
        if self.kind is PhiKind.FINITE and not (self.value and self.value > 0):
            raise ValueError("a finite phi needs a positive value")

    @classmethod
    def zero(cls) -> "PhiClass":
        return cls(PhiKind.ZERO)

    @classmethod
    def finite(cls, value: float) -> "PhiClass":
        return cls(PhiKind.FINITE, float(value))

    @classmethod
    def infinite(cls) -> "PhiClass":
        return cls(PhiKind.INFINITE)

    def __str__(self) -> str:
        return f"finite({self.value:g})" if self.kind is PhiKind.FINITE else self.kind.value


class BKind(str, enum.Enum):
    SUBLINEAR = "sublinear"  # sigma2(s) = o(s)
    LINEAR = "linear"  # sigma2(s) ~ b s
    SUPERLINEAR = "superlinear"  # s = o(sigma2(s))


@dataclass(frozen=True)
class BClass:
    """Behaviour of ``sigma2(s) / s`` as ``s -> 0``."""

    kind: BKind
    value: float | None = None

    def __post_init__(self):
        if self.kind is BKind.LINEAR and not (self.value and self.value > 0):
            raise ValueError("a linear class needs b > 0")

    @classmethod
    def sublinear(cls) -> "BClass":
        return cls(BKind.SUBLINEAR)

    @classmethod
    def linear(cls, b: float) -> "BClass":
        return cls(BKind.LINEAR, float(b))

    @classmethod
    def superlinear(cls) -> "BClass":
        return cls(BKind.SUPERLINEAR)

    def __str__(self) -> str:
        return f"linear({self.value:g})" if self.kind is BKind.LINEAR else self.kind.value


@dataclass(frozen=True, eq=False)
class VarianceModel:
    """Variance function ``sigma2`` with derivatives and classification.

    ``coef0`` / ``coef_inf`` are the leading coefficients of the power-law
    asymptotes ``sigma2(t) ~ coef * t**(2 alpha)`` at zero / infinity when
    they are known in closed form; ``None`` otherwise.
    """

    sigma2: Callable[[ArrayLike], ArrayLike]
    dsigma2: Callable[[ArrayLike], ArrayLike]
    d2sigma2: Callable[[ArrayLike], ArrayLike]
    alpha0: float
    alpha_inf: float
    phi_class: PhiClass
    b_at_zero: BClass
    label: str
    family: str = "custom"
    params: dict = field(default_factory=dict)
    coef0: float | None = None
    coef_inf: float | None = None
    brownian_rate: float | None = None  # sigma2(t) == rate * t exactly
    correlation: "Correlation | None" = None

    def sigma(self, t: ArrayLike) -> ArrayLike:
        return np.sqrt(self.sigma2(t))

    @property
    def independent_increments(self) -> bool:
        return self.brownian_rate is not None

    def leading_sigma2(self, t: ArrayLike, end: str) -> ArrayLike:
        """Power-law asymptote of ``sigma2`` at ``end`` ('zero' or 'infinity')."""
        coef, alpha = self._leading(end)
        return coef * np.asarray(t, dtype=float) ** (2.0 * alpha)

    def leading_sigma_inverse(self, y: float, end: str) -> float:
        """Inverse of ``t -> sqrt(leading_sigma2(t, end))``."""
        coef, alpha = self._leading(end)
        return (y / math.sqrt(coef)) ** (1.0 / alpha)

    def _leading(self, end: str) -> tuple[float, float]:
        if end == "zero":
            coef, alpha = self.coef0, self.alpha0
        elif end == "infinity":
            coef, alpha = self.coef_inf, self.alpha_inf
        else:
            raise ValueError(f"end must be 'zero' or 'infinity', got {end!r}")
        if coef is None:
            raise ValueError(f"model {self.label!r} has no closed-form leading coefficient at {end}")
        return coef, alpha

    def spec(self) -> dict:
        """Serializable description (family + parameters)."""
        return {"family": self.family, **self.params}

    def __repr__(self) -> str:
        return f"VarianceModel({self.label!r}, phi={self.phi_class}, b={self.b_at_zero})"


# ---------------------------------------------------------------------------
# power-law families


class _PowerSum:
    """sigma2(t) = sum_i w_i t^(2 H_i)."""

    def __init__(self, hurst: Sequence[float], weights: Sequence[float] | None = None):
        self.hurst = np.asarray(hurst, dtype=float)
        self.weights = np.ones_like(self.hurst) if weights is None else np.asarray(weights, dtype=float)

    def _terms(self, t, power_shift, factor):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for h, w, f in zip(self.hurst, self.weights, factor):
            p = 2.0 * h - power_shift
            if p == 0:
                out = out + w * f
            else:
                with np.errstate(divide="ignore"):
                    out = out + w * f * np.power(t, p)
        return out if out.ndim else float(out)

    def sigma2(self, t):
        return self._terms(t, 0, np.ones_like(self.hurst))

    def dsigma2(self, t):
        return self._terms(t, 1, 2.0 * self.hurst)

    def d2sigma2(self, t):
        return self._terms(t, 2, 2.0 * self.hurst * (2.0 * self.hurst - 1.0))


def _phi_from_alpha(alpha_inf: float, coef_inf: float) -> PhiClass:
    if alpha_inf < 0.5:
        return PhiClass.zero()
    if alpha_inf > 0.5:
        return PhiClass.infinite()
    return PhiClass.finite(coef_inf)


def _b_from_alpha(alpha0: float, coef0: float) -> BClass:
    if alpha0 < 0.5:
        return BClass.superlinear()
    if alpha0 > 0.5:
        return BClass.sublinear()
    return BClass.linear(coef0)


def multiplex_fbm_model(hurst: Sequence[float]) -> VarianceModel:
    """Sum of independent standard fBm's, ``sigma2(t) = sum t^(2 H_i)``.

    ``hurst`` must be ascending with ``H_1 < H_2 <= ... <= H_{n-1} < H_n``
    (only the end points need to be strict).
    """
    h = [float(x) for x in np.atleast_1d(hurst)]
    if not h:
        raise ValueError("need at least one Hurst index")
    if any(not 0.0 < x < 1.0 for x in h):
        raise ValueError(f"Hurst indices must lie in (0, 1), got {h}")
    if any(b < a for a, b in zip(h, h[1:])):
        raise ValueError(f"Hurst indices must be sorted ascending, got {h}")
    if len(h) > 1 and (h[0] == h[1] or h[-2] == h[-1]):
        raise ValueError(f"the smallest and largest Hurst index must be unique, got {h}")
    law = _PowerSum(h)
    label = "mfbm[" + ",".join(f"{x:g}" for x in h) + "]"
    return VarianceModel(
        sigma2=law.sigma2,
        dsigma2=law.dsigma2,
        d2sigma2=law.d2sigma2,
        alpha0=h[0],
        alpha_inf=h[-1],
        phi_class=_phi_from_alpha(h[-1], 1.0),
        b_at_zero=_b_from_alpha(h[0], 1.0),
        label=label,
        family="multiplex_fbm",
        params={"hurst": h},
        coef0=1.0,
        coef_inf=1.0,
        brownian_rate=1.0 if h == [0.5] else None,
    )


def brownian_model(rate: float = 1.0) -> VarianceModel:
    """``sigma2(t) = rate * t`` (scaled Brownian motion)."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    law = _PowerSum([0.5], [rate])
    return VarianceModel(
        sigma2=law.sigma2,
        dsigma2=law.dsigma2,
        d2sigma2=law.d2sigma2,
        alpha0=0.5,
        alpha_inf=0.5,
        phi_class=PhiClass.finite(rate),
        b_at_zero=BClass.linear(rate),
        label="bm" if rate == 1.0 else f"bm(rate={rate:g})",
        family="brownian",
        params={"rate": float(rate)},
        coef0=float(rate),
        coef_inf=float(rate),
        brownian_rate=float(rate),
    )


def power_model(alpha: float, scale: float = 1.0) -> VarianceModel:
    """``sigma2(t) = scale^2 * t^(2 alpha)`` for ``alpha`` in (0, 1].

    ``alpha = 1`` (the degenerate line ``t * N``) is allowed here because it
    appears as a local process in the constants.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if scale <= 0:
        raise ValueError("scale must be positive")
    k = float(scale) ** 2
    law = _PowerSum([alpha], [k])
    return VarianceModel(
        sigma2=law.sigma2,
        dsigma2=law.dsigma2,
        d2sigma2=law.d2sigma2,
        alpha0=float(alpha),
        alpha_inf=float(alpha),
        phi_class=_phi_from_alpha(alpha, k),
        b_at_zero=_b_from_alpha(alpha, k),
        label=f"fbm({alpha:g})" if scale == 1.0 else f"{scale:g}*fbm({alpha:g})",
        family="power",
        params={"alpha": float(alpha), "scale": float(scale)},
        coef0=k,
        coef_inf=k,
        brownian_rate=k if alpha == 0.5 else None,
    )


# ---------------------------------------------------------------------------
# integrated stationary processes


@dataclass(frozen=True, eq=False)
class Correlation:
    """Correlation function ``R`` of a stationary process, ``R(0) = 1``.

    ``kind`` is ``"SRD"`` (integrable) or ``"LRD"`` (regularly varying with
    index ``2H - 2``).  ``tail_coef`` is ``C`` in ``R(t) ~ C t^(2H-2)`` for LRD.
    """

    func: Callable[[ArrayLike], ArrayLike]
    kind: str
    label: str
    params: dict
    hurst: float | None = None
    integral: float | None = None  # G = int_0^inf R for SRD, when known exactly
    tail_coef: float | None = None

    def __call__(self, t):
        return self.func(t)


class _Exponential:
    def __init__(self, rate):
        self.rate = rate

    def __call__(self, t):
        return np.exp(-self.rate * np.asarray(t, dtype=float))


class _PowerDecay:
    def __init__(self, hurst):
        self.exponent = 2.0 * hurst - 2.0

    def __call__(self, t):
        return np.power(1.0 + np.asarray(t, dtype=float), self.exponent)


class _Tabulated:
    def __init__(self, t, r, tail_rate=None, tail_exponent=None):
        self.t = np.asarray(t, dtype=float)
        self.r = np.asarray(r, dtype=float)
        self.tail_rate = tail_rate
        self.tail_exponent = tail_exponent

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        inside = np.interp(t, self.t, self.r)
        t_last, r_last = self.t[-1], self.r[-1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.tail_exponent is not None:
                tail = r_last * np.power(np.maximum(t, t_last) / t_last, self.tail_exponent)
            else:
                tail = r_last * np.exp(-self.tail_rate * np.maximum(t - t_last, 0.0))
        out = np.where(t <= t_last, inside, tail)
        return out if out.ndim else float(out)


def exponential_correlation(rate: float = 1.0) -> Correlation:
    """``R(t) = exp(-rate t)``; short-range dependent with ``G = 1 / rate``."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    return Correlation(_Exponential(float(rate)), "SRD", f"exp({rate:g})", {"correlation": "exponential", "rate": float(rate)},
                       integral=1.0 / rate)


def power_correlation(hurst: float) -> Correlation:
    """``R(t) = (1 + t)^(2H - 2)``; long-range dependent for ``H`` in (1/2, 1)."""
    if not 0.5 < hurst < 1.0:
        raise ValueError(f"LRD index H must lie in (1/2, 1), got {hurst}")
    return Correlation(_PowerDecay(float(hurst)), "LRD", f"pow({hurst:g})", {"correlation": "power", "hurst": float(hurst)},
                       hurst=float(hurst), tail_coef=1.0)


def tabulated_correlation(t: Sequence[float], values: Sequence[float], kind: str = "SRD",
                          hurst: float | None = None) -> Correlation:
    """Piecewise-linear ``R`` from a table starting at ``t = 0``.

    Beyond the table the tail is exponential (SRD, rate fitted on the last
    two points) or the power law ``t^(2H-2)`` through the last point (LRD).
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.shape != r.shape or t.size < 2:
        raise ValueError("need matching 1-d tables with at least two points")
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ValueError("table times must start at 0 and increase")
    if not (r[-1] > 0 and r[-2] > r[-1]):
        raise ValueError("the last two table values must be positive and decreasing")
    params = {"correlation": "tabulated", "t": t.tolist(), "values": r.tolist(), "kind": kind}
    if kind == "SRD":
        rate = -math.log(r[-1] / r[-2]) / (t[-1] - t[-2])
        g = float(np.sum(0.5 * (r[1:] + r[:-1]) * np.diff(t))) + r[-1] / rate
        return Correlation(_Tabulated(t, r, tail_rate=rate), "SRD", "tabulated", params, integral=g)
    if kind == "LRD":
        if hurst is None or not 0.5 < hurst < 1.0:
            raise ValueError(f"LRD index H must lie in (1/2, 1), got {hurst}")
        params["hurst"] = float(hurst)
        coef = r[-1] * t[-1] ** (2.0 - 2.0 * hurst)
        return Correlation(_Tabulated(t, r, tail_exponent=2.0 * hurst - 2.0), "LRD", "tabulated", params,
                           hurst=float(hurst), tail_coef=coef)
    raise ValueError(f"kind must be 'SRD' or 'LRD', got {kind!r}")


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


class _IntegratedLaw:
    """sigma2(t) = 2 int_0^t (t - s) R(s) ds with a cumulative quadrature cache.

    Cache nodes are log-spaced; ``I0 = int R`` and ``I1 = int s R`` are stored
    at every node and the remainder from the nearest node below ``t`` is
    added with fixed 24-point Gauss-Legendre, so evaluation is vectorised.
    """

    T_MIN = 1e-6
    T_MAX = 1e12
    PER_DECADE = 32

    def __init__(self, corr: Correlation):
        self.corr = corr
        n = int(round(math.log10(self.T_MAX / self.T_MIN) * self.PER_DECADE))
        nodes = np.concatenate([[0.0], np.logspace(math.log10(self.T_MIN), math.log10(self.T_MAX), n + 1)])
        # kinks of a tabulated R must be nodes so no remainder panel straddles one
        kinks = getattr(corr.func, "t", np.empty(0))
        nodes = np.unique(np.concatenate([nodes, kinks[(kinks > self.T_MIN) & (kinks < self.T_MAX)]]))
        i0 = np.zeros_like(nodes)
        i1 = np.zeros_like(nodes)
        for k in range(1, nodes.size):
            a, b = nodes[k - 1], nodes[k]
            q0 = integrate.quad(corr.func, a, b, epsabs=1e-10 * (b - a), epsrel=1e-13, limit=200)[0]
            q1 = integrate.quad(lambda s: s * corr.func(s), a, b, epsabs=1e-10 * (b - a) * b, epsrel=1e-13, limit=200)[0]
            i0[k] = i0[k - 1] + q0
            i1[k] = i1[k - 1] + q1
        self.nodes, self.i0, self.i1 = nodes, i0, i1

    def _cumulative(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("sigma2 is defined for t >= 0")
        if np.any(t > self.T_MAX):
            raise ValueError(f"integrated model cache covers t <= {self.T_MAX:g}")
        k = np.clip(np.searchsorted(self.nodes, t, side="right") - 1, 0, self.nodes.size - 1)
        a = self.nodes[k]
        half = 0.5 * (t - a)
        s = a[..., None] + half[..., None] * (_GL_X + 1.0)
        r = self.corr.func(s)
        q0 = np.sum(_GL_W * r, axis=-1) * half
        q1 = np.sum(_GL_W * s * r, axis=-1) * half
        return self.i0[k] + q0, self.i1[k] + q1

    def sigma2(self, t):
        t_arr = np.asarray(t, dtype=float)
        i0, i1 = self._cumulative(t_arr)
        out = 2.0 * (t_arr * i0 - i1)
        # below the first node the direct form avoids the t*I0 - I1 cancellation
        small = t_arr < self.T_MIN
        if np.any(small):
            ts = np.where(small, t_arr, 0.0)
            half = 0.5 * ts
            s = half[..., None] * (_GL_X + 1.0)
            direct = 2.0 * np.sum(_GL_W * (ts[..., None] - s) * self.corr.func(s), axis=-1) * half
            out = np.where(small, direct, out)
        out = np.maximum(out, 0.0)
        return out if out.ndim else float(out)

    def dsigma2(self, t):
        out = 2.0 * self._cumulative(t)[0]
        return out if np.ndim(out) else float(out)

    def d2sigma2(self, t):
        out = 2.0 * np.asarray(self.corr.func(t), dtype=float)
        return out if out.ndim else float(out)


def _check_correlation(corr: Correlation) -> None:
    grid = np.concatenate([[0.0], np.logspace(-6, 8, 400)])
    vals = np.asarray(corr.func(grid), dtype=float)
    if abs(vals[0] - 1.0) > 1e-12:
        raise ValueError(f"correlation must satisfy R(0) = 1, got {vals[0]}")
    bad = np.nonzero(np.diff(vals) > 1e-14)[0]
    if bad.size:
        raise ValueError(f"correlation is not decreasing near t = {grid[bad[0] + 1]:.3g}")
    if np.any(vals < 0):
        raise ValueError("correlation must stay nonnegative")


def integrated_model(corr: Correlation) -> VarianceModel:
    """``X(t) = int_0^t Y(s) ds`` for stationary ``Y`` with correlation ``corr``."""
    _check_correlation(corr)
    law = _IntegratedLaw(corr)
    params = dict(corr.params)
    if corr.kind == "SRD":
        g = corr.integral
        if g is None:
            g = float(integrate.quad(corr.func, 0, np.inf, limit=500)[0])
        if not (math.isfinite(g) and g > 0):
            raise ValueError("SRD correlation must have a finite positive integral")
        alpha_inf, phi, coef_inf = 0.5, PhiClass.finite(2.0 * g), 2.0 * g
        params["G"] = g
    elif corr.kind == "LRD":
        h = corr.hurst
        alpha_inf, phi = h, PhiClass.infinite()
        coef_inf = corr.tail_coef / (h * (2.0 * h - 1.0))
    else:
        raise ValueError(f"unknown correlation kind {corr.kind!r}")
    return VarianceModel(
        sigma2=law.sigma2,
        dsigma2=law.dsigma2,
        d2sigma2=law.d2sigma2,
        alpha0=1.0,
        alpha_inf=alpha_inf,
        phi_class=phi,
        b_at_zero=BClass.sublinear(),
        label=f"int[{corr.label}]",
        family="integrated",
        params=params,
        coef0=1.0,
        coef_inf=coef_inf,
        correlation=corr,
    )


# ---------------------------------------------------------------------------
# validation


def local_index(model: VarianceModel, t: float, rel_step: float = 1e-3) -> float:
    """Numerical ``d log sigma2 / d log t`` at ``t``."""
    h = rel_step
    hi = float(model.sigma2(t * math.exp(h)))
    lo = float(model.sigma2(t * math.exp(-h)))
    return (math.log(hi) - math.log(lo)) / (2.0 * h)


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    first_violation: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    model_label: str
    checks: tuple[AssumptionCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"model": self.model_label, "passed": self.passed,
                "checks": [c.__dict__ for c in self.checks]}


def _first(mask: np.ndarray, grid: np.ndarray) -> float | None:
    idx = np.nonzero(mask)[0]
    return float(grid[idx[0]]) if idx.size else None


def validate_assumptions(model: VarianceModel, grid: Sequence[float] | None = None,
                         index_tol: float = 0.05, derivative_tol: float = 1e-5) -> ValidationReport:
    """Check the variance-function assumptions numerically on ``grid``.

    Failures are reported, not raised.  The grid must span at least six
    decades; the default is ``logspace(-6, 6, 241)``.
    """
    grid = np.logspace(-6, 6, 241) if grid is None else np.sort(np.asarray(grid, dtype=float))
    if grid[0] <= 0 or math.log10(grid[-1] / grid[0]) < 6.0 - 1e-9:
        raise ValueError("the validation grid must be positive and cover at least six decades")
    checks: list[AssumptionCheck] = []

    s0 = float(model.sigma2(0.0))
    checks.append(AssumptionCheck("sigma2(0)=0", s0 == 0.0, 0.0 if s0 != 0.0 else None, f"sigma2(0)={s0:g}"))

    ok_range = 0.0 < model.alpha0 <= 1.0 and 0.0 < model.alpha_inf < 1.0
    checks.append(AssumptionCheck("index ranges", ok_range, None,
                                  f"alpha0={model.alpha0:g} in (0,1], alpha_inf={model.alpha_inf:g} in (0,1)"))

    s = np.asarray(model.sigma2(grid), dtype=float)
    bad_inc = np.diff(s) <= 0
    checks.append(AssumptionCheck("AIII increasing", not bad_inc.any(), _first(bad_inc, grid[1:])))
    ratio = s / grid ** 2
    bad_ratio = np.diff(ratio) > 1e-12 * ratio[:-1]
    checks.append(AssumptionCheck("AIII sigma2/t^2 nonincreasing", not bad_ratio.any(), _first(bad_ratio, grid[1:])))

    idx_inf = local_index(model, grid[-1])
    checks.append(AssumptionCheck("AI index at infinity", abs(idx_inf - 2 * model.alpha_inf) <= index_tol
                                  and 0 < idx_inf < 2, None if abs(idx_inf - 2 * model.alpha_inf) <= index_tol else float(grid[-1]),
                                  f"local index {idx_inf:.4f} vs 2*alpha_inf={2 * model.alpha_inf:g}"))
    idx_0 = local_index(model, grid[0])
    checks.append(AssumptionCheck("AII index at zero", abs(idx_0 - 2 * model.alpha0) <= index_tol and 0 < idx_0 <= 2 + index_tol,
                                  None if abs(idx_0 - 2 * model.alpha0) <= index_tol else float(grid[0]),
                                  f"local index {idx_0:.4f} vs 2*alpha0={2 * model.alpha0:g}"))

    inner = grid[(grid >= 1e-3) & (grid <= 1e3)]
    if inner.size == 0:
        inner = grid
    d1 = np.asarray(model.dsigma2(inner), dtype=float)
    d2 = np.asarray(model.d2sigma2(inner), dtype=float)
    finite = np.isfinite(d1) & np.isfinite(d2)
    checks.append(AssumptionCheck("BI twice differentiable", bool(finite.all()), _first(~finite, inner)))
    h = 1e-4 * inner
    fd1 = (np.asarray(model.sigma2(inner + h)) - np.asarray(model.sigma2(inner - h))) / (2 * h)
    fd2 = (np.asarray(model.dsigma2(inner + h)) - np.asarray(model.dsigma2(inner - h))) / (2 * h)
    err1 = np.abs(fd1 - d1) / np.maximum(np.abs(d1), 1e-300)
    err2 = np.abs(fd2 - d2) / (np.abs(d2) + 1e-6 * np.abs(d1) / inner)
    bad_d = (err1 > derivative_tol) | (err2 > derivative_tol)
    checks.append(AssumptionCheck("derivatives match finite differences", not bad_d.any(), _first(bad_d, inner),
                                  f"max rel err {max(err1.max(), err2.max()):.2e}"))

    checks.append(_phi_check(model))
    checks.append(_b_check(model))
    return ValidationReport(model.label, tuple(checks))


def _phi_check(model: VarianceModel) -> AssumptionCheck:
    r4, r6 = (float(model.sigma2(x)) / x for x in (1e4, 1e6))
    kind = model.phi_class.kind
    if kind is PhiKind.FINITE:
        phi = model.phi_class.value
        ok = abs(r4 / phi - 1) <= 0.1 and abs(r6 / phi - 1) <= 0.1
    elif kind is PhiKind.ZERO:
        ok = r6 < r4
    else:
        ok = r6 > r4
    return AssumptionCheck("phi classification", ok, None if ok else 1e6,
                           f"sigma2(u)/u = {r4:.4g} (1e4), {r6:.4g} (1e6); declared {model.phi_class}")


def _b_check(model: VarianceModel) -> AssumptionCheck:
    r4, r6 = (float(model.sigma2(x)) / x for x in (1e-4, 1e-6))
    kind = model.b_at_zero.kind
    if kind is BKind.LINEAR:
        b = model.b_at_zero.value
        ok = abs(r4 / b - 1) <= 0.1 and abs(r6 / b - 1) <= 0.1
    elif kind is BKind.SUBLINEAR:
        ok = r6 < r4
    else:
        ok = r6 > r4
    return AssumptionCheck("b classification", ok, None if ok else 1e-6,
                           f"sigma2(s)/s = {r4:.4g} (1e-4), {r6:.4g} (1e-6); declared {model.b_at_zero}")
