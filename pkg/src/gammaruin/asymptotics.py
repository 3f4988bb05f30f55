"""Asymptotic ruin probabilities and passage-time limits.

Infinite horizon, ``gamma`` in (0, 1), ``phi = lim sigma2(u)/u``:

    psi(u) ~ (1/c) sqrt(2 a_inf pi / (1 - a_inf)) * H * P * sigma(u t*) / D1(u) * Psi(m(u))

with ``t* = a_inf / (c (1 - a_inf))``, ``m(u) = inf_t u (1 + c t) / sigma(u t)``,
``D1(u) = inv_sigma(sqrt(2) sigma2(u t*) / (u (1 + c t*)))`` for ``phi`` in {0, inf}
and ``D1 = 1`` for finite ``phi``.  Finite horizon ``T``: three cases by the
behaviour of ``sigma2(s)/s`` at 0 (superlinear, linear with limit ``b``,
sublinear).

Every evaluator takes ``scaling="exact"`` (the model's own ``sigma`` and
its exact inverse) or ``"leading"`` (``sigma`` and its inverse replaced by
the power-law asymptote at the relevant end, and ``u + cT`` by ``u`` inside
the finite-horizon inverse).  The closed-form corollaries for multiplex fBm
and integrated processes are the ``"leading"`` evaluations; Gaussian-tail
arguments stay exact in both modes.

Constants are injected (closed forms or estimates), never estimated here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .constants_lab import (
    ConstantValue,
    ZSpec,
    closed_form_piterbarg,
    resolve_constant_specs,
    resolve_finite_constant_specs,
)
from .tail import log_psi
from .variance_models import BKind, PhiKind, VarianceModel, multiplex_fbm_model

__all__ = [
    "AsymptoticReport",
    "TheoryConstants",
    "RegimeMismatch",
    "BracketFailure",
    "t_star",
    "find_tu",
    "stationarity_residual",
    "m_of_u",
    "sigma_inverse",
    "delta_gamma",
    "infinite_regime",
    "finite_regime",
    "psi_infinite",
    "psi_zero_infinite",
    "psi_finite",
    "tax_factor_finite",
    "passage_limit_infinite",
    "passage_rate_finite",
    "passage_survival_finite",
    "corollary_multiplex_infinite",
    "corollary_multiplex_finite",
    "corollary_integrated_infinite",
    "corollary_integrated_finite",
    "lrd_inverse",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_SCALINGS = ("exact", "leading")


class RegimeMismatch(ValueError):
    """Injected constants belong to a different local process than the model needs."""


class BracketFailure(RuntimeError):
    """The maximiser of sigma(ut)/(1+ct) is not interior to its bracket."""


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class TheoryConstants:
    """Pickands and Piterbarg values fed to an evaluator (plain floats allowed)."""

    pickands: ConstantValue | float | None = None
    piterbarg: ConstantValue | float | None = None

    @staticmethod
    def _value(x) -> float | None:
        return None if x is None else float(x.value if isinstance(x, ConstantValue) else x)

    @property
    def H(self) -> float | None:
        return self._value(self.pickands)

    @property
    def P(self) -> float | None:
        return self._value(self.piterbarg)

    def provenance(self) -> dict:
        def one(x):
            if x is None:
                return None
            if isinstance(x, ConstantValue):
                return x.provenance()
            return {"value": float(x), "source": "literal"}
        return {"pickands": one(self.pickands), "piterbarg": one(self.piterbarg)}

    def check(self, z_h: ZSpec | None, z_p: ZSpec | None, a: float | None) -> None:
        """Raise :class:`RegimeMismatch` if attached specs disagree with the expected ones."""
        for name, given, want, want_a in (("Pickands", self.pickands, z_h, None), ("Piterbarg", self.piterbarg, z_p, a)):
            if not isinstance(given, ConstantValue) or given.zspec is None or want is None:
                continue
            if not given.zspec.matches(want):
                raise RegimeMismatch(f"{name} constant is for {given.zspec.label}, the model needs {want.label}")
            if want_a is not None and given.a is not None and abs(given.a - want_a) > 1e-9 * want_a:
                raise RegimeMismatch(f"Piterbarg constant has a={given.a:g}, the model needs a={want_a:g}")


@dataclass
class AsymptoticReport:
    """All ingredients of one asymptotic evaluation."""

    u: float
    c: float
    gamma: float
    regime: str
    psi_approx: float
    log_psi_approx: float
    t_star: float | None = None
    t_u: float | None = None
    m_u: float | None = None
    delta1_u: float | None = None
    A_u: float | None = None
    H_const: float | None = None
    P_const: float | None = None
    prefactor: float | None = None
    q_u: float | None = None
    T: float | None = None
    tail_arg: float | None = None
    scaling: str = "exact"
    model_label: str = ""
    constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _check_scaling(scaling: str) -> None:
    if scaling not in _SCALINGS:
        raise ValueError(f"scaling must be one of {_SCALINGS}, got {scaling!r}")


# ---------------------------------------------------------------------------
# building blocks


def t_star(model: VarianceModel, c: float) -> float:
    """``alpha_inf / (c (1 - alpha_inf))``."""
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    a = model.alpha_inf
    if not 0.0 < a < 1.0:
        raise ValueError(f"alpha_inf must lie in (0, 1), got {a}")
    return a / (c * (1.0 - a))


def _log_ratio(model, c, u):
    def f(t):
        return 0.5 * math.log(float(model.sigma2(u * t))) - math.log1p(c * t)
    return f


def _golden_max(f: Callable[[float], float], lo: float, hi: float, rtol: float = 1e-12) -> float:
    """Maximiser of a unimodal ``f`` on ``[lo, hi]`` (searches in ``log t``)."""
    a, b = math.log(lo), math.log(hi)
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(math.exp(x1)), f(math.exp(x2))
    while b - a > rtol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(math.exp(x2))
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(math.exp(x1))
    return math.exp(0.5 * (a + b))


def stationarity_residual(model: VarianceModel, c: float, u: float, t: float) -> float:
    """Relative residual of ``u sigma2'(ut)(1+ct) = 2 c sigma2(ut)``."""
    lhs = u * float(model.dsigma2(u * t)) * (1.0 + c * t)
    rhs = 2.0 * c * float(model.sigma2(u * t))
    return (lhs - rhs) / rhs


def find_tu(model: VarianceModel, c: float, u: float) -> float:
    """Maximiser ``t_u`` of ``sigma(u t) / (1 + c t)`` over ``t > 0``.

    Golden-section search on ``[t*/10, 10 t*]``, then a root of the
    stationarity identity bracketed around the golden-section point.
    """
    if not u > 0:
        raise ValueError(f"u must be positive, got {u}")
    ts = t_star(model, c)
    lo, hi = ts / 10.0, 10.0 * ts
    f = _log_ratio(model, c, u)
    t0 = _golden_max(f, lo, hi)
    if t0 < lo * (1 + 1e-6) or t0 > hi * (1 - 1e-6):
        raise BracketFailure(f"{model.label}: no interior maximum of sigma(ut)/(1+ct) in [{lo:g}, {hi:g}] at u={u:g}")

    def g(t):
        return stationarity_residual(model, c, u, t)

    width = 1e-6
    while True:
        a, b = max(lo, t0 * (1 - width)), min(hi, t0 * (1 + width))
        if g(a) > 0 > g(b):
            return optimize.brentq(g, a, b, xtol=1e-15 * t0, rtol=4 * np.finfo(float).eps, maxiter=500)
        if a == lo and b == hi:
            return t0  # stationarity residual too flat to bracket; golden-section point stands
        width *= 4.0


def m_of_u(model: VarianceModel, c: float, u: float, t_u: float | None = None) -> float:
    """``inf_t u (1 + c t) / sigma(u t)``."""
    t = find_tu(model, c, u) if t_u is None else t_u
    return u * (1.0 + c * t) / math.sqrt(float(model.sigma2(u * t)))


def sigma_inverse(model: VarianceModel, y: float, rtol: float = 1e-12) -> float:
    """``t`` with ``sigma(t) = y`` (exact inverse of the increasing ``sigma``)."""
    if not (y > 0 and math.isfinite(y)):
        raise ValueError(f"sigma_inverse needs a positive finite value, got {y}")
    target = 2.0 * math.log(y)

    def h(logt):
        return math.log(float(model.sigma2(math.exp(logt)))) - target

    lo, hi = -1.0, 1.0
    for _ in range(400):
        if h(lo) < 0:
            break
        lo -= 2.0
    for _ in range(400):
        try:
            if h(hi) > 0:
                break
        except ValueError as exc:
            raise ValueError(f"y={y:g} lies outside the range of sigma for {model.label}") from exc
        hi += 2.0
    if not (h(lo) < 0 < h(hi)):
        raise ValueError(f"y={y:g} lies outside the range of sigma for {model.label}")
    return math.exp(optimize.brentq(h, lo, hi, xtol=rtol, rtol=4 * np.finfo(float).eps, maxiter=500))


def _sigma2_at(model, t, scaling, end):
    return float(model.sigma2(t)) if scaling == "exact" else float(model.leading_sigma2(t, end))


def _inverse(model, y, scaling, end):
    return sigma_inverse(model, y) if scaling == "exact" else model.leading_sigma_inverse(y, end)


def delta_gamma(model: VarianceModel, c: float, gamma: float, u: float, scaling: str = "exact") -> float:
    """``inv_sigma(sqrt(2) sigma2(u t*) / (gamma u (1 + c t*)))`` for ``phi`` in {0, inf}; 1 otherwise."""
    _check_scaling(scaling)
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    kind = model.phi_class.kind
    if kind is PhiKind.FINITE:
        return 1.0
    ts = t_star(model, c)
    y = math.sqrt(2.0) * _sigma2_at(model, u * ts, scaling, "infinity") / (gamma * u * (1.0 + c * ts))
    return _inverse(model, y, scaling, "zero" if kind is PhiKind.ZERO else "infinity")


def infinite_regime(model: VarianceModel) -> str:
    return {PhiKind.ZERO: "phi=0", PhiKind.FINITE: "phi finite", PhiKind.INFINITE: "phi=inf"}[model.phi_class.kind]


def finite_regime(model: VarianceModel) -> str:
    return {BKind.SUPERLINEAR: "case i (superlinear)", BKind.LINEAR: "case ii (linear)",
            BKind.SUBLINEAR: "case iii (sublinear)"}[model.b_at_zero.kind]


def _as_constants(constants) -> TheoryConstants:
    if constants is None:
        return TheoryConstants()
    if isinstance(constants, TheoryConstants):
        return constants
    if isinstance(constants, dict):
        return TheoryConstants(constants.get("H", constants.get("pickands")), constants.get("P", constants.get("piterbarg")))
    h, p = constants
    return TheoryConstants(h, p)


def _finish(log_value: float) -> float:
    return math.exp(log_value) if log_value > -745.0 else 0.0


# ---------------------------------------------------------------------------
# infinite horizon


def _infinite(model, c, gamma, u, H, P, scaling, constants_info, tax=True) -> AsymptoticReport:
    _check_scaling(scaling)
    if not u > 0:
        raise ValueError(f"u must be positive, got {u}")
    ts = t_star(model, c)
    tu = find_tu(model, c, u)
    m = m_of_u(model, c, u, tu)
    a_inf = model.alpha_inf
    pref = math.sqrt(2.0 * a_inf * math.pi / (1.0 - a_inf)) / c
    sig = math.sqrt(_sigma2_at(model, u * ts, scaling, "infinity"))
    d1 = delta_gamma(model, c, 1.0, u, scaling)
    log_val = math.log(pref) + math.log(H) + (math.log(P) if tax else 0.0) + math.log(sig) - math.log(d1) + log_psi(m)
    return AsymptoticReport(
        u=float(u), c=float(c), gamma=float(gamma), regime=infinite_regime(model),
        psi_approx=_finish(log_val), log_psi_approx=log_val, t_star=ts, t_u=tu, m_u=m, delta1_u=d1,
        A_u=math.sqrt(float(model.sigma2(u * ts))) / c * math.sqrt(a_inf / (1.0 - a_inf)),
        H_const=H, P_const=P if tax else None, prefactor=pref, tail_arg=m, scaling=scaling,
        model_label=model.label, constants=constants_info)


def psi_infinite(model: VarianceModel, c: float, gamma: float, u: float, constants,
                 scaling: str = "exact") -> AsymptoticReport:
    """Infinite-horizon approximation for ``gamma`` in (0, 1)."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    tc = _as_constants(constants)
    if tc.H is None or tc.P is None:
        raise ValueError("both the Pickands and the Piterbarg constant are required")
    tc.check(*resolve_constant_specs(gamma, model, c))
    return _infinite(model, c, gamma, u, tc.H, tc.P, scaling, tc.provenance())


def psi_zero_infinite(model: VarianceModel, c: float, u: float, constants, scaling: str = "exact") -> AsymptoticReport:
    """Untaxed (``gamma = 0``) approximation: the same product without the Piterbarg factor."""
    tc = _as_constants(constants)
    if tc.H is None:
        raise ValueError("the Pickands constant is required")
    z_h, _, _ = resolve_constant_specs(0.5, model, c)
    TheoryConstants(tc.pickands).check(z_h, None, None)
    return _infinite(model, c, 0.0, u, tc.H, 1.0, scaling, tc.provenance(), tax=False)


def passage_limit_infinite(model: VarianceModel, c: float, u: float) -> tuple[float, float]:
    """Centre ``u t_u`` and scale ``A(u) = sigma(u t*)/c * sqrt(a_inf/(1-a_inf))``.

    Both the first and the last passage time share this normal limit.
    """
    ts = t_star(model, c)
    a = model.alpha_inf
    return u * find_tu(model, c, u), math.sqrt(float(model.sigma2(u * ts))) / c * math.sqrt(a / (1.0 - a))


# ---------------------------------------------------------------------------
# finite horizon


def _case_ii_constants(b: float, d: float, gamma: float) -> tuple[float, float, float, float]:
    a1 = d / b
    a2 = (b * (gamma - gamma ** 2) + gamma * d) / (b * gamma ** 2)
    return a1, a2, closed_form_piterbarg(0.5, a1), closed_form_piterbarg(0.5, a2)


def psi_finite(model: VarianceModel, c: float, gamma: float, u: float, T: float, constants=None,
               scaling: str = "exact") -> AsymptoticReport:
    """Finite-horizon approximation; the case follows ``model.b_at_zero``.

    Case i needs ``H_{B_alpha0}`` and ``P^{(1-gamma)/gamma}_{B_alpha0}``; case ii
    uses closed forms; case iii needs no constants.
    """
    _check_scaling(scaling)
    if not (T > 0 and u > 0):
        raise ValueError("u and T must be positive")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    s2 = float(model.sigma2(T))
    d = float(model.dsigma2(T))
    x = (u + c * T) / math.sqrt(s2)
    kind = model.b_at_zero.kind
    base = dict(u=float(u), c=float(c), gamma=float(gamma), regime=finite_regime(model), T=float(T), tail_arg=x,
                scaling=scaling, model_label=model.label)
    if kind is BKind.SUPERLINEAR:
        tc = _as_constants(constants)
        if tc.H is None or tc.P is None:
            raise ValueError("case i needs the Pickands and Piterbarg constants of B_alpha0")
        tc.check(*resolve_finite_constant_specs(gamma, model))
        denom_u = u + c * T if scaling == "exact" else u
        q = _inverse(model, math.sqrt(2.0) * s2 / denom_u, scaling, "zero")
        log_pref = math.log(2.0 * s2 ** 2 / (d * q * u ** 2))
        log_val = math.log(tc.H) + math.log(tc.P) + log_pref + log_psi(x)
        return AsymptoticReport(psi_approx=_finish(log_val), log_psi_approx=log_val, H_const=tc.H, P_const=tc.P,
                                prefactor=math.exp(log_pref), q_u=q, constants=tc.provenance(), **base)
    if kind is BKind.LINEAR:
        b = model.b_at_zero.value
        a1, a2, p1, p2 = _case_ii_constants(b, d, gamma)
        log_val = math.log(p1) + math.log(p2) + log_psi(x)
        info = {"piterbarg_1": {"value": p1, "a": a1, "source": "closed_form"},
                "piterbarg_2": {"value": p2, "a": a2, "source": "closed_form"}}
        return AsymptoticReport(psi_approx=_finish(log_val), log_psi_approx=log_val, H_const=p1, P_const=p2,
                                prefactor=p1 * p2, constants=info, **base)
    if kind is BKind.SUBLINEAR:
        log_val = log_psi(x)
        return AsymptoticReport(psi_approx=_finish(log_val), log_psi_approx=log_val, prefactor=1.0, **base)
    raise ValueError(f"unknown b_at_zero classification {model.b_at_zero}")


def tax_factor_finite(model: VarianceModel, gamma: float, T: float, constants=None) -> float:
    """``K`` with ``psi_gamma,T(u) ~ K psi_0,T(u)``."""
    kind = model.b_at_zero.kind
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if kind is BKind.SUPERLINEAR:
        tc = _as_constants(constants)
        if tc.P is None:
            raise ValueError("case i needs the Piterbarg constant of B_alpha0")
        return tc.P
    if kind is BKind.LINEAR:
        return _case_ii_constants(model.b_at_zero.value, float(model.dsigma2(T)), gamma)[3]
    return 1.0


def passage_rate_finite(model: VarianceModel, u: float, T: float) -> float:
    """``sigma2'(T) u^2 / (2 sigma2(T)^2)``; times ``T - tau1`` it tends to Exp(1) given ruin."""
    if not (u > 0 and T > 0):
        raise ValueError("u and T must be positive")
    return float(model.dsigma2(T)) * u ** 2 / (2.0 * float(model.sigma2(T)) ** 2)


def passage_survival_finite(model: VarianceModel, c: float, gamma: float, u: float, T: float, x,
                            constants=None) -> np.ndarray:
    """Finite-``u`` prediction of ``P(rate (T - tau1) > x | tau1 <= T)``.

    Ruin by ``T - x/rate`` over ruin by ``T``, each from the finite-horizon
    approximation with the shortened horizon substituted for ``T``.  Tends
    to ``exp(-x)`` as ``u`` grows.
    """
    rate = passage_rate_finite(model, u, T)
    base = psi_finite(model, c, gamma, u, T, constants).log_psi_approx
    out = []
    for xi in np.atleast_1d(np.asarray(x, dtype=float)):
        t_short = T - xi / rate
        if t_short <= 0:
            out.append(0.0)
            continue
        out.append(math.exp(psi_finite(model, c, gamma, u, t_short, constants).log_psi_approx - base))
    return np.asarray(out)


# ---------------------------------------------------------------------------
# multiplex fBm closed forms


def _constants_values(constants) -> tuple[float | None, float | None, TheoryConstants]:
    tc = _as_constants(constants)
    return tc.H, tc.P, tc


def corollary_multiplex_infinite(hurst: Sequence[float], c: float, gamma: float, u: float, constants,
                                 model: VarianceModel | None = None) -> AsymptoticReport:
    """Closed-form infinite-horizon approximation for ``sum_i B_{H_i}``; case by ``H_n``."""
    model = multiplex_fbm_model(hurst) if model is None else model
    h = list(model.params["hurst"])
    h1, hn = h[0], h[-1]
    H, P, tc = _constants_values(constants)
    if H is None or P is None:
        raise ValueError("both constants are required")
    tc.check(*resolve_constant_specs(gamma, model, c))
    ts = hn / (c * (1.0 - hn))
    tu = find_tu(model, c, u)
    m = m_of_u(model, c, u, tu)
    if hn < 0.5:
        case = "i"
        log_k = ((h1 - 1.0) / (2.0 * h1) * math.log(2.0) + 0.5 * math.log(hn * math.pi / (c ** 2 * (1.0 - hn) ** 3))
                 + (1.0 - h1) / h1 * math.log1p(c * ts) - hn * (2.0 - h1) / h1 * math.log(ts)
                 + (h1 * hn - 2.0 * hn + 1.0) / h1 * math.log(u))
    elif hn == 0.5:
        case = "ii"
        log_k = 0.5 * math.log(2.0 * math.pi * u / c ** 3)
    else:
        case = "iii"
        log_k = ((hn - 1.0) / (2.0 * hn) * math.log(2.0) + 0.5 * math.log(hn * math.pi / (c ** 2 * (1.0 - hn) ** 3))
                 + (1.0 - hn) / hn * math.log1p(c * ts) - (2.0 - hn) * math.log(ts)
                 + (1.0 - hn) ** 2 / hn * math.log(u))
    log_val = math.log(H) + math.log(P) + log_k + log_psi(m)
    return AsymptoticReport(u=float(u), c=float(c), gamma=float(gamma), regime=f"multiplex infinite case {case}",
                            psi_approx=_finish(log_val), log_psi_approx=log_val, t_star=ts, t_u=tu, m_u=m,
                            H_const=H, P_const=P, prefactor=math.exp(log_k), tail_arg=m, scaling="closed form",
                            model_label=model.label, constants=tc.provenance())


def corollary_multiplex_finite(hurst: Sequence[float], c: float, gamma: float, u: float, T: float,
                               constants=None, model: VarianceModel | None = None) -> AsymptoticReport:
    """Closed-form finite-horizon approximation for ``sum_i B_{H_i}``; case by ``H_1``."""
    model = multiplex_fbm_model(hurst) if model is None else model
    h = np.asarray(model.params["hurst"], dtype=float)
    h1 = float(h[0])
    s2 = float(np.sum(T ** (2.0 * h)))
    d_half = float(np.sum(h * T ** (2.0 * h - 1.0)))
    x = (u + c * T) / math.sqrt(s2)
    base = dict(u=float(u), c=float(c), gamma=float(gamma), T=float(T), tail_arg=x, scaling="closed form",
                model_label=model.label)
    if h1 < 0.5:
        H, P, tc = _constants_values(constants)
        if H is None or P is None:
            raise ValueError("case i needs the Pickands and Piterbarg constants of B_H1")
        tc.check(*resolve_finite_constant_specs(gamma, model))
        log_k = (-math.log(2.0) / (2.0 * h1) + (2.0 * h1 - 1.0) / h1 * math.log(s2) - math.log(d_half)
                 + (1.0 - 2.0 * h1) / h1 * math.log(u))
        log_val = math.log(H) + math.log(P) + log_k + log_psi(x)
        return AsymptoticReport(regime="multiplex finite case i", psi_approx=_finish(log_val), log_psi_approx=log_val,
                                H_const=H, P_const=P, prefactor=math.exp(log_k), constants=tc.provenance(), **base)
    if h1 == 0.5:
        a1 = 2.0 * d_half
        a2 = (gamma - gamma ** 2 + 2.0 * gamma * d_half) / gamma ** 2
        p1, p2 = closed_form_piterbarg(0.5, a1), closed_form_piterbarg(0.5, a2)
        log_val = math.log(p1) + math.log(p2) + log_psi(x)
        return AsymptoticReport(regime="multiplex finite case ii", psi_approx=_finish(log_val), log_psi_approx=log_val,
                                H_const=p1, P_const=p2, prefactor=p1 * p2,
                                constants={"piterbarg_1": {"value": p1, "a": a1}, "piterbarg_2": {"value": p2, "a": a2}},
                                **base)
    log_val = log_psi(x)
    return AsymptoticReport(regime="multiplex finite case iii", psi_approx=_finish(log_val), log_psi_approx=log_val,
                            prefactor=1.0, **base)


# ---------------------------------------------------------------------------
# integrated processes


def lrd_inverse(R: Callable[[float], float], y: float) -> float:
    """Inverse of the ultimately increasing ``t -> t sqrt(R(t))`` at ``y``.

    The monotone region is located by probing a log grid; the root is then
    bracketed inside it.
    """
    if not y > 0:
        raise ValueError("y must be positive")
    grid = np.logspace(-3, 15, 721)
    g = grid * np.sqrt(np.asarray([R(t) for t in grid], dtype=float))
    bad = np.nonzero(np.diff(g) <= 0)[0]
    start = bad[-1] + 1 if bad.size else 0
    if start >= grid.size - 2:
        raise ValueError("t sqrt(R(t)) is not monotone on the probed range")
    lo_t, lo_g = grid[start], g[start]
    if not lo_g < y <= g[-1]:
        raise ValueError(f"y={y:g} outside the monotone range [{lo_g:g}, {g[-1]:g}] of t sqrt(R(t))")
    k = int(np.searchsorted(g[start:], y)) + start
    a, b = grid[max(k - 1, start)], grid[k]
    return optimize.brentq(lambda t: t * math.sqrt(R(t)) - y, a, b, xtol=1e-14 * b, rtol=4 * np.finfo(float).eps)


def corollary_integrated_infinite(model: VarianceModel, c: float, gamma: float, u: float, constants,
                                  kind: str | None = None, as_printed: bool = False,
                                  leading: bool = False) -> AsymptoticReport:
    """Closed-form infinite-horizon approximation for ``X = int_0^t Y``.

    SRD (``G = int R``): ``H * P * sqrt(2 pi phi u / c^3) * Psi(m)`` with
    ``phi = 2G`` and local processes ``sqrt(2) c / phi * X``.  With
    ``as_printed=True`` the alternative normalisation ``phi -> G`` (prefactor
    ``sqrt(2 pi G u / c^3)``) is used; it is not consistent with the general
    evaluator.

    LRD (``R`` regularly varying with index ``2H - 2``): ``H * P * k_H *
    u sqrt(R(u)) / g_inv(u R(u)) * Psi(m)`` where ``g_inv`` inverts
    ``t sqrt(R(t))``.  ``leading=True`` uses the power tail ``C t^(2H-2)`` of
    ``R`` in place of ``R``.
    """
    corr = model.correlation
    if corr is None:
        raise ValueError("not an integrated model")
    kind = corr.kind if kind is None else kind
    if kind != corr.kind:
        raise ValueError(f"model is {corr.kind}, not {kind}")
    H, P, tc = _constants_values(constants)
    if H is None or P is None:
        raise ValueError("both constants are required")
    tu = find_tu(model, c, u)
    m = m_of_u(model, c, u, tu)
    if kind == "SRD":
        g = model.params["G"]
        if not as_printed:
            tc.check(*resolve_constant_specs(gamma, model, c))
        phi = g if as_printed else 2.0 * g
        log_k = 0.5 * math.log(2.0 * math.pi * phi * u / c ** 3)
        regime = "integrated SRD" + (" (printed normalisation)" if as_printed else "")
    else:
        tc.check(*resolve_constant_specs(gamma, model, c))
        h = corr.hurst
        ts = h / (c * (1.0 - h))
        if leading:
            coef, expo = corr.tail_coef, 2.0 * h - 2.0

            def R(t):
                return coef * t ** expo
        else:
            R = corr.func
        r_u = float(R(u))
        log_k = ((1.0 - h) / (2.0 * h) * math.log(h * (2.0 * h - 1.0) / 2.0)
                 + 0.5 * math.log(h * math.pi / (c ** 2 * (1.0 - h) ** 3))
                 + (1.0 - h) / h * math.log1p(c * ts) - (2.0 - h) * math.log(ts)
                 + math.log(u * math.sqrt(r_u)) - math.log(lrd_inverse(R, u * r_u)))
        regime = "integrated LRD" + (" (power tail)" if leading else "")
    log_val = math.log(H) + math.log(P) + log_k + log_psi(m)
    return AsymptoticReport(u=float(u), c=float(c), gamma=float(gamma), regime=regime, psi_approx=_finish(log_val),
                            log_psi_approx=log_val, t_star=t_star(model, c), t_u=tu, m_u=m, H_const=H, P_const=P,
                            prefactor=math.exp(log_k), tail_arg=m, scaling="closed form", model_label=model.label,
                            constants=tc.provenance())


def corollary_integrated_finite(model: VarianceModel, c: float, gamma: float, u: float, T: float) -> AsymptoticReport:
    """``Psi((u + cT) / sigma(T))`` for integrated processes."""
    if model.correlation is None:
        raise ValueError("not an integrated model")
    x = (u + c * T) / math.sqrt(float(model.sigma2(T)))
    log_val = log_psi(x)
    return AsymptoticReport(u=float(u), c=float(c), gamma=float(gamma), regime="integrated finite",
                            psi_approx=_finish(log_val), log_psi_approx=log_val, prefactor=1.0, T=float(T), tail_arg=x,
                            scaling="closed form", model_label=model.label)
