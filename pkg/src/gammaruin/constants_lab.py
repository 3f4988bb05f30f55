"""Monte Carlo estimation of generalised Pickands and Piterbarg constants.

For a centred Gaussian process ``Z`` with stationary increments and
``v(t) = Var Z(t)``:

* Pickands:  ``H_Z[0, S] = E sup_{[0,S]} exp(sqrt(2) Z(t) - v(t))``, ``H_Z = lim H_Z[0,S] / S``;
* Piterbarg: ``P^a_Z[0, S] = E sup_{[0,S]} exp(sqrt(2) Z(t) - (1 + a) v(t))``, ``P^a_Z = lim P^a_Z[0,S]``.

Both are estimated on a grid.  ``Y_k = sqrt(2) Z_k - (1+a) v_k`` vanishes at
``t_0 = 0``, so ``E max_k exp(Y_k) = 1 + E (max_{k>=1} exp(Y_k) - 1)^+``.  The
default ``"tilted"`` estimator applies a change of measure to the excess:
draw ``J >= 1`` with probability ``f_J / F`` where ``f_k = E exp(Y_k) =
exp(-a v_k)`` and ``F = sum_{k>=1} f_k``, shift the path by the tilt, and
average ``1 + F (M - 1)^+ / sum_{k>=1} exp(Y_k)`` with ``M`` the tilted
maximum.  Each path contributes a value in ``[1, 1 + F]``, so the estimate
is at least one and has bounded variance where the plain sample mean of
``exp(max Y)`` (``"direct"``) is heavy tailed.  Grid bias is removed by
Richardson extrapolation in ``step ** alpha`` and truncation bias in ``1 / S``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .parallel import map_blocks, split_range
from .path_sampler import GridSpec, get_plan, sample_values
from .variance_models import PhiKind, VarianceModel, power_model

__all__ = [
    "ZSpec",
    "ConstantEstimate",
    "ConstantValue",
    "closed_form_piterbarg",
    "closed_form_pickands",
    "closed_form_constant",
    "estimate_pickands",
    "estimate_piterbarg",
    "pickands_ladder",
    "piterbarg_ladder",
    "extrapolate",
    "extrapolation_weights",
    "resolve_constant_specs",
    "resolve_finite_constant_specs",
    "write_estimates",
    "read_estimates",
    "DEFAULT_S_LADDER",
    "DEFAULT_STEP_LADDER",
]

DEFAULT_S_LADDER = (4.0, 8.0, 16.0, 32.0)
DEFAULT_STEP_LADDER = (2.0 ** -6, 2.0 ** -8, 2.0 ** -10)
EXPONENT_CLIP = 700.0
PLATEAU_TOL = 0.02
_BLOCK = 256
_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# processes


@dataclass(frozen=True, eq=False)
class ZSpec:
    """The process inside a constant: ``B_alpha`` or ``scale * X``."""

    kind: str
    alpha: float | None = None
    model: VarianceModel | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind == "fbm":
            if self.alpha is None or not 0.0 < self.alpha <= 1.0:
                raise ValueError(f"fBm index must lie in (0, 1], got {self.alpha}")
        elif self.kind == "scaled":
            if self.model is None or not self.scale > 0:
                raise ValueError("a scaled spec needs a model and a positive scale")
        else:
            raise ValueError(f"unknown ZSpec kind {self.kind!r}")

    @classmethod
    def fbm(cls, alpha: float) -> "ZSpec":
        return cls("fbm", alpha=float(alpha))

    @classmethod
    def scaled(cls, model: VarianceModel, scale: float) -> "ZSpec":
        return cls("scaled", model=model, scale=float(scale))

    @property
    def base_model(self) -> VarianceModel:
        return power_model(self.alpha) if self.kind == "fbm" else self.model

    @property
    def factor(self) -> float:
        return 1.0 if self.kind == "fbm" else self.scale

    @property
    def hurst(self) -> float:
        """Local Hoelder index at 0 (drives the grid-bias exponent)."""
        return self.alpha if self.kind == "fbm" else self.model.alpha0

    def var(self, t):
        return self.factor ** 2 * np.asarray(self.base_model.sigma2(t), dtype=float)

    def natural_scale(self) -> float:
        """Time ``t`` with ``Var Z(t) = 1``."""
        if self.kind == "fbm":
            return 1.0
        lo, hi = 1e-12, 1.0
        while float(self.var(hi)) < 1.0:
            hi *= 2.0
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if float(self.var(mid)) < 1.0:
                lo = mid
            else:
                hi = mid
            if hi / lo - 1.0 < 1e-13:
                break
        return math.sqrt(lo * hi)

    @property
    def label(self) -> str:
        if self.kind == "fbm":
            return f"B_{self.alpha:g}"
        return f"{self.scale:.6g}*{self.model.label}"

    def to_dict(self) -> dict:
        if self.kind == "fbm":
            return {"kind": "fbm", "alpha": self.alpha}
        return {"kind": "scaled", "scale": self.scale, "model": self.model.spec(), "model_label": self.model.label}

    def matches(self, other: "ZSpec", rtol: float = 1e-9) -> bool:
        if self.kind != other.kind:
            return False
        if self.kind == "fbm":
            return abs(self.alpha - other.alpha) <= rtol
        same_model = self.model is other.model or self.model.label == other.model.label
        return same_model and abs(self.scale / other.scale - 1.0) <= rtol


@dataclass
class ConstantEstimate:
    """MC estimate with its extrapolation trace.

    ``value``/``stderr`` are the accepted (extrapolated) figures;
    ``raw_value``/``raw_stderr`` belong to the largest ``S`` and finest step.
    ``trace`` rows are ``(param, value, stderr)`` with param a step or ``S``.
    """

    kind: str
    a: float | None
    S: float
    grid_step: float
    n_paths: int
    value: float
    stderr: float
    raw_value: float
    raw_stderr: float
    trace: list
    seed: int
    z_label: str
    method: str = "tilted"
    trace_param: str = "step"
    overflow_count: int = 0
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ConstantEstimate":
        d = dict(d)
        d["trace"] = [tuple(r) for r in d.get("trace", [])]
        return cls(**d)


@dataclass(frozen=True)
class ConstantValue:
    """A constant injected into a theory evaluator, with its provenance."""

    value: float
    source: str  # "closed_form" | "estimate" | "literal"
    kind: str  # "pickands" | "piterbarg"
    zspec: ZSpec | None = None
    a: float | None = None
    note: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value > 0):
            raise ValueError(f"constant must be a positive number, got {self.value}")

    def provenance(self) -> dict:
        return {"value": self.value, "source": self.source, "kind": self.kind, "a": self.a,
                "z": self.zspec.to_dict() if self.zspec is not None else None, "note": self.note}


# ---------------------------------------------------------------------------
# closed forms


def closed_form_piterbarg(alpha: float, a: float) -> float:
    """``P^a_{B_alpha}``; closed forms exist only for ``alpha`` in {1/2, 1}."""
    if not a > 0:
        raise ValueError(f"a must be positive, got {a}")
    if alpha == 0.5:
        return 1.0 + 1.0 / a
    if alpha == 1.0:
        return 0.5 * (1.0 + math.sqrt(1.0 + 1.0 / a))
    raise ValueError(f"closed-form Piterbarg constants are known only for alpha in {{1/2, 1}}, got {alpha}")


def closed_form_pickands(alpha: float) -> float:
    """``H_{B_alpha}``; known for ``alpha`` in {1/2, 1}."""
    if alpha == 0.5:
        return 1.0
    if alpha == 1.0:
        return 1.0 / math.sqrt(math.pi)
    raise ValueError(f"closed-form Pickands constants are known only for alpha in {{1/2, 1}}, got {alpha}")


def _power_law(z: ZSpec) -> tuple[float, float] | None:
    """``(k, alpha)`` when ``Var Z(t) = k t^(2 alpha)`` exactly."""
    if z.kind == "fbm":
        return 1.0, z.alpha
    m = z.model
    if m.family == "brownian":
        return z.scale ** 2 * m.params["rate"], 0.5
    if m.family == "power":
        return (z.scale * m.params["scale"]) ** 2, m.params["alpha"]
    if m.family == "multiplex_fbm" and len(m.params["hurst"]) == 1:
        return z.scale ** 2, m.params["hurst"][0]
    return None


def closed_form_constant(z: ZSpec, kind: str, a: float | None = None) -> float | None:
    """Closed form for ``z`` when it is a time-changed ``B_1/2`` or ``B_1``, else ``None``.

    ``k B_alpha(t)`` equals ``B_alpha(k^(1/alpha) t)`` in law, which scales
    the Pickands constant by ``k^(1/alpha)`` and leaves Piterbarg unchanged.
    """
    pl = _power_law(z)
    if pl is None or pl[1] not in (0.5, 1.0):
        return None
    k, alpha = pl
    if kind == "pickands":
        return k ** (1.0 / (2.0 * alpha)) * closed_form_pickands(alpha)
    if kind == "piterbarg":
        return closed_form_piterbarg(alpha, a)
    raise ValueError(f"unknown constant kind {kind!r}")


# ---------------------------------------------------------------------------
# regime -> processes


def resolve_constant_specs(gamma: float, model: VarianceModel, c: float) -> tuple[ZSpec, ZSpec, float]:
    """Processes and Piterbarg index for the infinite-horizon approximation.

    Returns ``(Z for Pickands, Z for Piterbarg, a)`` with ``a = (1-gamma)/gamma``.
    For finite ``phi`` these are ``sqrt(2) c / phi * X`` and ``gamma`` times it;
    for ``phi = 0`` / ``phi = inf`` both are fBm with index ``alpha0`` / ``alpha_inf``.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    a = (1.0 - gamma) / gamma
    phi = model.phi_class
    if phi.kind is PhiKind.FINITE:
        s = _SQRT2 * c / phi.value
        return ZSpec.scaled(model, s), ZSpec.scaled(model, gamma * s), a
    alpha = model.alpha0 if phi.kind is PhiKind.ZERO else model.alpha_inf
    return ZSpec.fbm(alpha), ZSpec.fbm(alpha), a


def resolve_finite_constant_specs(gamma: float, model: VarianceModel) -> tuple[ZSpec, ZSpec, float]:
    """Processes for the superlinear finite-horizon case: both ``B_alpha0``."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    return ZSpec.fbm(model.alpha0), ZSpec.fbm(model.alpha0), (1.0 - gamma) / gamma


# ---------------------------------------------------------------------------
# extrapolation


def extrapolation_weights(params: Sequence[float], exponent: float = -1.0) -> np.ndarray:
    """Weights ``w`` with ``intercept = w @ values`` for the fit ``value = b0 + b1 * param**exponent``."""
    p = np.asarray(params, dtype=float)
    if p.size < 3:
        raise ValueError("extrapolation needs at least 3 points")
    d = np.diff(p)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("extrapolation parameters must be strictly monotone")
    if np.any(p <= 0):
        raise ValueError("extrapolation parameters must be positive")
    x = p ** exponent
    design = np.column_stack([np.ones_like(x), x])
    return np.linalg.pinv(design)[0]


def extrapolate(trace: Iterable, exponent: float = -1.0) -> float:
    """Intercept of a least-squares fit ``value = b0 + b1 * param**exponent``.

    ``exponent = -1`` extrapolates ``S -> inf``; a positive exponent (the
    Hoelder index for grid steps) extrapolates ``step -> 0``.  Rows may carry
    extra fields after ``(param, value)``.
    """
    rows = [tuple(r) for r in trace]
    params = [r[0] for r in rows]
    values = np.asarray([r[1] for r in rows], dtype=float)
    return float(extrapolation_weights(params, exponent) @ values)


# ---------------------------------------------------------------------------
# per-path evaluation


def _select_index(logf: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    w = np.exp(logf - logf.max())
    cdf = np.cumsum(w)
    return np.minimum(np.searchsorted(cdf, uniforms * cdf[-1], side="right"), logf.size - 1)


def _tilted(z: np.ndarray, v: np.ndarray, a: float, uniforms: np.ndarray) -> np.ndarray:
    logf = -a * v
    tail = logf[1:]
    top = tail.max()
    log_total = top + math.log(np.exp(tail - top).sum())
    j = _select_index(tail, uniforms) + 1
    lag = np.abs(np.arange(1, z.shape[1])[None, :] - j[:, None])
    y = _SQRT2 * z[:, 1:] + v[j][:, None] - v[lag] + tail[None, :]
    peak = y.max(axis=1)
    excess = -np.expm1(-np.maximum(peak, 0.0)) / np.exp(y - peak[:, None]).sum(axis=1)
    return 1.0 + np.exp(log_total) * excess


def _direct(z: np.ndarray, v: np.ndarray, a: float) -> tuple[np.ndarray, int]:
    y = (_SQRT2 * z - (1.0 + a) * v[None, :]).max(axis=1)
    over = int(np.count_nonzero(y > EXPONENT_CLIP))
    return np.exp(np.minimum(y, EXPONENT_CLIP)), over


@dataclass(frozen=True)
class _Level:
    stride: int  # subsampling of the finest grid
    count: int  # points after t=0 on this level


def _block_values(z_spec: ZSpec, fine: GridSpec, levels: Sequence[_Level], a: float, seed: int,
                  method: str, span: tuple[int, int]) -> tuple[np.ndarray, int]:
    plan = get_plan(z_spec.base_model, fine)
    streams = np.arange(span[0], span[1], dtype=np.uint64)
    z = z_spec.factor * sample_values(plan, seed, streams)
    u = kernels.uniform_rows(seed, kernels.DOMAIN_SELECT, streams, 0, 0, 1)[:, 0] if method == "tilted" else None
    out = np.empty((streams.size, len(levels)))
    overflow = 0
    for i, lev in enumerate(levels):
        sub = z[:, : lev.stride * lev.count + 1: lev.stride]
        v = z_spec.var(np.arange(lev.count + 1) * fine.step * lev.stride)
        if method == "tilted":
            out[:, i] = _tilted(sub, v, a, u)
        else:
            out[:, i], over = _direct(sub, v, a)
            overflow += over
    return out, overflow


def _run_levels(z: ZSpec, fine: GridSpec, levels, a, n, seed, method, workers):
    if method not in ("tilted", "direct"):
        raise ValueError(f"method must be 'tilted' or 'direct', got {method!r}")
    if n < 2:
        raise ValueError("need at least 2 paths")
    spans = split_range(0, n, _BLOCK)
    parts = map_blocks(lambda sp: _block_values(z, fine, levels, a, seed, method, sp), spans, workers)
    values = np.concatenate([p[0] for p in parts], axis=0)
    return values, sum(p[1] for p in parts)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _grid_for(S: float, step: float) -> int:
    count = int(round(S / step))
    if abs(count * step - S) > 1e-9 * S:
        raise ValueError(f"S={S} is not a multiple of step={step}")
    if count < 64:
        raise ValueError(f"step must be at most S/64 (got S={S}, step={step})")
    return count


# ---------------------------------------------------------------------------
# single-level estimators


def estimate_pickands(z: ZSpec, S: float, step: float, n: int, seed: int, method: str = "tilted",
                      workers: int = 1) -> ConstantEstimate:
    """``H_Z[0, S] / S`` on the grid of spacing ``step``."""
    if not S > 0:
        raise ValueError("S must be positive")
    count = _grid_for(S, step)
    vals, over = _run_levels(z, GridSpec(step, count), [_Level(1, count)], 0.0, n, seed, method, workers)
    m, se = _mean_se(vals[:, 0] / S)
    flags = [f"{over} paths hit the exponent clip"] if over else []
    return ConstantEstimate("pickands", None, S, step, n, m, se, m, se, [(S, m, se)], seed, z.label,
                            method, "S", over, flags)


def estimate_piterbarg(z: ZSpec, a: float, S1: float, step: float, n: int, seed: int, method: str = "tilted",
                       workers: int = 1) -> ConstantEstimate:
    """``P^a_Z[0, S1]`` on the grid; flags a missing plateau between ``S1/2`` and ``S1``."""
    if not a > 0:
        raise ValueError(f"a must be positive, got {a}")
    count = _grid_for(S1, step)
    half = count // 2
    levels = [_Level(1, half), _Level(1, count)]
    vals, over = _run_levels(z, GridSpec(step, count), levels, a, n, seed, method, workers)
    (m_half, se_half), (m, se) = _mean_se(vals[:, 0]), _mean_se(vals[:, 1])
    flags = []
    if abs(m - m_half) > PLATEAU_TOL * m:
        flags.append(f"no plateau: value changes {abs(m - m_half) / m:.1%} from S1/2 to S1")
    if over:
        flags.append(f"{over} paths hit the exponent clip")
    trace = [(half * step, m_half, se_half), (S1, m, se)]
    return ConstantEstimate("piterbarg", float(a), S1, step, n, m, se, m, se, trace, seed, z.label,
                            method, "S", over, flags)


# ---------------------------------------------------------------------------
# extrapolated ladders (coupled: coarse grids subsample the finest path)


def _step_ladder(z: ZSpec, steps: Sequence[float] | None) -> list[float]:
    steps = sorted(DEFAULT_STEP_LADDER if steps is None else steps, reverse=True)
    if steps is DEFAULT_STEP_LADDER or steps == sorted(DEFAULT_STEP_LADDER, reverse=True):
        scale = z.natural_scale()
        steps = [s * scale for s in steps]
    ratios = [steps[0] / s for s in steps]
    if any(abs(r - round(r)) > 1e-9 for r in ratios):
        raise ValueError("each step must divide the coarsest one")
    return steps


def piterbarg_ladder(z: ZSpec, a: float, S1: float, n: int, seed: int, steps: Sequence[float] | None = None,
                     method: str = "tilted", workers: int = 1) -> ConstantEstimate:
    """``P^a_Z`` extrapolated to step 0 at horizon ``S1`` (fit in ``step ** alpha``)."""
    if not a > 0:
        raise ValueError(f"a must be positive, got {a}")
    steps = _step_ladder(z, steps)
    fine_step = steps[-1]
    count = _grid_for(S1, fine_step)
    levels = [_Level(int(round(s / fine_step)), count // int(round(s / fine_step))) for s in steps]
    levels.append(_Level(1, count // 2))  # plateau check on the finest grid
    vals, over = _run_levels(z, GridSpec(fine_step, count), levels, a, n, seed, method, workers)
    per_level = [_mean_se(vals[:, i]) for i in range(len(steps))]
    trace = [(s, m, se) for s, (m, se) in zip(steps, per_level)]
    weights = extrapolation_weights(steps, z.hurst)
    value, se = _mean_se(vals[:, : len(steps)] @ weights)
    flags = []
    m_half = float(vals[:, -1].mean())
    if abs(per_level[-1][0] - m_half) > PLATEAU_TOL * per_level[-1][0]:
        flags.append(f"no plateau: value changes {abs(per_level[-1][0] - m_half) / per_level[-1][0]:.1%} from S1/2 to S1")
    if over:
        flags.append(f"{over} paths hit the exponent clip")
    return ConstantEstimate("piterbarg", float(a), S1, fine_step, n, value, se, *per_level[-1], trace, seed, z.label,
                            method, "step", over, flags)


def pickands_ladder(z: ZSpec, n: int, seed: int, S_values: Sequence[float] | None = None,
                    steps: Sequence[float] | None = None, method: str = "tilted", workers: int = 1) -> ConstantEstimate:
    """``H_Z`` extrapolated to step 0 for each ``S``, then to ``S = inf`` in ``1/S``.

    The trace lists ``(S, step-extrapolated value, stderr)``.
    """
    steps = _step_ladder(z, steps)
    scale = z.natural_scale()
    S_values = sorted(DEFAULT_S_LADDER if S_values is None else S_values)
    if len(S_values) < 3:
        raise ValueError("need at least 3 horizons")
    if S_values == sorted(DEFAULT_S_LADDER):
        S_values = [s * scale for s in S_values]
    fine_step = steps[-1]
    count = _grid_for(S_values[-1], fine_step)
    levels, index = [], {}
    for S in S_values:
        for s in steps:
            stride = int(round(s / fine_step))
            levels.append(_Level(stride, _grid_for(S, s)))
            index[(S, s)] = len(levels) - 1
    vals, over = _run_levels(z, GridSpec(fine_step, count), levels, 0.0, n, seed, method, workers)
    w_step = extrapolation_weights(steps, z.hurst)
    per_S = np.column_stack([
        vals[:, [index[(S, s)] for s in steps]] @ w_step / S for S in S_values
    ])
    trace = [(S, *_mean_se(per_S[:, i])) for i, S in enumerate(S_values)]
    value, se = _mean_se(per_S @ extrapolation_weights(S_values, -1.0))
    raw, raw_se = _mean_se(vals[:, index[(S_values[-1], steps[-1])]] / S_values[-1])
    flags = [f"{over} paths hit the exponent clip"] if over else []
    return ConstantEstimate("pickands", None, S_values[-1], fine_step, n, value, se, raw, raw_se, trace, seed,
                            z.label, method, "S", over, flags)


# ---------------------------------------------------------------------------
# persistence


def write_estimates(path: str | Path, estimates: Iterable[ConstantEstimate]) -> None:
    """Append estimates as JSON lines."""
    with open(path, "a", encoding="utf-8") as fh:
        for e in estimates:
            fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")


def read_estimates(path: str | Path) -> list[ConstantEstimate]:
    with open(path, encoding="utf-8") as fh:
        return [ConstantEstimate.from_dict(json.loads(line)) for line in fh if line.strip()]
