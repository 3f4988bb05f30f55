"""Monte Carlo ruin probabilities and conditional passage times.

All estimates are grid estimates: a path is ruined when ``W_gamma`` exceeds
``u`` at a grid point.  Stream ``i`` of a run always receives the same
random numbers, so results do not depend on the worker count, disjoint
stream ranges merge exactly, and runs that share a seed are coupled path by
path (monotone in ``gamma``, ``u`` and the horizon, and in the grid when
grids are nested).
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .asymptotics import find_tu, m_of_u, passage_limit_infinite, passage_rate_finite
from .engines import _default_levels, make_engine
from .parallel import map_blocks, split_range
from .reflection import check_resolution
from .variance_models import VarianceModel

__all__ = [
    "RuinEstimate",
    "SweepResult",
    "PassageSampleSet",
    "GridResolutionError",
    "InfeasibleGrid",
    "wilson_interval",
    "normal_interval",
    "ruin_sweep",
    "estimate_ruin_finite",
    "estimate_ruin_grid",
    "estimate_ruin_infinite",
    "infinite_horizon_window",
    "sample_conditional_passages",
    "apply_scaling",
    "ks_statistic",
    "append_results",
    "read_results",
    "PATH_BUDGET",
    "MAX_GRID_POINTS",
]

Z95 = 1.959963984540054
MIN_RESOLUTION_POINTS = 1 << 10
MAX_GRID_POINTS = 1 << 26
PATH_BUDGET = 10 ** 9
WILSON_BELOW = 50
_STREAM_BLOCK = 1 << 16


class GridResolutionError(ValueError):
    """Grid step too coarse for the requested horizon."""


class InfeasibleGrid(ValueError):
    """Truncated infinite-horizon grid would be too large."""


# ---------------------------------------------------------------------------
# intervals


def wilson_interval(hits: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    p = hits / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


def normal_interval(hits: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    p = hits / n
    se = math.sqrt(p * (1 - p) / n)
    return max(0.0, p - z * se), min(1.0, p + z * se)


def _horizon_json(T: float):
    return "inf" if math.isinf(T) else T


def _horizon_value(T) -> float:
    return math.inf if T in ("inf", None) else float(T)


@dataclass
class RuinEstimate:
    """Grid estimate of a ruin probability with a 95% interval.

    ``ci95`` is the Wilson interval when fewer than 50 hits were seen and
    the normal interval otherwise; both are stored.
    """

    n_hits: int
    n_paths: int
    u: float
    c: float
    gamma: float
    T: float
    delta: float
    seed: int
    model_label: str = ""
    engine: str = ""
    stream_start: int = 0
    truncation_note: str | None = None
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.n_paths <= 0 or not 0 <= self.n_hits <= self.n_paths:
            raise ValueError("need 0 <= n_hits <= n_paths and n_paths > 0")

    @property
    def p_hat(self) -> float:
        return self.n_hits / self.n_paths

    @property
    def stderr(self) -> float:
        p = self.p_hat
        return math.sqrt(p * (1 - p) / self.n_paths)

    @property
    def ci_method(self) -> str:
        return "wilson" if self.n_hits < WILSON_BELOW else "normal"

    @property
    def ci_wilson(self) -> tuple[float, float]:
        return wilson_interval(self.n_hits, self.n_paths)

    @property
    def ci_normal(self) -> tuple[float, float]:
        return normal_interval(self.n_hits, self.n_paths)

    @property
    def ci95(self) -> tuple[float, float]:
        return self.ci_wilson if self.ci_method == "wilson" else self.ci_normal

    def merge(self, other: "RuinEstimate") -> "RuinEstimate":
        """Pool two runs over disjoint stream ranges of the same configuration."""
        keys = ("u", "c", "gamma", "T", "delta", "seed")
        if any(getattr(self, k) != getattr(other, k) for k in keys):
            raise ValueError("can only merge estimates of the same configuration")
        return RuinEstimate(self.n_hits + other.n_hits, self.n_paths + other.n_paths, self.u, self.c,
                            self.gamma, self.T, self.delta, self.seed, self.model_label, self.engine,
                            min(self.stream_start, other.stream_start), self.truncation_note,
                            self.notes + [n for n in other.notes if n not in self.notes])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["T"] = _horizon_json(self.T)
        d.update(p_hat=self.p_hat, stderr=self.stderr, ci95=list(self.ci95), ci_method=self.ci_method,
                 ci_wilson=list(self.ci_wilson), ci_normal=list(self.ci_normal))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RuinEstimate":
        names = {f for f in cls.__dataclass_fields__}
        kw = {k: v for k, v in d.items() if k in names}
        kw["T"] = _horizon_value(d["T"])
        return cls(**kw)


# ---------------------------------------------------------------------------
# coupled sweeps


@dataclass
class SweepResult:
    """Hit counts on common paths, indexed ``[stride, gamma, horizon, u]``."""

    counts: np.ndarray
    n_paths: int
    gammas: tuple
    us: tuple
    horizons: tuple
    strides: tuple
    delta: float
    c: float
    seed: int
    model_label: str
    engine: str
    stream_start: int = 0
    refined_paths: int = 0

    def p_hat(self) -> np.ndarray:
        return self.counts / self.n_paths

    def estimate(self, gamma: float, u: float, T: float, stride: int = 1) -> RuinEstimate:
        i = (self.strides.index(stride), self.gammas.index(gamma), self.horizons.index(T), self.us.index(u))
        return RuinEstimate(int(self.counts[i]), self.n_paths, u, self.c, gamma, T, self.delta * stride,
                            self.seed, self.model_label, self.engine, self.stream_start)


def _validate(c, gammas, us):
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    for g in gammas:
        if not 0.0 <= g <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {g}")
    for u in us:
        if not u >= 0:
            raise ValueError(f"u must be nonnegative, got {u}")


def _end_indices(horizons, delta):
    ends = []
    for T in horizons:
        k = int(round(T / delta))
        if abs(k * delta - T) > 1e-9 * T:
            raise GridResolutionError(f"horizon {T} is not a multiple of the grid step {delta}")
        ends.append(k)
    return ends


def _run_engine(engine, seed, spans, c, gammas, ends, us, strides, passage, workers):
    def task(span):
        return engine.run(seed, span, c, list(gammas), list(ends), list(us), tuple(strides), passage)

    return map_blocks(task, spans, workers)


def ruin_sweep(model: VarianceModel, c: float, gammas: Sequence[float], us: Sequence[float],
               horizons: Sequence[float], delta: float, n: int, seed: int, strides: Sequence[int] = (1,),
               stream_start: int = 0, workers: int = 1, engine: str = "auto",
               coarse_step: float | None = None) -> SweepResult:
    """Ruin indicators for every ``(stride, gamma, horizon, u)`` on one set of paths.

    ``stride`` ``s`` evaluates the subgrid of step ``s * delta``, a coarser
    grid nested in the simulated one.
    """
    gammas, us, horizons = tuple(map(float, gammas)), tuple(map(float, us)), tuple(map(float, horizons))
    strides = tuple(int(s) for s in strides)
    _validate(c, gammas, us)
    if n < 1:
        raise ValueError("n must be positive")
    ends = _end_indices(horizons, delta)
    order = np.argsort(ends, kind="stable")
    if any(e % s for e in ends for s in strides):
        raise GridResolutionError("every horizon must be a multiple of every stride")
    eng = make_engine(model, delta, max(horizons), engine, coarse_step)
    spans = split_range(stream_start, stream_start + n, _STREAM_BLOCK)
    parts = _run_engine(eng, seed, spans, c, gammas, [ends[i] for i in order], us, strides, None, workers)
    sorted_counts = sum(p.counts for p in parts)
    counts = np.empty_like(sorted_counts)
    counts[:, :, order, :] = sorted_counts
    return SweepResult(counts, n, gammas, us, horizons, strides, float(delta), float(c), int(seed), model.label,
                       eng.name, stream_start, sum(p.refined for p in parts))


def _coarse_for(model, delta, scale):
    """Bridge coarse step shared by coupled runs (``None`` for the grid engine)."""
    if model.brownian_rate is None:
        return None
    return delta * (1 << _default_levels(delta, scale))


def estimate_ruin_grid(model: VarianceModel, c: float, gammas: Sequence[float], us: Sequence[float], T: float,
                       delta: float, n: int, seed: int, workers: int = 1, stream_start: int = 0,
                       pilot: bool = True, engine: str = "auto",
                       coarse_step: float | None = None) -> list[RuinEstimate]:
    """Finite-horizon estimates for every ``(gamma, u)`` on one set of paths.

    A pilot on ``n // 10`` paths at step ``delta / 2`` compares each pilot
    path with its own subgrid of step ``delta`` and adds a note wherever the
    refinement raises the estimate by more than one standard error.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if delta > T / MIN_RESOLUTION_POINTS * (1 + 1e-12):
        raise GridResolutionError(f"grid step {delta:g} exceeds T/2^10 = {T / MIN_RESOLUTION_POINTS:g}")
    if n < 100:
        raise ValueError("n must be at least 100")
    if coarse_step is None and engine != "grid":
        coarse_step = _coarse_for(model, delta, T)
    kw = dict(stream_start=stream_start, workers=workers, engine=engine, coarse_step=coarse_step)
    sweep = ruin_sweep(model, c, gammas, us, [T], delta, n, seed, **kw)
    ests = [sweep.estimate(g, u, float(T)) for g in sweep.gammas for u in sweep.us]
    if pilot:
        n_pilot = max(1, n // 10)
        half = ruin_sweep(model, c, gammas, us, [T], delta / 2, n_pilot, seed, strides=(1, 2), **kw)
        for est in ests:
            gi, ui = half.gammas.index(est.gamma), half.us.index(est.u)
            fine, coarse = half.counts[:, gi, 0, ui]
            shift = (fine - coarse) / n_pilot
            if abs(shift) > est.stderr:
                est.notes.append(f"grid bias: halving the step on {n_pilot} common paths raises p_hat by "
                                 f"{shift:.3g} (stderr {est.stderr:.3g})")
    return ests


def estimate_ruin_finite(model: VarianceModel, c: float, gamma: float, u: float, T: float, delta: float,
                         n: int, seed: int, workers: int = 1, stream_start: int = 0, pilot: bool = True,
                         engine: str = "auto", coarse_step: float | None = None) -> RuinEstimate:
    """Fraction of ``n`` paths whose grid ``W_gamma`` exceeds ``u`` on ``[0, T]``.

    See :func:`estimate_ruin_grid` for the grid-bias pilot.
    """
    return estimate_ruin_grid(model, c, [gamma], [u], T, delta, n, seed, workers, stream_start, pilot, engine,
                              coarse_step)[0]


# ---------------------------------------------------------------------------
# infinite horizon


@dataclass(frozen=True)
class _Window:
    t_u: float
    sigma_u: float
    width: float  # absolute-time width of the localisation window
    T_max: float
    delta: float
    m_u: float


def infinite_horizon_window(model: VarianceModel, c: float, u: float, delta_rel: float,
                            window_k: float = 6.0) -> _Window:
    """Truncation horizon and grid step for an infinite-horizon run.

    ``T_max = u t_u + window_k sigma(u) ln u`` and the step is ``delta_rel``
    times the window width ``2 sigma(u) ln u`` (``ln u`` floored at 1).
    """
    if not (delta_rel > 0 and window_k > 0):
        raise ValueError("delta_rel and window_k must be positive")
    t_u = find_tu(model, c, u)
    m_u = m_of_u(model, c, u, t_u)
    if m_u < 2:
        raise ValueError(f"u={u:g} gives m(u)={m_u:.3g} < 2; the truncation window needs larger u")
    sigma_u = math.sqrt(float(model.sigma2(u)))
    log_u = math.log(max(u, math.e))
    width = 2.0 * sigma_u * log_u
    delta = delta_rel * width
    T_max = u * t_u + window_k * sigma_u * log_u
    points = T_max / delta
    if points > MAX_GRID_POINTS:
        raise InfeasibleGrid(f"{points:.3g} grid points exceed 2^26; use a larger delta_rel or a smaller u")
    return _Window(t_u, sigma_u, width, T_max, delta, m_u)


def _round_up(T, delta):
    return math.ceil(T / delta - 1e-9) * delta


def estimate_ruin_infinite(model: VarianceModel, c: float, gamma: float, u: float, delta_rel: float, n: int,
                           seed: int, window_k: float = 6.0, workers: int = 1, stream_start: int = 0,
                           engine: str = "auto") -> RuinEstimate:
    """Ruin before ``T_max`` (see :func:`infinite_horizon_window`) as a proxy for ruin ever.

    Runs with the same ``delta_rel`` and seed but different ``window_k``
    share their paths on the common time range (bridge engine).
    """
    if n < 100:
        raise ValueError("n must be at least 100")
    w = infinite_horizon_window(model, c, u, delta_rel, window_k)
    T_sim = _round_up(w.T_max, w.delta)
    coarse = _coarse_for(model, w.delta, w.width) if engine != "grid" else None
    sweep = ruin_sweep(model, c, [gamma], [u], [T_sim], w.delta, n, seed, stream_start=stream_start,
                       workers=workers, engine=engine, coarse_step=coarse)
    est = sweep.estimate(float(gamma), float(u), T_sim)
    est.T = math.inf
    est.truncation_note = (f"truncated at T_max={T_sim:.6g} = u t_u + {window_k:g} sigma(u) ln u "
                           f"(u t_u={u * w.t_u:.6g}, window width {w.width:.6g}, step {w.delta:.4g})")
    return est


# ---------------------------------------------------------------------------
# conditional passage times


@dataclass
class PassageSampleSet:
    """Scaled first/last passage times of the ruined paths."""

    scaled_tau1: np.ndarray
    scaled_tau2: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray
    scaling: dict
    u: float
    c: float
    gamma: float
    T: float
    delta: float
    seed: int
    n_paths: int
    model_label: str = ""
    exhausted: bool = False
    truncation_note: str | None = None

    def __post_init__(self):
        if not (len(self.scaled_tau1) == len(self.scaled_tau2) == len(self.tau1) == len(self.tau2)):
            raise ValueError("passage vectors must have equal length")
        if not (np.all(np.isfinite(self.scaled_tau1)) and np.all(np.isfinite(self.scaled_tau2))):
            raise ValueError("passage samples must be finite")

    @property
    def n_conditional(self) -> int:
        return len(self.tau1)

    @property
    def p_hat(self) -> float:
        return self.n_conditional / self.n_paths if self.n_paths else float("nan")

    def correlation(self) -> float:
        return float(np.corrcoef(self.scaled_tau1, self.scaled_tau2)[0, 1])

    def to_dict(self) -> dict:
        return {
            "kind": "passages", "u": self.u, "c": self.c, "gamma": self.gamma, "T": _horizon_json(self.T),
            "delta": self.delta, "seed": self.seed, "n_paths": self.n_paths, "n_conditional": self.n_conditional,
            "model_label": self.model_label, "exhausted": self.exhausted, "scaling": self.scaling,
            "truncation_note": self.truncation_note,
            "tau1": self.tau1.tolist(), "tau2": self.tau2.tolist(),
        }


def apply_scaling(tau1, tau2, T: float, scaling: dict) -> tuple[np.ndarray, np.ndarray]:
    """``rate (T - tau)`` when ``scaling`` has a rate, ``(tau - center) / scale`` otherwise.

    Each passage is mapped on its own; the finite-horizon map reverses order.
    """
    tau1, tau2 = np.asarray(tau1, dtype=float), np.asarray(tau2, dtype=float)
    if "rate" in scaling:
        r = float(scaling["rate"])
        return r * (T - tau1), r * (T - tau2)
    centre, scale = float(scaling["center"]), float(scaling["scale"])
    return (tau1 - centre) / scale, (tau2 - centre) / scale


def sample_conditional_passages(model: VarianceModel, c: float, gamma: float, u: float, T: float, delta: float,
                                n_target: int, seed: int, scaling: dict | None = None,
                                budget: int = PATH_BUDGET, window_k: float = 6.0, workers: int = 1,
                                batch: int = _STREAM_BLOCK, engine: str = "auto") -> PassageSampleSet:
    """Collect ``n_target`` ruined paths by plain rejection and scale their passage times.

    ``T = inf`` simulates up to the truncation horizon of
    :func:`infinite_horizon_window` (grid step ``delta`` given in absolute
    time).  Streams are consumed in blocks of ``batch``; the set stops at
    the first block that completes the target, so it does not depend on the
    worker count.  Exhausting ``budget`` paths returns a flagged partial set.
    """
    if n_target < 200:
        raise ValueError("n_target must be at least 200")
    _validate(c, [gamma], [u])
    infinite = math.isinf(T)
    if infinite:
        t_u = find_tu(model, c, u)
        sigma_u = math.sqrt(float(model.sigma2(u)))
        log_u = math.log(max(u, math.e))
        horizon = _round_up(u * t_u + window_k * sigma_u * log_u, delta)
        if horizon / delta > MAX_GRID_POINTS:
            raise InfeasibleGrid("truncated grid exceeds 2^26 points")
        coarse = _coarse_for(model, delta, 2.0 * sigma_u * log_u) if engine != "grid" else None
        note = f"truncated at T_max={horizon:.6g}"
        if scaling is None:
            centre, scale = passage_limit_infinite(model, c, u)
            scaling = {"center": centre, "scale": scale}
            check_resolution(delta, scale, "passage scale A(u)")
    else:
        horizon = float(T)
        if delta > T / MIN_RESOLUTION_POINTS * (1 + 1e-12):
            raise GridResolutionError(f"grid step {delta:g} exceeds T/2^10")
        coarse = _coarse_for(model, delta, T) if engine != "grid" else None
        note = None
        if scaling is None:
            rate = passage_rate_finite(model, u, T)
            scaling = {"rate": rate}
            check_resolution(delta, 1.0 / rate, "passage scale 1/rate")
    end = int(round(horizon / delta))
    eng = make_engine(model, delta, horizon, engine, coarse)
    passage = (float(gamma), float(u), end)

    def task(span):
        return eng.run(seed, span, c, [gamma], [end], [u], (1,), passage)

    workers = max(1, workers)
    firsts, lasts = [], []
    got, used, start = 0, 0, 0
    exhausted = False
    while got < n_target:
        if start >= budget:
            exhausted = True
            break
        spans = [(a, min(a + batch, budget)) for a in range(start, min(budget, start + workers * batch), batch)]
        for span, res in zip(spans, map_blocks(task, spans, workers)):
            order = np.argsort(res.passage_streams, kind="stable")
            firsts.append(res.first[order])
            lasts.append(res.last[order])
            got += res.first.size
            used = span[1]
            if got >= n_target:
                break
        start = spans[-1][1]
    tau1 = np.concatenate(firsts) * delta if firsts else np.empty(0)
    tau2 = np.concatenate(lasts) * delta if lasts else np.empty(0)
    s1, s2 = apply_scaling(tau1, tau2, horizon, scaling)
    return PassageSampleSet(s1, s2, tau1, tau2, dict(scaling), float(u), float(c), float(gamma),
                            math.inf if infinite else horizon, float(delta), int(seed), used, model.label,
                            exhausted, note)


# ---------------------------------------------------------------------------
# distribution distance


_REFERENCES = {"stdnormal": "norm", "normal": "norm", "exp1": "expon", "exp": "expon"}


def ks_statistic(samples, cdf: str) -> float:
    """Kolmogorov-Smirnov distance to ``"StdNormal"`` or ``"Exp1"``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 20:
        raise ValueError(f"need at least 20 samples, got {x.size}")
    key = str(cdf).lower().replace("_", "").replace("(", "").replace(")", "")
    if key not in _REFERENCES:
        raise ValueError(f"unknown reference distribution {cdf!r}")
    return float(stats.kstest(x, _REFERENCES[key]).statistic)


# ---------------------------------------------------------------------------
# results store


def _code_version() -> str:
    from . import __version__

    return __version__


def append_results(path: str | Path, records: Iterable, model: VarianceModel | None = None,
                   timestamp: str | None = None) -> None:
    """Append estimates as JSON lines with kind, model, seed, timestamp and code version."""
    ts = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with open(path, "a", encoding="utf-8") as fh:
        for rec in records:
            body = rec.to_dict() if hasattr(rec, "to_dict") else dict(rec)
            row = {"kind": body.pop("kind", "ruin"), "model_label": body.get("model_label", ""),
                   "params": model.spec() if model is not None else {}, **body,
                   "timestamp": ts, "code_version": _code_version()}
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_results(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
