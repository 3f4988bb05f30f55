"""Path engines behind the ruin estimators.

Both engines answer, for blocks of streams, which grid paths of
``W_gamma`` exceed ``u`` before each horizon, for several ``gamma``, ``u``,
horizons and coarsenings at once (all on the same paths), and can return
first/last passage indices.

``GridEngine`` samples whole paths with :mod:`gammaruin.path_sampler`.

``BridgeEngine`` handles independent increments (``sigma2 = k t``) and
produces exactly the same grid path as brute-force dyadic Brownian-bridge
refinement of a coarse random walk, but only refines paths that might hit.
A coarse step ``H = step * 2**L`` is drawn first; each later stage splits
every gap 4 ways (two midpoint rounds).  Before refining, a path is
dropped when an upper bound on ``W`` over every gap stays at or below ``u``.
The bound widens each gap of width ``h`` by the margin ``m`` solving
``2 m (m + |endpoint difference|) = k h lam`` above its endpoint maximum and
below its endpoint minimum; a Brownian bridge crosses either edge of that
band with probability ``exp(-lam)``, and ``lam`` is set
so that a wrong drop has probability below ``exp(-60)`` per path and stage.

Random numbers: the coarse increment of block ``j`` is draw ``j`` of the
coarse domain; the midpoint of dyadic node ``i`` (heap numbering, root 1) in
block ``j`` is draw ``i`` of the bridge domain with ``aux = j``.  Paths are
therefore nested under halving of ``step`` (same ``H``) and prefix
consistent in the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .path_sampler import GridSpec, get_plan, sample_values
from .variance_models import VarianceModel

__all__ = ["BlockResult", "GridEngine", "BridgeEngine", "BridgeLayout", "make_engine"]

SCREEN_LOG_FAILURE = 60.0
_STAGE_ROUNDS = 2
_BRIDGE_BLOCK_ROWS = 1 << 14
_GRID_BLOCK_NORMALS = 1 << 21


@dataclass
class BlockResult:
    """Hit counts ``[stride, gamma, end, u]`` plus optional passage indices."""

    n: int
    counts: np.ndarray
    passage_streams: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    first: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    last: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    refined: int = 0  # paths brought to full resolution


def _hits_from_drifted(drifted, step_index_ends, gammas, us, strides):
    """Counts for full-resolution drifted paths (rows x points)."""
    ng, ne, nu = len(gammas), len(step_index_ends), len(us)
    counts = np.zeros((len(strides), ng, ne, nu), dtype=np.int64)
    u_arr = np.asarray(us, dtype=float)
    for si, s in enumerate(strides):
        sub = drifted[:, ::s] if s > 1 else drifted
        ends = np.asarray(step_index_ends) // s
        sups = kernels.reflected_prefix_sup(sub, gammas, ends)  # rows, ng, ne
        counts[si] = (sups[..., None] > u_arr).sum(axis=0)
    return counts


class GridEngine:
    """Whole-path sampling through the circulant (or white / Cholesky) plan."""

    name = "grid"

    def __init__(self, model: VarianceModel, step: float, count: int):
        self.model = model
        self.grid = GridSpec(step, count)
        self.plan = get_plan(model, self.grid)
        self.block_rows = max(1, _GRID_BLOCK_NORMALS // self.plan.normals_per_path)

    @property
    def count(self) -> int:
        return self.grid.count

    def _drifted(self, seed, lo, hi, c):
        streams = np.arange(lo, hi, dtype=np.uint64)
        x = sample_values(self.plan, seed, streams)
        return x - c * self.grid.times

    def run(self, seed, span, c, gammas, ends, us, strides=(1,), passage=None) -> BlockResult:
        lo, hi = span
        counts = np.zeros((len(strides), len(gammas), len(ends), len(us)), dtype=np.int64)
        ps, fs, ls = [], [], []
        for a in range(lo, hi, self.block_rows):
            b = min(hi, a + self.block_rows)
            d = self._drifted(seed, a, b, c)
            counts += _hits_from_drifted(d, ends, gammas, us, strides)
            if passage is not None:
                g, u, end = passage
                f, l = kernels.reflected_passages(d[:, : end + 1], g, u)
                hit = f >= 0
                ps.append(np.arange(a, b)[hit])
                fs.append(f[hit])
                ls.append(l[hit])
        res = BlockResult(hi - lo, counts, refined=hi - lo)
        if passage is not None:
            res.passage_streams = np.concatenate(ps) if ps else np.empty(0, dtype=np.int64)
            res.first = np.concatenate(fs) if fs else np.empty(0, dtype=np.int64)
            res.last = np.concatenate(ls) if ls else np.empty(0, dtype=np.int64)
        return res


@dataclass(frozen=True)
class BridgeLayout:
    step: float
    levels: int  # coarse gap = 2**levels fine steps
    blocks: int
    rate: float

    @property
    def coarse_step(self) -> float:
        return self.step * (1 << self.levels)

    @property
    def count(self) -> int:
        return self.blocks << self.levels


def _default_levels(step: float, horizon: float) -> int:
    """Largest ``L <= 10`` with ``step * 2**L <= horizon / 8``."""
    ratio = horizon / (8.0 * step)
    return int(max(0, min(10, math.floor(math.log2(ratio))))) if ratio >= 1 else 0


def bridge_layout(step: float, horizon: float, rate: float, coarse_step: float | None = None) -> BridgeLayout:
    """Layout covering ``[0, horizon]`` (rounded up to whole coarse blocks)."""
    if coarse_step is None:
        levels = _default_levels(step, horizon)
    else:
        r = coarse_step / step
        levels = int(round(math.log2(r))) if r >= 1 else -1
        if levels < 0 or abs((1 << levels) - r) > 1e-9 * r:
            raise ValueError(f"coarse step {coarse_step} must be step * 2**L, step={step}")
    gap = step * (1 << levels)
    blocks = int(math.ceil(horizon / gap - 1e-9))
    return BridgeLayout(step, levels, max(1, blocks), rate)


class BridgeEngine:
    """Screened dyadic Brownian-bridge construction for ``sigma2 = rate * t``."""

    name = "bridge"

    def __init__(self, model: VarianceModel, step: float, horizon: float, coarse_step: float | None = None):
        if model.brownian_rate is None:
            raise ValueError("the bridge engine needs independent increments")
        self.model = model
        self.layout = bridge_layout(step, horizon, model.brownian_rate, coarse_step)

    @property
    def count(self) -> int:
        return self.layout.count

    # -- construction ------------------------------------------------------

    def _coarse(self, seed, streams):
        lay = self.layout
        z = kernels.normal_rows(seed, kernels.DOMAIN_COARSE, streams, 0, 0, lay.blocks)
        x = np.zeros((streams.size, lay.blocks + 1))
        np.cumsum(z * math.sqrt(lay.rate * lay.coarse_step), axis=1, out=x[:, 1:])
        return x

    def _refine(self, seed, streams, x, r0, r1):
        """Insert midpoint rounds ``r0+1 .. r1`` (round r splits nodes of depth r-1)."""
        lay = self.layout
        nb = lay.blocks
        first_id, last_id = 1 << r0, (1 << r1) - 1
        rows = np.repeat(streams, nb)
        auxs = np.tile(np.arange(nb, dtype=np.uint64), streams.size)
        z = kernels.normal_rows(seed, kernels.DOMAIN_BRIDGE, rows, auxs, first_id, last_id - first_id + 1)
        z = z.reshape(streams.size, nb, -1)
        for r in range(r0 + 1, r1 + 1):
            per_block = 1 << (r - 1)
            lo = per_block - first_id
            zr = z[:, :, lo:lo + per_block].reshape(streams.size, nb * per_block)
            width = lay.coarse_step / per_block
            mid = 0.5 * (x[:, :-1] + x[:, 1:]) + math.sqrt(lay.rate * width / 4.0) * zr
            new = np.empty((x.shape[0], 2 * x.shape[1] - 1))
            new[:, 0::2] = x
            new[:, 1::2] = mid
            x = new
        return x

    # -- screening ---------------------------------------------------------

    def _suspect(self, x, depth, c, gamma, u, end_index):
        """Rows whose W-bound exceeds ``u`` somewhere before ``end_index`` (fine units)."""
        lay = self.layout
        per_gap = 1 << (lay.levels - depth)  # fine steps per gap
        h = per_gap * lay.step
        n_gaps = x.shape[1] - 1
        last_gap = min(n_gaps, -(-end_index // per_gap))  # gaps starting before the end
        lam = math.log(2.0 * n_gaps) + SCREEN_LOG_FAILURE
        return kernels.bridge_screen(x, h, lay.rate, lam, c, gamma, u, last_gap)

    def _full_paths(self, seed, streams, c, gamma, u, end_index):
        """Full-resolution drifted rows for the streams that survive screening."""
        lay = self.layout
        x = self._coarse(seed, streams)
        depth = 0
        keep = np.arange(streams.size)
        while True:
            if depth == lay.levels:
                return keep, x - c * np.arange(x.shape[1]) * lay.step
            sus = self._suspect(x, depth, c, gamma, u, end_index)
            keep, x = keep[sus], x[sus]
            if keep.size == 0:
                return keep, x
            nxt = min(lay.levels, depth + _STAGE_ROUNDS)
            x = self._refine(seed, streams[keep], x, depth, nxt)
            depth = nxt

    def run(self, seed, span, c, gammas, ends, us, strides=(1,), passage=None) -> BlockResult:
        lo, hi = span
        counts = np.zeros((len(strides), len(gammas), len(ends), len(us)), dtype=np.int64)
        g_max, u_min, e_max = max(gammas), min(us), max(ends)
        if passage is not None:
            g_max, u_min, e_max = max(g_max, passage[0]), min(u_min, passage[1]), max(e_max, passage[2])
        ps, fs, ls = [], [], []
        refined = 0
        for a in range(lo, hi, _BRIDGE_BLOCK_ROWS):
            b = min(hi, a + _BRIDGE_BLOCK_ROWS)
            streams = np.arange(a, b, dtype=np.uint64)
            keep, d = self._full_paths(seed, streams, c, g_max, u_min, e_max)
            refined += keep.size
            if keep.size == 0:
                continue
            counts += _hits_from_drifted(d, ends, gammas, us, strides)
            if passage is not None:
                g, u, end = passage
                f, l = kernels.reflected_passages(d[:, : end + 1], g, u)
                hit = f >= 0
                ps.append(streams[keep][hit].astype(np.int64))
                fs.append(f[hit])
                ls.append(l[hit])
        res = BlockResult(hi - lo, counts, refined=refined)
        if passage is not None:
            res.passage_streams = np.concatenate(ps) if ps else np.empty(0, dtype=np.int64)
            res.first = np.concatenate(fs) if fs else np.empty(0, dtype=np.int64)
            res.last = np.concatenate(ls) if ls else np.empty(0, dtype=np.int64)
        return res

    def brute_force_paths(self, seed, streams) -> np.ndarray:
        """All requested paths at full resolution, no screening (reference)."""
        streams = np.asarray(streams, dtype=np.uint64)
        x = self._coarse(seed, streams)
        return self._refine(seed, streams, x, 0, self.layout.levels) if self.layout.levels else x


def make_engine(model: VarianceModel, step: float, horizon: float, engine: str = "auto",
                coarse_step: float | None = None):
    """Bridge engine for independent increments, grid engine otherwise."""
    if engine not in ("auto", "bridge", "grid"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "bridge" or (engine == "auto" and model.brownian_rate is not None):
        return BridgeEngine(model, step, horizon, coarse_step)
    count = int(round(horizon / step))
    if abs(count * step - horizon) > 1e-9 * horizon:
        count = int(math.ceil(horizon / step - 1e-9))
    return GridEngine(model, step, count)
