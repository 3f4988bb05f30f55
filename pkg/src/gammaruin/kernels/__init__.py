"""Hot kernels with a compiled backend and a pure numpy fallback.

The compiled extension is used when it imports; set ``GAMMARUIN_PURE_PYTHON=1``
to force the fallback.  :func:`use_backend` switches temporarily (tests and
benchmarks).

Random numbers come from Philox4x64-10 keyed by the run seed.  A draw is
addressed by ``(domain, stream, aux, index)``; the counter is
``(index // 4, aux, stream, domain)`` and lane ``index % 4`` of the block is
returned, so any draw can be regenerated without touching its neighbours.
"""

from __future__ import annotations

import contextlib
import os
from typing import Iterator

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on build
    _ckernels = None

KEY_HI = 0x6A09E667F3BCC908

# draw domains
DOMAIN_PATH = 0
DOMAIN_BRIDGE = 1
DOMAIN_COARSE = 2
DOMAIN_SELECT = 3

_MASK64 = (1 << 64) - 1


def _default_backend():
    if os.environ.get("GAMMARUIN_PURE_PYTHON") or _ckernels is None:
        return _pykernels
    return _ckernels


_impl = _default_backend()


def backend_name() -> str:
    return "cython" if _impl is _ckernels else "python"


def compiled_available() -> bool:
    return _ckernels is not None


@contextlib.contextmanager
def use_backend(name: str) -> Iterator[None]:
    global _impl
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built")
        new = _ckernels
    elif name == "python":
        new = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    old, _impl = _impl, new
    try:
        yield
    finally:
        _impl = old


def philox_raw(counter, key) -> np.ndarray:
    """One Philox4x64-10 block (exposed for known-answer tests)."""
    return _impl.philox_raw(np.asarray(counter, dtype=np.uint64), np.asarray(key, dtype=np.uint64))


def _rows(seed, domain, streams, auxs, start, count, normal):
    streams = np.ascontiguousarray(np.atleast_1d(streams), dtype=np.uint64)
    if np.ndim(auxs) == 0:
        auxs = np.full(streams.shape, int(auxs), dtype=np.uint64)
    auxs = np.ascontiguousarray(auxs, dtype=np.uint64)
    if auxs.shape != streams.shape:
        raise ValueError("streams and auxs must have the same length")
    return _impl.fill_rows(int(seed) & _MASK64, KEY_HI, int(domain), streams, auxs, int(start), int(count), bool(normal))


def normal_rows(seed: int, domain: int, streams, auxs=0, start: int = 0, count: int = 1) -> np.ndarray:
    """Standard normals, one row per ``(stream, aux)``: draws ``start .. start+count-1``."""
    return _rows(seed, domain, streams, auxs, start, count, True)


def uniform_rows(seed: int, domain: int, streams, auxs=0, start: int = 0, count: int = 1) -> np.ndarray:
    """Uniforms on [0, 1) addressed like :func:`normal_rows`."""
    return _rows(seed, domain, streams, auxs, start, count, False)


def reflected_prefix_sup(drifted: np.ndarray, gammas, ends) -> np.ndarray:
    """``sup_{k <= e} (D_k - gamma * min_{j <= k} D_j)`` for every row, gamma and end index."""
    drifted = np.ascontiguousarray(drifted, dtype=np.float64)
    gammas = np.ascontiguousarray(np.atleast_1d(gammas), dtype=np.float64)
    ends = np.ascontiguousarray(np.atleast_1d(ends), dtype=np.int64)
    if drifted.ndim != 2 or drifted.shape[1] == 0:
        raise ValueError("drifted must be a non-empty 2-d array")
    if ends.size and (np.any(np.diff(ends) < 0) or ends[0] < 0 or ends[-1] >= drifted.shape[1]):
        raise ValueError("ends must be sorted indices into the path")
    return _impl.reflected_prefix_sup(drifted, gammas, ends)


def reflected_sup(drifted: np.ndarray, gamma: float) -> np.ndarray:
    drifted = np.ascontiguousarray(drifted, dtype=np.float64)
    return reflected_prefix_sup(drifted, [gamma], [drifted.shape[1] - 1])[:, 0, 0]


def reflected_passages(drifted: np.ndarray, gamma: float, u: float) -> tuple[np.ndarray, np.ndarray]:
    """First and last index with ``W > u`` per row (``-1`` when there is none)."""
    drifted = np.ascontiguousarray(drifted, dtype=np.float64)
    if drifted.ndim != 2:
        raise ValueError("drifted must be 2-d")
    return _impl.reflected_passages(drifted, float(gamma), float(u))


def bridge_screen(x: np.ndarray, h: float, rate: float, lam: float, c: float, gamma: float, u: float,
                  last_gap: int) -> np.ndarray:
    """Boolean per row: the bridge-margin bound on ``W`` exceeds ``u`` in a gap before ``last_gap``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if not 0 <= last_gap < x.shape[1]:
        raise ValueError("last_gap out of range")
    return _impl.bridge_screen(x, float(h), float(rate), float(lam), float(c), float(gamma), float(u),
                               int(last_gap)).astype(bool)

