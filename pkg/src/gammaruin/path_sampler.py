"""Exact Gaussian paths with stationary increments on uniform grids.

The increments ``X(t_{k+1}) - X(t_k)`` form a stationary sequence with
autocovariance :func:`increment_covariance`; they are drawn by circulant
embedding (Davies-Harte) and summed.  Independent-increment models skip the
FFT, and a Cholesky factor of the Toeplitz covariance is the fallback when
the embedding is not nonnegative definite.

Randomness is addressed by ``(seed, stream_id)`` through the counter-based
generator in :mod:`gammaruin.kernels`, so a path never depends on which
other paths were drawn or on the worker that drew it.
"""

from __future__ import annotations

import functools
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import linalg

from . import kernels
from .variance_models import VarianceModel

__all__ = [
    "GridSpec",
    "PathSample",
    "SamplerPlan",
    "EmbeddingNotPSD",
    "CholeskyFailure",
    "increment_covariance",
    "get_plan",
    "sample_path",
    "sample_batch",
    "sample_increments",
    "sample_values",
    "write_path",
    "read_path",
]

log = logging.getLogger(__name__)

CLIP_RATIO = 1e-9
MAX_DOUBLINGS = 3
_CHUNK_NORMALS = 1 << 21  # normals drawn per chunk of rows


class EmbeddingNotPSD(RuntimeError):
    """Circulant embedding has eigenvalues too negative to clip."""


class CholeskyFailure(RuntimeError):
    """Toeplitz increment covariance is not positive semidefinite."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``t_k = k * step``, ``k = 0..count``."""

    step: float
    count: int

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError(f"grid step must be positive, got {self.step}")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"grid count must be a positive integer, got {self.count}")
        object.__setattr__(self, "count", int(self.count))

    @classmethod
    def from_horizon(cls, horizon: float, count: int) -> "GridSpec":
        return cls(horizon / count, count)

    @property
    def horizon(self) -> float:
        return self.step * self.count

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.count + 1) * self.step

    def to_dict(self) -> dict:
        return {"step": self.step, "count": self.count}


@dataclass(frozen=True, eq=False)
class PathSample:
    """One realisation ``X(t_0), ..., X(t_n)`` with its provenance."""

    grid: GridSpec
    values: np.ndarray
    seed: int
    stream_id: int
    model_label: str
    method: str = ""

    def __post_init__(self):
        if self.values.shape != (self.grid.count + 1,):
            raise ValueError("values must have count + 1 entries")
        if self.values[0] != 0.0:
            raise ValueError("paths start at 0")


def increment_covariance(model: VarianceModel, step: float, lags: int) -> np.ndarray:
    """Autocovariance ``c(k)``, ``k = 0..lags-1``, of increments over ``step``."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if lags < 1:
        raise ValueError("need at least one lag")
    k = np.arange(lags + 1, dtype=float)
    s = np.asarray(model.sigma2(k * step), dtype=float)
    lo = np.concatenate([[s[1]], s[:-2]])  # sigma2(|k-1| step)
    return 0.5 * (s[1:] + lo - 2.0 * s[:-1])


@dataclass(eq=False)
class SamplerPlan:
    """Precomputed factorisation for one ``(model, grid)`` pair.

    ``method`` is ``"white"`` (independent increments), ``"circulant"`` or
    ``"cholesky"``.  ``eigen_min`` / ``eigen_max`` describe the final
    circulant spectrum and ``clip_error`` bounds the entrywise covariance
    error introduced by clipping negative eigenvalues.
    """

    model: VarianceModel
    grid: GridSpec
    method: str
    embed_size: int = 0
    sqrt_eig: np.ndarray | None = None
    chol: np.ndarray | None = None
    white_scale: float = 0.0
    eigen_min: float | None = None
    eigen_max: float | None = None
    clip_error: float = 0.0
    doublings: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def normals_per_path(self) -> int:
        if self.method == "circulant":
            return 2 * self.embed_size
        return self.grid.count

    def report(self) -> dict:
        return {
            "method": self.method,
            "embed_size": self.embed_size,
            "eigen_min": self.eigen_min,
            "eigen_max": self.eigen_max,
            "clip_error": self.clip_error,
            "doublings": self.doublings,
            "notes": list(self.notes),
        }

    def increments(self, normals: np.ndarray) -> np.ndarray:
        """Map standard normals (rows x normals_per_path) to increments."""
        n = self.grid.count
        if self.method == "white":
            return self.white_scale * normals
        if self.method == "circulant":
            m = self.embed_size
            z = normals[:, :m] + 1j * normals[:, m:]
            y = sfft.fft(self.sqrt_eig * z, axis=1, workers=1)
            return np.ascontiguousarray(y.real[:, :n])
        return normals @ self.chol.T


def _circulant_spectrum(model, step, n, size):
    c = increment_covariance(model, step, size // 2 + 1)
    row = np.concatenate([c, c[-2:0:-1]])
    return sfft.rfft(row).real, row.size


def _build_plan(model: VarianceModel, grid: GridSpec) -> SamplerPlan:
    n = grid.count
    if model.independent_increments:
        return SamplerPlan(model, grid, "white", white_scale=math.sqrt(float(model.sigma2(grid.step))))
    c = increment_covariance(model, grid.step, n)
    if not np.any(c):
        return SamplerPlan(model, grid, "white", white_scale=0.0, notes=["zero covariance"])
    if n == 1:
        return SamplerPlan(model, grid, "white", white_scale=math.sqrt(c[0]))
    size = 2 * (1 << max(0, (n - 1).bit_length()))  # power of two >= 2n
    notes: list[str] = []
    for doubling in range(MAX_DOUBLINGS + 1):
        half_eig, m = _circulant_spectrum(model, grid.step, n, size)
        lmax, lmin = float(half_eig.max()), float(half_eig.min())
        if lmin >= 0 or -lmin <= CLIP_RATIO * lmax:
            eig = np.concatenate([half_eig, half_eig[-2:0:-1]])
            neg = eig < 0
            clip_error = float(-eig[neg].sum() / m) if neg.any() else 0.0
            if neg.any():
                msg = f"clipped {int(neg.sum())} negative eigenvalues (min {lmin:.3e}); covariance error <= {clip_error:.3e}"
                log.info("%s: %s", model.label, msg)
                notes.append(msg)
            eig = np.maximum(eig, 0.0)
            return SamplerPlan(model, grid, "circulant", embed_size=m, sqrt_eig=np.sqrt(eig / m),
                               eigen_min=lmin, eigen_max=lmax, clip_error=clip_error,
                               doublings=doubling, notes=notes)
        notes.append(f"embedding {m}: min eigenvalue {lmin:.3e} vs max {lmax:.3e}")
        size *= 2
    log.warning("%s: circulant embedding not PSD after %d doublings; using Cholesky", model.label, MAX_DOUBLINGS)
    notes.append("cholesky fallback")
    try:
        chol = np.linalg.cholesky(linalg.toeplitz(c))
    except np.linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(linalg.toeplitz(c))[0])
        raise CholeskyFailure(
            f"increment covariance of {model.label} on step {grid.step:g} is not PSD "
            f"(smallest eigenvalue {smallest:.3e})") from exc
    return SamplerPlan(model, grid, "cholesky", chol=chol, eigen_min=lmin, eigen_max=lmax,
                       doublings=MAX_DOUBLINGS, notes=notes)


@functools.lru_cache(maxsize=32)
def _cached_plan(model: VarianceModel, step: float, count: int) -> SamplerPlan:
    return _build_plan(model, GridSpec(step, count))


def get_plan(model: VarianceModel, grid: GridSpec) -> SamplerPlan:
    """Plan for ``(model, grid)``, built once and reused."""
    return _cached_plan(model, grid.step, grid.count)


def sample_increments(plan: SamplerPlan, seed: int, streams: Sequence[int] | np.ndarray,
                      aux: int = 0) -> np.ndarray:
    """Increment rows (len(streams) x count) for the given streams."""
    streams = np.asarray(streams, dtype=np.uint64).reshape(-1)
    n_norm = plan.normals_per_path
    out = np.empty((streams.size, plan.grid.count))
    chunk = max(1, _CHUNK_NORMALS // n_norm)
    for lo in range(0, streams.size, chunk):
        z = kernels.normal_rows(seed, kernels.DOMAIN_PATH, streams[lo:lo + chunk], aux, 0, n_norm)
        out[lo:lo + chunk] = plan.increments(z)
    return out


def sample_values(plan: SamplerPlan, seed: int, streams, aux: int = 0) -> np.ndarray:
    """Path rows (len(streams) x (count+1)) starting at 0."""
    inc = sample_increments(plan, seed, streams, aux)
    out = np.zeros((inc.shape[0], inc.shape[1] + 1))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def sample_path(model: VarianceModel, grid: GridSpec, seed: int, stream_id: int) -> PathSample:
    """One path; deterministic in ``(model, grid, seed, stream_id)``."""
    plan = get_plan(model, grid)
    values = sample_values(plan, seed, [stream_id])[0]
    return PathSample(grid, values, int(seed), int(stream_id), model.label, plan.method)


def sample_batch(model: VarianceModel, grid: GridSpec, seed: int, streams: Iterable[int]) -> list[PathSample]:
    """One :class:`PathSample` per stream, sharing a single plan."""
    streams = list(streams)
    if not streams:
        return []
    plan = get_plan(model, grid)
    values = sample_values(plan, seed, streams)
    return [PathSample(grid, values[i], int(seed), int(s), model.label, plan.method) for i, s in enumerate(streams)]


# ---------------------------------------------------------------------------
# path dump: one JSON header line, then little-endian float64 values


def write_path(path: PathSample, fh: BinaryIO) -> None:
    header = {"grid": path.grid.to_dict(), "model_label": path.model_label, "seed": path.seed,
              "stream_id": path.stream_id, "method": path.method}
    fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
    fh.write(np.asarray(path.values, dtype="<f8").tobytes())


def read_path(fh: BinaryIO | bytes) -> PathSample:
    if isinstance(fh, (bytes, bytearray)):
        fh = io.BytesIO(fh)
    header = json.loads(fh.readline())
    grid = GridSpec(**header["grid"])
    values = np.frombuffer(fh.read(8 * (grid.count + 1)), dtype="<f8").astype(float)
    return PathSample(grid, values, header["seed"], header["stream_id"], header["model_label"], header.get("method", ""))
