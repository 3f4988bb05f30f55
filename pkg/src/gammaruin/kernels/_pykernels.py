"""Pure numpy versions of the compiled kernels.

Same signatures and semantics as ``_ckernels``.  Normals agree with the
compiled backend to rounding of ``log``/``cos``/``sin``; everything else is
bit-identical.
"""

from __future__ import annotations

import numpy as np

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)


def _mulhilo(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a0, a1 = a & _M32, a >> _S32
    b0, b1 = b & _M32, b >> _S32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> _S32) + (p01 & _M32) + (p10 & _M32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, a * b


def _philox(x0, x1, x2, x3, k0, k1):
    with np.errstate(over="ignore"):
        k0 = np.uint64(k0)
        k1 = np.uint64(k1)
        for r in range(10):
            if r:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(_M0, x0)
            hi1, lo1 = _mulhilo(_M1, x2)
            x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
    return x0, x1, x2, x3


def philox_raw(counter, key):
    c = [np.asarray([v], dtype=np.uint64) for v in np.asarray(counter, dtype=np.uint64)]
    k = np.asarray(key, dtype=np.uint64)
    out = _philox(*c, int(k[0]), int(k[1]))
    return np.array([o[0] for o in out], dtype=np.uint64)


def _unit(x: np.ndarray) -> np.ndarray:
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def fill_rows(k0, k1, domain, streams, auxs, start, count, normal):
    streams = np.asarray(streams, dtype=np.uint64)
    auxs = np.asarray(auxs, dtype=np.uint64)
    rows = streams.shape[0]
    if rows == 0 or count == 0:
        return np.empty((rows, count))
    first_blk = start >> 2
    last_blk = (start + count - 1) >> 2
    nblk = last_blk - first_blk + 1
    blk = np.arange(first_blk, last_blk + 1, dtype=np.uint64)
    shape = (rows, nblk)
    x0 = np.broadcast_to(blk[None, :], shape).copy()
    x1 = np.broadcast_to(auxs[:, None], shape).copy()
    x2 = np.broadcast_to(streams[:, None], shape).copy()
    x3 = np.full(shape, np.uint64(domain), dtype=np.uint64)
    raw = _philox(x0, x1, x2, x3, k0, k1)
    if normal:
        r0 = np.sqrt(-2.0 * np.log(1.0 - _unit(raw[0])))
        t0 = 2.0 * np.pi * _unit(raw[1])
        r1 = np.sqrt(-2.0 * np.log(1.0 - _unit(raw[2])))
        t1 = 2.0 * np.pi * _unit(raw[3])
        lanes = (r0 * np.cos(t0), r0 * np.sin(t0), r1 * np.cos(t1), r1 * np.sin(t1))
    else:
        lanes = tuple(_unit(x) for x in raw)
    full = np.stack(lanes, axis=-1).reshape(rows, 4 * nblk)
    off = start - 4 * first_blk
    return np.ascontiguousarray(full[:, off:off + count])


def reflected_prefix_sup(drifted, gammas, ends):
    drifted = np.asarray(drifted, dtype=np.float64)
    runmin = np.minimum.accumulate(drifted, axis=1)
    out = np.empty((drifted.shape[0], len(gammas), len(ends)))
    for g, gam in enumerate(gammas):
        running = np.maximum.accumulate(drifted - gam * runmin, axis=1)
        out[:, g, :] = running[:, np.asarray(ends, dtype=np.int64)]
    return out


def reflected_passages(drifted, gamma, u):
    drifted = np.asarray(drifted, dtype=np.float64)
    w = drifted - gamma * np.minimum.accumulate(drifted, axis=1)
    hit = w > u
    any_hit = hit.any(axis=1)
    n = drifted.shape[1]
    first = np.where(any_hit, hit.argmax(axis=1), -1).astype(np.int64)
    last = np.where(any_hit, n - 1 - hit[:, ::-1].argmax(axis=1), -1).astype(np.int64)
    return first, last


def bridge_screen(x, h, rate, lam, c, gamma, u, last_gap):
    xa, xb = x[:, :last_gap], x[:, 1:last_gap + 1]
    hi, lo = np.maximum(xa, xb), np.minimum(xa, xb)
    spread = hi - lo
    m = 0.5 * (np.sqrt(spread * spread + 2.0 * rate * h * lam) - spread)
    ta = np.arange(last_gap) * h
    lower = np.minimum.accumulate(np.minimum(lo - m - c * (ta + h), 0.0), axis=1)
    return np.any(hi + m - c * ta - gamma * lower > u, axis=1).astype(np.uint8)
