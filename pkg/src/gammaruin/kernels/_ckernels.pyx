# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: counter-based normals and the reflection scan."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t
from libc.math cimport sqrt

cnp.import_array()

cdef extern from "philox.h":
    void gr_philox4x64_10(const uint64_t ctr[4], uint64_t k0, uint64_t k1, uint64_t out[4]) nogil
    double gr_unit(uint64_t x) nogil
    void gr_block_normals(const uint64_t raw[4], double z[4]) nogil


def philox_raw(uint64_t[::1] counter, uint64_t[::1] key):
    cdef uint64_t ctr[4]
    cdef uint64_t out[4]
    cdef int i
    for i in range(4):
        ctr[i] = counter[i]
    gr_philox4x64_10(ctr, key[0], key[1], out)
    return np.array([out[0], out[1], out[2], out[3]], dtype=np.uint64)


cdef void _fill_rows(uint64_t k0, uint64_t k1, uint64_t domain,
                     const uint64_t[::1] streams, const uint64_t[::1] auxs,
                     uint64_t start, Py_ssize_t count, double[:, ::1] out,
                     bint normal) nogil:
    cdef Py_ssize_t r, j
    cdef uint64_t idx, blk, cur
    cdef uint64_t ctr[4]
    cdef uint64_t raw[4]
    cdef double vals[4]
    cdef int lane
    for r in range(streams.shape[0]):
        ctr[1] = auxs[r]
        ctr[2] = streams[r]
        ctr[3] = domain
        cur = <uint64_t>-1
        for j in range(count):
            idx = start + <uint64_t>j
            blk = idx >> 2
            if blk != cur or j == 0:
                ctr[0] = blk
                gr_philox4x64_10(ctr, k0, k1, raw)
                if normal:
                    gr_block_normals(raw, vals)
                else:
                    for lane in range(4):
                        vals[lane] = gr_unit(raw[lane])
                cur = blk
            out[r, j] = vals[idx & 3]


def fill_rows(uint64_t k0, uint64_t k1, uint64_t domain, const uint64_t[::1] streams,
              const uint64_t[::1] auxs, uint64_t start, Py_ssize_t count, bint normal):
    out = np.empty((streams.shape[0], count), dtype=np.float64)
    cdef double[:, ::1] view = out
    with nogil:
        _fill_rows(k0, k1, domain, streams, auxs, start, count, view, normal)
    return out


def reflected_prefix_sup(const double[:, ::1] drifted, const double[::1] gammas,
                         const int64_t[::1] ends):
    cdef Py_ssize_t rows = drifted.shape[0], n = drifted.shape[1]
    cdef Py_ssize_t ng = gammas.shape[0], ne = ends.shape[0]
    out = np.empty((rows, ng, ne), dtype=np.float64)
    cdef double[:, :, ::1] res = out
    cdef Py_ssize_t r, g, k, e
    cdef double runmin, best, w, d, gam
    with nogil:
        for r in range(rows):
            for g in range(ng):
                gam = gammas[g]
                runmin = drifted[r, 0]
                best = drifted[r, 0] - gam * runmin
                e = 0
                for k in range(n):
                    d = drifted[r, k]
                    if d < runmin:
                        runmin = d
                    w = d - gam * runmin
                    if w > best:
                        best = w
                    while e < ne and ends[e] == k:
                        res[r, g, e] = best
                        e += 1
                    if e == ne:
                        break
    return out


def reflected_passages(const double[:, ::1] drifted, double gamma, double u):
    cdef Py_ssize_t rows = drifted.shape[0], n = drifted.shape[1]
    first = np.full(rows, -1, dtype=np.int64)
    last = np.full(rows, -1, dtype=np.int64)
    cdef int64_t[::1] f = first
    cdef int64_t[::1] l = last
    cdef Py_ssize_t r, k
    cdef double runmin, d
    with nogil:
        for r in range(rows):
            runmin = drifted[r, 0]
            for k in range(n):
                d = drifted[r, k]
                if d < runmin:
                    runmin = d
                if d - gamma * runmin > u:
                    if f[r] < 0:
                        f[r] = k
                    l[r] = k
    return first, last


def bridge_screen(const double[:, ::1] x, double h, double rate, double lam, double c,
                  double gamma, double u, Py_ssize_t last_gap):
    """Rows whose screening bound on ``W`` exceeds ``u`` (see the bridge engine)."""
    cdef Py_ssize_t rows = x.shape[0], r, j
    out = np.zeros(rows, dtype=np.uint8)
    cdef cnp.uint8_t[::1] flag = out
    cdef double xa, xb, hi, lo, spread, m, lower, ta, k2 = 2.0 * rate * h * lam
    with nogil:
        for r in range(rows):
            lower = 0.0
            for j in range(last_gap):
                xa = x[r, j]
                xb = x[r, j + 1]
                if xa > xb:
                    hi = xa
                    lo = xb
                else:
                    hi = xb
                    lo = xa
                spread = hi - lo
                m = 0.5 * (sqrt(spread * spread + k2) - spread)
                ta = j * h
                if lo - m - c * (ta + h) < lower:
                    lower = lo - m - c * (ta + h)
                if hi + m - c * ta - gamma * lower > u:
                    flag[r] = 1
                    break
    return out
