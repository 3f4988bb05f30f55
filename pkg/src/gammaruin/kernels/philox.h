/* Philox4x64-10 counter-based generator (Salmon et al., SC'11) and
 * Box-Muller normals.  Bit-compatible with numpy.random.Philox. */
#ifndef GAMMARUIN_PHILOX_H
#define GAMMARUIN_PHILOX_H

#include <math.h>
#include <stdint.h>

#define GR_PHILOX_M0 0xD2E7470EE14C6C93ULL
#define GR_PHILOX_M1 0xCA5A826395121157ULL
#define GR_PHILOX_W0 0x9E3779B97F4A7C15ULL
#define GR_PHILOX_W1 0xBB67AE8584CAA73BULL

static inline uint64_t gr_mulhilo(uint64_t a, uint64_t b, uint64_t *hi)
{
    __uint128_t p = (__uint128_t)a * (__uint128_t)b;
    *hi = (uint64_t)(p >> 64);
    return (uint64_t)p;
}

static inline void gr_philox4x64_10(const uint64_t ctr[4], uint64_t k0, uint64_t k1, uint64_t out[4])
{
    uint64_t x0 = ctr[0], x1 = ctr[1], x2 = ctr[2], x3 = ctr[3];
    int r;
    for (r = 0; r < 10; r++) {
        uint64_t hi0, hi1, lo0, lo1;
        if (r) {
            k0 += GR_PHILOX_W0;
            k1 += GR_PHILOX_W1;
        }
        lo0 = gr_mulhilo(GR_PHILOX_M0, x0, &hi0);
        lo1 = gr_mulhilo(GR_PHILOX_M1, x2, &hi1);
        x0 = hi1 ^ x1 ^ k0;
        x1 = lo1;
        x2 = hi0 ^ x3 ^ k1;
        x3 = lo0;
    }
    out[0] = x0; out[1] = x1; out[2] = x2; out[3] = x3;
}

static inline double gr_unit(uint64_t x)
{
    return (double)(x >> 11) * (1.0 / 9007199254740992.0);
}

/* Two Box-Muller pairs from one Philox block. */
static inline void gr_block_normals(const uint64_t raw[4], double z[4])
{
    const double two_pi = 6.283185307179586476925286766559;
    double r0 = sqrt(-2.0 * log(1.0 - gr_unit(raw[0])));
    double t0 = two_pi * gr_unit(raw[1]);
    double r1 = sqrt(-2.0 * log(1.0 - gr_unit(raw[2])));
    double t1 = two_pi * gr_unit(raw[3]);
    z[0] = r0 * cos(t0);
    z[1] = r0 * sin(t0);
    z[2] = r1 * cos(t1);
    z[3] = r1 * sin(t1);
}

#endif
