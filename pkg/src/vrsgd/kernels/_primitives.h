/* Lock-free primitives for shared float64 parameter cells, a readers-writer
 * spinlock for the consistent-read mode, and the xoshiro256** PRNG used for
 * reproducible per-worker index streams (mirrored bit-for-bit in rng.py). */
#ifndef VRSGD_PRIMITIVES_H
#define VRSGD_PRIMITIVES_H

#include <stdint.h>
#include <string.h>

static inline double vr_load_f64(volatile double *p) {
    uint64_t b = __atomic_load_n((volatile uint64_t *)p, __ATOMIC_ACQUIRE);
    double d;
    memcpy(&d, &b, 8);
    return d;
}

static inline void vr_store_f64(volatile double *p, double v) {
    uint64_t b;
    memcpy(&b, &v, 8);
    __atomic_store_n((volatile uint64_t *)p, b, __ATOMIC_RELEASE);
}

/* Single-cell compare-and-swap on the raw bit pattern. */
static inline int vr_cas_f64(volatile double *p, double expected, double desired) {
    uint64_t eb, db;
    memcpy(&eb, &expected, 8);
    memcpy(&db, &desired, 8);
    return __atomic_compare_exchange_n((volatile uint64_t *)p, &eb, db, 0,
                                       __ATOMIC_ACQ_REL, __ATOMIC_ACQUIRE);
}

static inline double vr_exchange_f64(volatile double *p, double v) {
    uint64_t b, old;
    memcpy(&b, &v, 8);
    old = __atomic_exchange_n((volatile uint64_t *)p, b, __ATOMIC_ACQ_REL);
    double d;
    memcpy(&d, &old, 8);
    return d;
}

/* x[j] += delta via CAS retry loop; returns the number of retries. */
static inline int64_t vr_add_f64(volatile double *p, double delta) {
    int64_t retries = 0;
    for (;;) {
        double old = vr_load_f64(p);
        double nw = old + delta;
        if (vr_cas_f64(p, old, nw))
            return retries;
        retries++;
    }
}

static inline int64_t vr_fetch_add_i64(volatile int64_t *p, int64_t v) {
    return __atomic_fetch_add(p, v, __ATOMIC_ACQ_REL);
}

static inline int64_t vr_load_i64(volatile int64_t *p) {
    return __atomic_load_n(p, __ATOMIC_ACQUIRE);
}

static inline void vr_store_i64(volatile int64_t *p, int64_t v) {
    __atomic_store_n(p, v, __ATOMIC_RELEASE);
}

/* Readers-writer spinlock on a single int64 cell.
 * State: 0 free, >0 reader count, -1 writer holds it. */
static inline void vr_rw_rdlock(volatile int64_t *l) {
    for (;;) {
        int64_t v = __atomic_load_n(l, __ATOMIC_RELAXED);
        if (v >= 0 && __atomic_compare_exchange_n(l, &v, v + 1, 0,
                                                  __ATOMIC_ACQUIRE, __ATOMIC_RELAXED))
            return;
    }
}

static inline void vr_rw_rdunlock(volatile int64_t *l) {
    __atomic_fetch_sub(l, 1, __ATOMIC_RELEASE);
}

static inline void vr_rw_wrlock(volatile int64_t *l) {
    for (;;) {
        int64_t e = 0;
        if (__atomic_compare_exchange_n(l, &e, (int64_t)-1,
                                        0, __ATOMIC_ACQUIRE, __ATOMIC_RELAXED))
            return;
    }
}

static inline void vr_rw_wrunlock(volatile int64_t *l) {
    __atomic_store_n(l, 0, __ATOMIC_RELEASE);
}

/* xoshiro256** seeded through splitmix64; stream k starts from
 * seed + (k+1)*GOLDEN so distinct workers get decorrelated states. */
typedef struct {
    uint64_t s[4];
} vr_rng;

static inline uint64_t vr_splitmix64(uint64_t *st) {
    uint64_t z = (*st += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

static inline void vr_rng_seed(vr_rng *r, uint64_t seed, uint64_t stream) {
    uint64_t st = seed + (stream + 1ULL) * 0x9E3779B97F4A7C15ULL;
    for (int i = 0; i < 4; i++)
        r->s[i] = vr_splitmix64(&st);
}

static inline uint64_t vr_rotl64(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

static inline uint64_t vr_rng_next(vr_rng *r) {
    uint64_t result = vr_rotl64(r->s[1] * 5ULL, 7) * 9ULL;
    uint64_t t = r->s[1] << 17;
    r->s[2] ^= r->s[0];
    r->s[3] ^= r->s[1];
    r->s[1] ^= r->s[2];
    r->s[0] ^= r->s[3];
    r->s[2] ^= t;
    r->s[3] = vr_rotl64(r->s[3], 45);
    return result;
}

#endif /* VRSGD_PRIMITIVES_H */
