# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: epoch step loops, lock-free/locked async workers,
atomic float64 cells, and the reproducible index-stream PRNG.

The pure-Python twin of this module is ``vrsgd.kernels.pure``; both follow the
exact same arithmetic (operation order, libm calls, merge-loop application) so
single-thread trajectories agree bit for bit across backends.
"""

import numpy as np

from libc.math cimport exp, log1p, fabs, sqrt

cdef extern from "_primitives.h" nogil:
    double vr_load_f64(double *p)
    void vr_store_f64(double *p, double v)
    int vr_cas_f64(double *p, double expected, double desired)
    double vr_exchange_f64(double *p, double v)
    long long vr_add_f64(double *p, double delta)
    long long vr_fetch_add_i64(long long *p, long long v)
    long long vr_load_i64(long long *p)
    void vr_store_i64(long long *p, long long v)
    void vr_rw_rdlock(long long *l)
    void vr_rw_rdunlock(long long *l)
    void vr_rw_wrlock(long long *l)
    void vr_rw_wrunlock(long long *l)
    ctypedef struct vr_rng:
        unsigned long long s[4]
    void vr_rng_seed(vr_rng *r, unsigned long long seed, unsigned long long stream)
    unsigned long long vr_rng_next(vr_rng *r)

NAME = "cython"
HAS_NATIVE_THREADS = True

cdef double DIVERGE_LIMIT = 1e100

# schedule kinds (mirrored in vrsgd.schedules)
cdef long long K_SVRG = 0
cdef long long K_SAGA = 1
cdef long long K_SAG = 2
cdef long long K_GD = 3
cdef long long K_HSAG = 4


cdef inline double _sigmoid(double u) nogil:
    cdef double e
    if u >= 0.0:
        return 1.0 / (1.0 + exp(-u))
    e = exp(u)
    return e / (1.0 + e)


cdef inline double _softplus(double u) nogil:
    if u > 0.0:
        return u + log1p(exp(-u))
    return log1p(exp(u))


# ---------------------------------------------------------------------------
# PRNG plumbing: state lives in a uint64[4] numpy array owned by the caller.
# ---------------------------------------------------------------------------

def rng_state(seed, stream):
    cdef vr_rng r
    vr_rng_seed(&r, <unsigned long long> seed, <unsigned long long> stream)
    out = np.empty(4, dtype=np.uint64)
    cdef unsigned long long[::1] ov = out
    for i in range(4):
        ov[i] = r.s[i]
    return out


cdef inline void _load_rng(vr_rng *r, unsigned long long[::1] st) nogil:
    r.s[0] = st[0]; r.s[1] = st[1]; r.s[2] = st[2]; r.s[3] = st[3]


cdef inline void _save_rng(vr_rng *r, unsigned long long[::1] st) nogil:
    st[0] = r.s[0]; st[1] = r.s[1]; st[2] = r.s[2]; st[3] = r.s[3]


def fill_indices(state, out, n):
    """Draw uniform example indices in [0, n); advances ``state`` in place."""
    cdef unsigned long long[::1] st = state
    cdef long long[::1] o = out
    cdef long long nn = n, i
    cdef vr_rng r
    _load_rng(&r, st)
    with nogil:
        for i in range(o.shape[0]):
            o[i] = <long long> (vr_rng_next(&r) % <unsigned long long> nn)
    _save_rng(&r, st)


# ---------------------------------------------------------------------------
# Objective evaluation
# ---------------------------------------------------------------------------

def full_objective(long long[::1] indptr, long long[::1] indices,
                   double[::1] vals, double[::1] labels, double[::1] regc,
                   double[::1] x):
    cdef long long n = labels.shape[0]
    cdef long long i, k
    cdef double acc = 0.0, su, u, xx
    with nogil:
        for i in range(n):
            su = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                su += vals[k] * x[indices[k]]
            u = labels[i] * su
            acc += _softplus(u)
            for k in range(indptr[i], indptr[i + 1]):
                xx = x[indices[k]]
                acc += 0.5 * regc[indices[k]] * xx * xx
    return acc / n


def full_gradient(long long[::1] indptr, long long[::1] indices,
                  double[::1] vals, double[::1] labels, double[::1] regc,
                  double[::1] x, double[::1] out):
    cdef long long n = labels.shape[0], d = out.shape[0]
    cdef long long i, k, j
    cdef double su, u, a, inv_n = 1.0 / n
    with nogil:
        for j in range(d):
            out[j] = 0.0
        for i in range(n):
            su = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                su += vals[k] * x[indices[k]]
            u = labels[i] * su
            a = _sigmoid(u) * labels[i]
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                out[j] += a * vals[k] + regc[j] * x[j]
        for j in range(d):
            out[j] = out[j] * inv_n


def recompute_gbar(long long[::1] indptr, long long[::1] indices,
                   double[::1] vals, double[::1] labels, double[::1] regc,
                   unsigned char[::1] in_table, long long[::1] toff, double[::1] tvals,
                   double[:, ::1] anchors, long long[::1] row_anchor,
                   double[::1] gbar):
    """Exact from-scratch average of the stored state gradients.

    Table rows contribute their stored slots; snapshot rows contribute a fresh
    gradient at their anchor point. Returns the gradient evaluation count.
    """
    cdef long long n = labels.shape[0], d = gbar.shape[0]
    cdef long long i, k, j, base, ar, evals = 0
    cdef double su, u, a, inv_n = 1.0 / n
    with nogil:
        for j in range(d):
            gbar[j] = 0.0
        for i in range(n):
            if in_table[i]:
                base = toff[i]
                for k in range(indptr[i], indptr[i + 1]):
                    gbar[indices[k]] += tvals[base + (k - indptr[i])]
            else:
                ar = row_anchor[i]
                su = 0.0
                for k in range(indptr[i], indptr[i + 1]):
                    su += vals[k] * anchors[ar, indices[k]]
                u = labels[i] * su
                a = _sigmoid(u) * labels[i]
                evals += 1
                for k in range(indptr[i], indptr[i + 1]):
                    j = indices[k]
                    gbar[j] += a * vals[k] + regc[j] * anchors[ar, j]
        for j in range(d):
            gbar[j] = gbar[j] * inv_n
    return evals


def init_table(long long[::1] indptr, long long[::1] indices,
               double[::1] vals, double[::1] labels, double[::1] regc,
               double[::1] x0,
               unsigned char[::1] in_table, long long[::1] toff,
               double[::1] tvals, double[::1] tmarg):
    cdef long long n = labels.shape[0]
    cdef long long i, k, j, base, evals = 0
    cdef double su, u, a
    with nogil:
        for i in range(n):
            if not in_table[i]:
                continue
            su = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                su += vals[k] * x0[indices[k]]
            u = labels[i] * su
            a = _sigmoid(u) * labels[i]
            evals += 1
            base = toff[i]
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                tvals[base + (k - indptr[i])] = a * vals[k] + regc[j] * x0[j]
            tmarg[i] = u
    return evals


def store_entry(long long[::1] indptr, long long[::1] indices,
                double[::1] vals, double[::1] labels, double[::1] regc,
                double[::1] x, long long i,
                long long[::1] toff, double[::1] tvals, double[::1] tmarg,
                double[::1] gbar, double inv_n):
    """Refresh one table entry to the gradient at ``x`` and fold the change
    into the running average. Used for lookahead priming."""
    cdef long long k, j, base = toff[i]
    cdef double su = 0.0, u, a, g, old
    with nogil:
        for k in range(indptr[i], indptr[i + 1]):
            su += vals[k] * x[indices[k]]
        u = labels[i] * su
        a = _sigmoid(u) * labels[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            g = a * vals[k] + regc[j] * x[j]
            old = tvals[base + (k - indptr[i])]
            tvals[base + (k - indptr[i])] = g
            gbar[j] += (g - old) * inv_n
        tmarg[i] = u
    return 1


# ---------------------------------------------------------------------------
# Serial epoch segment (dense iterate)
# ---------------------------------------------------------------------------

def run_serial_segment(long long[::1] indptr, long long[::1] indices,
                       double[::1] vals, double[::1] labels, double[::1] regc,
                       double[::1] x,
                       unsigned char[::1] in_table, long long[::1] toff,
                       double[::1] tvals, double[::1] tmarg,
                       double[:, ::1] anchors, long long[::1] row_anchor,
                       double[::1] gbar,
                       double eta, long long kind,
                       long long[::1] idx_seq, long long seg_off, long long seg_len,
                       long long jstar_rel,
                       double[::1] xtilde, long long[::1] counters,
                       double[::1] gbuf, double[::1] dbuf):
    """Run ``seg_len`` steps; no snapshot refresh may fall inside a segment.

    ``idx_seq`` holds the whole epoch's pre-drawn indices; the segment covers
    positions [seg_off, seg_off+seg_len). ``jstar_rel`` is the epoch-relative
    position whose pre-update iterate is copied into ``xtilde`` (or -1).
    Counters: [0] grad evals, [1] steps done, [2] retries, [3] diverge step.
    Returns 0 on success, 1 on divergence.
    """
    cdef long long n = labels.shape[0], d = x.shape[0]
    cdef long long s, i, k, j, lo, hi, base, ar, ptr, inext
    cdef double su, u, a, sa, ua, aa, dlt, nx, g, old, un, an
    cdef double inv_n = 1.0 / n
    cdef int status = 0
    with nogil:
        for s in range(seg_off, seg_off + seg_len):
            i = idx_seq[s]
            lo = indptr[i]; hi = indptr[i + 1]
            # gradient at the current iterate
            su = 0.0
            for k in range(lo, hi):
                su += vals[k] * x[indices[k]]
            u = labels[i] * su
            a = _sigmoid(u) * labels[i]
            counters[0] += 1
            for k in range(lo, hi):
                j = indices[k]
                gbuf[k - lo] = a * vals[k] + regc[j] * x[j]
            # anchor-side gradient: stored slot or recomputed at the anchor
            if in_table[i]:
                base = toff[i]
                for k in range(lo, hi):
                    dbuf[k - lo] = gbuf[k - lo] - tvals[base + (k - lo)]
            else:
                ar = row_anchor[i]
                sa = 0.0
                for k in range(lo, hi):
                    sa += vals[k] * anchors[ar, indices[k]]
                ua = labels[i] * sa
                aa = _sigmoid(ua) * labels[i]
                counters[0] += 1
                for k in range(lo, hi):
                    j = indices[k]
                    dbuf[k - lo] = gbuf[k - lo] - (aa * vals[k] + regc[j] * anchors[ar, j])
            if s == jstar_rel:
                for j in range(d):
                    xtilde[j] = x[j]
            # apply x <- x - eta*(grad diff on support + running average, dense)
            ptr = lo
            for j in range(d):
                dlt = gbar[j]
                if ptr < hi and indices[ptr] == j:
                    dlt += dbuf[ptr - lo]
                    ptr += 1
                if dlt != 0.0:
                    nx = x[j] - eta * dlt
                    x[j] = nx
                    if not (nx == nx) or fabs(nx) > DIVERGE_LIMIT:
                        status = 1
            if status:
                counters[3] = s
                break
            # schedule bookkeeping
            if kind == K_SAGA or kind == K_HSAG:
                if in_table[i]:
                    base = toff[i]
                    for k in range(lo, hi):
                        j = indices[k]
                        g = gbuf[k - lo]
                        old = tvals[base + (k - lo)]
                        tvals[base + (k - lo)] = g
                        gbar[j] += (g - old) * inv_n
                    tmarg[i] = u
            elif kind == K_SAG:
                if s + 1 < seg_off + seg_len:
                    inext = idx_seq[s + 1]
                    su = 0.0
                    lo = indptr[inext]; hi = indptr[inext + 1]
                    for k in range(lo, hi):
                        su += vals[k] * x[indices[k]]
                    un = labels[inext] * su
                    an = _sigmoid(un) * labels[inext]
                    counters[0] += 1
                    base = toff[inext]
                    for k in range(lo, hi):
                        j = indices[k]
                        g = an * vals[k] + regc[j] * x[j]
                        old = tvals[base + (k - lo)]
                        tvals[base + (k - lo)] = g
                        gbar[j] += (g - old) * inv_n
                    tmarg[inext] = un
            counters[1] += 1
    return status


# ---------------------------------------------------------------------------
# Lazy two-bracket epoch segment (schedules whose running average is
# epoch-constant). bracket1 accumulates the sparse corrections; the dense
# average-gradient contribution is a single scalar multiplier.
# ---------------------------------------------------------------------------

def run_jit_segment(long long[::1] indptr, long long[::1] indices,
                    double[::1] vals, double[::1] labels, double[::1] regc,
                    double[::1] bracket1, double scale,
                    double[:, ::1] anchors, long long[::1] row_anchor,
                    double[::1] gbar,
                    double eta,
                    long long[::1] idx_seq, long long seg_off, long long seg_len,
                    long long jstar_rel,
                    double[::1] xtilde, long long[::1] counters,
                    double[::1] xbuf, double[::1] dbuf):
    cdef long long n = labels.shape[0], d = bracket1.shape[0]
    cdef long long s, i, k, j, lo, hi, ar
    cdef double su, u, a, sa, ua, aa, xj, nx
    cdef int status = 0
    with nogil:
        for s in range(seg_off, seg_off + seg_len):
            i = idx_seq[s]
            lo = indptr[i]; hi = indptr[i + 1]
            # materialize the touched coordinates of the current iterate
            for k in range(lo, hi):
                j = indices[k]
                xbuf[k - lo] = bracket1[j] - scale * gbar[j]
            su = 0.0
            for k in range(lo, hi):
                su += vals[k] * xbuf[k - lo]
            u = labels[i] * su
            a = _sigmoid(u) * labels[i]
            counters[0] += 1
            ar = row_anchor[i]
            sa = 0.0
            for k in range(lo, hi):
                sa += vals[k] * anchors[ar, indices[k]]
            ua = labels[i] * sa
            aa = _sigmoid(ua) * labels[i]
            counters[0] += 1
            for k in range(lo, hi):
                j = indices[k]
                xj = xbuf[k - lo]
                dbuf[k - lo] = (a * vals[k] + regc[j] * xj) - (aa * vals[k] + regc[j] * anchors[ar, j])
            if s == jstar_rel:
                for j in range(d):
                    xtilde[j] = bracket1[j] - scale * gbar[j]
            for k in range(lo, hi):
                j = indices[k]
                nx = bracket1[j] - eta * dbuf[k - lo]
                bracket1[j] = nx
                if not (nx == nx) or fabs(nx) > DIVERGE_LIMIT:
                    status = 1
            scale += eta
            if status:
                counters[3] = s
                break
            counters[1] += 1
    return status, scale


# ---------------------------------------------------------------------------
# Atomic cell operations (shared parameter vector)
# ---------------------------------------------------------------------------

def atomic_read(double[::1] x, long long j):
    return vr_load_f64(&x[j])


def cas_add_batch(double[::1] x, long long j, double[::1] deltas):
    """Apply every delta to cell j via CAS retry loops; returns total retries."""
    cdef long long k, retries = 0
    with nogil:
        for k in range(deltas.shape[0]):
            retries += vr_add_f64(&x[j], deltas[k])
    return retries


def apply_sparse_cas(double[::1] x, long long[::1] idx, double[::1] deltas):
    """Add ``deltas`` onto the cells named by ``idx`` (one CAS loop each)."""
    cdef long long k, retries = 0
    with nogil:
        for k in range(idx.shape[0]):
            retries += vr_add_f64(&x[idx[k]], deltas[k])
    return retries


def counter_fetch_add(long long[::1] c, long long v):
    return vr_fetch_add_i64(&c[0], v)


def counter_load(long long[::1] c):
    return vr_load_i64(&c[0])


# ---------------------------------------------------------------------------
# Asynchronous worker: claims step slots from a shared counter and runs the
# same step arithmetic as the serial segment, applying through CAS cells.
# ---------------------------------------------------------------------------

def run_worker(long long[::1] indptr, long long[::1] indices,
               double[::1] vals, double[::1] labels, double[::1] regc,
               double[::1] x,
               unsigned char[::1] in_table, long long[::1] toff,
               double[::1] tvals, double[::1] tmarg,
               double[:, ::1] anchors, long long[::1] row_anchor,
               double[::1] gbar,
               double eta, long long kind,
               unsigned long long[::1] rng_st,
               long long[::1] claim_ctr, long long[::1] applied_ctr,
               long long epoch_end,
               int locked, long long[::1] rwlock, int joint_read,
               long long jstar, double[::1] xtilde,
               long long[::1] stale_samples, long long[::1] stale_count,
               long long tau_cap, long long[::1] abort_flag,
               long long[::1] counters,
               double[::1] gbuf, double[::1] dbuf, double[::1] xread, double[::1] gbar_buf):
    """One worker's epoch loop. Returns 0 (ok), 1 (divergence), 2 (staleness cap).

    Shared state: ``x`` (CAS cells), ``claim_ctr``/``applied_ctr``,
    ``rwlock`` (consistent-read mode), ``abort_flag``, table slots and the
    running average ``gbar`` (per-cell atomic). ``stale_samples[slot-start]``
    records the applied-update count observed at each step's read.
    """
    cdef long long n = labels.shape[0], d = x.shape[0]
    cdef long long slot, i, k, j, lo, hi, base, ar, ptr, dt, lag, start
    cdef double su, u, a, sa, ua, aa, dlt, nx, oldx, g, old
    cdef double inv_n = 1.0 / n
    cdef int status = 0, done
    cdef vr_rng r
    _load_rng(&r, rng_st)
    start = epoch_end - stale_samples.shape[0]
    with nogil:
        while True:
            if vr_load_i64(&abort_flag[0]) != 0:
                break
            slot = vr_fetch_add_i64(&claim_ctr[0], 1)
            if slot >= epoch_end:
                break
            i = <long long> (vr_rng_next(&r) % <unsigned long long> n)
            dt = vr_load_i64(&applied_ctr[0])
            stale_samples[slot - start] = dt
            vr_fetch_add_i64(&stale_count[0], 1)
            lag = slot - dt
            if lag < 0:
                lag = 0
            if tau_cap >= 0 and lag > tau_cap:
                status = 2
                vr_store_i64(&abort_flag[0], 2)
                break
            lo = indptr[i]; hi = indptr[i + 1]
            if slot == jstar:
                # this slot's pre-update read doubles as the epoch's candidate
                if locked:
                    vr_rw_rdlock(&rwlock[0])
                    for j in range(d):
                        xtilde[j] = x[j]
                    vr_rw_rdunlock(&rwlock[0])
                else:
                    for j in range(d):
                        xtilde[j] = vr_load_f64(&x[j])
            # read phase
            if locked:
                vr_rw_rdlock(&rwlock[0])
                for k in range(lo, hi):
                    xread[k - lo] = x[indices[k]]
                if joint_read:
                    if in_table[i]:
                        base = toff[i]
                        for k in range(lo, hi):
                            dbuf[k - lo] = tvals[base + (k - lo)]
                    for j in range(d):
                        gbar_buf[j] = gbar[j]
                vr_rw_rdunlock(&rwlock[0])
                if not joint_read:
                    if in_table[i]:
                        base = toff[i]
                        for k in range(lo, hi):
                            dbuf[k - lo] = vr_load_f64(&tvals[base + (k - lo)])
                    for j in range(d):
                        gbar_buf[j] = vr_load_f64(&gbar[j])
            else:
                for k in range(lo, hi):
                    xread[k - lo] = vr_load_f64(&x[indices[k]])
                if in_table[i]:
                    base = toff[i]
                    for k in range(lo, hi):
                        dbuf[k - lo] = vr_load_f64(&tvals[base + (k - lo)])
                for j in range(d):
                    gbar_buf[j] = vr_load_f64(&gbar[j])
            # gradient at the read snapshot
            su = 0.0
            for k in range(lo, hi):
                su += vals[k] * xread[k - lo]
            u = labels[i] * su
            a = _sigmoid(u) * labels[i]
            counters[0] += 1
            for k in range(lo, hi):
                j = indices[k]
                gbuf[k - lo] = a * vals[k] + regc[j] * xread[k - lo]
            if in_table[i]:
                for k in range(lo, hi):
                    dbuf[k - lo] = gbuf[k - lo] - dbuf[k - lo]
            else:
                ar = row_anchor[i]
                sa = 0.0
                for k in range(lo, hi):
                    sa += vals[k] * anchors[ar, indices[k]]
                ua = labels[i] * sa
                aa = _sigmoid(ua) * labels[i]
                counters[0] += 1
                for k in range(lo, hi):
                    j = indices[k]
                    dbuf[k - lo] = gbuf[k - lo] - (aa * vals[k] + regc[j] * anchors[ar, j])
            # write phase: same merge order as the serial kernel
            if locked:
                vr_rw_wrlock(&rwlock[0])
            ptr = lo
            for j in range(d):
                dlt = gbar_buf[j]
                if ptr < hi and indices[ptr] == j:
                    dlt += dbuf[ptr - lo]
                    ptr += 1
                if dlt != 0.0:
                    while True:
                        oldx = vr_load_f64(&x[j])
                        nx = oldx - eta * dlt
                        if vr_cas_f64(&x[j], oldx, nx):
                            break
                        counters[2] += 1
                    if not (nx == nx) or fabs(nx) > DIVERGE_LIMIT:
                        status = 1
            if locked:
                vr_rw_wrunlock(&rwlock[0])
            if status:
                counters[3] = slot
                vr_store_i64(&abort_flag[0], 1)
                break
            vr_fetch_add_i64(&applied_ctr[0], 1)
            # schedule bookkeeping (per-slot atomic swaps keep gbar mass exact)
            if (kind == K_SAGA or kind == K_HSAG) and in_table[i]:
                base = toff[i]
                for k in range(lo, hi):
                    j = indices[k]
                    g = gbuf[k - lo]
                    old = vr_exchange_f64(&tvals[base + (k - lo)], g)
                    counters[2] += vr_add_f64(&gbar[j], (g - old) * inv_n)
                vr_store_f64(&tmarg[i], u)
            counters[1] += 1
    _save_rng(&r, rng_st)
    return status


def run_sgd_worker(long long[::1] indptr, long long[::1] indices,
                   double[::1] vals, double[::1] labels, double[::1] regc,
                   double[::1] x,
                   double eta0, double sigma0, int decaying,
                   unsigned long long[::1] rng_st,
                   long long[::1] claim_ctr, long long[::1] applied_ctr,
                   long long epoch_end,
                   long long[::1] abort_flag, long long[::1] counters,
                   double[::1] xread):
    """Lock-free plain SGD worker (no variance reduction), support-sparse.

    Step size is ``eta0`` (constant) or ``eta0*sqrt(sigma0/(t+sigma0))`` with
    t the claimed global step."""
    cdef long long n = labels.shape[0]
    cdef long long slot, i, k, j, lo, hi
    cdef double su, u, a, eta, g, oldx, nx
    cdef int status = 0
    cdef vr_rng r
    _load_rng(&r, rng_st)
    with nogil:
        while True:
            if vr_load_i64(&abort_flag[0]) != 0:
                break
            slot = vr_fetch_add_i64(&claim_ctr[0], 1)
            if slot >= epoch_end:
                break
            i = <long long> (vr_rng_next(&r) % <unsigned long long> n)
            if decaying:
                eta = eta0 * sqrt(sigma0 / (slot + sigma0))
            else:
                eta = eta0
            lo = indptr[i]; hi = indptr[i + 1]
            for k in range(lo, hi):
                xread[k - lo] = vr_load_f64(&x[indices[k]])
            su = 0.0
            for k in range(lo, hi):
                su += vals[k] * xread[k - lo]
            u = labels[i] * su
            a = _sigmoid(u) * labels[i]
            counters[0] += 1
            for k in range(lo, hi):
                j = indices[k]
                g = a * vals[k] + regc[j] * xread[k - lo]
                while True:
                    oldx = vr_load_f64(&x[j])
                    nx = oldx - eta * g
                    if vr_cas_f64(&x[j], oldx, nx):
                        break
                    counters[2] += 1
                if not (nx == nx) or fabs(nx) > DIVERGE_LIMIT:
                    status = 1
            if status:
                counters[3] = slot
                vr_store_i64(&abort_flag[0], 1)
                break
            vr_fetch_add_i64(&applied_ctr[0], 1)
            counters[1] += 1
    _save_rng(&r, rng_st)
    return status
