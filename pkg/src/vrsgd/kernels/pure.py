"""Pure-Python twin of the compiled kernels.

Every function mirrors ``_core`` operation for operation (same merge-loop
order, same libm calls via ``math``), so single-thread trajectories agree
bit for bit with the compiled backend. Atomics are emulated under a single
lock: semantics are preserved, parallel speedup is not. Selected as a
fallback when the extension is unavailable, or forced via
``VRSGD_PURE_PYTHON=1``.
"""

import math
import threading

from .rng import Xoshiro256

NAME = "python"
HAS_NATIVE_THREADS = False

_DIVERGE_LIMIT = 1e100

_K_SVRG, _K_SAGA, _K_SAG, _K_GD, _K_HSAG = 0, 1, 2, 3, 4

_atomics_lock = threading.Lock()


def _sigmoid(u):
    if u >= 0.0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def _softplus(u):
    if u > 0.0:
        return u + math.log1p(math.exp(-u))
    return math.log1p(math.exp(u))


def rng_state(seed, stream):
    return Xoshiro256(seed, stream).state_array()


def fill_indices(state, out, n):
    rng = Xoshiro256.from_state(state)
    for i in range(out.shape[0]):
        out[i] = rng.next_u64() % n
    rng.store_state(state)


def full_objective(indptr, indices, vals, labels, regc, x):
    n = labels.shape[0]
    acc = 0.0
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


def full_gradient(indptr, indices, vals, labels, regc, x, out):
    n = labels.shape[0]
    d = out.shape[0]
    inv_n = 1.0 / n
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


def recompute_gbar(indptr, indices, vals, labels, regc,
                   in_table, toff, tvals, anchors, row_anchor, gbar):
    n = labels.shape[0]
    d = gbar.shape[0]
    inv_n = 1.0 / n
    evals = 0
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


def init_table(indptr, indices, vals, labels, regc, x0,
               in_table, toff, tvals, tmarg):
    n = labels.shape[0]
    evals = 0
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


def store_entry(indptr, indices, vals, labels, regc, x, i,
                toff, tvals, tmarg, gbar, inv_n):
    base = toff[i]
    su = 0.0
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


def run_serial_segment(indptr, indices, vals, labels, regc, x,
                       in_table, toff, tvals, tmarg, anchors, row_anchor, gbar,
                       eta, kind, idx_seq, seg_off, seg_len, jstar_rel,
                       xtilde, counters, gbuf, dbuf):
    n = labels.shape[0]
    d = x.shape[0]
    inv_n = 1.0 / n
    status = 0
    for s in range(seg_off, seg_off + seg_len):
        i = idx_seq[s]
        lo = indptr[i]
        hi = indptr[i + 1]
        su = 0.0
        for k in range(lo, hi):
            su += vals[k] * x[indices[k]]
        u = labels[i] * su
        a = _sigmoid(u) * labels[i]
        counters[0] += 1
        for k in range(lo, hi):
            j = indices[k]
            gbuf[k - lo] = a * vals[k] + regc[j] * x[j]
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
        ptr = lo
        for j in range(d):
            dlt = gbar[j]
            if ptr < hi and indices[ptr] == j:
                dlt += dbuf[ptr - lo]
                ptr += 1
            if dlt != 0.0:
                nx = x[j] - eta * dlt
                x[j] = nx
                if not (nx == nx) or abs(nx) > _DIVERGE_LIMIT:
                    status = 1
        if status:
            counters[3] = s
            break
        if kind in (_K_SAGA, _K_HSAG):
            if in_table[i]:
                base = toff[i]
                for k in range(lo, hi):
                    j = indices[k]
                    g = gbuf[k - lo]
                    old = tvals[base + (k - lo)]
                    tvals[base + (k - lo)] = g
                    gbar[j] += (g - old) * inv_n
                tmarg[i] = u
        elif kind == _K_SAG:
            if s + 1 < seg_off + seg_len:
                inext = idx_seq[s + 1]
                lo = indptr[inext]
                hi = indptr[inext + 1]
                su = 0.0
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


def run_jit_segment(indptr, indices, vals, labels, regc,
                    bracket1, scale, anchors, row_anchor, gbar,
                    eta, idx_seq, seg_off, seg_len, jstar_rel,
                    xtilde, counters, xbuf, dbuf):
    d = bracket1.shape[0]
    status = 0
    for s in range(seg_off, seg_off + seg_len):
        i = idx_seq[s]
        lo = indptr[i]
        hi = indptr[i + 1]
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
            if not (nx == nx) or abs(nx) > _DIVERGE_LIMIT:
                status = 1
        scale += eta
        if status:
            counters[3] = s
            break
        counters[1] += 1
    return status, scale


# --- emulated atomic cells -------------------------------------------------

def atomic_read(x, j):
    with _atomics_lock:
        return float(x[j])


def cas_add_batch(x, j, deltas):
    for k in range(deltas.shape[0]):
        with _atomics_lock:
            x[j] = x[j] + deltas[k]
    return 0


def apply_sparse_cas(x, idx, deltas):
    for k in range(idx.shape[0]):
        with _atomics_lock:
            x[idx[k]] = x[idx[k]] + deltas[k]
    return 0


def counter_fetch_add(c, v):
    with _atomics_lock:
        old = int(c[0])
        c[0] = old + v
        return old


def counter_load(c):
    with _atomics_lock:
        return int(c[0])


class _RWLock:
    """Readers-writer lock keyed by the shared rwlock array identity."""

    _registry = {}
    _registry_lock = threading.Lock()

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @classmethod
    def for_cell(cls, arr):
        key = id(arr.base if arr.base is not None else arr)
        with cls._registry_lock:
            if key not in cls._registry:
                cls._registry[key] = cls()
            return cls._registry[key]

    def rdlock(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def rdunlock(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def wrlock(self):
        with self._cond:
            while self._writer or self._readers > 0:
                self._cond.wait()
            self._writer = True

    def wrunlock(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()


def run_worker(indptr, indices, vals, labels, regc, x,
               in_table, toff, tvals, tmarg, anchors, row_anchor, gbar,
               eta, kind, rng_st,
               claim_ctr, applied_ctr, epoch_end,
               locked, rwlock, joint_read,
               jstar, xtilde, stale_samples, stale_count,
               tau_cap, abort_flag, counters,
               gbuf, dbuf, xread, gbar_buf):
    n = labels.shape[0]
    d = x.shape[0]
    inv_n = 1.0 / n
    status = 0
    rng = Xoshiro256.from_state(rng_st)
    start = epoch_end - stale_samples.shape[0]
    rw = _RWLock.for_cell(rwlock) if locked else None
    while True:
        if counter_load(abort_flag) != 0:
            break
        slot = counter_fetch_add(claim_ctr, 1)
        if slot >= epoch_end:
            break
        i = rng.next_u64() % n
        dt = counter_load(applied_ctr)
        stale_samples[slot - start] = dt
        counter_fetch_add(stale_count, 1)
        lag = slot - dt
        if lag < 0:
            lag = 0
        if tau_cap >= 0 and lag > tau_cap:
            status = 2
            with _atomics_lock:
                abort_flag[0] = 2
            break
        lo = indptr[i]
        hi = indptr[i + 1]
        if slot == jstar:
            if locked:
                rw.rdlock()
            with _atomics_lock:
                for j in range(d):
                    xtilde[j] = x[j]
            if locked:
                rw.rdunlock()
        if locked:
            rw.rdlock()
        with _atomics_lock:
            for k in range(lo, hi):
                xread[k - lo] = x[indices[k]]
            if in_table[i]:
                base = toff[i]
                for k in range(lo, hi):
                    dbuf[k - lo] = tvals[base + (k - lo)]
            for j in range(d):
                gbar_buf[j] = gbar[j]
        if locked:
            rw.rdunlock()
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
        if locked:
            rw.wrlock()
        ptr = lo
        diverged_here = False
        for j in range(d):
            dlt = gbar_buf[j]
            if ptr < hi and indices[ptr] == j:
                dlt += dbuf[ptr - lo]
                ptr += 1
            if dlt != 0.0:
                with _atomics_lock:
                    nx = x[j] - eta * dlt
                    x[j] = nx
                if not (nx == nx) or abs(nx) > _DIVERGE_LIMIT:
                    diverged_here = True
        if locked:
            rw.wrunlock()
        if diverged_here:
            status = 1
            counters[3] = slot
            with _atomics_lock:
                abort_flag[0] = 1
            break
        counter_fetch_add(applied_ctr, 1)
        if kind in (_K_SAGA, _K_HSAG) and in_table[i]:
            base = toff[i]
            for k in range(lo, hi):
                j = indices[k]
                g = gbuf[k - lo]
                with _atomics_lock:
                    old = tvals[base + (k - lo)]
                    tvals[base + (k - lo)] = g
                    gbar[j] = gbar[j] + (g - old) * inv_n
            tmarg[i] = u
        counters[1] += 1
    rng.store_state(rng_st)
    return status


def run_sgd_worker(indptr, indices, vals, labels, regc, x,
                   eta0, sigma0, decaying, rng_st,
                   claim_ctr, applied_ctr, epoch_end,
                   abort_flag, counters, xread):
    n = labels.shape[0]
    status = 0
    rng = Xoshiro256.from_state(rng_st)
    while True:
        if counter_load(abort_flag) != 0:
            break
        slot = counter_fetch_add(claim_ctr, 1)
        if slot >= epoch_end:
            break
        i = rng.next_u64() % n
        if decaying:
            eta = eta0 * math.sqrt(sigma0 / (slot + sigma0))
        else:
            eta = eta0
        lo = indptr[i]
        hi = indptr[i + 1]
        with _atomics_lock:
            for k in range(lo, hi):
                xread[k - lo] = x[indices[k]]
        su = 0.0
        for k in range(lo, hi):
            su += vals[k] * xread[k - lo]
        u = labels[i] * su
        a = _sigmoid(u) * labels[i]
        counters[0] += 1
        diverged_here = False
        for k in range(lo, hi):
            j = indices[k]
            g = a * vals[k] + regc[j] * xread[k - lo]
            with _atomics_lock:
                nx = x[j] - eta * g
                x[j] = nx
            if not (nx == nx) or abs(nx) > _DIVERGE_LIMIT:
                diverged_here = True
        if diverged_here:
            status = 1
            counters[3] = slot
            with _atomics_lock:
                abort_flag[0] = 1
            break
        counter_fetch_add(applied_ctr, 1)
        counters[1] += 1
    rng.store_state(rng_st)
    return status
