"""Multicore execution: a team of workers repeatedly reads the shared
iterate, computes a variance-reduced step, and applies it per coordinate.

Two modes share the same write path (per-cell compare-and-swap):

* lock_free: coordinates are read individually with no global lock, so a
  gradient may see a mix of iterates (inconsistent read).
* locked: a readers-writer lock makes each gradient's read of x a consistent
  snapshot (concurrent readers, exclusive writer).

Work is partitioned by an atomic claim counter, so each epoch applies exactly
m stochastic updates across all workers; a full rendezvous at every epoch
boundary runs the snapshot refresh and the iterate selection single-threaded.
Every step records the applied-update counter observed when it read x, which
makes the staleness bound directly measurable instead of assumed.
"""

import math
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import objective as obj
from . import schedules as sch
from .kernels.rng import Xoshiro256
from .serial import PICK_STREAM, DivergenceError, SolverConfig, pick_offset, _resolved_kappa
from .trace import ConvergenceTrace

ASYNC_SCHEDULES = ("svrg", "saga", "hsag")


class StalenessExceeded(RuntimeError):
    pass


class BarrierTimeout(RuntimeError):
    pass


@dataclass
class AsyncConfig:
    threads: int
    base: SolverConfig
    mode: str = "lock_free"           # lock_free | locked
    tau_cap: int = None               # abort when measured staleness exceeds it
    barrier: bool = True              # rendezvous every epoch
    joint_read: bool = True           # read x and the anchor state under one lock
    barrier_timeout: float = 300.0

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.mode not in ("lock_free", "locked"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.tau_cap is not None and self.tau_cap < 0:
            raise ValueError("tau_cap must be >= 0")
        kind = self.base.schedule.kind
        if kind not in ASYNC_SCHEDULES:
            raise ValueError(f"schedule {kind!r} is not run asynchronously "
                             "(biased or full-refresh schedules are excluded)")
        if self.base.jit:
            raise ValueError("jit updates are a serial-solver feature")
        if not self.barrier and kind != "saga":
            raise ValueError("only the per-step table schedule may run without "
                             "epoch synchronization")


@dataclass
class SharedParams:
    """Shared cells plus the atomic counters that define the execution."""

    cells: np.ndarray
    claim: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))
    applied: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))
    rwlock: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))
    abort: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))

    def read(self, j):
        return kernels.get_backend().atomic_read(self.cells, j)

    def snapshot(self):
        return self.cells.copy()

    def applied_count(self):
        return kernels.get_backend().counter_load(self.applied)


def apply_update_lockfree(shared, support, deltas):
    """CAS-apply ``deltas`` to the supported cells; returns retry count."""
    support = np.ascontiguousarray(support, dtype=np.int64)
    deltas = np.ascontiguousarray(deltas, dtype=np.float64)
    if support.size == 0:
        return 0
    return kernels.get_backend().apply_sparse_cas(shared.cells, support, deltas)


@dataclass
class StalenessTrace:
    """Per-step read timestamps D(t): the applied-update count each step saw."""

    epoch_starts: list = field(default_factory=list)
    read_counts: list = field(default_factory=list)   # one int64 array per epoch

    def add_epoch(self, start, d_of_t):
        self.epoch_starts.append(int(start))
        self.read_counts.append(np.asarray(d_of_t, dtype=np.int64))

    def lags(self):
        out = []
        for start, d in zip(self.epoch_starts, self.read_counts):
            slots = start + np.arange(len(d), dtype=np.int64)
            out.append(np.maximum(slots - d, 0))
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def max_staleness(self):
        lags = self.lags()
        return int(lags.max()) if lags.size else 0

    def histogram(self):
        lags = self.lags()
        return np.bincount(lags) if lags.size else np.zeros(1, dtype=np.int64)

    def barrier_violations(self):
        """Steps whose read predates their epoch start (must be 0 with the
        barrier active)."""
        bad = 0
        for start, d in zip(self.epoch_starts, self.read_counts):
            bad += int((d < start).sum())
        return bad


def _worker_buffers(p, threads):
    max_nnz = int(np.diff(p.data.indptr).max())
    return [
        dict(gbuf=np.empty(max_nnz), dbuf=np.empty(max_nnz),
             xread=np.empty(max_nnz), gbar_buf=np.empty(p.dim))
        for _ in range(threads)
    ]


def _join_with_watchdog(threads, timeout, shared):
    deadline = time.monotonic() + timeout
    for th in threads:
        th.join(max(0.0, deadline - time.monotonic()))
    alive = [th.name for th in threads if th.is_alive()]
    if alive:
        kernels.get_backend().counter_fetch_add(shared.abort, 9)
        for th in threads:
            th.join(5.0)
        raise BarrierTimeout(
            f"workers still running at the epoch rendezvous: {alive}; "
            f"claimed={int(shared.claim[0])} applied={int(shared.applied[0])}")


def run_async(p, acfg, x0=None, x_star=None, f_star=None):
    """Run K epochs with P workers; returns (x, ConvergenceTrace, StalenessTrace).

    With one worker both modes reproduce the serial solver's trajectory
    exactly (same index stream, same arithmetic, no contention).
    """
    ker = kernels.get_backend()
    cfg = acfg.base
    m = cfg.schedule.m
    n, d = p.n, p.dim
    x_init = np.zeros(d) if x0 is None else np.array(x0, dtype=np.float64)
    if x_init.shape != (d,):
        raise ValueError("x0 has the wrong length")

    if cfg.schedule.kind in ("svrg", "hsag"):
        freq = sch.resolve_frequencies(cfg.schedule, n)
        snap_freq = freq[freq > 0]
        if snap_freq.size and np.any(snap_freq % m != 0):
            raise ValueError("async snapshot refresh must align with epoch "
                             "boundaries (frequencies must be multiples of m)")

    shared = SharedParams(cells=x_init.copy())
    state = sch.make_state(p, cfg.schedule, shared.cells)
    streams = [ker.rng_state(cfg.seed, w) for w in range(acfg.threads)]
    pick_rng = Xoshiro256(cfg.seed, PICK_STREAM)
    if x_star is not None and f_star is None:
        f_star = obj.full_objective(p, x_star)

    trace = ConvergenceTrace(metadata={
        "solver": "async",
        "mode": acfg.mode,
        "threads": acfg.threads,
        "barrier": acfg.barrier,
        "joint_read": acfg.joint_read,
        "schedule": cfg.schedule.kind,
        "m": m,
        "eta": cfg.eta,
        "seed": cfg.seed,
        "pick_rule": cfg.pick_rule,
        "lam": p.lam,
        "delta": p.data.delta,
        "backend": ker.NAME,
        "tau_cap": acfg.tau_cap,
        "wall_policy": "solver work including snapshot-refresh passes; "
                       "objective evaluation excluded",
        "initial_objective": ker.full_objective(
            p.data.indptr, p.data.indices, p.data.values, p.data.labels,
            p.reg_coeff, shared.cells),
    })
    if f_star is not None:
        trace.metadata["f_star"] = float(f_star)
    stale = StalenessTrace()
    bufs = _worker_buffers(p, acfg.threads)
    locked = 1 if acfg.mode == "locked" else 0
    tau_cap = -1 if acfg.tau_cap is None else int(acfg.tau_cap)
    retries = 0
    grad_evals = 0
    barrier_passes = 0

    if not acfg.barrier:
        return _run_unsynchronized(p, acfg, shared, state, streams, trace, stale)

    data = p.data
    wall_total = 0.0
    worker_counters = [np.zeros(4, dtype=np.int64) for _ in range(acfg.threads)]
    for k in range(cfg.epochs):
        t0 = k * m
        # --- inside the barrier: refresh + selection setup, single-threaded
        start = time.perf_counter()
        events = sch.refresh_events(state, t0, m)
        for t_ev, rows in events:
            assert t_ev == t0
            grad_evals += state.refresh_snapshot_rows(p, rows, shared.cells)
        jstar = t0 + pick_offset(cfg.pick_rule, m, _resolved_kappa(p, cfg), pick_rng)
        ker.counter_fetch_add(shared.claim, t0 - int(shared.claim[0]))
        # -1 marks an unexecuted slot; a clean epoch leaves none
        d_of_t = np.full(m, -1, dtype=np.int64)
        stale_count = np.zeros(1, dtype=np.int64)
        xtilde = np.empty(d)
        statuses = [None] * acfg.threads

        def _work(w):
            statuses[w] = ker.run_worker(
                data.indptr, data.indices, data.values, data.labels, p.reg_coeff,
                shared.cells, state.in_table, state.toff, state.tvals, state.tmarg,
                state.anchors, state.row_anchor, state.gbar,
                cfg.eta, cfg.schedule.code, streams[w],
                shared.claim, shared.applied, t0 + m,
                locked, shared.rwlock, 1 if acfg.joint_read else 0,
                jstar, xtilde, d_of_t, stale_count,
                tau_cap, shared.abort, worker_counters[w],
                bufs[w]["gbuf"], bufs[w]["dbuf"], bufs[w]["xread"], bufs[w]["gbar_buf"])

        threads = [threading.Thread(target=_work, args=(w,), name=f"vrsgd-worker-{w}")
                   for w in range(acfg.threads)]
        for th in threads:
            th.start()
        _join_with_watchdog(threads, acfg.barrier_timeout, shared)
        barrier_passes += 1
        wall_total += time.perf_counter() - start

        flag = int(shared.abort[0])
        if flag == 1:
            step = max(int(c[3]) for c in worker_counters)
            raise DivergenceError(step, float(np.linalg.norm(shared.cells)))
        if flag == 2:
            raise StalenessExceeded(
                f"measured staleness exceeded tau_cap={acfg.tau_cap} in epoch {k}")
        applied = shared.applied_count()
        if applied != t0 + m:
            raise RuntimeError(f"epoch {k}: applied {applied - t0} of {m} updates")
        if np.any(d_of_t < 0):
            raise RuntimeError(f"epoch {k}: {int((d_of_t < 0).sum())} slots never executed")
        stale.add_epoch(t0, d_of_t)

        # --- quiesced: selection, replacement, off-clock evaluation
        x_last = shared.snapshot()
        f_tilde = ker.full_objective(data.indptr, data.indices, data.values,
                                     data.labels, p.reg_coeff, xtilde)
        f_last = ker.full_objective(data.indptr, data.indices, data.values,
                                    data.labels, p.reg_coeff, x_last)
        shared.cells[:] = xtilde
        subopt = f_tilde - f_star if f_star is not None else math.nan
        lyap = math.nan
        if x_star is not None:
            rows = state.table_rows()
            if rows.size:
                lyap = obj.lyapunov_G(p, rows, lambda i: state.alpha_point(p, i), x_star)
            else:
                lyap = 0.0
        epoch_max_stale = int(np.maximum(t0 + np.arange(m) - d_of_t, 0).max())
        trace.add_row(k, wall_total, f_tilde, f_last, subopt, lyap, epoch_max_stale)
        state.epoch_origin = t0 + m

    for c in worker_counters:
        grad_evals += int(c[0])
        retries += int(c[2])
    trace.metadata["grad_evals"] = grad_evals
    trace.metadata["cas_retries"] = retries
    trace.metadata["barrier_passes"] = barrier_passes
    trace.metadata["max_staleness"] = stale.max_staleness()
    return shared.cells.copy(), trace, stale


def _run_unsynchronized(p, acfg, shared, state, streams, trace, stale):
    """Barrier-free mode (per-step table schedule only): workers run the whole
    budget; epoch rows come from racy snapshots and are flagged as such."""
    ker = kernels.get_backend()
    cfg = acfg.base
    m, d = cfg.schedule.m, p.dim
    total = cfg.epochs * m
    data = p.data
    trace.metadata["unanalyzed_per_epoch"] = True
    trace.metadata["evaluation_racy"] = True
    d_of_t = np.full(total, -1, dtype=np.int64)
    stale_count = np.zeros(1, dtype=np.int64)
    xtilde = np.empty(d)  # unused: no iterate selection without a barrier
    tau_cap = -1 if acfg.tau_cap is None else int(acfg.tau_cap)
    locked = 1 if acfg.mode == "locked" else 0
    bufs = _worker_buffers(p, acfg.threads)
    counters = [np.zeros(4, dtype=np.int64) for _ in range(acfg.threads)]
    statuses = [None] * acfg.threads

    def _work(w):
        statuses[w] = ker.run_worker(
            data.indptr, data.indices, data.values, data.labels, p.reg_coeff,
            shared.cells, state.in_table, state.toff, state.tvals, state.tmarg,
            state.anchors, state.row_anchor, state.gbar,
            cfg.eta, cfg.schedule.code, streams[w],
            shared.claim, shared.applied, total,
            locked, shared.rwlock, 1 if acfg.joint_read else 0,
            -1, xtilde, d_of_t, stale_count,
            tau_cap, shared.abort, counters[w],
            bufs[w]["gbuf"], bufs[w]["dbuf"], bufs[w]["xread"], bufs[w]["gbar_buf"])

    threads = [threading.Thread(target=_work, args=(w,), name=f"vrsgd-worker-{w}")
               for w in range(acfg.threads)]
    start = time.perf_counter()
    for th in threads:
        th.start()
    snapshots = []
    next_epoch = 1
    while any(th.is_alive() for th in threads):
        applied = shared.applied_count()
        while next_epoch * m <= applied and next_epoch <= cfg.epochs:
            snapshots.append((next_epoch - 1, time.perf_counter() - start,
                              shared.snapshot()))
            next_epoch += 1
        if int(shared.abort[0]) != 0:
            break
        time.sleep(1e-4)
    _join_with_watchdog(threads, acfg.barrier_timeout, shared)
    flag = int(shared.abort[0])
    if flag == 1:
        step = max(int(c[3]) for c in counters)
        raise DivergenceError(step, float(np.linalg.norm(shared.cells)))
    if flag == 2:
        raise StalenessExceeded(f"measured staleness exceeded tau_cap={acfg.tau_cap}")
    while next_epoch <= cfg.epochs:
        snapshots.append((next_epoch - 1, time.perf_counter() - start, shared.snapshot()))
        next_epoch += 1
    for k in range(cfg.epochs):
        stale.add_epoch(k * m, d_of_t[k * m:(k + 1) * m])
    f_star = trace.metadata.get("f_star")
    for k, wall, snap in snapshots:
        f_snap = ker.full_objective(data.indptr, data.indices, data.values,
                                    data.labels, p.reg_coeff, snap)
        subopt = f_snap - f_star if f_star is not None else math.nan
        trace.add_row(k, wall, f_snap, f_snap, subopt, math.nan,
                      int(np.maximum(k * m + np.arange(m) - d_of_t[k * m:(k + 1) * m], 0).max()))
    trace.metadata["grad_evals"] = sum(int(c[0]) for c in counters)
    trace.metadata["cas_retries"] = sum(int(c[2]) for c in counters)
    trace.metadata["barrier_passes"] = 0
    trace.metadata["max_staleness"] = stale.max_staleness()
    return shared.cells.copy(), trace, stale
