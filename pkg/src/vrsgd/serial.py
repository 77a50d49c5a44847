"""Sequential epoch solver.

Each epoch runs m inner steps of

    x <- x - eta * (grad_i(x) - grad_i(alpha_i) + mean stored gradient),

then replaces the iterate with one drawn from the epoch's iterates
(geometric, uniform, or last pick) and restarts the next epoch from it.
Snapshot-anchor schedules refresh inside epoch boundaries (or at their
per-row frequencies), so between refresh events the inner loop runs as an
uninterrupted kernel segment.

With ``jit=True`` (svrg only) the epoch keeps the iterate in two-bracket
form: a dense accumulator for the sparse per-step corrections plus a scalar
multiplier on the epoch-constant average gradient. Touched coordinates are
materialized on demand, so each step costs O(support) instead of O(d).
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import objective as obj
from . import schedules as sch
from .kernels.rng import Xoshiro256
from .trace import ConvergenceTrace

PICK_STREAM = 1 << 32  # rng stream id for epoch-iterate selection


class DivergenceError(RuntimeError):
    def __init__(self, step, norm):
        super().__init__(f"iterate diverged at step {step} (|x| = {norm:.3e})")
        self.step = step
        self.norm = norm


@dataclass
class SolverConfig:
    eta: float
    epochs: int
    schedule: sch.ScheduleSpec
    pick_rule: str = "geometric"      # geometric | uniform | last
    kappa: float = None               # geometric pick weight; default 4/(lam_sc*eta)
    seed: int = 0
    jit: bool = False

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.pick_rule not in ("geometric", "uniform", "last"):
            raise ValueError(f"unknown pick rule {self.pick_rule!r}")
        if self.jit and self.schedule.kind != "svrg":
            raise ValueError(
                "jit updates need an epoch-constant average gradient; "
                f"not available under the {self.schedule.kind} schedule")


@dataclass
class EpochResult:
    x_tilde: np.ndarray
    f_tilde: float
    f_last: float
    wall_seconds: float
    grad_evals: int
    steps: int


@dataclass
class SolveResult:
    x: np.ndarray
    trace: ConvergenceTrace
    state: sch.ScheduleState
    grad_evals: int = 0
    epoch_grad_evals: list = field(default_factory=list)


@dataclass
class JitState:
    """Two-bracket lazy iterate: x_j = bracket1[j] - scale * avg_grad[j]."""

    bracket1: np.ndarray
    scale: float
    avg_grad: np.ndarray

    def materialize(self, coords):
        coords = np.asarray(coords, dtype=np.int64)
        return self.bracket1[coords] - self.scale * self.avg_grad[coords]

    def materialize_full(self):
        return self.bracket1 - self.scale * self.avg_grad


def jit_materialize(js, coords):
    return js.materialize(coords)


def pick_offset(rule, m, kappa, rng):
    """Epoch-relative offset of the selected iterate (0..m-1). Geometric
    weights are proportional to (1-1/kappa)^(m-1-j), heaviest on the most
    recent iterate."""
    if rule == "last":
        return m - 1
    r = rng.next_double()
    if rule == "uniform":
        return min(int(r * m), m - 1)
    if kappa is None or kappa <= 1:
        raise ValueError("geometric pick needs kappa > 1")
    logq = math.log1p(-1.0 / kappa)
    denom = -math.expm1(m * logq)  # 1 - q^m
    g = int(math.log1p(-r * denom) / logq)  # truncated-geometric inverse cdf
    g = min(max(g, 0), m - 1)
    return m - 1 - g


def _resolved_kappa(p, cfg):
    if cfg.kappa is not None:
        return cfg.kappa
    return 4.0 / (p.strong_convexity * cfg.eta)


def run_epoch(p, cfg, x, state, epoch_index=0, idx_stream=None, pick_rng=None,
              eval_objective=True):
    """Run one epoch in place on ``x``/``state``; returns (EpochResult, state).

    ``x`` is left at the epoch's *last* iterate; the caller decides whether to
    continue from ``EpochResult.x_tilde`` (the solver does).
    """
    ker = kernels.get_backend()
    m = cfg.schedule.m
    n, d = p.n, p.dim
    if idx_stream is None:
        idx_stream = ker.rng_state(cfg.seed, 0)
    if pick_rng is None:
        pick_rng = Xoshiro256(cfg.seed, PICK_STREAM)
        for _ in range(epoch_index):
            pick_rng.next_double()

    t0 = epoch_index * m
    data = p.data
    idx_seq = np.empty(m, dtype=np.int64)
    ker.fill_indices(idx_stream, idx_seq, n)
    jstar = pick_offset(cfg.pick_rule, m, _resolved_kappa(p, cfg), pick_rng)
    xtilde = np.empty(d)
    counters = np.zeros(4, dtype=np.int64)
    max_nnz = int(np.diff(data.indptr).max())
    gbuf = np.empty(max_nnz)
    dbuf = np.empty(max_nnz)

    start = time.perf_counter()
    events = sch.refresh_events(state, t0, m)
    if cfg.schedule.kind == "sag":
        counters[0] += ker.store_entry(
            data.indptr, data.indices, data.values, data.labels, p.reg_coeff,
            x, int(idx_seq[0]), state.toff, state.tvals, state.tmarg,
            state.gbar, 1.0 / n)

    if cfg.jit:
        # single segment: the only refresh event sits at the epoch start
        for t, rows in events:
            assert t == t0
            counters[0] += state.refresh_snapshot_rows(p, rows, x)
        js = JitState(bracket1=x.copy(), scale=0.0, avg_grad=state.gbar)
        status, scale = ker.run_jit_segment(
            data.indptr, data.indices, data.values, data.labels, p.reg_coeff,
            js.bracket1, js.scale, state.anchors, state.row_anchor, state.gbar,
            cfg.eta, idx_seq, 0, m, jstar, xtilde, counters,
            np.empty(max_nnz), dbuf)
        js.scale = scale
        if status:
            raise DivergenceError(t0 + int(counters[3]),
                                  float(np.linalg.norm(js.bracket1)))
        x[:] = js.bracket1 - js.scale * js.avg_grad
    else:
        # refresh events split the epoch into uninterrupted kernel segments
        ev_rows = dict(events)
        boundaries = sorted({t0, t0 + m, *ev_rows})
        for bi in range(len(boundaries) - 1):
            t_here, t_next = boundaries[bi], boundaries[bi + 1]
            if t_here in ev_rows:
                counters[0] += state.refresh_snapshot_rows(p, ev_rows[t_here], x)
            status = ker.run_serial_segment(
                data.indptr, data.indices, data.values, data.labels, p.reg_coeff,
                x, state.in_table, state.toff, state.tvals, state.tmarg,
                state.anchors, state.row_anchor, state.gbar,
                cfg.eta, cfg.schedule.code, idx_seq, t_here - t0, t_next - t_here,
                jstar, xtilde, counters, gbuf, dbuf)
            if status:
                raise DivergenceError(t0 + int(counters[3]), float(np.linalg.norm(x)))
    wall = time.perf_counter() - start

    f_tilde = f_last = math.nan
    if eval_objective:
        f_tilde = ker.full_objective(data.indptr, data.indices, data.values,
                                     data.labels, p.reg_coeff, xtilde)
        f_last = ker.full_objective(data.indptr, data.indices, data.values,
                                    data.labels, p.reg_coeff, x)
    state.epoch_origin = t0 + m
    res = EpochResult(x_tilde=xtilde, f_tilde=f_tilde, f_last=f_last,
                      wall_seconds=wall, grad_evals=int(counters[0]),
                      steps=int(counters[1]))
    return res, state


def solve(p, cfg, x0=None, x_star=None, f_star=None):
    """Run ``cfg.epochs`` epochs from x0 (default 0); deterministic per seed.

    When a reference optimum is supplied the trace rows carry suboptimality
    and the stored-anchor divergence sum alongside the objectives.
    """
    ker = kernels.get_backend()
    d = p.dim
    x = np.zeros(d) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (d,):
        raise ValueError("x0 has the wrong length")
    state = sch.make_state(p, cfg.schedule, x)
    idx_stream = ker.rng_state(cfg.seed, 0)
    pick_rng = Xoshiro256(cfg.seed, PICK_STREAM)

    if x_star is not None and f_star is None:
        f_star = obj.full_objective(p, x_star)

    trace = ConvergenceTrace(metadata={
        "solver": "serial",
        "schedule": cfg.schedule.kind,
        "m": cfg.schedule.m,
        "eta": cfg.eta,
        "seed": cfg.seed,
        "pick_rule": cfg.pick_rule,
        "jit": cfg.jit,
        "lam": p.lam,
        "delta": p.data.delta,
        "backend": ker.NAME,
        "wall_policy": "solver work including snapshot-refresh passes; "
                       "objective evaluation excluded",
        "initial_objective": ker.full_objective(
            p.data.indptr, p.data.indices, p.data.values, p.data.labels,
            p.reg_coeff, x),
    })
    if f_star is not None:
        trace.metadata["f_star"] = float(f_star)
        trace.metadata["initial_suboptimality"] = trace.metadata["initial_objective"] - f_star
        if x_star is not None:
            g0 = _lyapunov(p, state, x_star)
            trace.metadata["initial_lyapunov_G"] = g0

    result = SolveResult(x=x, trace=trace, state=state)
    wall_total = 0.0
    for k in range(cfg.epochs):
        er, state = run_epoch(p, cfg, x, state, epoch_index=k,
                              idx_stream=idx_stream, pick_rng=pick_rng)
        wall_total += er.wall_seconds
        subopt = math.nan
        lyap = math.nan
        if f_star is not None:
            subopt = er.f_tilde - f_star
        if x_star is not None:
            lyap = _lyapunov(p, state, x_star)
        trace.add_row(k, wall_total, er.f_tilde, er.f_last, subopt, lyap)
        result.grad_evals += er.grad_evals
        result.epoch_grad_evals.append(er.grad_evals)
        x[:] = er.x_tilde
    result.x = x
    return result


def _lyapunov(p, state, x_star):
    rows = state.table_rows()
    if rows.size == 0:
        return 0.0
    return obj.lyapunov_G(p, rows, lambda i: state.alpha_point(p, i), x_star)
