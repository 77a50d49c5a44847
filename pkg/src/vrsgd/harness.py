"""Experiment orchestration: reference optima (cached), SGD baselines,
time-to-accuracy speedup measurement, and byte-stable CSV/JSON emission.

Conventions: the regularization weight defaults to 1/n, the epoch size to 2n,
targets default to suboptimality 1e-10, timings are medians over seeds while
objective curves are means, and wall time covers solver work (including the
end-of-epoch full-gradient refresh) but never objective evaluation.
"""

import hashlib
import json
import math
import os
import statistics
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import data as dat
from . import kernels
from . import objective as obj
from . import schedules as sch
from . import serial as ser
from . import asyncrun as asy
from . import theory
from .trace import CSV_COLUMNS, ConvergenceTrace

REFERENCE_SOLVES = 0  # incremented on every actual (non-cached) reference solve

CACHE_ENV = "VRSGD_CACHE_DIR"


def default_lam(ds):
    return 1.0 / ds.n


def default_epoch_len(ds):
    return 2 * ds.n


def conditioned_instance(n, d, nnz, condition, seed=0, flip=0.1, balanced=False):
    """Unit-row synthetic dataset with smoothness/strong-convexity ratio
    pinned at ``condition``."""
    ds = dat.generate_synthetic(n, d, nnz, seed=seed, flip=flip, balanced=balanced)
    return obj.problem_for_condition(ds, condition)


def _dataset_hash(ds, lam):
    h = hashlib.sha256()
    for arr in (ds.indptr, ds.indices, ds.values, ds.labels):
        h.update(arr.tobytes())
    h.update(np.float64(lam).tobytes())
    return h.hexdigest()[:16]


def _cache_dir(explicit=None):
    base = explicit or os.environ.get(CACHE_ENV) or os.path.join(os.getcwd(), ".vrsgd_cache")
    os.makedirs(base, exist_ok=True)
    return base


def reference_optimum(p, tol=1e-12, cache_dir=None, max_epochs=2000, seed=123):
    """High-accuracy optimum: epoch-refresh solver run until the full gradient
    norm drops below ``tol``; cached on disk keyed by the dataset+lam hash.

    Returns (x_star, f_star).
    """
    global REFERENCE_SOLVES
    if tol < 1e-14:
        raise ValueError("tol below the float64 floor")
    cache = _cache_dir(cache_dir)
    key = _dataset_hash(p.data, p.lam)
    bin_path = os.path.join(cache, f"ref_opt_{key}.bin")
    meta_path = os.path.join(cache, f"ref_opt_{key}.json")
    if os.path.exists(bin_path) and os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
        if meta.get("tol", math.inf) <= tol:
            x_star = np.fromfile(bin_path, dtype=np.float64)
            if x_star.shape == (p.dim,):
                return x_star, meta["f_star"]

    m = default_epoch_len(p.data)
    eta = 0.1 / p.smoothness
    spec = sch.ScheduleSpec(kind="svrg", m=m)
    cfg = ser.SolverConfig(eta=eta, epochs=1, schedule=spec, pick_rule="last", seed=seed)
    x = np.zeros(p.dim)
    state = sch.make_state(p, spec, x)
    ker = kernels.get_backend()
    idx_stream = ker.rng_state(seed, 0)
    from .kernels.rng import Xoshiro256
    pick_rng = Xoshiro256(seed, ser.PICK_STREAM)
    REFERENCE_SOLVES += 1
    gnorm = math.inf
    grad = np.empty(p.dim)
    for k in range(max_epochs):
        er, state = ser.run_epoch(p, cfg, x, state, epoch_index=k,
                                  idx_stream=idx_stream, pick_rng=pick_rng,
                                  eval_objective=False)
        x[:] = er.x_tilde
        ker.full_gradient(p.data.indptr, p.data.indices, p.data.values,
                          p.data.labels, p.reg_coeff, x, grad)
        gnorm = float(np.sqrt(np.dot(grad, grad)))
        if gnorm <= tol:
            break
    else:
        raise RuntimeError(f"reference solve stalled at |grad| = {gnorm:.3e} > {tol:g}")
    f_star = float(ker.full_objective(p.data.indptr, p.data.indices, p.data.values,
                                      p.data.labels, p.reg_coeff, x))
    x.tofile(bin_path)
    with open(meta_path, "w") as fh:
        json.dump({"tol": tol, "grad_norm": gnorm, "f_star": f_star,
                   "lam": p.lam, "n": p.n, "dim": p.dim, "epochs_used": k + 1},
                  fh, indent=1)
    return x, f_star


# --- lock-free SGD baselines --------------------------------------------------

def dsgd_step_size(eta0, sigma0, t):
    """Decaying schedule eta0 * sqrt(sigma0 / (t + sigma0))."""
    return eta0 * math.sqrt(sigma0 / (t + sigma0))


def run_baseline_sgd(p, variant, eta0, sigma0=None, threads=1, seed=0,
                     epochs=10, m=None, x0=None, f_star=None):
    """Plain stochastic gradient (no variance reduction), lock-free CAS
    application, support-sparse steps. ``variant``: 'csgd' (constant step)
    or 'dsgd' (decaying)."""
    if variant not in ("csgd", "dsgd"):
        raise ValueError("variant must be 'csgd' or 'dsgd'")
    if eta0 <= 0:
        raise ValueError("eta0 must be positive")
    decaying = 1 if variant == "dsgd" else 0
    if decaying and (sigma0 is None or sigma0 <= 0):
        raise ValueError("dsgd needs sigma0 > 0")
    sigma0 = sigma0 or 1.0
    ker = kernels.get_backend()
    m = m or default_epoch_len(p.data)
    d = p.dim
    data = p.data
    x = np.zeros(d) if x0 is None else np.array(x0, dtype=np.float64)
    shared = asy.SharedParams(cells=x)
    streams = [ker.rng_state(seed, w) for w in range(threads)]
    max_nnz = int(np.diff(data.indptr).max())
    bufs = [np.empty(max_nnz) for _ in range(threads)]
    counters = [np.zeros(4, dtype=np.int64) for _ in range(threads)]
    trace = ConvergenceTrace(metadata={
        "solver": variant, "threads": threads, "eta0": eta0,
        "sigma0": sigma0 if decaying else None, "m": m, "seed": seed,
        "lam": p.lam, "backend": ker.NAME,
        "initial_objective": ker.full_objective(
            data.indptr, data.indices, data.values, data.labels, p.reg_coeff, x),
    })
    if f_star is not None:
        trace.metadata["f_star"] = float(f_star)
    wall_total = 0.0
    for k in range(epochs):
        t0 = k * m
        ker.counter_fetch_add(shared.claim, t0 - int(shared.claim[0]))
        start = time.perf_counter()

        def _work(w):
            ker.run_sgd_worker(data.indptr, data.indices, data.values,
                               data.labels, p.reg_coeff, shared.cells,
                               eta0, float(sigma0), decaying, streams[w],
                               shared.claim, shared.applied, t0 + m,
                               shared.abort, counters[w], bufs[w])

        ths = [threading.Thread(target=_work, args=(w,)) for w in range(threads)]
        for th in ths:
            th.start()
        for th in ths:
            th.join()
        wall_total += time.perf_counter() - start
        if int(shared.abort[0]) == 1:
            step = max(int(c[3]) for c in counters)
            raise ser.DivergenceError(step, float(np.linalg.norm(shared.cells)))
        snap = shared.snapshot()
        f_now = ker.full_objective(data.indptr, data.indices, data.values,
                                   data.labels, p.reg_coeff, snap)
        subopt = f_now - f_star if f_star is not None else math.nan
        trace.add_row(k, wall_total, f_now, f_now, subopt)
    return trace


def tune_baseline(p, variant, f_star, threads=1, seed=0, epochs=5, m=None,
                  grid=None, sigma0=None):
    """Grid-tune the baseline's step scale by best final residual; returns
    (best_eta0, grid, residuals)."""
    if grid is None:
        base = 1.0 / p.smoothness
        grid = [base * (2.0 ** k) for k in range(-6, 3)]
    best = None
    residuals = []
    for eta0 in grid:
        try:
            tr = run_baseline_sgd(p, variant, eta0, sigma0=sigma0, threads=threads,
                                  seed=seed, epochs=epochs, m=m, f_star=f_star)
            res = tr.subopt[-1]
        except ser.DivergenceError:
            res = math.inf
        residuals.append(res)
        if best is None or res < best[1]:
            best = (eta0, res)
    return best[0], list(grid), residuals


# --- speedup measurement ------------------------------------------------------

@dataclass
class SpeedupRow:
    threads: int
    times: list
    median_time: float
    speedup: float
    reached: bool


@dataclass
class SpeedupTable:
    target: float
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


def measure_speedup(p, base_cfg, thread_grid, seeds, target, mode="lock_free",
                    x_star=None, f_star=None, cache_dir=None):
    """Median time-to-target per thread count; speedup(P) = time(1)/time(P).

    The target must be reachable at one thread (verified first); thread counts
    that miss it within the epoch budget are marked unreached, not fabricated.
    """
    if x_star is None:
        x_star, f_star = reference_optimum(p, cache_dir=cache_dir)
    elif f_star is None:
        f_star = obj.full_objective(p, x_star)
    table = SpeedupTable(target=target, metadata={
        "mode": mode, "schedule": base_cfg.schedule.kind, "m": base_cfg.schedule.m,
        "eta": base_cfg.eta, "seeds": list(seeds), "threads": list(thread_grid)})
    grid = sorted(set(int(t) for t in thread_grid))
    if grid[0] != 1:
        grid = [1] + grid
    t1 = None
    for P in grid:
        times = []
        reached = True
        for s in seeds:
            cfg = ser.SolverConfig(eta=base_cfg.eta, epochs=base_cfg.epochs,
                                   schedule=base_cfg.schedule,
                                   pick_rule=base_cfg.pick_rule,
                                   kappa=base_cfg.kappa, seed=int(s))
            acfg = asy.AsyncConfig(threads=P, base=cfg, mode=mode)
            _, tr, _ = asy.run_async(p, acfg, f_star=f_star)
            t = tr.time_to_target(target)
            if t is None:
                reached = False
                break
            times.append(t)
        if P == 1:
            if not reached:
                raise RuntimeError("target unreachable at one thread; "
                                   "refusing to measure speedup")
            t1 = statistics.median(times)
        med = statistics.median(times) if reached else math.nan
        speedup = (t1 / med) if reached else math.nan
        if P == 1:
            speedup = 1.0
        table.rows.append(SpeedupRow(threads=P, times=times, median_time=med,
                                     speedup=speedup, reached=reached))
    return table


# --- emission -----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return "%.17g" % v
    return str(v)


def emit(payload, fmt, path):
    """Write a ConvergenceTrace or SpeedupTable as CSV (stable column order,
    17 significant digits) or JSON (same content plus metadata)."""
    try:
        if isinstance(payload, ConvergenceTrace):
            _emit_trace(payload, fmt, path)
        elif isinstance(payload, SpeedupTable):
            _emit_speedup(payload, fmt, path)
        else:
            raise TypeError(f"cannot emit {type(payload).__name__}")
    except OSError as e:
        raise OSError(f"emit failed for {path}: {e}") from e


def _emit_trace(trace, fmt, path):
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in trace.rows():
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    elif fmt == "json":
        body = {"columns": list(CSV_COLUMNS),
                "rows": [list(r) for r in trace.rows()],
                "metadata": _jsonable(trace.metadata)}
        with open(path, "w") as fh:
            json.dump(body, fh, indent=1, allow_nan=True)
    else:
        raise ValueError("format must be 'csv' or 'json'")


SPEEDUP_COLUMNS = ("threads", "median_seconds", "speedup", "reached")


def _emit_speedup(table, fmt, path):
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(",".join(SPEEDUP_COLUMNS) + "\n")
            for r in table.rows:
                fh.write(",".join([str(r.threads), _fmt(r.median_time),
                                   _fmt(r.speedup), str(int(r.reached))]) + "\n")
    elif fmt == "json":
        body = {"target": table.target,
                "rows": [{"threads": r.threads, "times": r.times,
                          "median_seconds": r.median_time, "speedup": r.speedup,
                          "reached": r.reached} for r in table.rows],
                "metadata": _jsonable(table.metadata)}
        with open(path, "w") as fh:
            json.dump(body, fh, indent=1, allow_nan=True)
    else:
        raise ValueError("format must be 'csv' or 'json'")


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.integer,)):
            v = int(v)
        elif isinstance(v, (np.floating,)):
            v = float(v)
        elif isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


def parse_trace_csv(path):
    """Read back an emitted trace CSV into a ConvergenceTrace."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != list(CSV_COLUMNS):
            raise ValueError(f"unexpected columns {header}")
        tr = ConvergenceTrace()
        for line in fh:
            vals = line.strip().split(",")
            tr.epochs.append(int(vals[0]))
            tr.wall.append(float(vals[1]))
            tr.f_tilde.append(float(vals[2]))
            tr.f_last.append(float(vals[3]))
            tr.subopt.append(float(vals[4]))
            tr.lyap.append(float(vals[5]))
            tr.staleness.append(float(vals[6]))
    return tr


# --- experiment plans -----------------------------------------------------------

@dataclass
class ExperimentPlan:
    dataset: dict
    entries: list
    lam: object = "1/n"
    normalize: bool = True
    target_accuracy: float = 1e-10
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    thread_grid: list = field(default_factory=lambda: [1, 2, 4, 8])
    output_dir: str = "out"
    certify: dict = None

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            raw = json.load(fh)
        return cls(**raw)

    def to_dict(self):
        return {"dataset": self.dataset, "entries": self.entries, "lam": self.lam,
                "normalize": self.normalize, "target_accuracy": self.target_accuracy,
                "seeds": list(self.seeds), "thread_grid": list(self.thread_grid),
                "output_dir": self.output_dir, "certify": self.certify}


def _materialize_dataset(spec):
    if "path" in spec:
        ds = dat.load_libsvm(spec["path"], dim=spec.get("dim"))
    elif "synthetic" in spec:
        s = dict(spec["synthetic"])
        ds = dat.generate_synthetic(
            n=s["n"], d=s["d"], nnz_per_row=s["nnz"], seed=s.get("seed", 0),
            flip=s.get("flip", 0.1), balanced=s.get("balanced", False),
            label_model=s.get("label_model", "planted"))
    else:
        raise ValueError("dataset spec needs 'path' or 'synthetic'")
    return ds


def resolve_symbol(value, n):
    """Resolve '2n'/'n/2'-style sizes and '1/n' weights against n."""
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
        expr = value.replace(" ", "")
        allowed = set("0123456789n*/.+-()")
        if not set(expr) <= allowed:
            raise ValueError(f"cannot resolve {value!r}")
        expr = expr.replace("n", f"({n})")
        # implicit products like 2(n) from '2n'
        out = []
        for i, ch in enumerate(expr):
            if ch == "(" and i > 0 and (expr[i - 1].isdigit() or expr[i - 1] == ")"):
                out.append("*")
            out.append(ch)
        return eval("".join(out), {"__builtins__": {}})  # noqa: S307
    return value


def run_plan(plan, progress=None):
    """Execute every entry sequentially; write trace_<entry>.csv, speedup.csv
    (if a speedup entry exists), plan_resolved.json and certificate.json."""
    os.makedirs(plan.output_dir, exist_ok=True)
    ds = _materialize_dataset(plan.dataset)
    if plan.normalize:
        ds = dat.normalize_rows(ds)
    n = ds.n
    lam = float(resolve_symbol(plan.lam, n))
    if "condition" in plan.dataset:
        p = obj.problem_for_condition(ds, float(resolve_symbol(plan.dataset["condition"], n)))
    else:
        p = obj.Problem(ds, lam=lam)
    x_star, f_star = reference_optimum(p, cache_dir=os.path.join(plan.output_dir, "cache"))

    resolved = plan.to_dict()
    resolved["resolved_lam"] = p.lam
    resolved["delta"] = ds.delta
    resolved["n"] = n
    resolved["dim"] = ds.dim
    resolved["smoothness"] = p.smoothness
    resolved["strong_convexity"] = p.strong_convexity
    resolved["f_star"] = f_star
    resolved["backend"] = kernels.get_backend().NAME
    resolved["entries_resolved"] = []
    outputs = {}

    for entry in plan.entries:
        e = dict(entry)
        name = e["name"]
        algo = e["algo"]
        m = int(resolve_symbol(e.get("m", "2n"), n))
        epochs = int(e.get("epochs", 30))
        seeds = e.get("seeds", plan.seeds)
        if progress:
            progress(f"entry {name} ({algo})")
        if algo in ("csgd", "dsgd"):
            eta0 = e.get("eta0")
            sigma0 = float(resolve_symbol(e.get("sigma0", "n"), n)) if algo == "dsgd" else None
            if eta0 is None:
                eta0, grid, residuals = tune_baseline(
                    p, algo, f_star, threads=int(e.get("threads", 1)),
                    epochs=min(5, epochs), m=m, sigma0=sigma0)
                e["tuning_grid"] = grid
                e["tuning_residuals"] = residuals
            e["eta0"] = eta0
            traces = [run_baseline_sgd(p, algo, eta0, sigma0=sigma0,
                                       threads=int(e.get("threads", 1)), seed=int(s),
                                       epochs=epochs, m=m, f_star=f_star)
                      for s in seeds]
        else:
            eta = float(resolve_symbol(e.get("eta", 0.1 / p.smoothness), n))
            spec_kwargs = {"kind": algo, "m": m}
            if algo == "hsag":
                frac = e.get("S", 0.5)
                rng = np.random.default_rng(int(e.get("S_seed", 0)))
                S = np.sort(rng.choice(n, size=int(round(float(frac) * n)), replace=False))
                spec_kwargs["hsag_S"] = S
                spec_kwargs["hsag_freq"] = int(resolve_symbol(e.get("s_freq", m), n))
            spec = sch.ScheduleSpec(**spec_kwargs)
            traces = []
            for s in seeds:
                cfg = ser.SolverConfig(eta=eta, epochs=epochs, schedule=spec,
                                       pick_rule=e.get("pick", "uniform"),
                                       kappa=e.get("kappa"), seed=int(s),
                                       jit=bool(e.get("jit", False)))
                threads = int(e.get("threads", 1))
                if e.get("async", threads > 1):
                    acfg = asy.AsyncConfig(threads=threads, base=cfg,
                                           mode=e.get("mode", "lock_free"),
                                           tau_cap=e.get("tau_cap"),
                                           barrier=bool(e.get("barrier", True)))
                    _, tr, _ = asy.run_async(p, acfg, x_star=x_star, f_star=f_star)
                else:
                    tr = ser.solve(p, cfg, x_star=x_star, f_star=f_star).trace
                traces.append(tr)
            e["eta"] = eta
        mean_tr = _mean_trace(traces)
        path = os.path.join(plan.output_dir, f"trace_{name}.csv")
        emit(mean_tr, "csv", path)
        emit(mean_tr, "json", os.path.join(plan.output_dir, f"trace_{name}.json"))
        outputs[name] = path
        if e.get("speedup"):
            spec = sch.ScheduleSpec(kind=algo, m=m)
            base = ser.SolverConfig(eta=e["eta"], epochs=epochs, schedule=spec,
                                    pick_rule=e.get("pick", "uniform"), seed=0)
            table = measure_speedup(p, base, plan.thread_grid, seeds,
                                    plan.target_accuracy,
                                    mode=e.get("mode", "lock_free"),
                                    x_star=x_star, f_star=f_star)
            emit(table, "csv", os.path.join(plan.output_dir, "speedup.csv"))
            emit(table, "json", os.path.join(plan.output_dir, "speedup.json"))
        resolved["entries_resolved"].append(e)

    if plan.certify:
        c = dict(plan.certify)
        regime = c.pop("regime", "thm1")
        inp = theory.recipe_parameters(
            regime, L=p.smoothness, lam_sc=p.strong_convexity, n=n,
            m=c.get("m"), tau=int(c.get("tau", 0)),
            delta=float(c.get("delta", ds.delta)))
        cert = (theory.certificate_thm1(inp) if regime == "thm1"
                else theory.certificate_thm3(inp))
        with open(os.path.join(plan.output_dir, "certificate.json"), "w") as fh:
            json.dump(cert.to_dict(), fh, indent=1)

    with open(os.path.join(plan.output_dir, "plan_resolved.json"), "w") as fh:
        json.dump(_jsonable(resolved), fh, indent=1, default=str)
    return outputs


def _mean_trace(traces):
    """Mean objective/suboptimality curve over seeds (means for objectives,
    per-epoch mean wall time)."""
    if len(traces) == 1:
        return traces[0]
    K = min(len(t) for t in traces)
    out = ConvergenceTrace(metadata=dict(traces[0].metadata))
    out.metadata["n_seeds"] = len(traces)
    for k in range(K):
        out.add_row(
            k,
            float(np.mean([t.wall[k] for t in traces])),
            float(np.mean([t.f_tilde[k] for t in traces])),
            float(np.mean([t.f_last[k] for t in traces])),
            float(np.mean([t.subopt[k] for t in traces])),
            float(np.mean([t.lyap[k] for t in traces])),
            float(np.max([t.staleness[k] for t in traces])),
        )
    return out
