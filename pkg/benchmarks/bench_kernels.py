"""Throughput comparison between the compiled kernel backend and the
pure-Python fallback on the serial epoch loop and the lock-free worker path.

Usage: python benchmarks/bench_kernels.py [--n 2000] [--d 200] [--nnz 8]
"""

import argparse
import time

import numpy as np

import vrsgd
from vrsgd import asyncrun as asy
from vrsgd import kernels
from vrsgd import schedules as sch
from vrsgd import serial as ser


def bench_serial(p, backend, epochs, kind):
    kernels.set_backend(backend)
    kw = {"kind": kind, "m": 2 * p.n}
    if kind == "hsag":
        kw["hsag_S"] = np.arange(0, p.n, 2)
    cfg = ser.SolverConfig(eta=0.1 / p.smoothness, epochs=epochs,
                           schedule=sch.ScheduleSpec(**kw),
                           pick_rule="uniform", seed=0)
    t0 = time.perf_counter()
    res = ser.solve(p, cfg)
    dt = time.perf_counter() - t0
    steps = epochs * 2 * p.n
    return dt, steps / dt, res.trace.f_tilde[-1]


def bench_worker(p, backend, epochs, threads):
    kernels.set_backend(backend)
    cfg = ser.SolverConfig(eta=0.1 / p.smoothness, epochs=epochs,
                           schedule=sch.ScheduleSpec(kind="svrg", m=2 * p.n),
                           pick_rule="uniform", seed=0)
    t0 = time.perf_counter()
    asy.run_async(p, asy.AsyncConfig(threads=threads, base=cfg))
    dt = time.perf_counter() - t0
    return dt, epochs * 2 * p.n / dt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--d", type=int, default=200)
    ap.add_argument("--nnz", type=int, default=8)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    ds = vrsgd.normalize_rows(vrsgd.generate_synthetic(args.n, args.d, args.nnz, seed=0))
    p = vrsgd.Problem(ds, lam=1.0 / args.n)
    backends = kernels.available_backends()
    print(f"instance: n={args.n} d={args.d} nnz/row={args.nnz} "
          f"delta={ds.delta:.4f}; backends: {backends}")

    rows = []
    for kind in ("svrg", "saga", "hsag"):
        for backend in backends:
            # equal epoch counts: the final objective column doubles as a
            # cross-backend parity check (identical bits expected)
            epochs = 2
            dt, sps, f = bench_serial(p, backend, epochs, kind)
            rows.append((f"serial/{kind}", backend, dt / epochs, sps, f))
    for backend in backends:
        epochs = 2
        dt, sps = bench_worker(p, backend, epochs, args.threads)
        rows.append((f"async/svrg P={args.threads}", backend, dt / epochs, sps, float("nan")))
    kernels.set_backend(backends[0])

    print(f"{'path':<22}{'backend':<10}{'s/epoch':>12}{'steps/s':>14}{'final f':>14}")
    for path, backend, spe, sps, f in rows:
        print(f"{path:<22}{backend:<10}{spe:>12.4f}{sps:>14.0f}{f:>14.6g}")
    ratios = {}
    for path, backend, spe, sps, _ in rows:
        ratios.setdefault(path, {})[backend] = sps
    for path, d in ratios.items():
        if "cython" in d and "python" in d:
            print(f"{path}: compiled/pure throughput ratio "
                  f"{d['cython'] / d['python']:.0f}x")


if __name__ == "__main__":
    main()
