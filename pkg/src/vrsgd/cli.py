"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 numerical failure (divergence, or an
infeasible certificate under --strict). Sizes and weights accept symbolic
forms resolved against the loaded dataset ('2n', '1/n', 'n/2').
"""

import argparse
import json
import math
import sys

import numpy as np

from . import asyncrun as asy
from . import data as dat
from . import harness
from . import objective as obj
from . import schedules as sch
from . import serial as ser
from . import theory


class CliError(Exception):
    pass


def _add_data_flags(sp):
    g = sp.add_argument_group("dataset")
    g.add_argument("--plan", default=None,
                   help="experiment plan JSON; runs the plan and overrides "
                        "the other flags")
    g.add_argument("--data", help="LIBSVM text file")
    g.add_argument("--n", type=int, help="synthetic: number of examples n")
    g.add_argument("--d", type=int, help="synthetic: feature dimension")
    g.add_argument("--nnz", type=int, help="synthetic: nonzeros per row")
    g.add_argument("--data-seed", type=int, default=0, help="synthetic generator seed")
    g.add_argument("--flip", type=float, default=0.1, help="synthetic label flip probability")
    g.add_argument("--balanced", action="store_true",
                   help="synthetic: exact per-column occupancy (pins delta)")
    g.add_argument("--no-normalize", action="store_true",
                   help="skip unit-norm row scaling")
    g.add_argument("--lambda", dest="lam", default="1/n",
                   help="regularization weight (symbol: lambda); accepts '1/n'")
    g.add_argument("--condition", default=None,
                   help="pick lambda for this smoothness/strong-convexity "
                        "ratio L/lambda_sc instead (accepts 'n')")


def _add_solver_flags(sp):
    g = sp.add_argument_group("solver")
    g.add_argument("--schedule", default="svrg",
                   choices=["svrg", "saga", "sag", "gd", "hsag"])
    g.add_argument("--eta", default=None,
                   help="step size (symbol: eta); default 0.1/L")
    g.add_argument("--m", default="2n",
                   help="epoch length (symbol: m); accepts '2n'")
    g.add_argument("--epochs", type=int, default=30, help="epoch count K")
    g.add_argument("--pick", default="uniform",
                   choices=["geometric", "uniform", "last"],
                   help="end-of-epoch iterate selection rule (probabilities p_i)")
    g.add_argument("--kappa", type=float, default=None,
                   help="geometric pick weight parameter (symbol: kappa)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jit", action="store_true",
                   help="two-bracket lazy updates (svrg only)")
    g.add_argument("--S", default="0.5",
                   help="hsag: fraction of rows on the table rule, or a file "
                        "of explicit ids")
    g.add_argument("--S-seed", type=int, default=0, help="hsag: set sampling seed")
    g.add_argument("--s-freq", default=None,
                   help="hsag: off-set refresh frequency s_i (scalar or "
                        "comma list); default m")
    g.add_argument("--out", default="trace.csv", help="trace CSV path")


def _load_problem(args):
    if args.data:
        ds = dat.load_libsvm(args.data)
    else:
        if not (args.n and args.d and args.nnz):
            raise CliError("need --data or --n/--d/--nnz")
        ds = dat.generate_synthetic(args.n, args.d, args.nnz, seed=args.data_seed,
                                    flip=args.flip, balanced=args.balanced)
    if not args.no_normalize:
        ds = dat.normalize_rows(ds)
    if args.condition is not None:
        return obj.problem_for_condition(ds, float(harness.resolve_symbol(args.condition, ds.n)))
    lam = float(harness.resolve_symbol(args.lam, ds.n))
    return obj.Problem(ds, lam=lam)


def _schedule_from_args(args, n, m):
    kw = {"kind": args.schedule, "m": m}
    if args.schedule == "hsag":
        try:
            frac = float(args.S)
            rng = np.random.default_rng(args.S_seed)
            S = np.sort(rng.choice(n, size=int(round(frac * n)), replace=False))
        except ValueError:
            S = np.loadtxt(args.S, dtype=np.int64, ndmin=1)
        kw["hsag_S"] = S
        if args.s_freq is not None:
            if "," in args.s_freq:
                kw["hsag_freq"] = [int(harness.resolve_symbol(v, n))
                                   for v in args.s_freq.split(",")]
            else:
                kw["hsag_freq"] = int(harness.resolve_symbol(args.s_freq, n))
    return sch.ScheduleSpec(**kw)


def _resolved_flags(args):
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _solver_config(args, p):
    m = int(harness.resolve_symbol(args.m, p.n))
    eta = (0.1 / p.smoothness if args.eta is None
           else float(harness.resolve_symbol(args.eta, p.n)))
    spec = _schedule_from_args(args, p.n, m)
    return ser.SolverConfig(eta=eta, epochs=args.epochs, schedule=spec,
                            pick_rule=args.pick, kappa=args.kappa,
                            seed=args.seed, jit=args.jit)


def _write_resolved(args, outdir_file, extra=None):
    resolved = _resolved_flags(args)
    if extra:
        resolved.update(extra)
    with open(outdir_file, "w") as fh:
        json.dump(resolved, fh, indent=1, default=str)


def cmd_solve(args):
    p = _load_problem(args)
    cfg = _solver_config(args, p)
    if args.ref:
        x_star, f_star = harness.reference_optimum(p, cache_dir=args.cache_dir)
        res = ser.solve(p, cfg, x_star=x_star, f_star=f_star)
    else:
        res = ser.solve(p, cfg)
    harness.emit(res.trace, "csv", args.out)
    _write_resolved(args, args.out + ".resolved.json",
                    {"resolved_eta": cfg.eta, "resolved_m": cfg.schedule.m,
                     "resolved_lam": p.lam, "delta": p.data.delta})
    print(f"wrote {args.out} ({len(res.trace)} epochs, "
          f"final objective {res.trace.f_tilde[-1]:.12g})")
    return 0


def cmd_async_solve(args):
    p = _load_problem(args)
    cfg = _solver_config(args, p)
    acfg = asy.AsyncConfig(threads=args.threads, base=cfg, mode=args.mode,
                           tau_cap=args.tau_cap, barrier=not args.no_barrier,
                           joint_read=not args.drift_read)
    if args.ref:
        x_star, f_star = harness.reference_optimum(p, cache_dir=args.cache_dir)
        _, tr, stale = asy.run_async(p, acfg, x_star=x_star, f_star=f_star)
    else:
        _, tr, stale = asy.run_async(p, acfg)
    harness.emit(tr, "csv", args.out)
    _write_resolved(args, args.out + ".resolved.json",
                    {"resolved_eta": cfg.eta, "resolved_m": cfg.schedule.m,
                     "resolved_lam": p.lam, "delta": p.data.delta,
                     "max_staleness": stale.max_staleness(),
                     "barrier_violations": stale.barrier_violations()})
    print(f"wrote {args.out} (max measured staleness {stale.max_staleness()})")
    return 0


def cmd_certify(args):
    n = args.n
    lam_sc = float(harness.resolve_symbol(args.lam_sc, n)) if args.lam_sc else None
    L = args.L
    if args.cond is not None:
        cond = float(harness.resolve_symbol(args.cond, n))
        if L is None:
            L = 1.0
        lam_sc = L / cond
    if L is None or lam_sc is None:
        raise CliError("need --L and --lam-sc, or --cond")
    m = int(harness.resolve_symbol(args.m, n)) if args.m else None
    delta = float(harness.resolve_symbol(str(args.delta), n))
    if args.recipe or args.eta is None:
        regime = {1: "thm1", 3: "thm3"}.get(args.thm)
        if regime is None:
            raise CliError("--recipe applies to --thm 1 or 3; give --eta for --thm 2")
        inp = theory.recipe_parameters(regime, L=L, lam_sc=lam_sc, n=n, m=m,
                                       tau=args.tau, delta=delta,
                                       theta_target=args.theta_target)
    else:
        inp = theory.CertificateInputs(
            L=L, lam_sc=lam_sc, n=n, m=m or 2 * n,
            eta=float(harness.resolve_symbol(args.eta, n)),
            kappa=args.kappa, beta=args.beta, c=args.c,
            delta=delta, tau=args.tau)
    cert = {1: theory.certificate_thm1, 2: theory.certificate_thm2,
            3: theory.certificate_thm3}[args.thm](inp)
    print(json.dumps(cert.to_dict(), indent=1))
    if args.strict and not cert.feasible:
        return 2
    return 0


def cmd_speedup(args):
    p = _load_problem(args)
    m = int(harness.resolve_symbol(args.m, p.n))
    eta = (0.1 / p.smoothness if args.eta is None
           else float(harness.resolve_symbol(args.eta, p.n)))
    spec = sch.ScheduleSpec(kind=args.schedule, m=m)
    base = ser.SolverConfig(eta=eta, epochs=args.epochs, schedule=spec,
                            pick_rule=args.pick, seed=args.seed)
    grid = [int(t) for t in args.threads_grid.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    table = harness.measure_speedup(p, base, grid, seeds, args.target,
                                    mode=args.mode, cache_dir=args.cache_dir)
    harness.emit(table, "csv", args.out)
    harness.emit(table, "json", args.out.replace(".csv", ".json"))
    _write_resolved(args, args.out + ".resolved.json",
                    {"resolved_eta": eta, "resolved_m": m})
    for r in table.rows:
        print(f"P={r.threads}: median {r.median_time:.4g}s speedup {r.speedup:.3g}"
              + ("" if r.reached else " (target unreached)"))
    return 0


def cmd_gen_data(args):
    ds = dat.generate_synthetic(args.n, args.d, args.nnz, seed=args.seed,
                                flip=args.flip, balanced=args.balanced)
    if not args.no_normalize:
        ds = dat.normalize_rows(ds)
    dat.save_libsvm(ds, args.out)
    print(f"wrote {args.out}: n={ds.n} d={ds.dim} nnz={ds.nnz} delta={ds.delta:.17g}")
    return 0


def cmd_ref_opt(args):
    p = _load_problem(args)
    x_star, f_star = harness.reference_optimum(p, tol=args.tol,
                                               cache_dir=args.cache_dir)
    g = obj.full_gradient(p, x_star)
    print(json.dumps({"f_star": f_star, "grad_norm": float(np.linalg.norm(g)),
                      "lam": p.lam, "n": p.n, "dim": p.dim}, indent=1))
    return 0


def make_parser():
    ap = argparse.ArgumentParser(
        prog="vrsgd",
        description="Variance-reduced stochastic gradient toolkit. Flags map "
                    "onto the usual symbols: --eta step size, --m epoch "
                    "length, --kappa/--beta/--c certificate parameters, "
                    "--tau staleness bound, --delta sparsity constant, "
                    "--lambda regularization weight.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="serial solve; writes a trace CSV")
    _add_data_flags(sp)
    _add_solver_flags(sp)
    sp.add_argument("--ref", action="store_true",
                    help="compute/cache a reference optimum and fill suboptimality")
    sp.add_argument("--cache-dir", default=None,
                    help="reference cache directory (env: VRSGD_CACHE_DIR)")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("async-solve", help="multicore solve")
    _add_data_flags(sp)
    _add_solver_flags(sp)
    sp.add_argument("--threads", type=int, default=2, help="worker count P")
    sp.add_argument("--mode", default="lock_free", choices=["lock_free", "locked"])
    sp.add_argument("--tau-cap", type=int, default=None,
                    help="abort if measured staleness exceeds this (symbol: tau)")
    sp.add_argument("--no-barrier", action="store_true",
                    help="skip epoch synchronization (saga only; unanalyzed)")
    sp.add_argument("--drift-read", action="store_true",
                    help="locked mode: read x and the anchor state separately")
    sp.add_argument("--ref", action="store_true")
    sp.add_argument("--cache-dir", default=None)
    sp.set_defaults(func=cmd_async_solve)

    sp = sub.add_parser("certify", help="print a rate certificate as JSON")
    sp.add_argument("--thm", type=int, required=True, choices=[1, 2, 3],
                    help="1 serial schedule family, 2 async epoch-refresh, "
                         "3 async hybrid")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--L", type=float, default=None, help="smoothness bound L")
    sp.add_argument("--lam-sc", default=None,
                    help="strong-convexity modulus (symbol: lambda); accepts '1/n'")
    sp.add_argument("--cond", default=None,
                    help="set lambda_sc = L/cond instead; accepts 'n'")
    sp.add_argument("--m", default=None, help="epoch length; accepts '2n'")
    sp.add_argument("--eta", default=None, help="step size (symbol: eta)")
    sp.add_argument("--kappa", type=float, default=None)
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--c", type=float, default=None)
    sp.add_argument("--tau", type=int, default=0, help="staleness bound (symbol: tau)")
    sp.add_argument("--delta", default=1.0, help="sparsity constant (symbol: delta)")
    sp.add_argument("--recipe", action="store_true",
                    help="derive eta/kappa/beta/c (and m if unset) from the recipe")
    sp.add_argument("--theta-target", type=float, default=0.5)
    sp.add_argument("--strict", action="store_true",
                    help="exit 2 when the certificate is infeasible")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("speedup", help="measure time-to-target over a thread grid")
    _add_data_flags(sp)
    sp.add_argument("--schedule", default="svrg", choices=["svrg", "saga", "hsag"])
    sp.add_argument("--eta", default=None)
    sp.add_argument("--m", default="2n")
    sp.add_argument("--epochs", type=int, default=60)
    sp.add_argument("--pick", default="uniform", choices=["geometric", "uniform", "last"])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", default="lock_free", choices=["lock_free", "locked"])
    sp.add_argument("--threads-grid", default="1,2,4,8")
    sp.add_argument("--seeds", default="0,1,2,3,4")
    sp.add_argument("--target", type=float, default=1e-10)
    sp.add_argument("--out", default="speedup.csv")
    sp.add_argument("--cache-dir", default=None)
    sp.set_defaults(func=cmd_speedup)

    sp = sub.add_parser("gen-data", help="write a synthetic LIBSVM file")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--nnz", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--flip", type=float, default=0.1)
    sp.add_argument("--balanced", action="store_true")
    sp.add_argument("--no-normalize", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("ref-opt", help="compute/cache a reference optimum")
    _add_data_flags(sp)
    sp.add_argument("--tol", type=float, default=1e-12,
                    help="full-gradient norm tolerance")
    sp.add_argument("--cache-dir", default=None)
    sp.set_defaults(func=cmd_ref_opt)
    return ap


def main(argv=None):
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    try:
        if getattr(args, "plan", None):
            plan = harness.ExperimentPlan.from_json(args.plan)
            harness.run_plan(plan)
            return 0
        return args.func(args)
    except (ser.DivergenceError, asy.StalenessExceeded) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2
    except (CliError, dat.DataError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
