"""Variance-reduced stochastic gradient toolkit.

Serial and multicore (lock-free / locked) solvers for strongly convex
finite sums under a family of anchor-update schedules, executable
convergence-rate certificates, and a benchmark harness.
"""

from . import kernels
from .data import SparseDataset, SparseExample, compute_delta, generate_synthetic, load_libsvm, normalize_rows, save_libsvm
from .objective import Problem, bregman, component_gradient, component_loss, full_gradient, full_objective, lyapunov_G, problem_for_condition
from .schedules import ScheduleSpec, ScheduleState, is_biased, make_state, schedule_update, vr_direction
from .serial import DivergenceError, JitState, SolverConfig, jit_materialize, run_epoch, solve
from .asyncrun import AsyncConfig, SharedParams, StalenessTrace, apply_update_lockfree, run_async
from .theory import CertificateInputs, RateCertificate, certificate_thm1, certificate_thm2, certificate_thm3, empirical_rate, recipe_parameters
from .harness import ExperimentPlan, SpeedupTable, emit, measure_speedup, reference_optimum, run_baseline_sgd

__version__ = "0.1.0"

__all__ = [
    "kernels",
    "SparseDataset", "SparseExample", "compute_delta", "generate_synthetic",
    "load_libsvm", "normalize_rows", "save_libsvm",
    "Problem", "bregman", "component_gradient", "component_loss",
    "full_gradient", "full_objective", "lyapunov_G", "problem_for_condition",
    "ScheduleSpec", "ScheduleState", "is_biased", "make_state",
    "schedule_update", "vr_direction",
    "DivergenceError", "JitState", "SolverConfig", "jit_materialize",
    "run_epoch", "solve",
    "AsyncConfig", "SharedParams", "StalenessTrace", "apply_update_lockfree",
    "run_async",
    "CertificateInputs", "RateCertificate", "certificate_thm1",
    "certificate_thm2", "certificate_thm3", "empirical_rate", "recipe_parameters",
    "ExperimentPlan", "SpeedupTable", "emit", "measure_speedup",
    "reference_optimum", "run_baseline_sgd",
]
