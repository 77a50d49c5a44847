"""Executable convergence-rate certificates.

Evaluates the contraction factors and feasibility conditions of the epoch
analysis (serial schedule family, asynchronous epoch-refresh, asynchronous
hybrid) plus the parameter recipes that make them feasible, so a run can be
checked against its own guarantee. All powers (1-1/kappa)^m are computed in
the log domain to survive large m, and lambda here always means the
strong-convexity modulus (for the split logistic objective that is twice the
regularization weight).
"""

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class CertificateInputs:
    L: float
    lam_sc: float
    n: int
    m: int
    eta: float
    kappa: float = None
    beta: float = None
    c: float = None
    delta: float = 1.0
    tau: int = 0

    def __post_init__(self):
        if min(self.L, self.lam_sc, self.eta) <= 0 or self.n < 1 or self.m < 1:
            raise ValueError("L, lam_sc, eta must be positive; n, m >= 1")
        if self.kappa is not None and self.kappa <= 1:
            raise ValueError("kappa must exceed 1")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.c is not None and self.c <= 0:
            raise ValueError("c must be positive")
        if not (0 < self.delta <= 1):
            raise ValueError("delta must lie in (0, 1]")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")


@dataclass
class RateCertificate:
    theorem: str
    feasible: bool
    violated: list = field(default_factory=list)
    gamma: float = None
    theta: float = None
    theta_bar: float = None
    theta_s: float = None
    zeta: float = None
    gamma_a: float = None
    theta_a: float = None
    theta_bar_a: float = None
    inputs: dict = None

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


def _qm(kappa, m):
    """(1 - 1/kappa)^m via the log domain."""
    return math.exp(m * math.log1p(-1.0 / kappa))


def certificate_thm1(inp):
    """Serial epoch contraction for the generic schedule family.

    gamma = kappa*(1-q^m)*(2*c*eta*(1 - L*eta*(1+beta)) - 1/n - 2c/(kappa*lam))
    theta = max(first, q^m) with
    first = (2c/(gamma*lam))*q^m + (2*L*c*eta^2/gamma)*(1+1/beta)*kappa*(1-q^m)

    Feasibility: 1/kappa + 2*L*c*eta^2*(1+1/beta) <= 1/n, gamma > 0, theta < 1.
    """
    if inp.kappa is None or inp.beta is None or inp.c is None:
        raise ValueError("this certificate needs kappa, beta and c")
    L, lam, n, m = inp.L, inp.lam_sc, inp.n, inp.m
    eta, kappa, beta, c = inp.eta, inp.kappa, inp.beta, inp.c
    qm = _qm(kappa, m)
    one_minus_qm = -math.expm1(m * math.log1p(-1.0 / kappa))
    gamma = kappa * one_minus_qm * (
        2.0 * c * eta * (1.0 - L * eta * (1.0 + beta)) - 1.0 / n - 2.0 * c / (kappa * lam))
    violated = []
    step_cond = 1.0 / kappa + 2.0 * L * c * eta * eta * (1.0 + 1.0 / beta)
    if step_cond > 1.0 / n:
        violated.append("step-size condition 1/kappa + 2*L*c*eta^2*(1+1/beta) <= 1/n")
    theta = None
    theta_bar = None
    if gamma <= 0:
        violated.append("gamma > 0")
    else:
        first = (2.0 * c / (gamma * lam)) * qm \
            + (2.0 * L * c * eta * eta / gamma) * (1.0 + 1.0 / beta) * kappa * one_minus_qm
        theta = max(first, qm)
        theta_bar = theta * (1.0 + 1.0 / gamma)
        if theta >= 1.0:
            violated.append("theta < 1")
    return RateCertificate(theorem="serial", feasible=not violated, violated=violated,
                           gamma=gamma, theta=theta, theta_bar=theta_bar,
                           inputs=asdict(inp))


def certificate_thm2(inp):
    """Asynchronous epoch-refresh contraction (uniform iterate pick).

    theta_s = (1/(lam*eta*m) + B) / (1 - B) with
    B = 4L*(eta + L*delta*tau^2*eta^2) / (1 - 2*L^2*delta*eta^2*tau^2);
    needs 2*L^2*delta*eta^2*tau^2 < 1 and 0 < theta_s < 1.
    """
    L, lam, n, m = inp.L, inp.lam_sc, inp.n, inp.m
    eta, delta, tau = inp.eta, inp.delta, inp.tau
    violated = []
    denom = 1.0 - 2.0 * L * L * delta * eta * eta * tau * tau
    theta_s = None
    if denom <= 0:
        violated.append("read-lag variance condition 2*L^2*delta*eta^2*tau^2 < 1")
    else:
        big = 4.0 * L * (eta + L * delta * tau * tau * eta * eta) / denom
        theta_s = (1.0 / (lam * eta * m) + big) / (1.0 - big)
        if not (1.0 - big) > 0 or theta_s <= 0 or theta_s >= 1:
            violated.append("0 < theta_s < 1")
    return RateCertificate(theorem="async-epoch-refresh", feasible=not violated,
                           violated=violated, theta_s=theta_s, inputs=asdict(inp))


def solve_m_thm2(L, lam_sc, eta, delta, tau, theta_target=0.5):
    """Smallest epoch length achieving the target asynchronous contraction;
    None when no finite m can."""
    denom = 1.0 - 2.0 * L * L * delta * eta * eta * tau * tau
    if denom <= 0:
        return None
    big = 4.0 * L * (eta + L * delta * tau * tau * eta * eta) / denom
    room = (1.0 - big) * theta_target - big
    if room <= 0:
        return None
    return 1.0 / (lam_sc * eta * room)


def certificate_thm3(inp):
    """Asynchronous hybrid-schedule contraction.

    zeta = c*eta^2 + (1-1/kappa)^(-tau) * c*L*delta*tau^2*eta^3
    gamma_a = kappa*(1-q^m)*(2*c*eta - 8*zeta*L*(1+beta) - 2c/(kappa*lam)
              - (96*zeta*L*tau/n)*(1-1/kappa)^(-tau) - 1/n)
    theta_a = max((2c/(gamma_a*lam))*q^m
              + (8*zeta*L*(1+1/beta)/gamma_a)*kappa*(1-q^m), q^m)

    Feasibility: 1/kappa + 8*zeta*L*(1+1/beta)
                 + (96*zeta*L*tau/n)*(1-1/kappa)^(-tau) <= 1/n,
                 eta^2 <= (1-1/kappa)^(m-1)/(12*L^2*delta*tau^2),
                 gamma_a > 0, theta_a < 1.
    """
    if inp.kappa is None or inp.beta is None or inp.c is None:
        raise ValueError("this certificate needs kappa, beta and c")
    L, lam, n, m = inp.L, inp.lam_sc, inp.n, inp.m
    eta, kappa, beta, c = inp.eta, inp.kappa, inp.beta, inp.c
    delta, tau = inp.delta, inp.tau
    logq = math.log1p(-1.0 / kappa)
    qm = math.exp(m * logq)
    one_minus_qm = -math.expm1(m * logq)
    q_neg_tau = math.exp(-tau * logq)
    zeta = c * eta * eta + q_neg_tau * c * L * delta * tau * tau * eta ** 3
    violated = []
    step_cond = (1.0 / kappa + 8.0 * zeta * L * (1.0 + 1.0 / beta)
                 + (96.0 * zeta * L * tau / n) * q_neg_tau)
    if step_cond > 1.0 / n:
        violated.append("step-size condition 1/kappa + 8*zeta*L*(1+1/beta) "
                        "+ (96*zeta*L*tau/n)*(1-1/kappa)^(-tau) <= 1/n")
    if tau > 0:
        eta_sq_cap = math.exp((m - 1) * logq) / (12.0 * L * L * delta * tau * tau)
        if eta * eta > eta_sq_cap:
            violated.append("eta-squared bound eta^2 <= (1-1/kappa)^(m-1)/(12*L^2*delta*tau^2)")
    gamma_a = kappa * one_minus_qm * (
        2.0 * c * eta - 8.0 * zeta * L * (1.0 + beta) - 2.0 * c / (kappa * lam)
        - (96.0 * zeta * L * tau / n) * q_neg_tau - 1.0 / n)
    theta_a = None
    theta_bar_a = None
    if gamma_a <= 0:
        violated.append("gamma_a > 0")
    else:
        first = (2.0 * c / (gamma_a * lam)) * qm \
            + (8.0 * zeta * L * (1.0 + 1.0 / beta) / gamma_a) * kappa * one_minus_qm
        theta_a = max(first, qm)
        theta_bar_a = theta_a * (1.0 + 1.0 / gamma_a)
        if theta_a >= 1.0:
            violated.append("theta_a < 1")
    return RateCertificate(theorem="async-hybrid", feasible=not violated,
                           violated=violated, zeta=zeta, gamma_a=gamma_a,
                           theta_a=theta_a, theta_bar_a=theta_bar_a,
                           inputs=asdict(inp))


# --- parameter recipes ------------------------------------------------------

def recipe_theta_display(lam_sc, L, n, m, kappa, tau=None):
    """Closed-form contraction bound the recipe parameters guarantee:
    serial form for tau=None, asynchronous-hybrid form otherwise."""
    qm = _qm(kappa, m)
    one_minus_qm = -math.expm1(m * math.log1p(-1.0 / kappa))
    ratio = 2.0 * lam_sc * n / L
    if tau is None:
        first = 2.0 * qm / (3.0 * one_minus_qm) + 1.0 / (3.0 * (1.0 + ratio))
    else:
        qtau = math.exp(tau * math.log1p(-1.0 / kappa))
        first = 6.0 * qm / (7.0 * one_minus_qm) + 195.0 * qtau / (448.0 * (1.0 + ratio))
    return max(first, qm)


def _fixed_point_kappa(lam_sc, L, n, m, omega=0.5, tol=1e-13, max_iter=1000):
    """Resolve the circular pair eta = (1-1/kappa)^m/(64*(lam*n+L)) and
    kappa = 4/(lam*eta) by damped fixed-point iteration in the log domain."""
    target = 256.0 * (n + L / lam_sc)
    kappa = 64.0 * (n + L / lam_sc)  # synchronous-recipe start
    for _ in range(max_iter):
        qm = _qm(kappa, m)
        nxt = math.exp((1.0 - omega) * math.log(kappa)
                       + omega * math.log(target / qm))
        if abs(nxt - kappa) <= tol * kappa:
            return nxt
        kappa = nxt
    raise RuntimeError("fixed-point iteration for kappa did not converge")


def recipe_parameters(regime, L, lam_sc, n, m=None, tau=0, delta=1.0,
                      theta_target=0.5):
    """Parameter instantiation that makes the chosen certificate feasible.

    serial: eta = 1/(16*(lam*n+L)), kappa = 4/(lam*eta),
    beta = (2*lam*n+L)/L, c = 2/(eta*n).
    async: eta = (1-1/kappa)^m/(64*(lam*n+L)) with kappa = 4/(lam*eta)
    resolved as a fixed point.

    With m unset, the smallest epoch length reaching ``theta_target`` is
    chosen by bisection. The returned inputs are asserted feasible.
    """
    if regime not in ("thm1", "thm3"):
        raise ValueError("regime must be 'thm1' or 'thm3'")
    beta = (2.0 * lam_sc * n + L) / L
    if regime == "thm3" and math.sqrt(delta) * tau >= 1.0:
        warnings.warn("sqrt(delta)*tau >= 1: outside the sparse regime the "
                      "async recipe is stated for", RuntimeWarning)

    def build(m_try):
        if regime == "thm1":
            eta = 1.0 / (16.0 * (lam_sc * n + L))
            kappa = 4.0 / (lam_sc * eta)
            c = 2.0 / (eta * n)
            return CertificateInputs(L=L, lam_sc=lam_sc, n=n, m=m_try, eta=eta,
                                     kappa=kappa, beta=beta, c=c,
                                     delta=delta, tau=tau)
        kappa = _fixed_point_kappa(lam_sc, L, n, m_try)
        eta = 4.0 / (lam_sc * kappa)
        c = 2.0 / (eta * n)
        return CertificateInputs(L=L, lam_sc=lam_sc, n=n, m=m_try, eta=eta,
                                 kappa=kappa, beta=beta, c=c,
                                 delta=delta, tau=tau)

    cert_of = certificate_thm1 if regime == "thm1" else certificate_thm3

    def theta_of(cert):
        return cert.theta if regime == "thm1" else cert.theta_a

    if m is None:
        lo, hi = 1, 2
        while True:
            cert = cert_of(build(hi))
            if cert.feasible and theta_of(cert) <= theta_target:
                break
            lo = hi
            hi *= 2
            if hi > 1 << 40:
                raise RuntimeError("no epoch length reaches the target contraction")
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            cert = cert_of(build(mid))
            if cert.feasible and theta_of(cert) <= theta_target:
                hi = mid
            else:
                lo = mid
        m = hi
    inp = build(m)
    cert = cert_of(inp)
    if not cert.feasible:
        raise RuntimeError(f"recipe produced infeasible inputs: {cert.violated}")
    return inp


# --- empirical rate ----------------------------------------------------------

def empirical_rate(trace, floor=1e-15):
    """Least-squares per-epoch contraction factor of the suboptimality column.

    Fits log(suboptimality) against the epoch index, truncating at the first
    value at or below the numerical floor; needs at least 3 usable epochs.
    """
    epochs = []
    vals = []
    source = zip(trace.epochs, trace.subopt)
    if "initial_suboptimality" in trace.metadata:
        s0 = trace.metadata["initial_suboptimality"]
        if s0 > floor:
            epochs.append(-1)
            vals.append(s0)
    for k, s in source:
        if s is None or math.isnan(s):
            continue
        if s <= floor:
            break
        epochs.append(k)
        vals.append(s)
    if len(vals) < 3:
        raise ValueError("need at least 3 epochs of positive suboptimality")
    slope = np.polyfit(np.asarray(epochs, dtype=float), np.log(vals), 1)[0]
    return float(math.exp(slope))
