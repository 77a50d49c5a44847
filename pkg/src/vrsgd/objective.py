"""L2-regularized logistic regression in support-split finite-sum form.

The component loss keeps the printed-exponent convention
``log(1 + exp(y_i <z_i, x>))`` and splits the regularizer over supports with
column-frequency weights:

    f_i(x) = log(1 + exp(y_i <z_i, x>)) + lam * sum_{j in e_i} x_j^2 / freq_j,

freq_j = count_j / n. Averaging over i recovers the plain objective
``(1/n) sum_i log(...) + lam * ||x||^2`` on the occupied coordinates exactly,
while each component only reads and writes its own support. Coordinates no
example touches contribute nothing (their split weight is defined as 0).

Everything here is the plain NumPy reference route; the kernel backends
implement the same quantities independently and are tested against this.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import SparseDataset


@dataclass(frozen=True)
class ComponentGradient:
    """Support-sparse gradient: nonzero only on the owning example's support."""

    support: np.ndarray
    values: np.ndarray

    def to_dense(self, dim):
        out = np.zeros(dim)
        out[self.support] = self.values
        return out


@dataclass
class Problem:
    """Dataset plus curvature constants.

    ``lam`` is the regularization weight; the strong-convexity modulus is
    ``lam_sc = 2*lam`` (the Hessian of lam*||x||^2 is 2*lam*I). ``smoothness``
    bounds every component gradient's Lipschitz constant; the default is
    0.25 * max_i ||z_i||^2 + max_j (2*lam/freq_j), the 0.25 coming from the
    logistic curvature bound for unit-norm rows.
    """

    data: SparseDataset
    lam: float
    smoothness: float = None
    strong_convexity: float = None
    reg_coeff: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        counts = self.data.col_counts
        n = self.data.n
        regc = np.zeros(self.data.dim)
        occupied = counts > 0
        regc[occupied] = 2.0 * self.lam * n / counts[occupied]
        self.reg_coeff = regc
        if self.strong_convexity is None:
            self.strong_convexity = 2.0 * self.lam
        if self.smoothness is None:
            max_row = 0.0
            for i in range(n):
                lo, hi = self.data.indptr[i], self.data.indptr[i + 1]
                v = self.data.values[lo:hi]
                max_row = max(max_row, float(np.dot(v, v)))
            self.smoothness = 0.25 * max_row + (float(regc.max()) if regc.size else 0.0)
        if not self.smoothness >= self.strong_convexity > 0:
            raise ValueError("need smoothness >= strong_convexity > 0")

    @property
    def n(self):
        return self.data.n

    @property
    def dim(self):
        return self.data.dim

    def condition(self):
        return self.smoothness / self.strong_convexity


def _softplus(u):
    return np.where(u > 0, u + np.log1p(np.exp(-np.abs(u))), np.log1p(np.exp(u)))


def _sigmoid(u):
    out = np.empty_like(u, dtype=float) if isinstance(u, np.ndarray) else None
    if out is None:
        if u >= 0:
            return 1.0 / (1.0 + np.exp(-u))
        e = np.exp(u)
        return e / (1.0 + e)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def margin(p, i, x):
    lo, hi = p.data.indptr[i], p.data.indptr[i + 1]
    sup = p.data.indices[lo:hi]
    return float(p.data.labels[i] * np.dot(p.data.values[lo:hi], x[sup]))


def component_loss(p, i, x):
    lo, hi = p.data.indptr[i], p.data.indptr[i + 1]
    sup = p.data.indices[lo:hi]
    u = p.data.labels[i] * np.dot(p.data.values[lo:hi], x[sup])
    reg = 0.5 * np.dot(p.reg_coeff[sup], x[sup] ** 2)
    return float(_softplus(u) + reg)


def component_gradient(p, i, x):
    lo, hi = p.data.indptr[i], p.data.indptr[i + 1]
    sup = p.data.indices[lo:hi]
    vals = p.data.values[lo:hi]
    y = p.data.labels[i]
    u = y * np.dot(vals, x[sup])
    a = _sigmoid(u) * y
    return ComponentGradient(sup, a * vals + p.reg_coeff[sup] * x[sup])


def full_objective(p, x):
    total = 0.0
    for i in range(p.n):
        total += component_loss(p, i, x)
    return total / p.n


def full_gradient(p, x):
    out = np.zeros(p.dim)
    for i in range(p.n):
        g = component_gradient(p, i, x)
        out[g.support] += g.values
    return out / p.n


def bregman(p, x, y, subset=None):
    """D(x, y) = f_S(x) - f_S(y) - <grad f_S(y), x - y> with
    f_S = (1/n) * sum_{i in S} f_i; ``subset=None`` means all components."""
    if subset is None:
        subset = range(p.n)
    total = 0.0
    grad_term = 0.0
    diff = x - y
    for i in subset:
        total += component_loss(p, i, x) - component_loss(p, i, y)
        g = component_gradient(p, i, y)
        grad_term += np.dot(g.values, diff[g.support])
    return (total - grad_term) / p.n


def component_bregman(p, i, x, y):
    g = component_gradient(p, i, y)
    return component_loss(p, i, x) - component_loss(p, i, y) - float(
        np.dot(g.values, (x - y)[g.support])
    )


def lyapunov_G(p, subset, alphas, x_star):
    """(1/n) * sum_{i in S} D_{f_i}(alpha_i, x_star), always >= 0.

    ``alphas`` maps component index -> anchor point (callable, dict, or a
    2-D array); schedule states pass a callable that reconstructs anchors.
    """
    if callable(alphas):
        get = alphas
    elif isinstance(alphas, dict):
        get = alphas.__getitem__
    else:
        arr = np.asarray(alphas)
        get = lambda i: arr[i]  # noqa: E731
    total = 0.0
    for i in subset:
        total += component_bregman(p, i, np.asarray(get(i), dtype=float), x_star)
    return total / p.n


def problem_for_condition(ds, target_condition):
    """Pick lam so smoothness / strong_convexity hits the target.

    With unit rows, L = 0.25 + 2*lam*n/min_count and lam_sc = 2*lam, so
    lam = 0.125 / (target - n/min_count); errors if the dataset is too sparse
    for the target.
    """
    counts = ds.col_counts[ds.col_counts > 0]
    min_count = int(counts.min())
    denom = target_condition - ds.n / min_count
    if denom <= 0:
        raise ValueError("dataset too sparse for the requested conditioning")
    lam = 0.125 / denom
    return Problem(ds, lam=lam)
