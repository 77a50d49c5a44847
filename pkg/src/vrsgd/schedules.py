"""Anchor-table state machines for variance-reduced SGD.

A schedule maintains one anchor per component; the solver's step direction is

    grad_i(x) - grad_i(anchor_i) + mean_j grad_j(anchor_j).

Physical representations:

* snapshot: a shared anchor point plus the cached average gradient; memory
  O(d). Used by the epoch-refresh schedule (svrg) and full-refresh gd.
* gradient table: per-component stored gradients on their supports plus a
  margin scalar, with the running average updated incrementally; memory is
  one dataset copy. Used by saga and sag.
* hybrid: table rows on a chosen index set S, snapshot anchors elsewhere,
  each off-S row refreshing whenever its frequency divides the step counter.

Table entries store the support gradient values and the example's margin;
that pair determines the anchor point on the support (the loss factor is a
function of the margin and the split-regularizer weight is invertible), so
anchor points can be reconstructed without storing per-example vectors.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import objective as obj

KINDS = ("svrg", "saga", "sag", "gd", "hsag")
KIND_CODE = {k: c for c, k in enumerate(KINDS)}


@dataclass
class ScheduleSpec:
    kind: str
    m: int
    hsag_S: np.ndarray = None          # component ids following the table rule
    hsag_freq: object = None           # scalar or per-off-S-row frequencies

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.m < 1:
            raise ValueError("epoch length m must be positive")
        if self.kind == "hsag":
            if self.hsag_S is None:
                raise ValueError("hsag needs an index set S")
            self.hsag_S = np.asarray(sorted(set(int(i) for i in np.atleast_1d(self.hsag_S))),
                                     dtype=np.int64)
        elif self.hsag_S is not None or self.hsag_freq is not None:
            raise ValueError("S / frequencies only apply to hsag")

    @property
    def code(self):
        return KIND_CODE[self.kind]


def resolve_frequencies(spec, n):
    """Per-row snapshot refresh frequency; 0 marks table rows (never)."""
    freq = np.zeros(n, dtype=np.int64)
    if spec.kind in ("svrg",):
        freq[:] = spec.m
    elif spec.kind == "gd":
        freq[:] = 1
    elif spec.kind == "hsag":
        in_s = np.zeros(n, dtype=bool)
        in_s[spec.hsag_S] = True
        off = ~in_s
        if spec.hsag_freq is None:
            freq[off] = spec.m
        elif np.isscalar(spec.hsag_freq):
            if int(spec.hsag_freq) < 1:
                raise ValueError("refresh frequency must be positive")
            freq[off] = int(spec.hsag_freq)
        else:
            given = np.asarray(spec.hsag_freq, dtype=np.int64)
            if given.shape[0] != int(off.sum()):
                raise ValueError("need one frequency per off-S row")
            if np.any(given < 1):
                raise ValueError("refresh frequency must be positive")
            freq[off] = given
    return freq


@dataclass
class ScheduleState:
    spec: ScheduleSpec
    in_table: np.ndarray               # uint8[n]
    toff: np.ndarray                   # int64[n+1] slot offsets (0-width off-table)
    tvals: np.ndarray                  # float64[total slots]
    tmarg: np.ndarray                  # float64[n or 0] stored margins
    anchors: np.ndarray                # float64[A, d] live anchor points
    row_anchor: np.ndarray             # int64[n] anchor row per snapshot row
    gbar: np.ndarray                   # float64[d] average stored gradient
    refresh_freq: np.ndarray           # int64[n]
    epoch_origin: int = 0

    @property
    def n(self):
        return len(self.in_table)

    def table_rows(self):
        return np.nonzero(self.in_table)[0]

    def snapshot_rows(self):
        return np.nonzero(self.in_table == 0)[0]

    def table_slot_count(self):
        return len(self.tvals)

    # --- reconstruction -----------------------------------------------------

    def stored_gradient_support(self, p, i):
        """grad_i(alpha_i) values aligned with example i's support."""
        lo, hi = p.data.indptr[i], p.data.indptr[i + 1]
        if self.in_table[i]:
            base = self.toff[i]
            return self.tvals[base:base + (hi - lo)].copy()
        return obj.component_gradient(p, i, self.anchors[self.row_anchor[i]]).values

    def stored_gradient(self, p, i):
        """The anchor-side gradient grad_i(alpha_i) as a dense vector."""
        lo, hi = p.data.indptr[i], p.data.indptr[i + 1]
        sup = p.data.indices[lo:hi]
        out = np.zeros(p.dim)
        out[sup] = self.stored_gradient_support(p, i)
        return out

    def alpha_point(self, p, i):
        """Anchor point alpha_i restricted to the support (dense elsewhere-0
        except snapshot rows, which return the full anchor point)."""
        if not self.in_table[i]:
            return self.anchors[self.row_anchor[i]].copy()
        lo, hi = p.data.indptr[i], p.data.indptr[i + 1]
        sup = p.data.indices[lo:hi]
        vals = p.data.values[lo:hi]
        y = p.data.labels[i]
        u = self.tmarg[i]
        a = obj._sigmoid(u) * y
        base = self.toff[i]
        g = self.tvals[base:base + (hi - lo)]
        alpha = np.zeros(p.dim)
        alpha[sup] = (g - a * vals) / p.reg_coeff[sup]
        return alpha

    def alpha_margin(self, p, i):
        if self.in_table[i]:
            return float(self.tmarg[i])
        return obj.margin(p, i, self.anchors[self.row_anchor[i]])

    # --- maintenance --------------------------------------------------------

    def recompute_gbar(self, p):
        ker = kernels.get_backend()
        return ker.recompute_gbar(
            p.data.indptr, p.data.indices, p.data.values, p.data.labels,
            p.reg_coeff, self.in_table, self.toff, self.tvals,
            self.anchors, self.row_anchor, self.gbar)

    def gbar_drift(self, p):
        """Max |gbar - exact recomputation|; guards incremental drift."""
        fresh = np.zeros_like(self.gbar)
        ker = kernels.get_backend()
        ker.recompute_gbar(
            p.data.indptr, p.data.indices, p.data.values, p.data.labels,
            p.reg_coeff, self.in_table, self.toff, self.tvals,
            self.anchors, self.row_anchor, fresh)
        return float(np.abs(fresh - self.gbar).max())

    def refresh_snapshot_rows(self, p, rows, x):
        """Move the given snapshot rows' anchors to ``x`` (one shared slot)
        and recompute the stored average from scratch."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            return 0
        snap = self.in_table == 0
        refreshed = np.zeros(self.n, dtype=bool)
        refreshed[rows] = True
        keep_mask = snap & ~refreshed
        live = np.unique(self.row_anchor[keep_mask]) if keep_mask.any() else np.array([], dtype=np.int64)
        remap = {int(old): new for new, old in enumerate(live)}
        new_anchors = np.empty((len(live) + 1, self.anchors.shape[1]))
        for old, new in remap.items():
            new_anchors[new] = self.anchors[old]
        new_anchors[len(live)] = x
        ra = self.row_anchor.copy()
        for i in np.nonzero(keep_mask)[0]:
            ra[i] = remap[int(self.row_anchor[i])]
        ra[rows] = len(live)
        self.anchors = np.ascontiguousarray(new_anchors)
        self.row_anchor = ra
        return self.recompute_gbar(p)


def make_state(p, spec, x0):
    """Initialize every anchor at x0 (table rows store grad_i(x0))."""
    n = p.n
    d = p.dim
    in_table = np.zeros(n, dtype=np.uint8)
    if spec.kind in ("saga", "sag"):
        in_table[:] = 1
    elif spec.kind == "hsag":
        in_table[spec.hsag_S] = 1

    widths = np.zeros(n, dtype=np.int64)
    nnz_per_row = np.diff(p.data.indptr)
    widths[in_table == 1] = nnz_per_row[in_table == 1]
    toff = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(widths, out=toff[1:])
    tvals = np.zeros(int(toff[-1]), dtype=np.float64)
    tmarg = np.zeros(n if toff[-1] > 0 else 0, dtype=np.float64)

    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if np.any(in_table == 0):
        anchors = x0.reshape(1, d).copy()
    else:
        anchors = np.zeros((1, d))
    row_anchor = np.zeros(n, dtype=np.int64)
    gbar = np.zeros(d)

    state = ScheduleState(
        spec=spec, in_table=in_table, toff=toff, tvals=tvals, tmarg=tmarg,
        anchors=anchors, row_anchor=row_anchor, gbar=gbar,
        refresh_freq=resolve_frequencies(spec, n))

    ker = kernels.get_backend()
    if toff[-1] > 0:
        ker.init_table(p.data.indptr, p.data.indices, p.data.values,
                       p.data.labels, p.reg_coeff, x0,
                       in_table, toff, tvals, tmarg)
    state.recompute_gbar(p)
    return state


def refresh_events(state, t0, steps):
    """(t, rows) snapshot-refresh events with t0 <= t < t0+steps, evaluated
    against the global step counter."""
    freq = state.refresh_freq
    events = {}
    for s in np.unique(freq[freq > 0]):
        s = int(s)
        t = ((t0 + s - 1) // s) * s
        while t < t0 + steps:
            events.setdefault(t, []).append(s)
            t += s
    out = []
    for t in sorted(events):
        svals = events[t]
        rows = np.nonzero(np.isin(freq, svals))[0]
        out.append((t, rows))
    return out


def vr_direction(state, p, i, grad_at_x=None, x=None):
    """Three-term direction grad_i(x) - grad_i(alpha_i) + gbar, dense.

    The support difference is formed first (as in the step kernels), so with
    alpha_i at the current iterate the direction telescopes to gbar exactly.
    """
    if grad_at_x is None:
        grad_at_x = obj.component_gradient(p, i, x)
    out = state.gbar.copy()
    out[grad_at_x.support] += grad_at_x.values - state.stored_gradient_support(p, i)
    return out


def schedule_update(spec, state, p, t, i_t, x_t, x_next, i_next=None):
    """One literal transition of the anchor set: new anchors become x_t
    (epoch-triggered or sampled-index rules) or x_next (lookahead and full
    refresh), matching the per-kind update indicators. Mutates ``state`` and
    returns it."""
    ker = kernels.get_backend()
    inv_n = 1.0 / p.n

    def _store(i, point):
        ker.store_entry(p.data.indptr, p.data.indices, p.data.values,
                        p.data.labels, p.reg_coeff,
                        np.ascontiguousarray(point, dtype=np.float64), i,
                        state.toff, state.tvals, state.tmarg,
                        state.gbar, inv_n)

    if spec.kind == "svrg":
        if t % spec.m == 0:
            state.refresh_snapshot_rows(p, np.arange(state.n), x_t)
    elif spec.kind == "saga":
        _store(i_t, x_t)
    elif spec.kind == "sag":
        if i_next is None:
            raise ValueError("sag schedule needs the next sampled index")
        _store(i_next, x_next)
    elif spec.kind == "gd":
        state.refresh_snapshot_rows(p, np.arange(state.n), x_next)
    elif spec.kind == "hsag":
        if state.in_table[i_t]:
            _store(i_t, x_t)
        freq = state.refresh_freq
        due = np.nonzero((freq > 0) & (t % np.maximum(freq, 1) == 0))[0]
        if due.size:
            state.refresh_snapshot_rows(p, due, x_t)
    return state


def is_biased(spec):
    """Only the lookahead schedule's estimator is biased."""
    return spec.kind == "sag"
