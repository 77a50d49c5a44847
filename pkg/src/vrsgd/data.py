"""Row-sparse binary-classification datasets.

Rows are stored CSR-style (indptr/indices/values) with labels in {-1, +1}.
Construction also derives the per-column occupancy counts and the sparsity
constant delta = max_j count_j / n, the smallest constant with
E_i[||x||_{e_i}^2] <= delta * ||x||^2 (the average-within-support quadratic
form is diagonal with entries count_j / n, so the max column frequency is
exactly the tightest bound).
"""

import io
import os
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class SparseExample:
    """One row: strictly increasing feature ids, no explicit zeros."""

    indices: np.ndarray
    values: np.ndarray
    label: float

    def norm(self):
        return float(np.sqrt(np.dot(self.values, self.values)))


@dataclass
class SparseDataset:
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    dim: int
    col_counts: np.ndarray = field(default=None)
    delta: float = field(default=None)

    def __post_init__(self):
        self.indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if self.n < 1:
            raise DataError("empty dataset")
        if self.indices.size and int(self.indices.max()) >= self.dim:
            raise DataError("feature id exceeds dim")
        if self.col_counts is None:
            self.col_counts = np.bincount(self.indices, minlength=self.dim).astype(np.int64)
        if self.delta is None:
            self.delta = compute_delta(self)

    @property
    def n(self):
        return len(self.labels)

    @property
    def nnz(self):
        return len(self.indices)

    def example(self, i):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return SparseExample(self.indices[lo:hi], self.values[lo:hi], float(self.labels[i]))

    def __iter__(self):
        return (self.example(i) for i in range(self.n))

    def dead_features(self):
        """Feature ids present in dim but in no example's support."""
        return np.nonzero(self.col_counts == 0)[0]


def compute_delta(ds):
    """Smallest c with (1/n) sum_i ||x||_{e_i}^2 <= c ||x||^2, exactly."""
    if ds.col_counts is None:
        raise DataError("col_counts not populated")
    return float(ds.col_counts.max()) / ds.n


_LABEL_MAPS = {
    frozenset((-1.0, 1.0)): {-1.0: -1.0, 1.0: 1.0},
    frozenset((0.0, 1.0)): {0.0: -1.0, 1.0: 1.0},
    frozenset((1.0, 2.0)): {1.0: -1.0, 2.0: 1.0},
    frozenset((-1.0,)): {-1.0: -1.0},
    frozenset((1.0,)): {1.0: 1.0},
    frozenset((0.0,)): {0.0: -1.0},
    frozenset((2.0,)): {2.0: 1.0},
}


def load_libsvm(source, dim=None):
    """Parse LIBSVM text (1-based ``idx:value`` pairs, '#' comment lines).

    Labels from {-1,+1}, {0,1} or {1,2} are mapped order-based onto {-1,+1};
    any other label set is an error. Explicit zero values and non-increasing
    indices within a line are rejected.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        # a single-line string naming an existing file is a path
        if "\n" not in source and os.path.exists(source):
            with open(source, "r") as fh:
                text = fh.read()
        else:
            text = source
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    else:
        with open(source, "r") as fh:
            text = fh.read()

    indptr = [0]
    indices = []
    values = []
    labels = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise DataError(f"line {lineno}: malformed label {parts[0]!r}")
        prev = -1
        for tok in parts[1:]:
            try:
                idx_s, val_s = tok.split(":", 1)
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise DataError(f"line {lineno}: malformed pair {tok!r}")
            if idx < 1:
                raise DataError(f"line {lineno}: index {idx} is not 1-based")
            if idx - 1 <= prev:
                raise DataError(f"line {lineno}: non-increasing index {idx}")
            if val == 0.0:
                raise DataError(f"line {lineno}: explicit zero for index {idx}")
            prev = idx - 1
            indices.append(prev)
            values.append(val)
        labels.append(label)
        indptr.append(len(indices))

    if not labels:
        raise DataError("empty dataset")
    label_set = frozenset(labels)
    if label_set not in _LABEL_MAPS:
        raise DataError(f"unmappable label set {sorted(label_set)}")
    mapping = _LABEL_MAPS[label_set]
    labels = [mapping[v] for v in labels]

    max_idx = max(indices) + 1 if indices else 0
    if dim is None:
        dim = max_idx
    elif dim < max_idx:
        raise DataError(f"dim override {dim} below max feature id {max_idx}")
    return SparseDataset(
        indptr=np.array(indptr, dtype=np.int64),
        indices=np.array(indices, dtype=np.int64),
        values=np.array(values, dtype=np.float64),
        labels=np.array(labels, dtype=np.float64),
        dim=int(dim),
    )


def save_libsvm(ds, path_or_buf):
    """Serialize back to LIBSVM text; floats at 17 significant digits so a
    parse -> serialize -> parse round-trip is exact."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w") if own else path_or_buf
    try:
        for i in range(ds.n):
            lo, hi = ds.indptr[i], ds.indptr[i + 1]
            pairs = " ".join(
                "%d:%.17g" % (ds.indices[k] + 1, ds.values[k]) for k in range(lo, hi)
            )
            label = "%+d" % int(ds.labels[i])
            fh.write(label + (" " + pairs if pairs else "") + "\n")
    finally:
        if own:
            fh.close()


def normalize_rows(ds):
    """Scale every row to unit Euclidean norm; errors on a zero-norm row."""
    values = ds.values.copy()
    for i in range(ds.n):
        lo, hi = ds.indptr[i], ds.indptr[i + 1]
        nrm = np.sqrt(np.dot(values[lo:hi], values[lo:hi]))
        if nrm == 0.0:
            raise DataError(f"zero-norm row at example {i}")
        values[lo:hi] /= nrm
    return SparseDataset(
        indptr=ds.indptr.copy(),
        indices=ds.indices.copy(),
        values=values,
        labels=ds.labels.copy(),
        dim=ds.dim,
        col_counts=ds.col_counts.copy(),
        delta=ds.delta,
    )


def generate_synthetic(n, d, nnz_per_row, label_model="planted", seed=0,
                       flip=0.0, balanced=False, normalize=True):
    """Reproducible sparse instance with labels from a planted linear model.

    ``balanced=True`` assigns supports so every column is hit exactly
    n*nnz_per_row/d times (requires divisibility), pinning delta.
    The planted labels follow the solver's loss convention, where the fit
    drives y_i * <w, z_i> negative: y_i = -sign(<w*, z_i>), then flipped with
    probability ``flip``.
    """
    if not (1 <= nnz_per_row <= d):
        raise DataError("need 1 <= nnz_per_row <= d")
    if n < 1:
        raise DataError("need n >= 1")
    rng = np.random.default_rng(seed)

    if balanced:
        total = n * nnz_per_row
        if total % d != 0:
            raise DataError("balanced supports need d | n*nnz_per_row")
        pool = np.repeat(np.arange(d), total // d)
        rng.shuffle(pool)
        rows = pool.reshape(n, nnz_per_row)
        # repair duplicate ids within a row by swapping with later rows
        for i in range(n):
            row = rows[i]
            tries = 0
            while len(np.unique(row)) < nnz_per_row:
                dup_pos = _first_dup_pos(row)
                i2 = int(rng.integers(0, n))
                j2 = int(rng.integers(0, nnz_per_row))
                if i2 == i:
                    continue
                cand = rows[i2][j2]
                if cand not in row and row[dup_pos] not in rows[i2]:
                    rows[i2][j2], row[dup_pos] = row[dup_pos], cand
                tries += 1
                if tries > 10000:
                    raise DataError("balanced support repair did not converge")
        supports = [np.sort(rows[i]) for i in range(n)]
    else:
        supports = [np.sort(rng.choice(d, size=nnz_per_row, replace=False)) for _ in range(n)]

    indptr = np.zeros(n + 1, dtype=np.int64)
    indices = np.empty(n * nnz_per_row, dtype=np.int64)
    values = np.empty(n * nnz_per_row, dtype=np.float64)
    for i, sup in enumerate(supports):
        lo = i * nnz_per_row
        indices[lo:lo + nnz_per_row] = sup
        vals = rng.standard_normal(nnz_per_row)
        while np.any(vals == 0.0):
            vals = rng.standard_normal(nnz_per_row)
        if normalize:
            vals = vals / np.sqrt(np.dot(vals, vals))
        values[lo:lo + nnz_per_row] = vals
        indptr[i + 1] = lo + nnz_per_row

    if label_model == "planted":
        w = rng.standard_normal(d) / np.sqrt(d)
        labels = np.empty(n, dtype=np.float64)
        for i in range(n):
            lo, hi = indptr[i], indptr[i + 1]
            margin = float(np.dot(values[lo:hi], w[indices[lo:hi]]))
            labels[i] = -1.0 if margin > 0 else 1.0
        if flip > 0.0:
            mask = rng.random(n) < flip
            labels[mask] = -labels[mask]
    elif label_model == "random":
        labels = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    else:
        raise DataError(f"unknown label_model {label_model!r}")

    return SparseDataset(indptr=indptr, indices=indices, values=values,
                         labels=labels, dim=d)


def _first_dup_pos(row):
    seen = set()
    for pos, v in enumerate(row):
        if v in seen:
            return pos
        seen.add(v)
    return -1
