"""Sparse graph construction: normalized user-item adjacency and kNN relation graphs."""

from dataclasses import dataclass, field
import logging

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, DimensionError

log = logging.getLogger(__name__)


@dataclass(eq=False)
class SparseMatrix:
    """COO matrix with entries kept in sorted (row, col) order."""

    n_rows: int
    n_cols: int
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray
    _t: "SparseMatrix | None" = field(default=None, repr=False)

    def __post_init__(self):
        self.row = np.asarray(self.row, dtype=np.int64)
        self.col = np.asarray(self.col, dtype=np.int64)
        self.val = np.asarray(self.val, dtype=np.float32)
        if not (self.row.shape == self.col.shape == self.val.shape):
            raise DimensionError("row/col/val arrays differ in length")
        if self.nnz:
            if self.row.min() < 0 or self.row.max() >= self.n_rows:
                raise DimensionError("row index out of range")
            if self.col.min() < 0 or self.col.max() >= self.n_cols:
                raise DimensionError("col index out of range")
            key = self.row * self.n_cols + self.col
            if np.any(np.diff(key) <= 0):
                order = np.argsort(key, kind="stable")
                key = key[order]
                if np.any(np.diff(key) == 0):
                    raise DataError("duplicate (row, col) entries")
                self.row, self.col, self.val = self.row[order], self.col[order], self.val[order]

    @classmethod
    def from_dense(cls, dense):
        r, c = np.nonzero(dense)
        return cls(dense.shape[0], dense.shape[1], r, c, dense[r, c])

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls(n, n, idx, idx, np.ones(n, dtype=np.float32))

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.row.shape[0])

    def to_dense(self):
        out = np.zeros(self.shape, dtype=np.float64)
        out[self.row, self.col] = self.val
        return out

    def transpose(self):
        if self._t is None:
            self._t = SparseMatrix(self.n_cols, self.n_rows, self.col, self.row, self.val)
            self._t._t = self
        return self._t

    def matmul(self, dense):
        return spmm(self, dense)

    def allclose(self, other, atol=0.0):
        return (self.shape == other.shape and np.array_equal(self.row, other.row)
                and np.array_equal(self.col, other.col)
                and np.allclose(self.val, other.val, rtol=0.0, atol=atol))


def spmm(graph, dense):
    """Exact sparse @ dense, accumulating in sorted coordinate order."""
    dense = np.asarray(dense)
    if dense.ndim != 2 or dense.shape[0] != graph.n_cols:
        raise DimensionError(
            f"spmm: graph is {graph.shape} but dense operand is {dense.shape}")
    return kernels.spmm_coo(graph.row, graph.col, graph.val, dense, graph.n_rows)


def _inv_sqrt(deg):
    out = np.zeros(deg.shape, dtype=np.float64)
    nz = deg > 0
    out[nz] = 1.0 / np.sqrt(deg[nz])
    return out


def build_normalized_adjacency(train, n_users, n_items):
    """``D^-1/2 A D^-1/2`` for the bipartite graph, users stacked above items."""
    train = np.asarray(train, dtype=np.int64).reshape(-1, 2)
    u, i = train[:, 0], train[:, 1]
    if train.shape[0] and (u.max() >= n_users or i.max() >= n_items or train.min() < 0):
        raise DimensionError("interaction index out of range")
    deg_u = np.bincount(u, minlength=n_users).astype(np.float64)
    deg_i = np.bincount(i, minlength=n_items).astype(np.float64)
    w = _inv_sqrt(deg_u)[u] * _inv_sqrt(deg_i)[i]
    rows = np.concatenate([u, n_users + i])
    cols = np.concatenate([n_users + i, u])
    n = n_users + n_items
    return SparseMatrix(n, n, rows, cols, np.concatenate([w, w]))


def cosine_similarity(features):
    x = np.asarray(features, dtype=np.float64)
    norm = np.linalg.norm(x, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    unit = x / safe[:, None]
    return unit @ unit.T, norm > 0


@dataclass(eq=False)
class RelationGraph:
    """Frozen, normalized top-k cosine graph over the rows of one feature matrix."""

    modality: str
    scope: str  # "item" or "user"
    k: int
    matrix: SparseMatrix
    self_loop: bool = False


def knn_neighbors(features, k):
    """Top-k most cosine-similar rows per row, self and zero rows excluded.

    Returns an ``(n, k)`` index array padded with -1 where fewer than k
    candidates exist (only when the row itself or too many others are zero).
    """
    sim, nonzero = cosine_similarity(features)
    # equal-in-exact-arithmetic cosines can differ in the last bits; round so
    # such ties fall to the lower index
    sim = np.round(sim, 12)
    np.fill_diagonal(sim, -np.inf)
    sim[:, ~nonzero] = -np.inf
    nbrs = kernels.topk_rows(sim, k)
    nbrs[~nonzero] = -1
    return nbrs


def build_relation_graph(features, k, modality="vision", scope="item", self_loop=False):
    """Binarized kNN graph, symmetric-normalized with its row degrees.

    Entry (i, j) is ``1/sqrt(deg(i) deg(j))`` for every kept edge, where deg
    counts the kept neighbors of a row (plus the diagonal when ``self_loop``).
    """
    features = np.asarray(features)
    n = features.shape[0]
    if k <= 0:
        raise ConfigError(f"relation graph k must be positive, got {k}")
    if n < 2:
        raise DataError(f"cannot build a relation graph over {n} row(s)")
    if k >= n:
        raise ConfigError(f"relation graph k={k} must be smaller than the row count {n}")
    zero_rows = ~np.any(features != 0, axis=1)
    if zero_rows.any():
        log.warning("%d all-zero %s %s feature rows get no neighbors",
                    int(zero_rows.sum()), modality, scope)
    nbrs = knn_neighbors(features, k)
    rows = np.repeat(np.arange(n), nbrs.shape[1])
    cols = nbrs.ravel()
    keep = cols >= 0
    rows, cols = rows[keep], cols[keep]
    if self_loop:
        idx = np.flatnonzero(~zero_rows)
        rows = np.concatenate([rows, idx])
        cols = np.concatenate([cols, idx])
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    d = _inv_sqrt(deg)
    mat = SparseMatrix(n, n, rows, cols, d[rows] * d[cols])
    return RelationGraph(modality=modality, scope=scope, k=k, matrix=mat, self_loop=self_loop)
