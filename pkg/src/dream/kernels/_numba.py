"""numba-compiled versions of the hot kernels. Semantics match ``_numpy``."""

import numpy as np
from numba import njit


@njit(cache=True)
def _spmm(row, col, val, dense, out):
    n_cols = dense.shape[1]
    for e in range(row.shape[0]):
        r = row[e]
        c = col[e]
        w = val[e]
        for j in range(n_cols):
            out[r, j] += w * dense[c, j]
    return out


def spmm_coo(row, col, val, dense, n_rows):
    out = np.zeros((n_rows, dense.shape[1]), dtype=np.result_type(val, dense))
    if row.shape[0] == 0:
        return out
    return _spmm(row, col, val, np.ascontiguousarray(dense), out)


@njit(cache=True)
def _topk(scores, k, out):
    n_rows, n_cols = scores.shape
    best = np.empty(k, dtype=scores.dtype)
    for r in range(n_rows):
        filled = 0
        for c in range(n_cols):
            s = scores[r, c]
            if s == -np.inf:
                continue
            if filled == k and not s > best[k - 1]:
                continue
            # insertion keeps earlier (lower) indices ahead on ties
            pos = filled if filled < k else k - 1
            while pos > 0 and s > best[pos - 1]:
                if pos < k:
                    best[pos] = best[pos - 1]
                    out[r, pos] = out[r, pos - 1]
                pos -= 1
            best[pos] = s
            out[r, pos] = c
            if filled < k:
                filled += 1
    return out


def topk_rows(scores, k):
    n_rows, n_cols = scores.shape
    k = min(k, n_cols)
    out = np.full((n_rows, k), -1, dtype=np.int64)
    if k == 0 or n_rows == 0:
        return out
    return _topk(np.ascontiguousarray(scores), k, out)


@njit(cache=True)
def _membership(users, items, indptr, indices, out):
    for q in range(users.shape[0]):
        lo = indptr[users[q]]
        hi = indptr[users[q] + 1]
        target = items[q]
        while lo < hi:
            mid = (lo + hi) // 2
            if indices[mid] < target:
                lo = mid + 1
            else:
                hi = mid
        out[q] = lo < indptr[users[q] + 1] and indices[lo] == target
    return out


def pair_membership(users, items, indptr, indices):
    out = np.zeros(users.shape[0], dtype=np.bool_)
    if users.shape[0] == 0:
        return out
    return _membership(users.astype(np.int64), items.astype(np.int64),
                       indptr.astype(np.int64), indices.astype(np.int64), out)
