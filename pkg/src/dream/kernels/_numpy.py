"""Pure-numpy reference versions of the hot kernels."""

import numpy as np


def spmm_coo(row, col, val, dense, n_rows):
    out = np.zeros((n_rows, dense.shape[1]), dtype=np.result_type(val, dense))
    if row.shape[0] == 0:
        return out
    contrib = val[:, None] * dense[col]
    # entries are sorted by row, so each row is one contiguous segment
    starts = np.flatnonzero(np.r_[True, row[1:] != row[:-1]])
    out[row[starts]] = np.add.reduceat(contrib, starts, axis=0)
    return out


def topk_rows(scores, k):
    """Row-wise top-k column indices, ties to the lower index.

    Entries equal to -inf are never selected; missing slots are -1.
    """
    n_rows, n_cols = scores.shape
    k = min(k, n_cols)
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    picked = np.take_along_axis(scores, order, axis=1)
    order = order.astype(np.int64)
    order[np.isneginf(picked)] = -1
    return order


def pair_membership(users, items, indptr, indices):
    """For each (user, item) query, whether item is in the user's sorted CSR row."""
    out = np.zeros(users.shape[0], dtype=np.bool_)
    if indices.shape[0] == 0:
        return out
    lo = indptr[users]
    hi = indptr[users + 1]
    # offset each user's row so one global searchsorted suffices
    n_items = int(max(indices.max(), items.max())) + 1
    row_of = np.repeat(np.arange(indptr.shape[0] - 1), np.diff(indptr))
    keys = row_of * n_items + indices
    q = users.astype(np.int64) * n_items + items
    pos = np.searchsorted(keys, q)
    hit = pos < keys.shape[0]
    out[hit] = keys[pos[hit]] == q[hit]
    out &= hi > lo
    return out
