"""Full-ranking top-K evaluation: Recall@K and NDCG@K with binary relevance."""

from dataclasses import dataclass, field
import time

import numpy as np

from . import kernels
from .errors import DataError, DimensionError


@dataclass
class EvalReport:
    split: str
    metrics: dict                  # e.g. {"recall@20": 0.31, "ndcg@20": 0.18}
    n_users: int
    epoch: int | None = None
    wall_time: float = field(default=0.0, compare=False)

    def __getitem__(self, key):
        return self.metrics[key]

    def as_dict(self):
        return {"split": self.split, "epoch": self.epoch, "n_users": self.n_users,
                **self.metrics, "wall_time": self.wall_time}


def _group(pairs, n_users):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order]
    indptr = np.zeros(n_users + 1, dtype=np.int64)
    np.add.at(indptr, pairs[:, 0] + 1, 1)
    return np.cumsum(indptr), pairs[:, 1]


def rank_items(user_table, item_table, users, train_pairs=None, k=20, chunk=1024):
    """Top-k item indices per user (ties to the lower index), training items masked.

    Rows may end in -1 when fewer than k unmasked items exist.
    """
    n_users = user_table.shape[0]
    masked = None if train_pairs is None else _group(train_pairs, n_users)
    out = np.empty((len(users), min(k, item_table.shape[0])), dtype=np.int64)
    for start in range(0, len(users), chunk):
        batch = users[start:start + chunk]
        scores = np.asarray(user_table[batch], dtype=np.float64) @ np.asarray(item_table, dtype=np.float64).T
        if masked is not None:
            indptr, idx = masked
            for row, u in enumerate(batch):
                scores[row, idx[indptr[u]:indptr[u + 1]]] = -np.inf
        out[start:start + len(batch)] = kernels.topk_rows(scores, k)
    return out


def evaluate_tables(user_table, item_table, split_pairs, train_pairs=None, ks=(10, 20),
                    split="test", mask_train=True, epoch=None):
    """Recall and NDCG means over users with at least one relevant item."""
    t0 = time.perf_counter()
    user_table = np.asarray(user_table)
    item_table = np.asarray(item_table)
    if user_table.shape[1] != item_table.shape[1]:
        raise DimensionError(f"user width {user_table.shape[1]} != item width {item_table.shape[1]}")
    split_pairs = np.asarray(split_pairs, dtype=np.int64).reshape(-1, 2)
    if split_pairs.shape[0] == 0:
        raise DataError(f"split {split!r} is empty")
    ks = sorted(set(int(k) for k in ks))
    indptr, rel_items = _group(split_pairs, user_table.shape[0])
    users = np.flatnonzero(np.diff(indptr) > 0)
    top = rank_items(user_table, item_table, users, train_pairs if mask_train else None, max(ks))

    relevant = np.zeros((len(users), item_table.shape[0] + 1), dtype=bool)  # last col absorbs -1
    n_rel = np.diff(indptr)[users]
    for row, u in enumerate(users):
        relevant[row, rel_items[indptr[u]:indptr[u + 1]]] = True
    hits = np.take_along_axis(relevant, np.where(top < 0, item_table.shape[0], top), axis=1)
    discount = 1.0 / np.log2(np.arange(2, hits.shape[1] + 2))
    metrics = {}
    for k in ks:
        h = hits[:, :k]
        recall = h.sum(axis=1) / n_rel
        # sequential sums, so the result is reproducible term by term
        dcg = np.cumsum(h * discount[:k], axis=1)[:, -1]
        ideal = np.cumsum(discount[:k])[np.minimum(n_rel, k) - 1]
        metrics[f"recall@{k}"] = float(recall.mean())
        metrics[f"ndcg@{k}"] = float((dcg / ideal).mean())
    return EvalReport(split, metrics, len(users), epoch, time.perf_counter() - t0)


def evaluate(model, dataset, split="test", ks=(10, 20), mask_train=True, epoch=None):
    user_table, item_table = model.score_tables()
    pairs = {"train": dataset.train, "val": dataset.val, "test": dataset.test}[split]
    return evaluate_tables(user_table, item_table, pairs, dataset.train, ks, split, mask_train, epoch)
