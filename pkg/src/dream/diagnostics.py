"""Training-time analysis signals: modal drift, behavior/modal agreement, per-line evaluation.

Drift is a proxy: learned modal representations live in a different space
than the raw features, so they are compared through their pairwise cosine
similarity matrices over a fixed item sample.
"""

import csv
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError
from .evaluation import evaluate_tables


def _cosine_matrix(x):
    x = np.asarray(x, dtype=np.float64)
    norm = np.linalg.norm(x, axis=1, keepdims=True)
    unit = x / np.where(norm > 0, norm, 1.0)
    return unit @ unit.T


def modal_drift(modal_reprs, raw_fused, sample):
    """Mean absolute off-diagonal difference of the two cosine-similarity matrices."""
    sample = np.asarray(sample, dtype=np.int64)
    s = sample.shape[0]
    if s < 2:
        raise DataError(f"drift needs a sample of at least 2 rows, got {s}")
    a = _cosine_matrix(np.asarray(modal_reprs)[sample])
    b = _cosine_matrix(np.asarray(raw_fused)[sample])
    off = ~np.eye(s, dtype=bool)
    return float(np.abs(a - b)[off].mean())


def dual_cosine(behavior, modal):
    """Mean row-wise cosine; rows where either side is zero count as 0."""
    behavior = np.asarray(behavior, dtype=np.float64)
    modal = np.asarray(modal, dtype=np.float64)
    if behavior.shape != modal.shape:
        raise DimensionError(f"shape mismatch: {behavior.shape} vs {modal.shape}")
    nb = np.linalg.norm(behavior, axis=1)
    nm = np.linalg.norm(modal, axis=1)
    denom = nb * nm
    dots = np.einsum("ij,ij->i", behavior, modal)
    cos = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
    return float(cos.mean())


def evaluate_line(model, dataset, line="general", split="test", ks=(10, 20), epoch=None):
    reps = model.representations()
    user, item = reps.line(line)
    pairs = {"train": dataset.train, "val": dataset.val, "test": dataset.test}[split]
    return evaluate_tables(user, item, pairs, dataset.train, ks, split, True, epoch)


def drift_sample(n_items, size=512, seed=0):
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_items, size=min(size, n_items), replace=False))


class DiagnosticsRecorder:
    """Epoch callback collecting drift, alignment and per-line metrics."""

    def __init__(self, dataset, sample_size=512, seed=0, line_eval=True, ks=(20,), split="val"):
        self.dataset = dataset
        self.sample = drift_sample(dataset.n_items, sample_size, seed)
        self.line_eval = line_eval
        self.ks = ks
        self.split = split
        self.drift, self.alignment, self.lines = [], [], []

    def __call__(self, epoch, model):
        self.record(epoch, model)

    def record(self, epoch, model):
        reps = model.representations()
        if model.raw_fused_item is not None:
            self.drift.append({"epoch": epoch, "value": modal_drift(reps.modal_item,
                                                                    model.raw_fused_item, self.sample)})
        cu = dual_cosine(reps.behavior_user, reps.modal_user)
        ci = dual_cosine(reps.behavior_item, reps.modal_item)
        pooled = dual_cosine(np.vstack([reps.behavior_user, reps.behavior_item]),
                             np.vstack([reps.modal_user, reps.modal_item]))
        self.alignment.append({"epoch": epoch, "value": pooled, "users": cu, "items": ci})
        if self.line_eval:
            pairs = getattr(self.dataset, self.split)
            for line in ("behavior", "modal", "general"):
                u, i = reps.line(line)
                rep = evaluate_tables(u, i, pairs, self.dataset.train, self.ks, self.split)
                for k in self.ks:
                    for metric in ("recall", "ndcg"):
                        self.lines.append({"epoch": epoch, "value": rep[f"{metric}@{k}"],
                                           "line": line, "K": k, "metric": metric})

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "drift.csv", ["epoch", "value"], self.drift)
        _write_csv(out / "alignment.csv", ["epoch", "value", "users", "items"], self.alignment)
        _write_csv(out / "line_eval.csv", ["epoch", "value", "line", "K", "metric"], self.lines)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.8g}" if isinstance(v, float) else v) for k, v in r.items()})
