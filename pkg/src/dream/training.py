"""Triple sampling and the early-stopped training loop."""

from dataclasses import asdict, dataclass, field, fields
import json
import logging
import math
from pathlib import Path
import time

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, NumericError
from .evaluation import evaluate
from .numerics import autodiff as ad
from .numerics.checkpoint import save_checkpoint
from .numerics.optim import Adam
from .objectives import BatchTriples

log = logging.getLogger(__name__)


@dataclass
class TrainerConfig:
    batch_size: int = 2048
    lr: float = 1e-3
    max_epochs: int = 1000
    patience: int = 20
    eval_k: tuple = (10, 20)
    stop_metric: str = "recall@20"
    seed: int = 2024

    def __post_init__(self):
        self.eval_k = tuple(int(k) for k in self.eval_k)
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train options: {sorted(unknown)}")
        return cls(**d)


class TripleSampler:
    """Uniform (user, positive) from the training pairs, uniform rejected negatives."""

    def __init__(self, train, n_users, n_items, max_rounds=100):
        train = np.asarray(train, dtype=np.int64).reshape(-1, 2)
        if train.shape[0] == 0:
            raise DataError("cannot sample from an empty training set")
        order = np.lexsort((train[:, 1], train[:, 0]))
        self.train = train[order]
        self.n_items = n_items
        counts = np.bincount(self.train[:, 0], minlength=n_users)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.indices = self.train[:, 1].copy()
        self.saturated = counts >= n_items
        self.max_rounds = max_rounds

    def sample(self, batch_size, rng):
        idx = rng.integers(0, self.train.shape[0], size=batch_size)
        for _ in range(self.max_rounds):
            bad = self.saturated[self.train[idx, 0]]
            if not bad.any():
                break
            idx[bad] = rng.integers(0, self.train.shape[0], size=int(bad.sum()))
        else:
            raise DataError("every sampled user has interacted with all items; no negatives exist")
        users, pos = self.train[idx, 0], self.train[idx, 1]
        neg = rng.integers(0, self.n_items, size=batch_size)
        pending = np.arange(batch_size)
        for _ in range(self.max_rounds):
            clash = kernels.pair_membership(users[pending], neg[pending], self.indptr, self.indices)
            pending = pending[clash]
            if pending.size == 0:
                break
            neg[pending] = rng.integers(0, self.n_items, size=pending.size)
        else:
            raise DataError("negative sampling did not converge")
        return BatchTriples(users, pos, neg)


def sample_batch(train, n_users, n_items, batch_size, rng):
    return TripleSampler(train, n_users, n_items).sample(batch_size, rng)


@dataclass
class TrainResult:
    best_epoch: int
    best_score: float
    epochs_run: int
    history: list = field(default_factory=list)
    test_report: object = None
    stopped_early: bool = False


class JsonlWriter:
    def __init__(self, path):
        self.fh = open(path, "w") if path else None

    def write(self, record):
        if self.fh:
            self.fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self):
        if self.fh:
            self.fh.close()


def _snapshot(slots):
    return [(s.value.copy(), s.adam_m.copy(), s.adam_v.copy()) for s in slots]


def _restore(slots, snap):
    for s, (v, m, w) in zip(slots, snap):
        s.value[...] = v
        s.adam_m[...] = m
        s.adam_v[...] = w


def train(model, dataset, config=None, out_dir=None, on_epoch=None, final_eval=True):
    """Train with Adam; early-stop on the validation metric.

    Each epoch runs ``ceil(|train| / batch_size)`` sampled batches, then
    evaluates on the validation split. The best parameters are kept (and
    written to ``out_dir/best.ckpt`` when ``out_dir`` is given); training
    stops after ``patience`` epochs without strict improvement. On return the
    model holds the best parameters and, with ``final_eval``, the result
    carries the test report.

    ``on_epoch(epoch, model)`` is called after each validation pass.
    """
    config = config or TrainerConfig()
    rng = np.random.default_rng(config.seed)
    sampler = TripleSampler(dataset.train, dataset.n_users, dataset.n_items)
    opt = Adam(lr=config.lr)
    n_batches = max(1, math.ceil(dataset.train.shape[0] / config.batch_size))
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    steps_log = JsonlWriter(out / "steps.jsonl" if out else None)
    epoch_log = JsonlWriter(out / "train_log.jsonl" if out else None)
    best, best_epoch, bad = -math.inf, 0, 0
    best_snap = _snapshot(model.slots)
    history = []
    step = 0
    epoch = 0
    try:
        for epoch in range(1, config.max_epochs + 1):
            sums = {}
            for _ in range(n_batches):
                batch = sampler.sample(config.batch_size, rng)
                leaves = model.leaves()
                try:
                    br = model.loss(batch, leaves)
                except NumericError:
                    _restore(model.slots, best_snap)
                    raise
                if not math.isfinite(br.total):
                    _restore(model.slots, best_snap)
                    raise NumericError(f"non-finite total loss at epoch {epoch}", term="total")
                ad.backward(br.node)
                model.accumulate(leaves)
                opt.step(model.slots)
                step += 1
                terms = br.as_dict()
                steps_log.write({"step": step, "epoch": epoch, **terms})
                for k, v in terms.items():
                    sums[k] = sums.get(k, 0.0) + v
            report = evaluate(model, dataset, "val", config.eval_k, epoch=epoch)
            score = report.metrics[config.stop_metric]
            improved = score > best
            if improved:
                best, best_epoch, bad = score, epoch, 0
                best_snap = _snapshot(model.slots)
                if out:
                    save_checkpoint(out / "best.ckpt", model.slots, step=opt.t, epoch=epoch)
            else:
                bad += 1
            record = {"epoch": epoch, **{k: v / n_batches for k, v in sums.items()},
                      f"val_{config.stop_metric}": score, "best": best, "best_epoch": best_epoch}
            history.append(record)
            epoch_log.write(record)
            if on_epoch is not None:
                on_epoch(epoch, model)
            log.info("epoch %d loss %.4f val %s %.4f%s", epoch, record.get("total", 0.0),
                     config.stop_metric, score, " *" if improved else "")
            if bad >= config.patience:
                break
    finally:
        steps_log.close()
        epoch_log.close()
    _restore(model.slots, best_snap)
    result = TrainResult(best_epoch, best, epoch, history, stopped_early=epoch < config.max_epochs)
    if final_eval and dataset.test.shape[0]:
        result.test_report = evaluate(model, dataset, "test", config.eval_k, epoch=best_epoch)
        if out:
            doc = result.test_report.as_dict()
            doc.pop("wall_time")
            (out / "test_report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return result
