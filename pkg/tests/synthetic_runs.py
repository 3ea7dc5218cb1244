"""Shared training runs on the block-preference workload (used by the acceptance suite)."""

import functools

from dream.baselines import LightGCNHost, VBPRHost
from dream.diagnostics import DiagnosticsRecorder, evaluate_line
from dream.model import DreamModel, ModelConfig, build_graphs
from dream.objectives import LossWeights
from dream.synthetic import block_dataset
from dream.training import TrainerConfig, train

SEEDS = (0, 1, 2, 3, 4)
HOST_BMA = dict(alpha=0.01, beta=0.01, gamma=0.0)


def trainer(seed):
    return TrainerConfig(batch_size=128, lr=0.002, max_epochs=100, patience=20, seed=seed)


@functools.lru_cache(maxsize=None)
def workload(seed):
    ds = block_dataset(seed=seed)
    return ds, build_graphs(ds, k=10)


def _dream(seed, config=None, weights=None):
    ds, graphs = workload(seed)
    model = DreamModel(ds, graphs, config or ModelConfig(), weights or LossWeights(), seed=seed)
    rec = DiagnosticsRecorder(ds, sample_size=150, seed=seed, line_eval=False)
    result = train(model, ds, trainer(seed), on_epoch=rec)
    return {"recall": result.test_report["recall@20"], "epochs": result.epochs_run,
            "drift": rec.drift[-1]["value"] if rec.drift else None,
            "alignment": rec.alignment[-1]["value"],
            "lines": {line: evaluate_line(model, ds, line, "test", (20,))["recall@20"]
                      for line in ("behavior", "modal", "general")}}


@functools.lru_cache(maxsize=None)
def run(seed, variant):
    """Train one named variant on one seed; memoized for the whole session."""
    if variant == "full":
        return _dream(seed)
    if variant == "no-modal-encoders":
        return _dream(seed, ModelConfig(modal_encoders=False))
    if variant == "gamma0":
        return _dream(seed, weights=LossWeights(gamma=0.0))
    if variant == "beta0":
        return _dream(seed, weights=LossWeights(beta=0.0))
    ds, graphs = workload(seed)
    if variant in ("lightgcn", "lightgcn+bma"):
        bma = variant.endswith("+bma")
        model = LightGCNHost(ds, graphs.adjacency, bma=bma,
                             weights=LossWeights(**HOST_BMA) if bma else None, seed=seed)
    elif variant in ("vbpr", "vbpr+bma"):
        bma = variant.endswith("+bma")
        model = VBPRHost(ds, bma=bma, weights=LossWeights(**HOST_BMA) if bma else None, seed=seed)
    else:
        raise KeyError(variant)
    result = train(model, ds, trainer(seed))
    return {"recall": result.test_report["recall@20"], "epochs": result.epochs_run}
