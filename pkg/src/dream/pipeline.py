"""Data preparation with a content-addressed cache, and model assembly from a RunConfig.

Cache layout (one directory per dataset key, one subdirectory per graph k)::

    <cache_dir>/<dataset key>/manifest.json       ids, sizes, source parameters
                             /split.json          train/val/test pairs
                             /items_<m>.f32|json  item features in dataset order
                             /users_<m>.f32|json  derived user features
                             /adjacency.blob
                             /graphs-k<k>[-loop]/{item,user}_<m>.blob

The dataset key hashes the raw input bytes (or the synthetic generator
parameters) together with the k-core threshold, split ratios and split seed.
"""

import hashlib
import importlib.resources
import json
import logging
from pathlib import Path

import numpy as np

from .errors import DataError
from .graphs import RelationGraph, build_normalized_adjacency, build_relation_graph
from .ingest import (MODALITIES, Dataset, Splits, derive_user_features, kcore_filter,
                     load_interactions, split_dataset)
from .model import DreamModel, GraphBundle
from .storage import load_sparse, read_features, save_sparse, write_features
from .synthetic import make_block_features, make_block_interactions

log = logging.getLogger(__name__)


def tiny_dir():
    return Path(str(importlib.resources.files("dream") / "data" / "tiny"))


def _data_paths(data):
    if data.source == "tiny":
        base = tiny_dir()
        return base / "interactions.tsv", {m: base / m for m in MODALITIES}
    return Path(data.interactions), {m: Path(p) for m, p in data.features.items()}


def _feature_files(path):
    path = Path(path)
    if path.suffix.lower() in (".csv", ".npy"):
        return [path]
    prefix = path.with_suffix("") if path.suffix.lower() in (".f32", ".json") else path
    return [Path(str(prefix) + ".json"), Path(str(prefix) + ".f32")]


def dataset_key(cfg):
    data = cfg.data
    h = hashlib.sha256()
    split_seed = cfg.seed if data.split_seed is None else data.split_seed
    params = {"source": data.source, "kcore": data.kcore, "split": data.split,
              "split_seed": split_seed, "header": data.header}
    if data.source == "synthetic":
        params["synthetic"] = data.synthetic
    else:
        inter, feats = _data_paths(data)
        for p in [inter] + [f for m in sorted(feats) for f in _feature_files(feats[m])]:
            if not p.exists():
                raise DataError(f"missing input file {p}")
            h.update(p.name.encode())
            h.update(p.read_bytes())
    h.update(json.dumps(params, sort_keys=True).encode())
    return h.hexdigest()[:16]


def _align_features(arr, meta, item_ids, path):
    """Reorder feature rows to the dataset's item order."""
    if "ids" in meta:
        lookup = {str(x): r for r, x in enumerate(meta["ids"])}
        try:
            rows = [lookup[i] for i in item_ids]
        except KeyError as exc:
            raise DataError(f"{path}: no feature row for item {exc.args[0]!r}") from exc
    else:
        try:
            rows = [int(i) for i in item_ids]
        except ValueError as exc:
            raise DataError(f"{path}: item ids are not row numbers and the sidecar has no 'ids' "
                            f"list ({exc})") from exc
        bad = [i for i, r in zip(item_ids, rows) if not 0 <= r < arr.shape[0]]
        if bad:
            raise DataError(f"{path}: item {bad[0]!r} is outside the {arr.shape[0]} feature rows")
    return arr[np.asarray(rows, dtype=np.int64)]


def _load_raw(cfg):
    """Return (pairs, user_ids, item_ids, item_features) after k-core filtering."""
    data = cfg.data
    if data.source == "synthetic":
        kw = dict(data.synthetic)
        n_blocks, dim, noise = kw.pop("n_blocks", 5), kw.pop("dim", 12), kw.pop("noise", 0.6)
        gen_seed = kw.pop("seed", cfg.seed)
        pairs, _, item_block = make_block_interactions(n_blocks=n_blocks, seed=gen_seed, **kw)
        feats = make_block_features(item_block, n_blocks, dim, noise, gen_seed)
        user_ids = [str(u) for u in range(int(pairs[:, 0].max()) + 1)]
        item_ids = [str(i) for i in range(item_block.shape[0])]
    else:
        inter, paths = _data_paths(data)
        logd = load_interactions(inter, skip_header=data.header)
        pairs, user_ids, item_ids = logd.pairs, logd.user_ids, logd.item_ids
        feats = {}
        for m, p in paths.items():
            if m not in MODALITIES:
                raise DataError(f"unknown modality {m!r} (expected one of {MODALITIES})")
            arr, meta = read_features(p)
            feats[m] = _align_features(arr, meta, item_ids, p)
    if data.kcore > 1:
        pairs, keep_u, keep_i = kcore_filter(pairs, data.kcore, return_index=True)
        user_ids = [user_ids[u] for u in keep_u]
        item_ids = [item_ids[i] for i in keep_i]
        feats = {m: f[keep_i] for m, f in feats.items()}
    return pairs, user_ids, item_ids, feats


def _graph_dir(root, k, self_loop):
    return root / (f"graphs-k{k}" + ("-loop" if self_loop else ""))


def prepare(cfg):
    """Build (or reuse) the cached dataset and graphs. Returns ``(Dataset, GraphBundle, info)``.

    ``info`` holds the cache paths and whether each part was reused.
    """
    cfg = cfg.effective()
    root = Path(cfg.cache_dir) / dataset_key(cfg)
    manifest = root / "manifest.json"
    info = {"dataset_dir": str(root), "dataset_reused": manifest.exists()}
    if manifest.exists():
        log.info("reusing cached dataset %s", root)
    else:
        pairs, user_ids, item_ids, feats = _load_raw(cfg)
        split_seed = cfg.seed if cfg.data.split_seed is None else cfg.data.split_seed
        splits = split_dataset(pairs, cfg.data.split, split_seed)
        n_users, n_items = len(user_ids), len(item_ids)
        root.mkdir(parents=True, exist_ok=True)
        splits.save(root / "split.json")
        for m, f in feats.items():
            write_features(root / f"items_{m}", f, m)
            write_features(root / f"users_{m}", derive_user_features(splits.train, f, n_users), m)
        save_sparse(root / "adjacency.blob",
                    build_normalized_adjacency(splits.train, n_users, n_items))
        doc = {"n_users": n_users, "n_items": n_items, "modalities": sorted(feats),
               "user_ids": user_ids, "item_ids": item_ids, "source": cfg.data.source}
        # manifest last: its presence marks a complete entry
        manifest.write_text(json.dumps(doc, sort_keys=True) + "\n")
        log.info("prepared dataset %s (%d users, %d items)", root, n_users, n_items)
    doc = json.loads(manifest.read_text())
    splits = Splits.load(root / "split.json")
    item_features = {m: read_features(root / f"items_{m}")[0] for m in doc["modalities"]}
    user_features = {m: read_features(root / f"users_{m}")[0] for m in doc["modalities"]}
    dataset = Dataset(doc["n_users"], doc["n_items"], splits, item_features, user_features,
                      name=cfg.data.source).validate()
    dataset.user_ids, dataset.item_ids = doc["user_ids"], doc["item_ids"]

    k, loop = cfg.model.knn_k, cfg.model.self_loop
    gdir = _graph_dir(root, k, loop)
    done = gdir / "done"
    info.update(graph_dir=str(gdir), graphs_reused=done.exists())
    if done.exists():
        log.info("reusing cached graphs %s", gdir)
    else:
        gdir.mkdir(parents=True, exist_ok=True)
        for scope, table in (("item", item_features), ("user", user_features)):
            for m, f in table.items():
                g = build_relation_graph(f, k, m, scope, loop)
                save_sparse(gdir / f"{scope}_{m}.blob", g.matrix, modality=m, scope=scope, k=k,
                            self_loop=loop)
        done.write_text("")
        log.info("built relation graphs %s", gdir)
    adjacency, _ = load_sparse(root / "adjacency.blob")
    graphs = {}
    for scope in ("item", "user"):
        graphs[scope] = {}
        for m in doc["modalities"]:
            mat, meta = load_sparse(gdir / f"{scope}_{m}.blob")
            graphs[scope][m] = RelationGraph(m, scope, k, mat, loop)
    return dataset, GraphBundle(adjacency, graphs["item"], graphs["user"]), info


def build_model(cfg, dataset, graphs, dtype=None):
    cfg = cfg.effective()
    model_cfg = cfg.model
    if dtype is not None:
        from dataclasses import replace
        model_cfg = replace(model_cfg, dtype=dtype)
    return DreamModel(dataset, graphs, model_cfg, cfg.loss, seed=cfg.seed)
