"""Block-preference synthetic data with informative "modal" features.

Users and items each belong to one of ``n_blocks`` latent blocks. A user's
interactions fall mostly inside their own block; item features are the block
one-hot (vision) or a fixed random block code (text) plus Gaussian noise.
"""

from pathlib import Path

import numpy as np

from .ingest import build_dataset
from .storage import write_features


def make_block_interactions(n_users=200, n_items=150, n_blocks=5, min_items=10, max_items=20,
                            in_block=0.7, seed=0):
    rng = np.random.default_rng(seed)
    item_block = np.arange(n_items) % n_blocks
    user_block = rng.integers(0, n_blocks, size=n_users)
    # skewed popularity inside each block
    pop = rng.pareto(1.5, size=n_items) + 1.0
    pairs = []
    for u in range(n_users):
        n = int(rng.integers(min_items, max_items + 1))
        own = np.flatnonzero(item_block == user_block[u])
        chosen = set()
        while len(chosen) < n:
            pool = own if rng.random() < in_block else np.arange(n_items)
            p = pop[pool] / pop[pool].sum()
            chosen.add(int(rng.choice(pool, p=p)))
        pairs.extend((u, i) for i in sorted(chosen))
    return np.asarray(pairs, dtype=np.int64), user_block, item_block


def make_block_features(item_block, n_blocks, dim=12, noise=0.6, seed=0):
    rng = np.random.default_rng(seed + 7919)
    n_items = item_block.shape[0]
    onehot = np.zeros((n_blocks, dim))
    onehot[np.arange(n_blocks), np.arange(n_blocks) % dim] = 1.0
    code = rng.normal(size=(n_blocks, dim))
    code /= np.linalg.norm(code, axis=1, keepdims=True)
    vision = onehot[item_block] + noise * rng.normal(size=(n_items, dim)) / np.sqrt(dim)
    text = code[item_block] + noise * rng.normal(size=(n_items, dim)) / np.sqrt(dim)
    return {"vision": vision.astype(np.float32), "text": text.astype(np.float32)}


def block_dataset(n_users=200, n_items=150, n_blocks=5, dim=12, noise=0.6, seed=0,
                  split_seed=None, ratios=(0.6, 0.2, 0.2), **kw):
    """Ready-to-train ``Dataset`` (the acceptance workload at default sizes)."""
    pairs, _, item_block = make_block_interactions(n_users, n_items, n_blocks, seed=seed, **kw)
    feats = make_block_features(item_block, n_blocks, dim, noise, seed)
    return build_dataset(pairs, feats, n_users, n_items, ratios,
                         seed if split_seed is None else split_seed, name=f"block-s{seed}")


def write_tiny(directory, seed=0):
    """Write the bundled tiny dataset (64 users, 48 items, 8-dim features)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pairs, _, item_block = make_block_interactions(64, 48, 4, min_items=10, max_items=16, seed=seed)
    feats = make_block_features(item_block, 4, dim=8, seed=seed)
    with open(directory / "interactions.tsv", "w") as fh:
        for u, i in pairs:
            fh.write(f"u{u}\t{i}\n")
    for m, f in feats.items():
        write_features(directory / m, f, m)
    return directory
