"""Interaction loading, k-core filtering, per-user splitting, user modal features."""

from dataclasses import dataclass, field
import json
import logging
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, EmptyDatasetError, ParseError

log = logging.getLogger(__name__)

MODALITIES = ("vision", "text")


@dataclass
class InteractionLog:
    """Deduplicated ``(user, item)`` index pairs plus the raw-id lookup tables."""

    pairs: np.ndarray  # (n, 2) int64
    user_ids: list
    item_ids: list

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_items(self):
        return len(self.item_ids)


def load_interactions(path, skip_header=False):
    """Read ``user<TAB>item[<TAB>extra...]`` lines.

    Indices are assigned in order of first appearance. Repeated pairs are
    kept once; extra columns are ignored.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing interaction file {path}")
    user_ix, item_ix = {}, {}
    seen = set()
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if skip_header and line_no == 1:
                continue
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) < 2 or not cols[0].strip() or not cols[1].strip():
                raise ParseError(path, line_no, f"expected 'user<TAB>item', got {line!r}")
            u = user_ix.setdefault(cols[0].strip(), len(user_ix))
            i = item_ix.setdefault(cols[1].strip(), len(item_ix))
            if (u, i) not in seen:
                seen.add((u, i))
                pairs.append((u, i))
    if not pairs:
        raise EmptyDatasetError(f"{path}: no interactions")
    return InteractionLog(np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
                          list(user_ix), list(item_ix))


def kcore_filter(pairs, k, return_index=False):
    """Peel users and items with fewer than ``k`` interactions until none remain.

    Survivors are reindexed densely in order of their old index. With
    ``return_index`` the old indices of the kept users and items are returned
    as well.
    """
    if k < 1:
        raise ConfigError(f"k-core needs k >= 1, got {k}")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    alive = np.ones(pairs.shape[0], dtype=bool)
    n_u = int(pairs[:, 0].max()) + 1 if pairs.size else 0
    n_i = int(pairs[:, 1].max()) + 1 if pairs.size else 0
    while True:
        u, i = pairs[alive, 0], pairs[alive, 1]
        deg_u = np.bincount(u, minlength=n_u)
        deg_i = np.bincount(i, minlength=n_i)
        weak = alive & ((deg_u[pairs[:, 0]] < k) | (deg_i[pairs[:, 1]] < k))
        if not weak.any():
            break
        alive &= ~weak
    kept = pairs[alive]
    if kept.shape[0] == 0:
        raise EmptyDatasetError(f"no interactions survive {k}-core filtering")
    users, new_u = np.unique(kept[:, 0], return_inverse=True)
    items, new_i = np.unique(kept[:, 1], return_inverse=True)
    out = np.stack([new_u, new_i], axis=1).astype(np.int64)
    if return_index:
        return out, users, items
    return out


@dataclass
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int = 0
    ratios: tuple = (0.8, 0.1, 0.1)

    def to_manifest(self):
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "test": self.test.tolist(),
        }

    @classmethod
    def from_manifest(cls, doc):
        def arr(key):
            return np.asarray(doc[key], dtype=np.int64).reshape(-1, 2)
        return cls(arr("train"), arr("val"), arr("test"), doc.get("seed", 0),
                   tuple(doc.get("ratios", (0.8, 0.1, 0.1))))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_manifest()) + "\n")

    @classmethod
    def load(cls, path):
        try:
            return cls.from_manifest(json.loads(Path(path).read_text()))
        except (json.JSONDecodeError, KeyError) as exc:
            raise DataError(f"{path}: corrupt split manifest: {exc}") from exc


def _floor(x):
    # guards against 0.29 * 100 == 28.999...
    return int(math.floor(x + 1e-9))


def split_dataset(pairs, ratios=(0.8, 0.1, 0.1), seed=0):
    """Random per-user split into train/val/test.

    Each user's interactions are shuffled; ``floor(n * ratio)`` go to
    validation and test and the rest to training, keeping at least one
    training interaction per user. Validation/test pairs whose item never
    occurs in training are moved to training so every evaluated item has a
    learned representation.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or ratios[0] <= 0 or abs(sum(ratios) - 1.0) > 1e-6:
        raise ConfigError(f"split ratios must be 3 non-negative numbers summing to 1, got {ratios}")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order]
    rng = np.random.default_rng(seed)
    users, starts, counts = np.unique(pairs[:, 0], return_index=True, return_counts=True)
    parts = {"train": [], "val": [], "test": []}
    for u, s, n in zip(users, starts, counts):
        block = pairs[s:s + n][rng.permutation(n)]
        n_val, n_test = _floor(n * ratios[1]), _floor(n * ratios[2])
        if n_val + n_test >= n:
            log.warning("user %d has %d interactions; all assigned to train", u, n)
            n_val = n_test = 0
        parts["val"].append(block[:n_val])
        parts["test"].append(block[n_val:n_val + n_test])
        parts["train"].append(block[n_val + n_test:])
    train, val, test = (np.concatenate(parts[k]) if parts[k] else np.zeros((0, 2), np.int64)
                        for k in ("train", "val", "test"))
    seen_items = np.zeros(int(pairs[:, 1].max()) + 1 if pairs.size else 0, dtype=bool)
    seen_items[train[:, 1]] = True
    moved = []
    for name, arr in (("val", val), ("test", test)):
        cold = ~seen_items[arr[:, 1]]
        if cold.any():
            moved.append(arr[cold])
            seen_items[arr[cold, 1]] = True
        if name == "val":
            val = arr[~cold]
        else:
            test = arr[~cold]
    if moved:
        train = np.concatenate([train] + moved)
    return Splits(_sorted(train), _sorted(val), _sorted(test), seed, ratios)


def _sorted(arr):
    return arr[np.lexsort((arr[:, 1], arr[:, 0]))].reshape(-1, 2)


def derive_user_features(train, item_features, n_users):
    """Row u = mean of the feature rows of u's training items."""
    train = np.asarray(train, dtype=np.int64).reshape(-1, 2)
    item_features = np.asarray(item_features)
    acc = np.zeros((n_users, item_features.shape[1]), dtype=np.float64)
    np.add.at(acc, train[:, 0], item_features[train[:, 1]].astype(np.float64))
    counts = np.bincount(train[:, 0], minlength=n_users)
    empty = counts == 0
    if empty.any():
        log.warning("%d users without training items get zero modal features", int(empty.sum()))
    acc[~empty] /= counts[~empty, None]
    return acc.astype(np.float32)


@dataclass
class Dataset:
    n_users: int
    n_items: int
    splits: Splits
    item_features: dict = field(default_factory=dict)  # modality -> (N, d_m) float32
    user_features: dict = field(default_factory=dict)  # modality -> (M, d_m) float32
    name: str = "dataset"

    @property
    def train(self):
        return self.splits.train

    @property
    def val(self):
        return self.splits.val

    @property
    def test(self):
        return self.splits.test

    @property
    def modalities(self):
        return tuple(m for m in MODALITIES if m in self.item_features)

    def validate(self):
        for m, feats in self.item_features.items():
            if feats.shape[0] != self.n_items:
                raise DataError(f"{m} item features have {feats.shape[0]} rows, expected {self.n_items}")
        for m, feats in self.user_features.items():
            if feats.shape[0] != self.n_users:
                raise DataError(f"{m} user features have {feats.shape[0]} rows, expected {self.n_users}")
        return self


def build_dataset(pairs, item_features, n_users=None, n_items=None, ratios=(0.8, 0.1, 0.1),
                  seed=0, name="dataset"):
    """Split ``pairs`` and derive the user-side modal features from the training part."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    n_users = int(pairs[:, 0].max()) + 1 if n_users is None else n_users
    n_items = int(pairs[:, 1].max()) + 1 if n_items is None else n_items
    splits = split_dataset(pairs, ratios, seed)
    user_features = {m: derive_user_features(splits.train, f, n_users)
                     for m, f in item_features.items()}
    item_features = {m: np.asarray(f, dtype=np.float32) for m, f in item_features.items()}
    return Dataset(n_users, n_items, splits, item_features, user_features, name).validate()
