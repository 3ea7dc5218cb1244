"""Host models for the alignment plug-in experiment: LightGCN-only and VBPR-style.

Both expose the same surface as ``DreamModel`` (``slots``, ``leaves``,
``loss``, ``accumulate``, ``score_tables``) so ``training.train`` drives them
unchanged. With ``bma=True`` they add ``objectives.bma_plug`` on top of
their own loss, leaving architecture and hyperparameters untouched.
"""

import numpy as np

from . import objectives as obj
from .model import behavior_forward, fuse_raw_features, id_regularizer
from .numerics import autodiff as ad
from .numerics.optim import ParamSlot, xavier_init


class _Host:
    slots: list

    def leaves(self, values=None):
        values = values or {s.name: s.value for s in self.slots if s.trainable}
        return {n: ad.Var(np.array(v, dtype=np.float64), requires_grad=True, name=n)
                for n, v in values.items()}

    def accumulate(self, leaves):
        for s in self.slots:
            leaf = leaves.get(s.name)
            if leaf is not None and leaf.grad is not None:
                s.grad += leaf.grad.astype(s.grad.dtype)

    def loss(self, batch, leaves=None):
        leaves = leaves if leaves is not None else self.leaves()
        return obj.total_loss(self.loss_parts(batch, leaves), self.weights)

    def loss_parts(self, batch, leaves):
        (gu, gi), (bu, bi), (mu, mi) = self.forward(leaves)
        w = self.weights
        parts = {"general": obj.bpr_loss(gu, gi, batch)}
        if w.reg:
            parts["reg"] = self._regularizer(leaves, batch)
        if self.bma:
            norm = True
            if w.alpha:
                parts["bia"] = obj.intra_alignment(bu, bi, batch, w.tau, norm)
                parts["mia"] = obj.intra_alignment(mu, mi, batch, w.tau, norm)
            if w.beta:
                parts["inter"] = obj.inter_alignment(bu, bi, mu, mi, batch, w.tau, norm)
        return parts

    def bma_loss(self, batch, leaves=None):
        """The plug's added loss alone (for inspection and gradient checks)."""
        leaves = leaves if leaves is not None else self.leaves()
        _, beh, mod = self.forward(leaves)
        return obj.bma_plug(beh, mod, batch, self.weights)

    def score_tables(self):
        (gu, gi), _, _ = self.forward({n: ad.Var(v.value) for n, v in self.leaves().items()})
        return np.asarray(gu.value), np.asarray(gi.value)

    def dual_tables(self):
        _, (bu, bi), (mu, mi) = self.forward({n: ad.Var(v.value) for n, v in self.leaves().items()})
        return (bu.value, bi.value), (mu.value, mi.value)


class LightGCNHost(_Host):
    """LightGCN + BPR. Its "modal" side for the plug is the raw fused features
    passed through a frozen random projection to the embedding width."""

    def __init__(self, dataset, adjacency, embedding_dim=64, n_layers=2, weights=None,
                 bma=False, alpha_v=0.3, seed=0, dtype=np.float32):
        self.weights = weights or obj.LossWeights(alpha=0.0, beta=0.0, gamma=0.0)
        self.bma = bma
        self.adjacency = adjacency
        self.n_users, self.n_items, self.n_layers = dataset.n_users, dataset.n_items, n_layers
        rng = np.random.default_rng(seed)
        self.slots = [ParamSlot("user_emb", xavier_init(self.n_users, embedding_dim, rng, dtype)),
                      ParamSlot("item_emb", xavier_init(self.n_items, embedding_dim, rng, dtype))]
        mix = {"vision": alpha_v, "text": 1.0 - alpha_v}
        mix = {m: w for m, w in mix.items() if m in dataset.item_features and w > 0}
        s = sum(mix.values())
        mix = {m: w / s for m, w in mix.items()}
        raw_i = fuse_raw_features(dataset.item_features, mix)
        raw_u = fuse_raw_features(dataset.user_features, mix)
        proj = np.random.default_rng(seed + 104729).normal(
            size=(raw_i.shape[1], embedding_dim)) / np.sqrt(raw_i.shape[1])
        self.modal_item, self.modal_user = raw_i @ proj, raw_u @ proj

    def forward(self, leaves):
        e0 = ad.concat_rows([leaves["user_emb"], leaves["item_emb"]])
        bu, bi = behavior_forward(self.adjacency, e0, self.n_layers, self.n_users)
        mod = (ad.Var(self.modal_user), ad.Var(self.modal_item))
        return (bu, bi), (bu, bi), mod

    def _regularizer(self, leaves, batch):
        return id_regularizer(leaves, batch)


class VBPRHost(_Host):
    """VBPR-style scorer on concatenated vision+text features.

    user = [gamma_u | theta_u], item = [gamma_i | features_i @ E]; the score
    is their dot product. The ID halves form the behavior domain and the
    feature halves the modal domain.
    """

    def __init__(self, dataset, embedding_dim=64, weights=None, bma=False, seed=0,
                 dtype=np.float32):
        self.weights = weights or obj.LossWeights(alpha=0.0, beta=0.0, gamma=0.0)
        self.bma = bma
        half = embedding_dim // 2
        feats = [np.asarray(dataset.item_features[m], dtype=np.float64)
                 for m in ("vision", "text") if m in dataset.item_features]
        self.features = np.concatenate(feats, axis=1)
        rng = np.random.default_rng(seed)
        n_u, n_i = dataset.n_users, dataset.n_items
        self.slots = [ParamSlot("user_id", xavier_init(n_u, half, rng, dtype)),
                      ParamSlot("user_visual", xavier_init(n_u, half, rng, dtype)),
                      ParamSlot("item_id", xavier_init(n_i, half, rng, dtype)),
                      ParamSlot("feature_proj", xavier_init(self.features.shape[1], half, rng, dtype))]

    def forward(self, leaves):
        item_mod = ad.matmul(self.features, leaves["feature_proj"])
        bu, mu, bi = leaves["user_id"], leaves["user_visual"], leaves["item_id"]
        gu = _hcat(bu, mu)
        gi = _hcat(bi, item_mod)
        return (gu, gi), (bu, bi), (mu, item_mod)

    def _regularizer(self, leaves, batch):
        u = ad.sum_squares(ad.take_rows(leaves["user_id"], batch.users))
        v = ad.sum_squares(ad.take_rows(leaves["user_visual"], batch.users))
        i = ad.sum_squares(ad.take_rows(leaves["item_id"], batch.pos_items))
        j = ad.sum_squares(ad.take_rows(leaves["item_id"], batch.neg_items))
        return ad.scale(ad.add(ad.add(u, v), ad.add(i, j)), 1.0 / len(batch))


def _hcat(a, b):
    """Column concatenation via two fixed selector products (keeps the op set closed)."""
    a, b = ad.as_var(a), ad.as_var(b)
    da, db = a.shape[1], b.shape[1]
    left = np.hstack([np.eye(da), np.zeros((da, db))])
    right = np.hstack([np.zeros((db, da)), np.eye(db)])
    return ad.add(ad.matmul(a, left), ad.matmul(b, right))
