"""The dual-line recommender.

Behavior line: LightGCN propagation of ID embeddings over the normalized
user-item graph, mean-pooled over layers.

Modal line, per modality: a sigmoid filter gate computed from the raw
features modulates the ID embeddings, the gated rows are propagated over
frozen kNN relation graphs (items over item-item, users over user-user),
and the modalities are mixed with weights ``alpha_v`` / ``1 - alpha_v``.

The general representation is the sum of both lines; scores are dot
products of general user and item rows.
"""

from dataclasses import dataclass, fields
import logging

import numpy as np

from . import objectives as obj
from .errors import ConfigError, DimensionError
from .graphs import SparseMatrix, build_normalized_adjacency, build_relation_graph, spmm
from .ingest import MODALITIES
from .numerics import autodiff as ad
from .numerics.optim import ParamSlot, xavier_init

log = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    embedding_dim: int = 64
    n_layers: int = 2          # behavior line propagation depth
    modal_layers: int = 1      # relation graph propagation depth
    alpha_v: float = 0.3       # vision weight; text gets 1 - alpha_v
    knn_k: int = 10
    vision: bool = True
    text: bool = True
    modal_encoders: bool = True   # False drops the modal line entirely
    filter_gate: bool = True      # False replaces the gate with a linear map of the features
    item_graph: bool = True
    user_graph: bool = True
    gate_input: str = "base"      # "base" (layer-0 IDs) or "aggregated" (behavior output)
    detach_gate_behavior: bool = False
    normalize_alignment: bool = True
    self_loop: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.n_layers < 0 or self.modal_layers < 0:
            raise ConfigError("layer counts must be >= 0")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if not 0.0 <= self.alpha_v <= 1.0:
            raise ConfigError(f"alpha_v must lie in [0, 1], got {self.alpha_v}")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        if self.gate_input not in ("base", "aggregated"):
            raise ConfigError(f"gate_input must be 'base' or 'aggregated', got {self.gate_input!r}")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model options: {sorted(unknown)}")
        return cls(**d)

    def modality_weights(self):
        """Effective mixing weights of the enabled modalities (renormalized)."""
        raw = {"vision": self.alpha_v if self.vision else 0.0,
               "text": 1.0 - self.alpha_v if self.text else 0.0}
        if not (self.vision or self.text):
            raise ConfigError("both modalities are disabled")
        s = raw["vision"] + raw["text"]
        if s == 0.0:
            # the one enabled modality had weight 0; give it everything
            return {m: 1.0 for m in raw if getattr(self, m)}
        return {m: w / s for m, w in raw.items() if w > 0}


@dataclass
class GraphBundle:
    adjacency: SparseMatrix
    item_graphs: dict   # modality -> RelationGraph
    user_graphs: dict


def build_graphs(dataset, k=10, self_loop=False):
    adj = build_normalized_adjacency(dataset.train, dataset.n_users, dataset.n_items)
    items = {m: build_relation_graph(f, k, m, "item", self_loop)
             for m, f in dataset.item_features.items()}
    users = {m: build_relation_graph(f, k, m, "user", self_loop)
             for m, f in dataset.user_features.items()}
    return GraphBundle(adj, items, users)


def fuse_raw_features(features, weights):
    """Mix raw modality features with the line's modality weights.

    Same-width features are summed directly. When widths differ, each
    modality's rows are unit-normalized and concatenated with
    ``sqrt(weight)`` scaling, so cosine similarity on the result equals the
    weighted sum of per-modality cosine similarities.
    """
    present = [m for m in MODALITIES if m in weights and m in features]
    if not present:
        raise ConfigError("no enabled modality has features")
    arrays = [np.asarray(features[m], dtype=np.float64) for m in present]
    if len({a.shape[1] for a in arrays}) == 1:
        return sum(weights[m] * a for m, a in zip(present, arrays))
    parts = []
    for m, a in zip(present, arrays):
        norm = np.linalg.norm(a, axis=1, keepdims=True)
        parts.append(np.sqrt(weights[m]) * a / np.where(norm > 0, norm, 1.0))
    return np.concatenate(parts, axis=1)


@dataclass
class DualRepresentations:
    behavior_user: np.ndarray
    behavior_item: np.ndarray
    modal_user: np.ndarray
    modal_item: np.ndarray
    general_user: np.ndarray
    general_item: np.ndarray

    def line(self, name):
        name = name.lower()
        if name not in ("behavior", "modal", "general"):
            raise ConfigError(f"unknown line {name!r}")
        return getattr(self, f"{name}_user"), getattr(self, f"{name}_item")


# --- stateless building blocks ---------------------------------------------

def behavior_forward(graph, e0, n_layers, n_users=None):
    """Mean of ``E^0 .. E^L`` with ``E^{l+1} = graph @ E^l``; split into users/items."""
    e0 = ad.as_var(e0)
    if e0.shape[0] != graph.n_cols:
        raise DimensionError(f"embedding table has {e0.shape[0]} rows, graph has {graph.n_cols}")
    layers = [e0]
    h = e0
    for _ in range(n_layers):
        h = ad.spmm(graph, h)
        layers.append(h)
    out = layers[0]
    for h in layers[1:]:
        out = ad.add(out, h)
    out = ad.scale(out, 1.0 / len(layers))
    if n_users is None:
        return out
    return ad.slice_rows(out, 0, n_users), ad.slice_rows(out, n_users, e0.shape[0])


def filter_gate(modal_features, behavior_emb, w, b):
    """``sigmoid(features @ w + b) * behavior_emb``."""
    f, e = ad.as_var(modal_features), ad.as_var(behavior_emb)
    w, b = ad.as_var(w), ad.as_var(b)
    if f.shape[1] != w.shape[0] or w.shape[1] != e.shape[1] or f.shape[0] != e.shape[0]:
        raise DimensionError(
            f"gate shapes disagree: features {f.shape}, W {w.shape}, behavior {e.shape}")
    return ad.mul(ad.sigmoid(ad.add(ad.matmul(f, w), b)), e)


def propagate(graph, x, layers=1):
    """Repeated relation-graph propagation; ``graph=None`` is the identity."""
    if graph is None:
        return ad.as_var(x)
    m = graph.matrix if hasattr(graph, "matrix") else graph
    for _ in range(layers):
        x = ad.spmm(m, x)
    return ad.as_var(x)


def modal_forward(gated_user, gated_item, user_graphs, item_graphs, weights, layers=1):
    """Propagate each modality's gated rows and mix them.

    ``gated_user``/``gated_item``/``*_graphs`` are dicts keyed by modality
    (graph entries may be ``None`` for identity); ``weights`` maps enabled
    modalities to their mixing weight.
    """
    if not weights:
        raise ConfigError("both modalities are disabled")
    out_u = out_i = None
    for m, w in weights.items():
        pu = ad.scale(propagate(user_graphs.get(m), gated_user[m], layers), w)
        pi = ad.scale(propagate(item_graphs.get(m), gated_item[m], layers), w)
        out_u = pu if out_u is None else ad.add(out_u, pu)
        out_i = pi if out_i is None else ad.add(out_i, pi)
    return out_u, out_i


def general_representation(behavior, modal):
    return ad.add(behavior, modal)


def score(general_user_row, general_item_row):
    return float(np.dot(general_user_row, general_item_row))


# --- the model -------------------------------------------------------------

class DreamModel:
    """Parameters plus frozen inputs (graphs, features) of one dataset."""

    def __init__(self, dataset, graphs, config=None, weights=None, seed=0):
        self.config = config or ModelConfig()
        self.weights = weights or obj.LossWeights()
        self.n_users, self.n_items = dataset.n_users, dataset.n_items
        self.graphs = graphs
        cfg = self.config
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(seed)
        d = cfg.embedding_dim
        self.slots = [
            ParamSlot("user_emb", xavier_init(self.n_users, d, rng, dtype)),
            ParamSlot("item_emb", xavier_init(self.n_items, d, rng, dtype)),
        ]
        self.modal_weights = cfg.modality_weights() if cfg.modal_encoders else {}
        self.item_features, self.user_features = {}, {}
        for m in self.modal_weights:
            if m not in dataset.item_features:
                raise ConfigError(f"modality {m!r} enabled but the dataset has no {m} features")
            fi = np.asarray(dataset.item_features[m], dtype=np.float64)
            self.item_features[m] = fi
            self.user_features[m] = np.asarray(dataset.user_features[m], dtype=np.float64)
            self.slots.append(ParamSlot(f"gate_w/{m}", xavier_init(fi.shape[1], d, rng, dtype)))
            self.slots.append(ParamSlot(f"gate_b/{m}", np.zeros((1, d), dtype=dtype)))
        if self.modal_weights:
            self.raw_fused_item = fuse_raw_features(self.item_features, self.modal_weights)
            self.raw_fused_user = fuse_raw_features(self.user_features, self.modal_weights)
        else:
            self.raw_fused_item = self.raw_fused_user = None

    # parameters -------------------------------------------------------------
    def slot(self, name):
        for s in self.slots:
            if s.name == name:
                return s
        raise KeyError(name)

    def leaves(self, values=None):
        """Fresh float64 leaf Vars for every trainable slot."""
        values = values or {s.name: s.value for s in self.slots if s.trainable}
        return {name: ad.Var(np.array(v, dtype=np.float64), requires_grad=True, name=name)
                for name, v in values.items()}

    # forward ----------------------------------------------------------------
    def forward(self, leaves):
        cfg = self.config
        e0 = ad.concat_rows([leaves["user_emb"], leaves["item_emb"]])
        beh_u, beh_i = behavior_forward(self.graphs.adjacency, e0, cfg.n_layers, self.n_users)
        reps = {"behavior_user": beh_u, "behavior_item": beh_i}
        if not self.modal_weights:
            zeros_u = ad.Var(np.zeros(beh_u.shape))
            zeros_i = ad.Var(np.zeros(beh_i.shape))
            reps.update(modal_user=zeros_u, modal_item=zeros_i, general_user=beh_u,
                        general_item=beh_i)
            return reps
        if cfg.gate_input == "base":
            gate_u, gate_i = leaves["user_emb"], leaves["item_emb"]
        else:
            gate_u, gate_i = beh_u, beh_i
        if cfg.detach_gate_behavior:
            gate_u, gate_i = ad.stop_gradient(gate_u), ad.stop_gradient(gate_i)
        gated_u, gated_i = {}, {}
        for m in self.modal_weights:
            w, b = leaves[f"gate_w/{m}"], leaves[f"gate_b/{m}"]
            if cfg.filter_gate:
                gated_u[m] = filter_gate(self.user_features[m], gate_u, w, b)
                gated_i[m] = filter_gate(self.item_features[m], gate_i, w, b)
            else:
                gated_u[m] = ad.add(ad.matmul(self.user_features[m], w), b)
                gated_i[m] = ad.add(ad.matmul(self.item_features[m], w), b)
        ug = self.graphs.user_graphs if cfg.user_graph else {}
        ig = self.graphs.item_graphs if cfg.item_graph else {}
        mod_u, mod_i = modal_forward(gated_u, gated_i, ug, ig, self.modal_weights, cfg.modal_layers)
        reps.update(modal_user=mod_u, modal_item=mod_i,
                    general_user=general_representation(beh_u, mod_u),
                    general_item=general_representation(beh_i, mod_i))
        return reps

    def loss_parts(self, batch, leaves):
        reps = self.forward(leaves)
        w, norm = self.weights, self.config.normalize_alignment
        parts = {"general": obj.bpr_loss(reps["general_user"], reps["general_item"], batch)}
        if w.alpha:
            parts["bia"] = obj.intra_alignment(reps["behavior_user"], reps["behavior_item"],
                                               batch, w.tau, norm)
        if self.modal_weights:
            if w.alpha:
                parts["mia"] = obj.intra_alignment(reps["modal_user"], reps["modal_item"],
                                                   batch, w.tau, norm)
            if w.beta:
                parts["inter"] = obj.inter_alignment(
                    reps["behavior_user"], reps["behavior_item"], reps["modal_user"],
                    reps["modal_item"], batch, w.tau, norm)
            if w.gamma:
                parts["s3"] = obj.s3_loss(reps["modal_user"], reps["modal_item"],
                                          self.raw_fused_user, self.raw_fused_item, batch, norm)
        if w.reg:
            parts["reg"] = id_regularizer(leaves, batch)
        return parts

    def loss(self, batch, leaves=None):
        leaves = leaves if leaves is not None else self.leaves()
        return obj.total_loss(self.loss_parts(batch, leaves), self.weights)

    def accumulate(self, leaves):
        for s in self.slots:
            leaf = leaves.get(s.name)
            if leaf is not None and leaf.grad is not None:
                s.grad += leaf.grad.astype(s.grad.dtype)

    def representations(self):
        reps = self.forward({name: ad.Var(v.value) for name, v in self.leaves().items()})
        return DualRepresentations(**{k: np.asarray(v.value) for k, v in reps.items()})

    def score_tables(self):
        r = self.representations()
        return r.general_user, r.general_item


def id_regularizer(leaves, batch):
    """Mean over triples of the squared norms of the three ID-embedding rows."""
    u = ad.sum_squares(ad.take_rows(leaves["user_emb"], batch.users))
    i = ad.sum_squares(ad.take_rows(leaves["item_emb"], batch.pos_items))
    j = ad.sum_squares(ad.take_rows(leaves["item_emb"], batch.neg_items))
    return ad.scale(ad.add(ad.add(u, i), j), 1.0 / len(batch))
