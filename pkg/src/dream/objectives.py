"""Loss terms: BPR, in-batch InfoNCE alignment, similarity supervision, and their sum."""

from dataclasses import asdict, dataclass, field
import logging
import math

import numpy as np

from .errors import ConfigError, DataError, DimensionError, NumericError
from .numerics import autodiff as ad

log = logging.getLogger(__name__)


class DegenerateBatchError(DataError):
    pass


@dataclass
class LossWeights:
    alpha: float = 0.01   # intra-alignment
    beta: float = 0.03    # inter-alignment
    gamma: float = 0.1    # similarity supervision
    reg: float = 1e-4     # L2 on the batch's ID-embedding rows
    tau: float = 0.2      # InfoNCE temperature

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "reg"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")
        if self.tau <= 0:
            raise ConfigError("temperature tau must be > 0")


@dataclass
class BatchTriples:
    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=np.int64)
        self.pos_items = np.asarray(self.pos_items, dtype=np.int64)
        self.neg_items = np.asarray(self.neg_items, dtype=np.int64)
        if not (len(self.users) == len(self.pos_items) == len(self.neg_items)):
            raise DimensionError("batch index lists differ in length")

    def __len__(self):
        return len(self.users)


@dataclass
class LossBreakdown:
    general: float
    bia: float
    mia: float
    inter: float
    s3: float
    reg: float
    total: float
    node: object = field(default=None, repr=False, compare=False)

    @property
    def intra(self):
        return self.bia + self.mia

    def as_dict(self):
        d = asdict(self)
        d.pop("node")
        d["intra"] = self.intra
        return d


def bpr_loss(general_user, general_item, batch, clamp=1e-12):
    """Mean over triples of ``-log sigmoid(s(u,i) - s(u,i'))``."""
    if len(batch) == 0:
        raise DegenerateBatchError("BPR needs a non-empty batch")
    u = ad.take_rows(general_user, batch.users)
    pos = ad.row_dot(u, ad.take_rows(general_item, batch.pos_items))
    neg = ad.row_dot(u, ad.take_rows(general_item, batch.neg_items))
    return ad.mean(ad.neg_log_sigmoid(ad.sub(pos, neg), clamp))


def infonce(anchors, positives, tau=0.2, normalize=True):
    """In-batch InfoNCE: row j of ``positives`` is the positive for anchor j,
    every other row of ``positives`` is a negative. Mean over anchors."""
    a, p = ad.as_var(anchors), ad.as_var(positives)
    if a.shape != p.shape:
        raise DimensionError(f"InfoNCE operands differ in shape: {a.shape} vs {p.shape}")
    if a.shape[0] < 2:
        raise DegenerateBatchError(f"InfoNCE needs at least 2 rows, got {a.shape[0]}")
    if normalize:
        for name, x in (("anchor", a), ("positive", p)):
            zero = ~np.any(x.value != 0, axis=1)
            if zero.any():
                log.warning("InfoNCE: %d zero-norm %s rows normalized to zero", int(zero.sum()), name)
        a, p = ad.l2_normalize(a), ad.l2_normalize(p)
    return ad.diag_cross_entropy(ad.scale(ad.matmul_t(a, p), 1.0 / tau))


def similarity_matrix(x, normalize=True):
    x = ad.l2_normalize(x) if normalize else ad.as_var(x)
    return ad.matmul_t(x, x)


def s3_loss(modal_user, modal_item, raw_user, raw_item, batch, normalize=True):
    """Similarity supervision on the batch's distinct users and positive items.

    MSE between the pairwise similarity matrix of the learned modal
    representations and that of the raw fused features (gradient-stopped);
    item-side plus user-side.
    """
    if len(batch) < 2:
        raise DegenerateBatchError(f"similarity supervision needs at least 2 rows, got {len(batch)}")
    out = None
    for learned, raw, idx in ((modal_item, raw_item, np.unique(batch.pos_items)),
                              (modal_user, raw_user, np.unique(batch.users))):
        sim = similarity_matrix(ad.take_rows(learned, idx), normalize)
        target = ad.stop_gradient(similarity_matrix(np.asarray(ad.as_var(raw).value)[idx], normalize))
        term = ad.mse(sim, target)
        out = term if out is None else ad.add(out, term)
    return out


def inter_alignment(behavior_user, behavior_item, modal_user, modal_item, batch, tau=0.2,
                    normalize=True):
    """Behavior vs modal InfoNCE over the distinct users and distinct items of the batch."""
    users, items = np.unique(batch.users), np.unique(batch.pos_items)
    out_u = infonce(ad.take_rows(behavior_user, users), ad.take_rows(modal_user, users),
                    tau, normalize)
    out_i = infonce(ad.take_rows(behavior_item, items), ad.take_rows(modal_item, items),
                    tau, normalize)
    return ad.add(out_u, out_i)


def intra_alignment(user, item, batch, tau=0.2, normalize=True):
    return infonce(ad.take_rows(user, batch.users), ad.take_rows(item, batch.pos_items),
                   tau, normalize)


TERMS = ("general", "bia", "mia", "inter", "s3", "reg")


def total_loss(parts, weights):
    """Weighted sum ``general + a*(bia+mia) + b*inter + g*s3 + lambda*reg``.

    ``parts`` maps term names to scalar ``Var`` (or float); missing terms
    count as zero. Returns a ``LossBreakdown`` whose ``node`` is the total as
    a ``Var`` ready for ``backward``.
    """
    coef = {"general": 1.0, "bia": weights.alpha, "mia": weights.alpha,
            "inter": weights.beta, "s3": weights.gamma, "reg": weights.reg}
    values = {}
    for name in TERMS:
        part = parts.get(name)
        v = 0.0 if part is None else float(ad.as_var(part).value)
        if not math.isfinite(v):
            raise NumericError(f"loss term {name!r} is not finite ({v})", term=name)
        values[name] = v
    present = [n for n in TERMS if parts.get(n) is not None]
    node = ad.weighted_sum([ad.as_var(parts[n]) for n in present], [coef[n] for n in present])
    total = math.fsum(coef[n] * values[n] for n in TERMS)
    return LossBreakdown(
        general=values["general"], bia=values["bia"],
        mia=values["mia"], inter=values["inter"], s3=values["s3"],
        reg=coef["reg"] * values["reg"], total=total, node=node)


def bma_plug(behavior, modal, batch, weights, normalize=True):
    """Alignment loss for a host model: ``alpha * intra + beta * inter``.

    ``behavior`` and ``modal`` are ``(user, item)`` pairs of representation
    tables from the host's two domains; both must share a width. Returns a
    scalar ``Var`` to add to the host's own loss.
    """
    (bu, bi), (mu, mi) = behavior, modal
    dims = {ad.as_var(x).shape[1] for x in (bu, bi, mu, mi)}
    if len(dims) != 1:
        raise ConfigError(f"BMA needs equal widths in both domains, got {sorted(dims)}")
    terms, coefs = [], []
    if weights.alpha:
        terms += [intra_alignment(bu, bi, batch, weights.tau, normalize),
                  intra_alignment(mu, mi, batch, weights.tau, normalize)]
        coefs += [weights.alpha, weights.alpha]
    if weights.beta:
        terms.append(inter_alignment(bu, bi, mu, mi, batch, weights.tau, normalize))
        coefs.append(weights.beta)
    return ad.weighted_sum(terms, coefs)
