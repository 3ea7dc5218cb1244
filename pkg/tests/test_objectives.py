import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dream.baselines import LightGCNHost, VBPRHost
from dream.errors import ConfigError, NumericError
from dream.model import build_graphs
from dream.numerics import autodiff as ad
from dream.numerics import backward, grad_check
from dream.objectives import (BatchTriples, DegenerateBatchError, LossWeights, bma_plug, bpr_loss,
                              infonce, inter_alignment, s3_loss, total_loss)
from dream.synthetic import block_dataset
from dream.training import TripleSampler


def _margin_table(margin):
    # user (1, 0); positive item scores `margin`, negative item scores 0
    return np.array([[1.0, 0.0]]), np.array([[margin, 0.0], [0.0, 1.0]])


def test_bpr_examples():
    u, it = _margin_table(0.0)
    b = BatchTriples([0], [0], [1])
    assert bpr_loss(u, it, b).item() == pytest.approx(math.log(2), abs=1e-12)
    u, it = _margin_table(1.0)
    assert bpr_loss(u, it, b).item() == pytest.approx(0.31326, abs=1e-5)
    u, it = _margin_table(1e4)
    saturated = bpr_loss(u, it, b).item()
    assert np.isfinite(saturated) and saturated < 1e-12


def test_bpr_clamp_keeps_gradients_finite():
    user = ad.Var(np.array([[1.0, 0.0]]), requires_grad=True)
    items = ad.Var(np.array([[-1e4, 0.0], [0.0, 1.0]]), requires_grad=True)
    loss = bpr_loss(user, items, BatchTriples([0], [0], [1]))
    backward(loss)
    assert np.isfinite(loss.item()) and np.all(np.isfinite(items.grad))


def test_bpr_strictly_decreasing_in_margin():
    values = [bpr_loss(*_margin_table(m), BatchTriples([0], [0], [1])).item()
              for m in np.linspace(-5, 5, 41)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_infonce_examples(rng):
    rows = np.tile(rng.normal(size=(1, 5)), (7, 1))
    assert infonce(rows, rows).item() == pytest.approx(math.log(7), abs=1e-12)
    a = np.array([[1.0, 0.0], [0.0, 1.0]])
    value = infonce(a, a, tau=0.2).item()
    assert value == pytest.approx(-math.log(math.exp(5) / (math.exp(5) + 1)), abs=1e-12)
    assert value == pytest.approx(0.00672, abs=1e-5)


def test_infonce_degenerate_batch():
    with pytest.raises(DegenerateBatchError):
        infonce(np.ones((1, 3)), np.ones((1, 3)))


def test_infonce_zero_rows_warn(caplog):
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    value = infonce(a, np.eye(2)).item()
    assert np.isfinite(value) and "zero-norm" in caplog.text


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(1, 8), st.integers(0, 10_000))
def test_infonce_nonnegative_and_scale_invariant(b, d, seed):
    rng = np.random.default_rng(seed)
    a, p = rng.normal(size=(b, d)), rng.normal(size=(b, d))
    value = infonce(a, p).item()
    assert value >= 0
    scaled = infonce(a * rng.uniform(0.1, 10, size=(b, 1)), p * rng.uniform(0.1, 10, size=(b, 1)))
    assert scaled.item() == pytest.approx(value, abs=1e-6)


def test_s3_examples():
    # two users and two items; learned rows orthogonal, raw rows parallel
    learned = np.array([[1.0, 0.0], [0.0, 1.0]])
    raw = np.array([[1.0, 1.0], [2.0, 2.0]])
    b = BatchTriples([0, 1], [0, 1], [1, 0])
    assert s3_loss(learned, learned, raw, raw, b).item() == pytest.approx(1.0)  # 0.5 per side
    only_items = s3_loss(raw, learned, raw, raw, b).item()
    assert only_items == pytest.approx(0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_s3_scale_invariant_and_stopped(seed):
    rng = np.random.default_rng(seed)
    mu, mi = rng.normal(size=(6, 4)), rng.normal(size=(8, 4))
    ru, ri = rng.normal(size=(6, 9)), rng.normal(size=(8, 9))
    b = BatchTriples(rng.integers(0, 6, 5), rng.integers(0, 8, 5), rng.integers(0, 8, 5))
    if len(set(b.users.tolist())) < 2 or len(set(b.pos_items.tolist())) < 2:
        return
    base = s3_loss(mu, mi, ru, ri, b).item()
    scaled = s3_loss(mu * rng.uniform(0.2, 5, size=(6, 1)), mi * rng.uniform(0.2, 5, size=(8, 1)),
                     ru, ri, b).item()
    assert scaled == pytest.approx(base, abs=1e-9)
    raw_leaf = ad.Var(ri, requires_grad=True)
    item_leaf = ad.Var(mi, requires_grad=True)
    backward(s3_loss(mu, item_leaf, ru, raw_leaf, b))
    assert raw_leaf.grad is None and item_leaf.grad is not None


def test_s3_proportional_is_zero(rng):
    ru, ri = rng.normal(size=(5, 3)), rng.normal(size=(7, 3))
    b = BatchTriples([0, 1, 4], [2, 3, 6], [0, 0, 0])
    assert s3_loss(3 * ru, 0.5 * ri, ru, ri, b).item() == pytest.approx(0.0, abs=1e-12)


def test_total_loss_zero_weights_is_bpr():
    zero = LossWeights(alpha=0, beta=0, gamma=0, reg=0)
    assert total_loss({"general": 0.7, "bia": 5.0, "s3": 3.0}, zero).total == pytest.approx(0.7)


def test_total_loss_one_point_five_one():
    # terms 1, 2, 3, 4 for general, intra, inter, s3 with weights 0.01, 0.03, 0.1
    w = LossWeights(alpha=0.01, beta=0.03, gamma=0.1, reg=0.0)
    br = total_loss({"general": 1.0, "bia": 2.0, "inter": 3.0, "s3": 4.0}, w)
    assert br.total == pytest.approx(1.51)
    assert br.intra == 2.0 and br.node.item() == pytest.approx(1.51)


def test_total_loss_names_bad_term():
    with pytest.raises(NumericError) as info:
        total_loss({"general": 1.0, "inter": float("nan")}, LossWeights())
    assert info.value.term == "inter"


def test_loss_weights_validation():
    with pytest.raises(ConfigError):
        LossWeights(alpha=-1)
    with pytest.raises(ConfigError):
        LossWeights(tau=0)


def test_bma_plug_zero_weights_contribute_nothing(rng):
    bu = ad.Var(rng.normal(size=(4, 3)), requires_grad=True)
    bi = ad.Var(rng.normal(size=(5, 3)), requires_grad=True)
    b = BatchTriples([0, 1, 2], [1, 2, 3], [0, 0, 0])
    out = bma_plug((bu, bi), (rng.normal(size=(4, 3)), rng.normal(size=(5, 3))), b,
                   LossWeights(alpha=0, beta=0))
    assert out.item() == 0.0
    backward(ad.add(out, ad.scale(ad.total(bu), 0.0)))
    assert not bu.grad.any()


def test_bma_plug_identical_rows_gives_ln_b(rng):
    row = rng.normal(size=(1, 3))
    u, i = np.tile(row, (4, 1)), np.tile(row, (6, 1))
    b = BatchTriples([0, 1, 2, 3], [0, 1, 2, 3], [5, 5, 5, 5])
    inter = inter_alignment(u, i, u, i, b).item()
    assert inter == pytest.approx(2 * math.log(4), abs=1e-12)   # user side + item side


def test_bma_plug_width_mismatch(rng):
    b = BatchTriples([0, 1], [0, 1], [1, 0])
    with pytest.raises(ConfigError):
        bma_plug((rng.normal(size=(2, 3)), rng.normal(size=(2, 3))),
                 (rng.normal(size=(2, 4)), rng.normal(size=(2, 4))), b, LossWeights())


@pytest.fixture(scope="module")
def host_data():
    ds = block_dataset(n_users=10, n_items=12, dim=4, seed=5, min_items=4, max_items=6)
    batch = TripleSampler(ds.train, ds.n_users, ds.n_items).sample(6, np.random.default_rng(0))
    return ds, build_graphs(ds, k=3), batch


@pytest.mark.parametrize("host", ["lightgcn", "vbpr"])
def test_host_with_plug_passes_gradcheck(host_data, host):
    ds, graphs, batch = host_data
    w = LossWeights(alpha=0.5, beta=0.5, gamma=0.0, reg=0.1)
    if host == "lightgcn":
        model = LightGCNHost(ds, graphs.adjacency, embedding_dim=4, weights=w, bma=True,
                             dtype=np.float64)
    else:
        model = VBPRHost(ds, embedding_dim=4, weights=w, bma=True, dtype=np.float64)
    assert np.isfinite(model.bma_loss(batch).item())
    # 2-wide normalized halves are strongly curved; h=1e-3 leaves O(h^2) truncation near the tolerance
    rep = grad_check(model, batch, h=1e-4, tol=1e-3)
    assert rep.passed, rep.max_rel_error


def test_host_plug_leaves_own_loss_untouched(host_data):
    ds, graphs, batch = host_data
    w = LossWeights(alpha=0.5, beta=0.5, gamma=0.0)
    plain = LightGCNHost(ds, graphs.adjacency, embedding_dim=4, weights=w, bma=False, seed=1)
    plugged = LightGCNHost(ds, graphs.adjacency, embedding_dim=4, weights=w, bma=True, seed=1)
    base = plain.loss(batch)
    both = plugged.loss(batch)
    assert both.general == base.general
    assert both.total == pytest.approx(base.total + plugged.bma_loss(batch).item())
