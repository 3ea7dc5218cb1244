import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dream.errors import GraphError, NumericError
from dream.graphs import SparseMatrix
from dream.ingest import build_dataset
from dream.model import DreamModel, ModelConfig, build_graphs
from dream.numerics import (Adam, ParamSlot, adam_step, backward, check_gradients, grad_check,
                            grad_of, load_checkpoint, restore_into, save_checkpoint, xavier_init)
from dream.numerics import autodiff as ad
from dream.objectives import LossWeights
from dream.training import TripleSampler


# --- init ----------------------------------------------------------------------

def test_xavier_bounds_and_determinism():
    w = xavier_init(1, 5, seed=3)
    assert np.all(np.abs(w) <= 1.0)
    assert np.array_equal(xavier_init(7, 9, seed=11), xavier_init(7, 9, seed=11))
    assert not np.array_equal(xavier_init(7, 9, seed=11), xavier_init(7, 9, seed=12))


def test_xavier_variance():
    draws = np.stack([xavier_init(64, 64, seed=s, dtype=np.float64) for s in range(10)])
    assert draws.var() == pytest.approx(2 / 128, rel=0.2)


# --- adam ---------------------------------------------------------------------

def test_adam_zero_grad_is_identity():
    p = ParamSlot("w", np.array([[1.5, -2.0]]))
    adam_step([p], t=1)
    assert p.value.tolist() == [[1.5, -2.0]]


def test_adam_first_step():
    p = ParamSlot("w", np.array([[0.0]]))
    p.grad[...] = 1.0
    adam_step([p], lr=0.001, t=1)
    assert p.value[0, 0] == pytest.approx(-0.001, rel=1e-6)
    assert p.grad[0, 0] == 0.0


def _scalar_adam(grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    x, m, v = 0.5, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
    return x


def test_adam_moments_keep_moving_after_zero_grads():
    p = ParamSlot("w", np.array([[0.5]]))
    opt = Adam(lr=1e-3)
    history = []
    for g in (0.7, 0.0, 0.0):
        p.grad[...] = g
        opt.step([p])
        history.append(p.value[0, 0])
    assert history[2] != history[1]
    assert p.value[0, 0] == pytest.approx(_scalar_adam([0.7, 0.0, 0.0]), abs=1e-7)


def test_adam_rejects_non_finite():
    p = ParamSlot("gate_w/vision", np.zeros((2, 2)))
    p.grad[1, 0] = np.nan
    with pytest.raises(NumericError, match=r"gate_w/vision at \(1, 0\)"):
        adam_step([p], t=1)
    assert not p.value.any()


def test_adam_skips_frozen_slots():
    p = ParamSlot("frozen", np.ones((1, 2)), trainable=False)
    p.grad[...] = 1.0
    adam_step([p], t=1)
    assert p.value.tolist() == [[1.0, 1.0]]


# --- autodiff -----------------------------------------------------------------

def test_backward_sum_and_quadratic(rng):
    e = ad.Var(rng.normal(size=(3, 4)), requires_grad=True)
    backward(ad.total(e))
    assert np.array_equal(e.grad, np.ones((3, 4)))
    e2 = ad.Var(rng.normal(size=(3, 4)), requires_grad=True)
    backward(ad.scale(ad.sum_squares(e2), 0.5))
    assert np.allclose(e2.grad, e2.value)


def test_stop_gradient_blocks_flow(rng):
    x = ad.Var(rng.normal(size=(2, 2)), requires_grad=True)
    loss = ad.add(ad.total(x), ad.total(ad.stop_gradient(ad.mul(x, x))))
    backward(loss)
    assert np.array_equal(x.grad, np.ones((2, 2)))


def test_grad_of_unrelated_leaf_raises(rng):
    x = ad.Var(rng.normal(size=(2,)), requires_grad=True)
    y = ad.Var(rng.normal(size=(2,)), requires_grad=True)
    with pytest.raises(GraphError):
        grad_of(ad.total(x), y)
    assert np.array_equal(grad_of(ad.total(x), x), np.ones(2))


def test_backward_needs_scalar(rng):
    with pytest.raises(GraphError):
        backward(ad.Var(np.ones(3), requires_grad=True))


def _op_cases(rng):
    graph = SparseMatrix.from_dense(np.where(rng.random((5, 5)) < 0.4, rng.random((5, 5)), 0.0))
    idx = np.array([0, 3, 3, 1])
    other = rng.normal(size=(5, 3))
    right = rng.normal(size=(3, 2))
    return {
        "sigmoid": lambda a: ad.total(ad.sigmoid(a)),
        "matmul": lambda a: ad.sum_squares(ad.matmul(a, right)),
        "matmul_t": lambda a: ad.sum_squares(ad.matmul_t(a, a)),
        "spmm": lambda a: ad.sum_squares(ad.spmm(graph, a)),
        "take_rows": lambda a: ad.sum_squares(ad.take_rows(a, idx)),
        "concat_slice": lambda a: ad.sum_squares(ad.slice_rows(ad.concat_rows([a, a]), 3, 8)),
        "row_dot": lambda a: ad.total(ad.row_dot(a, other)),
        "l2_normalize": lambda a: ad.total(ad.mul(ad.l2_normalize(a), other)),
        "cross_entropy": lambda a: ad.diag_cross_entropy(ad.matmul_t(a, other)),
        "neg_log_sigmoid": lambda a: ad.mean(ad.neg_log_sigmoid(ad.row_dot(a, other))),
        "mse": lambda a: ad.mse(a, other),
    }


@pytest.mark.parametrize("op", list(_op_cases(np.random.default_rng(0))))
def test_each_op_matches_finite_differences(op):
    rng = np.random.default_rng(42)
    fn = _op_cases(rng)[op]
    slot = ParamSlot("a", rng.normal(size=(5, 3)))

    def loss_fn(values):
        leaf = ad.Var(values["a"], requires_grad=True)
        return fn(leaf), {"a": leaf}

    rep = check_gradients(loss_fn, [slot], h=1e-5, tol=1e-6)
    assert rep.passed, rep.max_rel_error


def test_gradcheck_constant_loss():
    slot = ParamSlot("a", np.ones((2, 2)))

    def loss_fn(values):
        leaf = ad.Var(values["a"], requires_grad=True)
        return ad.scale(ad.total(leaf), 0.0), {"a": leaf}

    rep = check_gradients(loss_fn, [slot])
    assert rep.passed and rep.max_rel_error["a"] == 0.0


def _tiny_model(weights, n_users=4, n_items=6, seed=0):
    rng = np.random.default_rng(seed)
    pairs = np.array([(u, i) for u in range(n_users) for i in range(n_items)
                      if rng.random() < 0.5 or i == u])
    feats = {"vision": rng.normal(size=(n_items, 5)), "text": rng.normal(size=(n_items, 5))}
    ds = build_dataset(pairs, feats, n_users, n_items, (1.0, 0.0, 0.0), seed=0)
    model = DreamModel(ds, build_graphs(ds, k=2), ModelConfig(embedding_dim=3, dtype="float64"),
                       weights, seed=seed)
    batch = TripleSampler(ds.train, n_users, n_items).sample(4, np.random.default_rng(seed))
    return model, batch


def test_gradcheck_bpr_only():
    model, batch = _tiny_model(LossWeights(alpha=0, beta=0, gamma=0, reg=0))
    rep = grad_check(model, batch, tol=1e-3)
    assert rep.passed, rep.max_rel_error
    assert set(rep.checked) == {s.name for s in model.slots}


def test_gradcheck_full_loss_four_users():
    model, batch = _tiny_model(LossWeights(alpha=0.3, beta=0.4, gamma=0.5, reg=0.1))
    rep = grad_check(model, batch, h=1e-3, tol=1e-3)
    assert rep.passed, rep.max_rel_error


def test_gradcheck_sampled_coordinates():
    model, batch = _tiny_model(LossWeights())
    rep = grad_check(model, batch, max_coords=20)
    assert sum(rep.checked.values()) <= 20 + len(model.slots)
    assert rep.passed


def test_gradcheck_reports_rather_than_raises():
    slot = ParamSlot("a", np.ones((1, 2)))

    def wrong(values):
        leaf = ad.Var(values["a"], requires_grad=True)
        loss = ad.sum_squares(leaf)
        # analytic path sees only half of the dependence
        return ad.add(ad.scale(loss, 0.5), ad.stop_gradient(ad.scale(loss, 0.5))), {"a": leaf}

    rep = check_gradients(wrong, [slot])
    assert not rep.passed
    assert any("FAIL" in line for line in rep.lines())


# --- checkpoints --------------------------------------------------------------

def test_checkpoint_round_trip_is_bit_exact(tmp_path, rng):
    slots = [ParamSlot("user_emb", rng.normal(size=(3, 4)).astype(np.float32)),
             ParamSlot("gate_b/text", np.zeros((1, 4), dtype=np.float32))]
    slots[0].adam_m[...] = rng.normal(size=(3, 4))
    save_checkpoint(tmp_path / "c.ckpt", slots, step=17, epoch=3)
    loaded, step, meta = load_checkpoint(tmp_path / "c.ckpt")
    assert step == 17 and meta["epoch"] == 3
    fresh = [ParamSlot("user_emb", np.zeros((3, 4), np.float32)),
             ParamSlot("gate_b/text", np.ones((1, 4), np.float32))]
    restore_into(fresh, loaded)
    for a, b in zip(slots, fresh):
        assert a.value.tobytes() == b.value.tobytes()
        assert a.adam_m.tobytes() == b.adam_m.tobytes()
    save_checkpoint(tmp_path / "d.ckpt", fresh, step=17, epoch=3)
    assert (tmp_path / "c.ckpt").read_bytes() == (tmp_path / "d.ckpt").read_bytes()


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 1000))
def test_adam_matches_scalar_reference_elementwise(rows, cols, seed):
    rng = np.random.default_rng(seed)
    grads = rng.normal(size=(3, rows, cols))
    p = ParamSlot("w", np.full((rows, cols), 0.5))
    opt = Adam(lr=1e-3)
    for g in grads:
        p.grad[...] = g
        opt.step([p])
    want = np.vectorize(lambda r, c: _scalar_adam(grads[:, r, c]))(*np.indices((rows, cols)))
    assert np.allclose(p.value, want, atol=1e-12)
