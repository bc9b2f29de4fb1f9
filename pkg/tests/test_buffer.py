import numpy as np
import pytest

from graphbuffer import buffer as B
from graphbuffer import graph as G
from graphbuffer import losses as L
from graphbuffer import models as M
from graphbuffer import tensor as T
from helpers import finite_difference, max_rel_err, random_connected_graph


def small_setup(arch="gcn", seed=0, n=8, dims=None):
    rng = np.random.default_rng(seed)
    g = G.Graph(n, random_connected_graph(rng, n, 0.3))
    if dims is None:
        dims = (3, 3, 2) if arch == "sgc" else (3, 4, 2)
    cfg = M.ModelConfig(arch=arch, dims=dims, gin_hidden=5)
    params = M.init_params(cfg, seed + 1)
    x = rng.normal(size=(n, dims[0]))
    return g, cfg, params, x


# ---------------------------------------------------------------------------
# attach / detach


@pytest.mark.parametrize("arch", M.ARCHS)
def test_attach_preserves_predictions_exactly(arch):
    g, cfg, params, x = small_setup(arch)
    base_logq = M.predict(params, x, M.propagation_matrix(cfg, g))
    bm = B.attach(params, B.FULL)
    buf_logq = B.buffered_predict(bm, x, g)
    np.testing.assert_array_equal(buf_logq, base_logq)


def test_detach_round_trip_bitwise():
    g, cfg, params, x = small_setup()
    before = {n: p.data.copy() for n, p in params.named_parameters()}
    restored = B.detach(B.attach(params, B.FULL))
    assert restored is params and not restored.frozen
    for n, p in restored.named_parameters():
        np.testing.assert_array_equal(p.data, before[n])


def test_full_variant_weight_shapes():
    cfg = M.ModelConfig(arch="gcn", dims=(1433, 512, 7))
    bufs = B.BufferParams(cfg, B.FULL)
    assert bufs.weights[0].shape == (1433, 512)
    assert bufs.weights[1].shape == (1433 + 512, 7)


def test_single_layer_weight_shapes():
    cfg = M.ModelConfig(arch="gcn", dims=(10, 6, 3))
    bufs = B.BufferParams(cfg, B.SINGLE_LAYER)
    assert bufs.weights[0].shape == (10, 6)
    assert bufs.weights[1].shape == (6, 3)


def test_buffer_width_follows_aggregate_width():
    # gin and sgc aggregates keep the incoming width, so their buffers must too
    cfg = M.ModelConfig(arch="gin", dims=(10, 6, 3), gin_hidden=4)
    bufs = B.BufferParams(cfg, B.FULL)
    assert bufs.weights[0].shape == (10, 10)
    assert bufs.weights[1].shape == (16, 6)
    cfg = M.ModelConfig(arch="sgc", dims=(5, 5, 3))
    bufs = B.BufferParams(cfg, B.SINGLE_LAYER)
    assert bufs.weights[0].shape == (5, 5)
    assert bufs.weights[1].shape == (5, 5)


# ---------------------------------------------------------------------------
# buffer_forward


def test_zero_weights_zero_output():
    h = T.constant(np.random.default_rng(0).normal(size=(4, 3)))
    w = T.constant(np.zeros((3, 2)))
    out = B.buffer_forward(B.FULL, [h], np.array([1.0, 2.0, 0.0, 3.0]), w)
    np.testing.assert_array_equal(out.data, np.zeros((4, 2)))


def test_isolated_node_row_is_unscaled():
    rng = np.random.default_rng(1)
    h = T.constant(rng.normal(size=(3, 4)))
    w = T.constant(rng.normal(size=(4, 2)))
    degrees = np.array([0.0, 2.0, 1.0])
    out = B.buffer_forward(B.FULL, [h], degrees, w)
    np.testing.assert_allclose(out.data[0], h.data[0] @ w.data, atol=1e-15)
    np.testing.assert_allclose(out.data[1], (h.data[1] / 3.0) @ w.data, atol=1e-15)


def test_dropping_an_edge_strictly_increases_frobenius_norm():
    # evaluating the norm on both sides directly: the two-node single-edge
    # graph loses its edge, so both degrees fall and both rows rescale up
    rng = np.random.default_rng(2)
    h = T.constant(rng.normal(size=(2, 3)))
    w = T.constant(rng.normal(size=(3, 2)))
    clean = B.buffer_forward(B.FULL, [h], np.array([1.0, 1.0]), w)
    dropped = B.buffer_forward(B.FULL, [h], np.array([0.0, 0.0]), w)
    assert np.linalg.norm(dropped.data) > np.linalg.norm(clean.data)


def test_concat_prefix_order():
    rng = np.random.default_rng(3)
    h0 = T.constant(rng.normal(size=(2, 3)))
    h1 = T.constant(rng.normal(size=(2, 4)))
    w = T.constant(rng.normal(size=(7, 2)))
    deg = np.array([1.0, 3.0])
    out = B.buffer_forward(B.FULL, [h0, h1], deg, w)
    manual = (np.concatenate([h0.data, h1.data], axis=1) / (deg + 1)[:, None]) @ w.data
    np.testing.assert_allclose(out.data, manual, atol=1e-14)


def test_jknet_and_residual_ignore_degrees():
    rng = np.random.default_rng(4)
    h = T.constant(rng.normal(size=(4, 3)))
    w = T.constant(rng.normal(size=(3, 2)))
    for variant in (B.JKNET_STYLE, B.RESIDUAL_STYLE):
        a = B.buffer_forward(variant, [h], np.array([3.0, 1.0, 0.0, 2.0]), w)
        b = B.buffer_forward(variant, [h], np.array([0.0, 0.0, 0.0, 0.0]), w)
        np.testing.assert_array_equal(a.data, b.data)


def test_plain_agg_uses_propagation_matrix():
    rng = np.random.default_rng(5)
    g = G.Graph(3, [[0, 1], [1, 2]])
    prop = G.normalize(g, G.NormScheme(G.SYMMETRIC, add_self_loops=True))
    h = T.constant(rng.normal(size=(3, 2)))
    w = T.constant(rng.normal(size=(2, 2)))
    out = B.buffer_forward(B.PLAIN_AGG, [h], G.node_degrees(g).astype(float), w,
                           cfg_scheme_prop=prop)
    np.testing.assert_allclose(out.data, prop.densify() @ h.data @ w.data, atol=1e-14)


# ---------------------------------------------------------------------------
# buffered forward


def test_clean_vs_dropped_differ_with_nonzero_buffers():
    g, cfg, params, x = small_setup("gcn", n=4)
    bm = B.attach(params, B.FULL)
    rng = np.random.default_rng(7)
    for w in bm.buffers.weights:
        w.data[...] = rng.normal(size=w.shape)
    _, sub = G.drop_edges_seeded(g, 0.5, seed=3)
    assert sub.num_edges < g.num_edges
    clean = B.buffered_predict(bm, x, g)
    dropped = B.buffered_predict(bm, x, sub)
    assert np.max(np.abs(clean - dropped)) > 1e-9


def test_buffered_gradients_flow_only_into_buffers():
    g, cfg, params, x = small_setup("gcn")
    bm = B.attach(params, B.FULL)
    tape = T.Tape()
    logq = B.buffered_predict_value(bm, x, g, tape=tape)
    labels = np.zeros(g.num_nodes, dtype=int)
    grads = tape.backward(L.cross_entropy(logq, labels, None, tape))
    for _, p in bm.base.named_parameters():
        assert p not in grads
    for w in bm.buffers.weights:
        assert w in grads
        assert np.any(grads[w] != 0)


@pytest.mark.parametrize("arch", M.ARCHS)
@pytest.mark.parametrize("variant", B.VARIANTS)
def test_buffer_gradients_match_finite_differences(arch, variant):
    g, cfg, params, x = small_setup(arch, n=6)
    if arch == "mlp" and variant == B.PLAIN_AGG:
        with pytest.raises(ValueError):
            B.attach(params, variant)
        return
    bm = B.attach(params, variant)
    rng = np.random.default_rng(11)
    for w in bm.buffers.weights:
        w.data[...] = 0.3 * rng.normal(size=w.shape)
    _, sub = G.drop_edges_seeded(g, 0.4, seed=5)
    labels = rng.integers(0, cfg.num_classes, size=g.num_nodes)
    train_ids = np.arange(3)

    def loss(tape=None):
        frozen = M.predict(bm.base, x, M.propagation_matrix(cfg, g))
        clean = B.buffered_predict_value(bm, x, g, tape=tape)
        dropped = B.buffered_predict_value(bm, x, sub, tape=tape)
        total, _ = L.rc_objective(
            logq_frozen_clean=frozen, logq_clean=clean, logq_dropped=dropped,
            train_ids=train_ids, lam=0.7, tape=tape,
        )
        return total

    tape = T.Tape()
    grads = tape.backward(loss(tape))
    fd = finite_difference(lambda: loss().data[0, 0], bm.buffers.trainable())
    worst = max(max_rel_err(grads[w], fd[w]) for w in bm.buffers.trainable())
    assert worst < 1e-5


def test_buffer_dropout_applies_to_buffer_inputs_only():
    g, cfg, params, x = small_setup("gcn")
    bm = B.attach(params, B.FULL)
    rng = np.random.default_rng(13)
    for w in bm.buffers.weights:
        w.data[...] = rng.normal(size=w.shape)
    eval_out = B.buffered_forward(bm, x, g).logits.data
    train_out = B.buffered_forward(
        bm, x, g, mode="train", rng=np.random.default_rng(1), buffer_dropout=0.5
    ).logits.data
    assert np.max(np.abs(eval_out - train_out)) > 0
    # with zero buffers the dropout path is invisible: the base runs clean
    bm2 = B.attach(M.init_params(cfg, 1), B.FULL)
    a = B.buffered_forward(bm2, x, g, mode="train", rng=np.random.default_rng(2),
                           buffer_dropout=0.5).logits.data
    b = B.buffered_forward(bm2, x, g).logits.data
    np.testing.assert_array_equal(a, b)


def test_detach_detects_base_drift():
    g, cfg, params, x = small_setup()
    bm = B.attach(params, B.FULL)
    bm.base.layers[0]["w"].data[0, 0] += 1.0
    with pytest.raises(T.ContractError):
        B.detach(bm)
