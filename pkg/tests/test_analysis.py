import numpy as np
import pytest

from graphbuffer import analysis as A
from graphbuffer import buffer as B
from graphbuffer import graph as G
from graphbuffer import models as M
from helpers import random_connected_graph


# ---------------------------------------------------------------------------
# lipschitz constants


def test_documented_lipschitz_constants():
    assert A.lipschitz_constant("relu") == 1.0
    assert A.lipschitz_constant("sigmoid") == 0.25
    assert A.lipschitz_constant("gelu") == 1.13
    assert A.lipschitz_constant("tanh") == 1.0
    assert A.lipschitz_constant("elu") == 1.0


def test_unsupported_activation_rejected():
    with pytest.raises(ValueError):
        A.lipschitz_constant("softplus")


def test_constants_dominate_sampled_difference_quotients():
    # empirical |f(x)-f(y)|/|x-y| never exceeds the documented constant
    rng = np.random.default_rng(0)
    for kind, const in A.LIPSCHITZ_CONSTANTS.items():
        x = rng.normal(scale=3, size=100_000)
        y = x + rng.normal(scale=0.05, size=100_000)
        fx = A._apply_activation(kind, x)
        fy = A._apply_activation(kind, y)
        ratios = np.abs(fx - fy) / np.abs(x - y)
        assert np.max(ratios) <= const + 1e-9


# ---------------------------------------------------------------------------
# spectral norm


def test_spectral_norm_identity():
    assert abs(A.spectral_norm(np.eye(4)) - 1.0) < 1e-12


def test_spectral_norm_diagonal():
    assert abs(A.spectral_norm(np.diag([3.0, 1.0])) - 3.0) < 1e-12


def test_spectral_norm_zero_matrix():
    assert A.spectral_norm(np.zeros((3, 3))) == 0.0


def test_spectral_norm_matches_dense_eigensolver():
    rng = np.random.default_rng(1)
    for _ in range(100):
        m = rng.normal(size=(int(rng.integers(2, 20)), int(rng.integers(2, 20))))
        # oracle: sqrt of the top eigenvalue of M^T M from a dense eigensolver
        oracle = float(np.sqrt(np.max(np.linalg.eigvalsh(m.T @ m))))
        est = A.spectral_norm(m)
        assert abs(est - oracle) / oracle < 1e-8


def test_spectral_norm_convergence_error_carries_estimate():
    m = np.diag([2.0, 1.99999])  # close eigenvalues converge slowly
    with pytest.raises(A.ConvergenceError) as err:
        A.spectral_norm(m, tol=0.0, max_iter=3)
    assert 1.0 < err.value.last_estimate < 3.0


# ---------------------------------------------------------------------------
# cascade and layer bounds


def test_cascade_single_relu_layer_is_weight_norm():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(5, 4))
    assert abs(A.mlp_cascade_bound([w], "relu") - A.dense_norm2(w)) < 1e-12


def test_cascade_identity_weights_is_one():
    ws = [np.eye(4)] * 5
    assert abs(A.mlp_cascade_bound(ws, "relu") - 1.0) < 1e-12


def test_cascade_three_sigmoid_layers_direct_product():
    rng = np.random.default_rng(3)
    ws = [rng.normal(size=(4, 4)) for _ in range(3)]
    expected = (0.25 ** 3) * np.prod([A.dense_norm2(w) for w in ws])
    assert abs(A.mlp_cascade_bound(ws, "sigmoid") - expected) < 1e-12


def test_layer_bound_c2_zero_when_operators_equal():
    rng = np.random.default_rng(4)
    a = np.abs(rng.normal(size=(4, 4)))
    w = {"w": rng.normal(size=(3, 2))}
    _, c2 = A.gnn_layer_bound(A.GCN_NORMALIZED, w, a, a, 4, "relu")
    assert c2 == 0.0


def test_layer_bound_two_node_example():
    # one edge vs no edge under symmetric normalization with self-loops:
    # the operator difference is [[-.5, .5], [.5, -.5]] with spectral norm 1
    g_edge = G.Graph(2, [[0, 1]])
    g_none = G.Graph(2, [])
    scheme = G.NormScheme(G.SYMMETRIC, add_self_loops=True)
    a1 = G.normalize(g_edge, scheme).densify()
    a2 = G.normalize(g_none, scheme).densify()
    np.testing.assert_allclose(a1 - a2, [[-0.5, 0.5], [0.5, -0.5]], atol=1e-15)
    assert abs(np.max(np.abs(np.linalg.eigvalsh(a1 - a2))) - 1.0) < 1e-12
    w = {"w": np.random.default_rng(5).normal(size=(3, 2))}
    c1, c2 = A.gnn_layer_bound(A.GCN_NORMALIZED, w, a1, a2, 2, "relu")
    assert abs(c2 - c1 * 2.0) < 1e-12


def test_gin_bound_substitution_at_zero_eps():
    rng = np.random.default_rng(6)
    weights = {"wa": rng.normal(size=(3, 4)), "wb": rng.normal(size=(4, 2)), "eps": 0.0}
    a = G.Graph(3, [[0, 1], [1, 2]]).adjacency.densify()
    c = A.mlp_cascade_bound([weights["wa"], weights["wb"]], "relu")
    c1, _ = A.gnn_layer_bound(A.GIN, weights, a, a, 3, "relu")
    assert abs(c1 - c * (A.dense_norm2(a) + 1.0)) < 1e-12


# ---------------------------------------------------------------------------
# Monte-Carlo verification


def random_graph(rng, n, density=0.2):
    dense = np.triu(rng.random((n, n)) < density, k=1)
    return G.Graph(n, np.argwhere(dense))


def test_identical_inputs_and_graph_give_zero_lhs():
    rng = np.random.default_rng(7)
    g = random_graph(rng, 10)
    op = G.normalize(g, G.NormScheme(G.SYMMETRIC, add_self_loops=True)).densify()
    w = {"w": rng.normal(size=(4, 3))}
    h = rng.normal(size=(10, 4))
    out1 = A._layer_output(A.GCN_NORMALIZED, w, op, h, 0.0, "relu")
    out2 = A._layer_output(A.GCN_NORMALIZED, w, op, h, 0.0, "relu")
    assert A.dense_norm2(out1 - out2) == 0.0


@pytest.mark.parametrize(
    "arch,scheme",
    [
        (A.GCN_NORMALIZED, G.SYMMETRIC),
        (A.GCN_NORMALIZED, G.RANDOM_WALK),
        (A.GCN_REGULAR, None),
        (A.SAGE, None),
        (A.GIN, None),
    ],
)
def test_bound_verification_no_violations(arch, scheme):
    rng = np.random.default_rng(8)
    total = 0
    for _ in range(4):
        g = random_graph(rng, int(rng.integers(8, 48)))
        kw = {"scheme": scheme} if scheme else {}
        rep = A.verify_bound(arch, g, p=0.5, trials=50, rng=rng, **kw)
        assert rep.violations == 0
        assert rep.max_ratio <= 1.0
        total += rep.trials
    assert total == 200


def test_mlp_cascade_verification_no_violations():
    rng = np.random.default_rng(9)
    for activation in ("relu", "sigmoid"):
        rep = A.verify_mlp_cascade(3, 200, rng, activation)
        assert rep.violations == 0


def test_verify_bound_rejects_oversized_graph():
    rng = np.random.default_rng(10)
    g = G.Graph(300, [[0, 1]])
    with pytest.raises(ValueError):
        A.verify_bound(A.GCN_REGULAR, g, 0.5, 1, rng, node_cap=256)


def test_bound_report_serialization():
    rep = A.BoundReport("gcn_normalized", 1, 2.0, 3.0, 10, 0.5, 0)
    doc = rep.to_dict()
    assert doc["violations"] == 0 and doc["slack"] == 1e-9
    assert "gcn_normalized" in rep.to_json()


# ---------------------------------------------------------------------------
# witness search


def test_witness_found_on_path_graph():
    rng = np.random.default_rng(11)
    g = G.Graph(4, [[0, 1], [1, 2], [2, 3]])
    w = rng.normal(size=(3, 2))
    rec = A.theorem_no_constant_witness(w, g, rng)
    assert rec["output_discrepancy"] > 1e-6
    assert rec["input_discrepancy"] == 0.0
    assert rec["attempt"] <= 100


def test_witness_exhausts_for_mlp():
    rng = np.random.default_rng(12)
    g = G.Graph(4, [[0, 1], [1, 2]])
    w = rng.normal(size=(3, 2))
    with pytest.raises(A.SearchExhaustedError):
        A.theorem_no_constant_witness(w, g, rng, aggregated=False, max_attempts=20)


def test_witness_exhausts_for_zero_weights():
    rng = np.random.default_rng(13)
    g = G.Graph(4, [[0, 1], [1, 2]])
    with pytest.raises(A.SearchExhaustedError):
        A.theorem_no_constant_witness(np.zeros((3, 2)), g, rng, max_attempts=20)


def test_witness_succeeds_on_50_random_instances():
    rng = np.random.default_rng(14)
    for _ in range(50):
        n = int(rng.integers(4, 24))
        g = G.Graph(n, random_connected_graph(rng, n, 0.2))
        w = rng.normal(size=(int(rng.integers(2, 6)), int(rng.integers(2, 6))))
        rec = A.theorem_no_constant_witness(w, g, rng)
        assert rec["output_discrepancy"] > 1e-6


# ---------------------------------------------------------------------------
# buffer conditions


def test_full_and_single_layer_satisfy_conditions():
    rng = np.random.default_rng(15)
    for variant in (B.FULL, B.SINGLE_LAYER):
        rep = A.check_buffer_conditions(variant, 200, rng)
        assert rep.c1_holds == 200
        assert rep.c2_strict_holds == 200


def test_feature_deterministic_variants_fail_edge_awareness():
    rng = np.random.default_rng(16)
    for variant in (B.JKNET_STYLE, B.RESIDUAL_STYLE):
        rep = A.check_buffer_conditions(variant, 100, rng)
        assert rep.c1_holds == 0


def test_plain_agg_is_edge_aware():
    rng = np.random.default_rng(17)
    rep = A.check_buffer_conditions(B.PLAIN_AGG, 100, rng)
    assert rep.c1_holds == 100


def test_forced_zero_weights_give_equal_norms():
    rng = np.random.default_rng(18)
    g = G.Graph(4, [[0, 1], [1, 2], [2, 3]])
    sub = G.Graph(4, [[0, 1]])
    prefix = rng.normal(size=(4, 3))
    c1, c2_strict, equal = A.buffer_condition_single(
        B.FULL, prefix, np.zeros((3, 2)), g, sub
    )
    assert not c1 and not c2_strict and equal


# ---------------------------------------------------------------------------
# empirical discrepancy


def test_empirical_discrepancy_zero_for_equal_operators():
    rng = np.random.default_rng(19)
    g = random_graph(rng, 8, 0.4)
    cfg = M.ModelConfig(arch="gcn", dims=(3, 4, 2))
    params = M.init_params(cfg, 0)
    x = rng.normal(size=(8, 3))
    prop = M.propagation_matrix(cfg, g)
    assert A.empirical_discrepancy(params, x, prop, prop) == [0.0, 0.0]


def test_empirical_discrepancy_zero_for_mlp():
    rng = np.random.default_rng(20)
    g = random_graph(rng, 8, 0.4)
    sub = G.Graph(8, g.edges[1:])
    cfg = M.ModelConfig(arch="mlp", dims=(3, 4, 2))
    params = M.init_params(cfg, 0)
    x = rng.normal(size=(8, 3))
    # an MLP ignores the propagation operator entirely
    vals = A.empirical_discrepancy(params, x, None, None)
    assert vals == [0.0, 0.0]


def test_empirical_discrepancy_matches_dense_recomputation():
    from scipy.special import expit

    rng = np.random.default_rng(21)
    g = G.Graph(6, random_connected_graph(rng, 6, 0.3))
    sub = G.Graph(6, g.edges[:-1])
    cfg = M.ModelConfig(arch="gcn", dims=(3, 4, 2), activation="sigmoid")
    params = M.init_params(cfg, 1)
    x = rng.normal(size=(6, 3))
    p1 = M.propagation_matrix(cfg, g)
    p2 = M.propagation_matrix(cfg, sub)
    got = A.empirical_discrepancy(params, x, p1, p2)

    d1, d2 = p1.densify(), p2.densify()
    w1, b1 = params.layers[0]["w"].data, params.layers[0]["b"].data
    w2, b2 = params.layers[1]["w"].data, params.layers[1]["b"].data
    h1 = expit(d1 @ x @ w1 + b1)
    h2 = expit(d2 @ x @ w1 + b1)
    o1 = d1 @ h1 @ w2 + b2
    o2 = d2 @ h2 @ w2 + b2
    expected = [np.linalg.norm(h1 - h2, 2), np.linalg.norm(o1 - o2, 2)]
    np.testing.assert_allclose(got, expected, atol=1e-10)
    assert got[0] > 0
