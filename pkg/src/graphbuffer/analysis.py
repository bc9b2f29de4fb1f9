"""Discrepancy-bound theory as executable checks.

Covers activation Lipschitz constants, power-iteration spectral norms, the
layer-bound constants (C1, C2) per architecture, Monte-Carlo verification of
the bounds on random graphs, the no-input-independent-constant witness
search, and the edge-awareness/stability conditions of buffer blocks.

All norm arithmetic here is dense and exact (node counts are capped), so a
reported violation means the inequality itself failed, not the estimator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erf as _erf, expit as _expit

from . import buffer as B
from . import models as M
from .graph import Graph, NormScheme, RANDOM_WALK, SYMMETRIC, drop_edges, node_degrees, normalize
from .tensor import Matrix

# sup of |derivative| for each supported activation; relu/sigmoid/gelu are
# the documented constants, tanh and elu follow from the same argument
LIPSCHITZ_CONSTANTS = {
    "relu": 1.0,
    "sigmoid": 0.25,
    "gelu": 1.13,
    "tanh": 1.0,
    "elu": 1.0,
}

BOUND_SLACK = 1e-9

GCN_NORMALIZED = "gcn_normalized"
GCN_REGULAR = "gcn_regular"
SAGE = "sage"
GIN = "gin"
MLP = "mlp"


class ConvergenceError(RuntimeError):
    def __init__(self, message, last_estimate):
        super().__init__(message)
        self.last_estimate = last_estimate


class SearchExhaustedError(RuntimeError):
    """No witness found within the attempt budget (degenerate instance)."""


def lipschitz_constant(kind: str) -> float:
    try:
        return LIPSCHITZ_CONSTANTS[kind]
    except KeyError:
        raise ValueError(f"unsupported activation kind {kind!r}") from None


def _apply_activation(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return _expit(x)
    if kind == "gelu":
        return 0.5 * x * (1.0 + _erf(x / np.sqrt(2.0)))
    if kind == "tanh":
        return np.tanh(x)
    if kind == "elu":
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    raise ValueError(f"unsupported activation kind {kind!r}")


def spectral_norm(m, tol: float = 1e-12, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest singular value by power iteration on M^T M."""
    a = m.data if isinstance(m, Matrix) else np.asarray(m, dtype=np.float64)
    if a.size == 0:
        return 0.0
    v = np.random.default_rng(seed).normal(size=a.shape[1])
    norm = np.linalg.norm(v)
    if norm == 0:
        v = np.ones(a.shape[1])
        norm = np.linalg.norm(v)
    v /= norm
    prev = np.inf
    for _ in range(max_iter):
        av = a @ v
        est = np.linalg.norm(av)
        if est == 0.0:
            return 0.0
        if abs(est - prev) < tol:
            return float(est)
        prev = est
        v = a.T @ av
        v /= np.linalg.norm(v)
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations", float(prev)
    )


def dense_norm2(a: np.ndarray) -> float:
    """Exact spectral norm via SVD; the oracle-grade path for bound checks."""
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def mlp_cascade_bound(weights: Sequence[np.ndarray], activation: str) -> float:
    """Output-vs-intermediate discrepancy constant of a stack of dense layers."""
    c = 1.0
    l_sigma = lipschitz_constant(activation)
    for w in weights:
        c *= l_sigma * dense_norm2(np.asarray(w))
    return c


def gnn_layer_bound(
    arch: str,
    weights: dict[str, np.ndarray],
    a1: np.ndarray,
    a2: np.ndarray,
    num_nodes: int,
    activation: str,
) -> tuple[float, float]:
    """(C1, C2) for one layer; a1/a2 are the operators the formula expects.

    Normalized GCN and SAGE take normalized adjacencies; regular GCN and GIN
    take raw ones. C2 vanishes when the operators agree.
    """
    l_sigma = lipschitz_constant(activation)
    da = dense_norm2(a1 - a2)
    if arch == GCN_NORMALIZED:
        c1 = l_sigma * dense_norm2(weights["w"])
        return c1, c1 * num_nodes * da
    if arch == GCN_REGULAR:
        w_norm = dense_norm2(weights["w"])
        return l_sigma * dense_norm2(a1) * w_norm, l_sigma * num_nodes * w_norm * da
    if arch == SAGE:
        w1 = dense_norm2(weights["w1"])
        w2 = dense_norm2(weights["w2"])
        return l_sigma * (w1 + w2), l_sigma * num_nodes * w1 * da
    if arch == GIN:
        c = mlp_cascade_bound([weights["wa"], weights["wb"]], "relu")
        eps = float(weights.get("eps", 0.0))
        return c * (dense_norm2(a1) + abs(1.0 + eps)), c * num_nodes * da
    raise ValueError(f"unsupported architecture tag {arch!r}")


# ---------------------------------------------------------------------------
# Monte-Carlo bound verification


@dataclass
class BoundReport:
    arch: str
    layer: int
    c1: float
    c2_max: float
    trials: int
    max_ratio: float
    violations: int
    slack: float = BOUND_SLACK

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "layer": self.layer,
            "c1": self.c1,
            "c2_max": self.c2_max,
            "trials": self.trials,
            "max_ratio": self.max_ratio,
            "violations": self.violations,
            "slack": self.slack,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _scaled_representation(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Gaussian representations rescaled into the ||H||_2 <= |V| regime."""
    h = rng.normal(size=(n, d))
    norm = dense_norm2(h)
    if norm > n:
        h *= n / norm
    return h


def _layer_output(arch, weights, op, h, eps, activation):
    if arch in (GCN_NORMALIZED, GCN_REGULAR):
        return _apply_activation(activation, op @ h @ weights["w"])
    if arch == SAGE:
        return _apply_activation(activation, op @ h @ weights["w1"] + h @ weights["w2"])
    if arch == GIN:
        z = op @ h + (1.0 + eps) * h
        return np.maximum(z @ weights["wa"], 0.0) @ weights["wb"]
    raise ValueError(arch)


def _operator(arch: str, g: Graph) -> np.ndarray:
    if arch in (GCN_REGULAR, GIN):
        return g.adjacency.densify()
    if arch == SAGE:
        return normalize(g, NormScheme(RANDOM_WALK, add_self_loops=True)).densify()
    return None  # caller picks the scheme for GCN_NORMALIZED


def verify_bound(
    arch: str,
    g: Graph,
    p: float,
    trials: int,
    rng: np.random.Generator,
    activation: str = "relu",
    d_in: int = 8,
    d_out: int = 6,
    scheme: str = SYMMETRIC,
    node_cap: int = 256,
) -> BoundReport:
    """Sample (H1, H2, mask) triples and check LHS <= C1 * dH + C2 + slack.

    The clean graph supplies the first operator, the edge-dropped graph the
    second; violations are counted, never raised.
    """
    n = g.num_nodes
    if n > node_cap:
        raise ValueError(f"graph has {n} nodes; dense verification is capped at {node_cap}")

    weights = {
        "w": rng.normal(size=(d_in, d_out)) / np.sqrt(d_in),
        "w1": rng.normal(size=(d_in, d_out)) / np.sqrt(d_in),
        "w2": rng.normal(size=(d_in, d_out)) / np.sqrt(d_in),
        "wa": rng.normal(size=(d_in, d_out)) / np.sqrt(d_in),
        "wb": rng.normal(size=(d_out, d_out)) / np.sqrt(d_out),
    }
    eps = float(rng.normal() * 0.1)
    weights_for_bound = dict(weights, eps=eps)

    if arch == GCN_NORMALIZED:
        sch = NormScheme(scheme, add_self_loops=True)
        op1 = normalize(g, sch).densify()
    else:
        op1 = _operator(arch, g)

    c1 = None
    c2_max = 0.0
    max_ratio = 0.0
    violations = 0
    for _ in range(trials):
        h1 = _scaled_representation(rng, n, d_in)
        h2 = _scaled_representation(rng, n, d_in)
        _, sub = drop_edges(g, p, rng)
        if arch == GCN_NORMALIZED:
            op2 = normalize(sub, NormScheme(scheme, add_self_loops=True)).densify()
        else:
            op2 = _operator(arch, sub)
        c1, c2 = gnn_layer_bound(arch, weights_for_bound, op1, op2, n, activation)
        c2_max = max(c2_max, c2)
        out1 = _layer_output(arch, weights, op1, h1, eps, activation)
        out2 = _layer_output(arch, weights, op2, h2, eps, activation)
        lhs = dense_norm2(out1 - out2)
        rhs = c1 * dense_norm2(h1 - h2) + c2
        if rhs > 0:
            max_ratio = max(max_ratio, lhs / rhs)
        if lhs > rhs + BOUND_SLACK:
            violations += 1
    return BoundReport(arch, 1, float(c1), c2_max, trials, max_ratio, violations)


def verify_mlp_cascade(
    depth: int,
    trials: int,
    rng: np.random.Generator,
    activation: str = "relu",
    n: int = 16,
    d: int = 8,
) -> BoundReport:
    """Check the multi-layer cascade constant on random input pairs."""
    weights = [rng.normal(size=(d, d)) / np.sqrt(d) for _ in range(depth)]
    c = mlp_cascade_bound(weights, activation)
    max_ratio = 0.0
    violations = 0
    for _ in range(trials):
        h1 = _scaled_representation(rng, n, d)
        h2 = _scaled_representation(rng, n, d)
        o1, o2 = h1, h2
        for w in weights:
            o1 = _apply_activation(activation, o1 @ w)
            o2 = _apply_activation(activation, o2 @ w)
        lhs = dense_norm2(o1 - o2)
        rhs = c * dense_norm2(h1 - h2)
        if rhs > 0:
            max_ratio = max(max_ratio, lhs / rhs)
        if lhs > rhs + BOUND_SLACK:
            violations += 1
    return BoundReport(MLP, depth, c, 0.0, trials, max_ratio, violations)


# ---------------------------------------------------------------------------
# the no-input-independent-constant witness


def theorem_no_constant_witness(
    w: np.ndarray,
    g: Graph,
    rng: np.random.Generator,
    activation: str = "relu",
    scheme: str = SYMMETRIC,
    aggregated: bool = True,
    max_attempts: int = 100,
    min_discrepancy: float = 1e-6,
) -> dict:
    """Find identical inputs whose layer outputs differ under dropped edges.

    Such a witness shows no constant C can satisfy
    ||out1 - out2|| <= C * ||in1 - in2|| independent of the input. For MLPs
    (``aggregated=False``) or zero weights the search must exhaust.
    """
    w = np.asarray(w, dtype=np.float64)
    op1 = normalize(g, NormScheme(scheme, add_self_loops=True)).densify()
    for attempt in range(1, max_attempts + 1):
        h = rng.normal(size=(g.num_nodes, w.shape[0]))
        if aggregated and g.num_edges:
            keep = rng.random(g.num_edges) >= 0.5
            if keep.all():
                keep[rng.integers(0, g.num_edges)] = False
            sub = Graph(g.num_nodes, g.edges[keep])
            op2 = normalize(sub, NormScheme(scheme, add_self_loops=True)).densify()
        else:
            op2 = op1
        if aggregated:
            out1 = _apply_activation(activation, op1 @ h @ w)
            out2 = _apply_activation(activation, op2 @ h @ w)
        else:
            out1 = _apply_activation(activation, h @ w)
            out2 = _apply_activation(activation, h @ w)
        disc = dense_norm2(out1 - out2)
        if disc > min_discrepancy:
            return {
                "attempt": attempt,
                "output_discrepancy": disc,
                "input_discrepancy": 0.0,
            }
    raise SearchExhaustedError(
        f"no witness with output discrepancy > {min_discrepancy} in {max_attempts} attempts"
    )


# ---------------------------------------------------------------------------
# buffer conditions (edge-awareness and stability)


@dataclass
class ConditionReport:
    variant: str
    trials: int
    c1_holds: int
    c2_strict_holds: int
    qualified: int

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "trials": self.trials,
            "c1_holds": self.c1_holds,
            "c2_strict_holds": self.c2_strict_holds,
            "qualified": self.qualified,
        }


def buffer_condition_single(
    variant: str,
    prefix: np.ndarray,
    w: np.ndarray,
    g: Graph,
    sub: Graph,
    scheme: NormScheme | None = None,
) -> tuple[bool, bool, bool]:
    """(edge-aware, strictly-stable, norms-equal) for one clean/dropped pair."""
    from .tensor import constant

    deg_clean = node_degrees(g).astype(np.float64)
    deg_dropped = node_degrees(sub).astype(np.float64)
    prop_clean = prop_dropped = None
    if variant == B.PLAIN_AGG:
        scheme = scheme or NormScheme(SYMMETRIC, add_self_loops=True)
        prop_clean = normalize(g, scheme)
        prop_dropped = normalize(sub, scheme)
    h = constant(prefix)
    wv = constant(w)
    out_clean = B.buffer_forward(variant, [h], deg_clean, wv, cfg_scheme_prop=prop_clean).data
    out_dropped = B.buffer_forward(variant, [h], deg_dropped, wv, cfg_scheme_prop=prop_dropped).data
    c1 = bool(np.any(out_clean != out_dropped))
    n_clean = float(np.linalg.norm(out_clean))
    n_dropped = float(np.linalg.norm(out_dropped))
    return c1, n_clean < n_dropped, n_clean == n_dropped


def check_buffer_conditions(
    variant: str,
    trials: int,
    rng: np.random.Generator,
    n_range: tuple[int, int] = (4, 12),
    d_in: int = 5,
    d_out: int = 3,
) -> ConditionReport:
    """Random qualified trials: nonzero weights, a drop touching a node whose
    buffer-input row is nonzero. Degenerate draws are resampled, not counted."""
    if trials < 1:
        raise ValueError("need at least one trial")
    c1_holds = 0
    c2_holds = 0
    qualified = 0
    while qualified < trials:
        n = int(rng.integers(*n_range))
        dense = np.triu(rng.random((n, n)) < 0.4, k=1)
        g = Graph(n, np.argwhere(dense))
        if g.num_edges == 0:
            continue
        keep = rng.random(g.num_edges) >= 0.5
        if keep.all():
            keep[rng.integers(0, g.num_edges)] = False
        sub = Graph(n, g.edges[keep])
        prefix = rng.normal(size=(n, d_in))
        w = rng.normal(size=(d_in, d_out))
        if not w.any():
            continue
        reduced = node_degrees(sub) < node_degrees(g)
        m = prefix @ w
        if not np.any(reduced & (np.abs(m).sum(axis=1) > 0)):
            continue
        qualified += 1
        c1, c2_strict, _ = buffer_condition_single(variant, prefix, w, g, sub)
        c1_holds += int(c1)
        c2_holds += int(c2_strict)
    return ConditionReport(variant, trials, c1_holds, c2_holds, qualified)


# ---------------------------------------------------------------------------
# empirical per-layer discrepancies


def empirical_discrepancy(params: M.ModelParams, x, prop1, prop2) -> list[float]:
    """||H1^l - H2^l||_2 per layer between two propagation operators."""
    t1 = M.forward(params, x, prop1, mode="eval")
    t2 = M.forward(params, x, prop2, mode="eval")
    return [dense_norm2(a.data - b.data) for a, b in zip(t1.h[1:], t2.h[1:])]
