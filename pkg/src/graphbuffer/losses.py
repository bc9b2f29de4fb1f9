"""Training objectives and monitoring decompositions.

The differentiable pieces (row-wise KL, cross-entropy) are fused tape ops
with hand-derived gradients; everything downstream composes them. The
monitoring path works on plain arrays and never touches a tape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .graph import Graph, drop_edges_seeded
from .tensor import ContractError, DimensionError, Matrix, Tape

RC = "rc"
RC_TRAIN_ONLY = "rc_train_only"
CROSS_ENTROPY = "cross_entropy"
PSEUDO_LABEL = "pseudo_label"
SELF_DISTILL = "self_distill"
OBJECTIVES = (RC, RC_TRAIN_ONLY, CROSS_ENTROPY, PSEUDO_LABEL, SELF_DISTILL)


def _row_ids(node_set, rows: int) -> np.ndarray:
    if node_set is None:
        return np.arange(rows)
    ids = np.asarray(node_set, dtype=np.int64).ravel()
    if len(ids) and (ids.min() < 0 or ids.max() >= rows):
        raise ContractError("node set contains out-of-range ids")
    return ids


def kl_rows(logp: Matrix, logq: Matrix, node_set=None, tape: Tape | None = None) -> Matrix:
    """Mean over the node set of sum_c exp(logp) * (logp - logq).

    Differentiable through both arguments; rows must be log-distributions.
    """
    if logp.shape != logq.shape:
        raise DimensionError(f"kl_rows: {logp.shape} vs {logq.shape}")
    ids = _row_ids(node_set, logp.rows)
    if len(ids) == 0:
        raise ContractError("kl_rows over an empty node set")
    lp = logp.data[ids]
    lq = logq.data[ids]
    p = np.exp(lp)
    diff = lp - lq
    val = float((p * diff).sum() / len(ids))

    def vjp(g):
        s = g[0, 0] / len(ids)
        gp = None
        if logp.requires_grad:
            gp = np.zeros(logp.shape)
            gp[ids] = s * (p * diff + p)
        gq = None
        if logq.requires_grad:
            gq = np.zeros(logq.shape)
            gq[ids] = -s * p
        return gp, gq

    return T.record_op(tape, np.array([[val]]), (logp, logq), vjp)


def kl_rows_np(logp: np.ndarray, logq: np.ndarray, node_set=None) -> float:
    """Non-differentiable KL for monitoring paths."""
    ids = _row_ids(node_set, logp.shape[0])
    p = np.exp(logp[ids])
    return float((p * (logp[ids] - logq[ids])).sum() / len(ids))


def cross_entropy(logq: Matrix, labels, node_set=None, tape: Tape | None = None) -> Matrix:
    """Mean negative log-likelihood over the node set."""
    labels = np.asarray(labels, dtype=np.int64)
    ids = _row_ids(node_set, logq.rows)
    if len(ids) == 0:
        raise ContractError("cross_entropy over an empty node set")
    y = labels[ids]
    if len(y) and (y.min() < 0 or y.max() >= logq.cols):
        raise ContractError("label out of range for prediction columns")
    val = float(-logq.data[ids, y].sum() / len(ids))

    def vjp(g):
        if not logq.requires_grad:
            return (None,)
        gq = np.zeros(logq.shape)
        np.subtract.at(gq, (ids, y), g[0, 0] / len(ids))
        return (gq,)

    return T.record_op(tape, np.array([[val]]), (logq,), vjp)


# ---------------------------------------------------------------------------
# the robustness-controlled loss


@dataclass(frozen=True)
class LossReport:
    """Scalar summary of one objective evaluation."""

    bias: float
    robust: float
    lam: float
    total: float
    n_bias: int
    n_robust: int


def l_bias(logq_frozen: np.ndarray, logq_buffered: Matrix, train_ids, tape: Tape | None = None) -> Matrix:
    """KL(Q || Q_B) on the clean graph over training nodes; teacher is constant."""
    teacher = T.constant(logq_frozen)
    return kl_rows(teacher, logq_buffered, train_ids, tape)


def l_robust(
    logq_clean: Matrix,
    logq_dropped: Matrix,
    node_set=None,
    tape: Tape | None = None,
    stop_clean_gradient: bool = False,
) -> Matrix:
    """KL(Q_B(G) || Q_B(G_dropped)); gradient flows through both by default."""
    clean = logq_clean.detach() if stop_clean_gradient else logq_clean
    return kl_rows(clean, logq_dropped, node_set, tape)


def l_rc(bias: Matrix, robust: Matrix, lam: float, tape: Tape | None = None):
    """total = bias + lam * robust; returns the tape node and a float report."""
    if lam < 0:
        raise ContractError("lambda must be non-negative")
    total = T.add(bias, T.scale(robust, lam, tape), tape)
    report = LossReport(
        bias=float(bias.data[0, 0]),
        robust=float(robust.data[0, 0]),
        lam=float(lam),
        total=float(total.data[0, 0]),
        n_bias=0,
        n_robust=0,
    )
    return total, report


def label_proxy_robustness(
    logq_clean: np.ndarray, logq_dropped: np.ndarray, labels, node_set=None
) -> float:
    """Signed mean difference of true-class log-probabilities (may be negative)."""
    labels = np.asarray(labels, dtype=np.int64)
    ids = _row_ids(node_set, logq_clean.shape[0])
    y = labels[ids]
    return float((logq_clean[ids, y] - logq_dropped[ids, y]).mean())


def monitor_decomposition(
    logq_clean: np.ndarray,
    predict_on_graph: Callable[[Graph], np.ndarray],
    g: Graph,
    labels,
    test_ids,
    p: float,
    seed: int,
    draws: int = 10,
) -> tuple[float, float]:
    """Test-set (bias, robustness) terms for loss-curve monitoring.

    Bias approximates the divergence from the empirical label distribution
    (one-hot), i.e. mean negative true-class log-probability. Robustness is
    KL between clean and edge-dropped predictions averaged over mask draws.
    Reporting path only: nothing here is differentiable.
    """
    labels = np.asarray(labels, dtype=np.int64)
    ids = _row_ids(test_ids, logq_clean.shape[0])
    bias = float(-logq_clean[ids, labels[ids]].mean())
    if p == 0.0 or draws == 0:
        return bias, 0.0
    robust = 0.0
    for k in range(draws):
        _, sub = drop_edges_seeded(g, p, seed=seed + k)
        robust += kl_rows_np(logq_clean, predict_on_graph(sub), ids)
    return bias, robust / draws


# ---------------------------------------------------------------------------
# objective assembly (shared by buffer tuning and its ablations)


def rc_objective(
    *,
    logq_frozen_clean: np.ndarray,
    logq_clean: Matrix,
    logq_dropped: Matrix,
    train_ids,
    lam: float,
    robust_ids=None,
    stop_clean_gradient: bool = False,
    tape: Tape | None = None,
):
    """The robustness-controlled loss; robust_ids=None means all nodes."""
    bias = l_bias(logq_frozen_clean, logq_clean, train_ids, tape)
    robust = l_robust(
        logq_clean, logq_dropped, robust_ids, tape, stop_clean_gradient=stop_clean_gradient
    )
    total, report = l_rc(bias, robust, lam, tape)
    n_bias = len(_row_ids(train_ids, logq_clean.rows))
    n_robust = len(_row_ids(robust_ids, logq_clean.rows))
    return total, LossReport(report.bias, report.robust, report.lam, report.total, n_bias, n_robust)


def ablation_objective(
    kind: str,
    *,
    logq_frozen_clean: np.ndarray,
    logq_clean: Matrix,
    logq_dropped: Matrix,
    labels,
    train_ids,
    tape: Tape | None = None,
):
    """Alternative buffer-training objectives.

    pseudo_label: cross-entropy against the frozen model's argmax classes on
    all nodes, on the DropEdge forward. self_distill: KL from the frozen
    predictions on the clean forward, all nodes. cross_entropy: supervised
    loss on training nodes, DropEdge forward.
    """
    if kind == PSEUDO_LABEL:
        pseudo = np.argmax(logq_frozen_clean, axis=1)
        total = cross_entropy(logq_dropped, pseudo, None, tape)
    elif kind == SELF_DISTILL:
        total = kl_rows(T.constant(logq_frozen_clean), logq_clean, None, tape)
    elif kind == CROSS_ENTROPY:
        total = cross_entropy(logq_dropped, labels, train_ids, tape)
    else:
        raise ContractError(f"unknown ablation objective {kind!r}")
    val = float(total.data[0, 0])
    report = LossReport(bias=val, robust=0.0, lam=0.0, total=val,
                        n_bias=logq_clean.rows, n_robust=0)
    return total, report
