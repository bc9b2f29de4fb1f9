"""Accuracy metrics, degree/homophily groupings, removal sweeps, report emission."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .graph import Graph, drop_edges_seeded, node_degrees, node_homophily
from .tensor import ContractError


def accuracy(logq: np.ndarray, labels, node_set=None) -> float:
    """Fraction of correct argmax predictions; ties break to the lowest class."""
    labels = np.asarray(labels)
    if node_set is None:
        ids = np.arange(logq.shape[0])
    else:
        ids = np.asarray(node_set, dtype=np.int64)
    if len(ids) == 0:
        raise ContractError("accuracy over an empty node set")
    pred = np.argmax(logq[ids], axis=1)
    return float(np.mean(pred == labels[ids]))


def _bottom_top_thirds(keys: np.ndarray, ids: np.ndarray):
    """Sort ids by (key, id) ascending; return (first third, last third)."""
    order = np.lexsort((ids, keys))
    ranked = ids[order]
    k = len(ranked) // 3
    return ranked[:k], ranked[len(ranked) - k:]


def degree_groups(g: Graph, test_set) -> tuple[np.ndarray, np.ndarray]:
    """(head, tail) thirds of the test set by full-graph degree."""
    ids = np.asarray(test_set, dtype=np.int64)
    if len(ids) == 0:
        raise ContractError("degree grouping needs a nonempty test set")
    deg = node_degrees(g)[ids]
    tail, head = _bottom_top_thirds(deg, ids)
    return head, tail


def homophily_groups(g: Graph, labels, test_set) -> tuple[np.ndarray, np.ndarray]:
    """(homophilous, heterophilous) thirds; degree-0 nodes are excluded."""
    ids = np.asarray(test_set, dtype=np.int64)
    if len(ids) == 0:
        raise ContractError("homophily grouping needs a nonempty test set")
    h = node_homophily(g, labels)[ids]
    defined = ~np.isnan(h)
    ids = ids[defined]
    heterophilous, homophilous = _bottom_top_thirds(h[defined], ids)
    return homophilous, heterophilous


def edge_removal_sweep(
    predict_on_graph: Callable[[Graph], np.ndarray],
    g: Graph,
    labels,
    test_set,
    ratios: Sequence[float],
    seeds: Sequence[int],
) -> dict[float, dict]:
    """Accuracy under random edge removal at inference.

    Each ratio is the fraction of edges KEPT (1.0 = intact graph). Per seed a
    kept-edge subgraph is sampled, the model renormalizes on it, and clean
    features are evaluated.
    """
    out: dict[float, dict] = {}
    for ratio in ratios:
        if not 0.0 <= ratio <= 1.0:
            raise ValueError(f"keep ratio must be in [0, 1], got {ratio}")
        accs = []
        for seed in seeds:
            _, sub = drop_edges_seeded(g, 1.0 - ratio, seed=int(seed))
            accs.append(accuracy(predict_on_graph(sub), labels, test_set))
        accs = np.asarray(accs)
        out[float(ratio)] = {"mean": float(accs.mean()), "std": _unbiased_std(accs),
                             "per_seed": [float(a) for a in accs]}
    return out


def _unbiased_std(vals: np.ndarray) -> float:
    """ddof=1 standard deviation; exactly 0 for constant samples."""
    if len(vals) < 2 or np.all(vals == vals[0]):
        return 0.0
    return float(vals.std(ddof=1))


@dataclass
class MetricsReport:
    """One evaluation run: overall plus structural-group accuracies."""

    model_tag: str
    seed: int
    split_id: str
    overall: float
    head: float
    tail: float
    head_size: int
    tail_size: int
    homophilous: float
    heterophilous: float
    homophilous_size: int
    heterophilous_size: int
    removal: dict = field(default_factory=dict)

    def scalar_metrics(self) -> dict[str, float]:
        vals = {
            "overall": self.overall,
            "head": self.head,
            "tail": self.tail,
            "homophilous": self.homophilous,
            "heterophilous": self.heterophilous,
        }
        for ratio, cell in sorted(self.removal.items()):
            vals[f"removal_{ratio}"] = cell["mean"]
        return vals

    def to_dict(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "seed": self.seed,
            "split_id": self.split_id,
            "overall": self.overall,
            "head": self.head,
            "tail": self.tail,
            "head_size": self.head_size,
            "tail_size": self.tail_size,
            "homophilous": self.homophilous,
            "heterophilous": self.heterophilous,
            "homophilous_size": self.homophilous_size,
            "heterophilous_size": self.heterophilous_size,
            "removal": {str(k): v for k, v in sorted(self.removal.items())},
        }


def compute_metrics(
    logq: np.ndarray,
    g: Graph,
    labels,
    test_set,
    model_tag: str = "model",
    seed: int = 0,
    split_id: str = "split_0",
    removal: dict | None = None,
) -> MetricsReport:
    head, tail = degree_groups(g, test_set)
    homo, hetero = homophily_groups(g, labels, test_set)
    return MetricsReport(
        model_tag=model_tag,
        seed=seed,
        split_id=split_id,
        overall=accuracy(logq, labels, test_set),
        head=accuracy(logq, labels, head),
        tail=accuracy(logq, labels, tail),
        head_size=len(head),
        tail_size=len(tail),
        homophilous=accuracy(logq, labels, homo),
        heterophilous=accuracy(logq, labels, hetero),
        homophilous_size=len(homo),
        heterophilous_size=len(hetero),
        removal=removal or {},
    )


def aggregate_reports(reports: Sequence[MetricsReport]) -> dict:
    """Mean and unbiased std per scalar metric across runs."""
    agg: dict[str, dict[str, float]] = {}
    if not reports:
        return agg
    keys = reports[0].scalar_metrics().keys()
    for key in keys:
        vals = np.asarray([r.scalar_metrics().get(key, np.nan) for r in reports])
        agg[key] = {"mean": float(vals.mean()), "std": _unbiased_std(vals)}
    return agg


def emit_report(reports: Sequence[MetricsReport], path=None) -> dict:
    """The report document: {runs: [...], aggregate: {...}}, stable key order."""
    doc = {
        "runs": [r.to_dict() for r in reports],
        "aggregate": aggregate_reports(reports),
    }
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return doc
