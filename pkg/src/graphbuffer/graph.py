"""Undirected graphs: storage, normalization, edge dropping, synthetic data, disk format.

Graphs are immutable after construction. The canonical edge list stores each
undirected edge once as a (u, v) pair with u < v; the CSR adjacency carries
both directions. Self-loops are never stored; normalization can add them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse as _sparse

from .tensor import CsrMatrix


class DegreeZeroError(ValueError):
    """A normalized scheme hit an isolated node without self-loops."""


class DatasetFormatError(ValueError):
    """An on-disk dataset directory violates the format."""


REGULAR = "regular"
RANDOM_WALK = "random_walk"
SYMMETRIC = "symmetric"
_SCHEMES = (REGULAR, RANDOM_WALK, SYMMETRIC)


@dataclass(frozen=True)
class NormScheme:
    kind: str = SYMMETRIC
    add_self_loops: bool = True

    def __post_init__(self):
        if self.kind not in _SCHEMES:
            raise ValueError(f"unknown normalization scheme {self.kind!r}")


def _canonical_edges(num_nodes: int, pairs) -> np.ndarray:
    """Symmetrize, deduplicate, strip self-loops; rows sorted, u < v."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) and (pairs.min() < 0 or pairs.max() >= num_nodes):
        raise DatasetFormatError("edge endpoint out of range")
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    lo = pairs.min(axis=1)
    hi = pairs.max(axis=1)
    canon = np.stack([lo, hi], axis=1)
    if len(canon) == 0:
        return canon
    return np.unique(canon, axis=0)


class Graph:
    """Undirected simple graph with canonical edge list and CSR adjacency."""

    __slots__ = ("num_nodes", "edges", "_adjacency")

    def __init__(self, num_nodes: int, edges):
        self.num_nodes = int(num_nodes)
        self.edges = _canonical_edges(self.num_nodes, edges)
        self._adjacency = None

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def adjacency(self) -> CsrMatrix:
        if self._adjacency is None:
            self._adjacency = _build_csr(
                self.num_nodes, self.edges, np.ones(2 * len(self.edges)), diag=None
            )
        return self._adjacency

    def edge_key_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def __repr__(self):
        return f"Graph(|V|={self.num_nodes}, |E|={self.num_edges})"


def _build_csr(n: int, edges: np.ndarray, values: np.ndarray, diag: np.ndarray | None) -> CsrMatrix:
    """CSR over both edge directions, optionally with a diagonal."""
    if len(edges):
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
    else:
        rows = np.empty(0, dtype=np.int64)
        cols = np.empty(0, dtype=np.int64)
    vals = values
    if diag is not None:
        rows = np.concatenate([rows, np.arange(n)])
        cols = np.concatenate([cols, np.arange(n)])
        vals = np.concatenate([vals, diag])
    sp = _sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    sp.sort_indices()
    return CsrMatrix(n, n, sp.indptr, sp.indices, sp.data)


def node_degrees(g: Graph) -> np.ndarray:
    """Neighbor counts, self-loops excluded (none are stored)."""
    deg = np.zeros(g.num_nodes, dtype=np.int64)
    if len(g.edges):
        np.add.at(deg, g.edges[:, 0], 1)
        np.add.at(deg, g.edges[:, 1], 1)
    return deg


def normalize(g: Graph, scheme: NormScheme) -> CsrMatrix:
    """The propagation matrix for a scheme, computed on A+I when self-loops are on."""
    n = g.num_nodes
    deg = node_degrees(g).astype(np.float64)
    if scheme.add_self_loops:
        deg = deg + 1.0
    elif scheme.kind != REGULAR and np.any(deg == 0):
        bad = int(np.argmin(deg))
        raise DegreeZeroError(
            f"node {bad} has degree 0; {scheme.kind} normalization needs self-loops"
        )
    edges = g.edges
    if scheme.kind == REGULAR:
        vals = np.ones(2 * len(edges))
        diag = np.ones(n) if scheme.add_self_loops else None
    elif scheme.kind == RANDOM_WALK:
        vals = np.concatenate([1.0 / deg[edges[:, 0]], 1.0 / deg[edges[:, 1]]])
        diag = 1.0 / deg if scheme.add_self_loops else None
    else:
        inv_sqrt = 1.0 / np.sqrt(deg)
        w = inv_sqrt[edges[:, 0]] * inv_sqrt[edges[:, 1]]
        vals = np.concatenate([w, w])
        diag = inv_sqrt * inv_sqrt if scheme.add_self_loops else None
    return _build_csr(n, edges, vals, diag)


@dataclass(frozen=True)
class EdgeMask:
    """Per-canonical-edge keep flags; both directions of an edge share one flag."""

    keep: np.ndarray
    p: float
    seed: int | None = None

    @property
    def num_kept(self) -> int:
        return int(self.keep.sum())


def drop_edges(g: Graph, p: float, rng: np.random.Generator, seed: int | None = None):
    """Keep each undirected edge independently with probability 1-p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"drop rate must be in [0, 1], got {p}")
    keep = rng.random(g.num_edges) >= p
    mask = EdgeMask(keep=keep, p=float(p), seed=seed)
    return mask, Graph(g.num_nodes, g.edges[keep])


def drop_edges_seeded(g: Graph, p: float, seed: int):
    return drop_edges(g, p, np.random.default_rng(seed), seed=seed)


def node_homophily(g: Graph, labels) -> np.ndarray:
    """Fraction of neighbors sharing each node's label; NaN on isolated nodes."""
    labels = np.asarray(labels)
    if labels.shape[0] != g.num_nodes:
        raise ValueError("labels must cover every node")
    adj = g.adjacency
    same = (labels[adj.indices] == np.repeat(labels, np.diff(adj.indptr))).astype(np.float64)
    counts = np.diff(adj.indptr)
    out = np.full(g.num_nodes, np.nan)
    nonzero = counts > 0
    if same.size:
        # reduceat over the padded stream; entries for empty rows are garbage
        # but get masked out below
        sums = np.add.reduceat(np.append(same, 0.0), adj.indptr[:-1])
        out[nonzero] = sums[nonzero] / counts[nonzero]
    return out


# ---------------------------------------------------------------------------
# dataset bundles


@dataclass
class DatasetBundle:
    """A graph plus node features, labels, and named train/val/test splits."""

    name: str
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    splits: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        n = self.graph.num_nodes
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DatasetFormatError("features must be |V| x d0")
        if not np.isfinite(self.features).all():
            raise DatasetFormatError("features contain NaN or Inf")
        if self.labels.shape != (n,):
            raise DatasetFormatError("labels must have one entry per node")
        if len(self.labels) and self.labels.min() < 0:
            raise DatasetFormatError("labels must be non-negative class indices")
        for key, split in self.splits.items():
            parts = [np.asarray(split[k], dtype=np.int64) for k in ("train", "val", "test")]
            split["train"], split["val"], split["test"] = parts
            cat = np.concatenate(parts)
            if len(cat) and (cat.min() < 0 or cat.max() >= n):
                raise DatasetFormatError(f"{key}: split id out of range")
            if len(np.unique(cat)) != len(cat):
                raise DatasetFormatError(f"{key}: split lists overlap")

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def split(self, key: str = "split_0") -> dict[str, np.ndarray]:
        return self.splits[key]


@dataclass(frozen=True)
class SbmConfig:
    """Stochastic block model with class-separated Gaussian features."""

    n: int
    classes: int
    p_in: float
    p_out: float
    feature_dim: int = 16
    separation: float = 1.0
    noise: float = 1.0
    seed: int = 0
    name: str = "sbm"

    def __post_init__(self):
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out <= p_in <= 1")
        if self.noise <= 0.0:
            raise ValueError("feature noise must be positive")
        if self.n < 1 or self.classes < 1 or self.feature_dim < 1:
            raise ValueError("sizes must be positive")


def _split_indices(n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """An independently randomized 10/10/80 split, each list sorted."""
    perm = rng.permutation(n)
    n_train = int(round(0.10 * n))
    n_val = int(round(0.10 * n))
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train:n_train + n_val]),
        "test": np.sort(perm[n_train + n_val:]),
    }


def generate_sbm(cfg: SbmConfig) -> DatasetBundle:
    """Deterministic block-model dataset; features are float32-exact for round-trips."""
    rng = np.random.default_rng(cfg.seed)
    labels = np.arange(cfg.n, dtype=np.int64) % cfg.classes

    if cfg.feature_dim >= cfg.classes:
        means = np.zeros((cfg.classes, cfg.feature_dim))
        means[np.arange(cfg.classes), np.arange(cfg.classes)] = cfg.separation
    else:
        raw = rng.normal(size=(cfg.classes, cfg.feature_dim))
        means = cfg.separation * raw / np.linalg.norm(raw, axis=1, keepdims=True)

    chunks = []
    chunk_rows = max(1, min(cfg.n, 2_000_000 // max(cfg.n, 1)))
    for start in range(0, cfg.n, chunk_rows):
        stop = min(start + chunk_rows, cfg.n)
        probs = np.where(
            labels[start:stop, None] == labels[None, :], cfg.p_in, cfg.p_out
        )
        hits = rng.random((stop - start, cfg.n)) < probs
        r, c = np.nonzero(hits)
        r = r + start
        upper = r < c
        if upper.any():
            chunks.append(np.stack([r[upper], c[upper]], axis=1))
    edges = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)

    features = means[labels] + cfg.noise * rng.normal(size=(cfg.n, cfg.feature_dim))
    features = features.astype(np.float32).astype(np.float64)
    splits = {"split_0": _split_indices(cfg.n, rng)}
    return DatasetBundle(cfg.name, Graph(cfg.n, edges), features, labels, splits)


# ---------------------------------------------------------------------------
# disk format: meta.json / edges.bin / features.bin / labels.bin / splits.json


def save_dataset(bundle: DatasetBundle, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": bundle.name,
        "num_nodes": bundle.graph.num_nodes,
        "num_features": bundle.num_features,
        "num_classes": bundle.num_classes,
    }
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    (out / "edges.bin").write_bytes(
        np.ascontiguousarray(bundle.graph.edges, dtype="<u4").tobytes()
    )
    (out / "features.bin").write_bytes(
        np.ascontiguousarray(bundle.features, dtype="<f4").tobytes()
    )
    (out / "labels.bin").write_bytes(
        np.ascontiguousarray(bundle.labels, dtype="<u2").tobytes()
    )
    splits = {
        key: {part: [int(i) for i in ids] for part, ids in split.items()}
        for key, split in bundle.splits.items()
    }
    (out / "splits.json").write_text(json.dumps(splits, sort_keys=True, indent=2) + "\n")


def load_dataset(in_dir) -> DatasetBundle:
    src = Path(in_dir)
    try:
        meta = json.loads((src / "meta.json").read_text())
    except FileNotFoundError:
        raise DatasetFormatError(f"{src}: missing meta.json") from None
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{src}: malformed meta.json: {exc}") from None
    for key in ("name", "num_nodes", "num_features", "num_classes"):
        if key not in meta:
            raise DatasetFormatError(f"meta.json missing key {key!r}")
    n, d0, c = int(meta["num_nodes"]), int(meta["num_features"]), int(meta["num_classes"])

    raw = (src / "edges.bin").read_bytes()
    if len(raw) % 8 != 0:
        raise DatasetFormatError("edges.bin length is not a multiple of 8 bytes")
    pairs = np.frombuffer(raw, dtype="<u4").astype(np.int64).reshape(-1, 2)

    raw = (src / "features.bin").read_bytes()
    if len(raw) != n * d0 * 4:
        raise DatasetFormatError(
            f"features.bin holds {len(raw)} bytes, expected {n * d0 * 4}"
        )
    features = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, d0)

    raw = (src / "labels.bin").read_bytes()
    if len(raw) != n * 2:
        raise DatasetFormatError(f"labels.bin holds {len(raw)} bytes, expected {n * 2}")
    labels = np.frombuffer(raw, dtype="<u2").astype(np.int64)
    if len(labels) and labels.max() >= c:
        raise DatasetFormatError(f"label {labels.max()} out of range for {c} classes")

    splits_raw = json.loads((src / "splits.json").read_text())
    splits = {
        key: {part: np.asarray(ids, dtype=np.int64) for part, ids in split.items()}
        for key, split in splits_raw.items()
    }
    return DatasetBundle(str(meta["name"]), Graph(n, pairs), features, labels, splits)
