"""Adam optimization, the two-step training pipeline, and grid sweeps.

Step one pretrains a base model with supervised cross-entropy (optionally
under DropEdge, for the augmentation baseline). Step two freezes it, attaches
zero buffers, and tunes only the buffer weights with the robustness-controlled
loss on fresh edge-drop masks each epoch. Early stopping tracks clean-graph
validation accuracy; ties resolve to the earliest epoch, and the initial
state counts as a candidate, so tuning can never end below where it started.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import buffer as B
from . import losses as L
from . import models as M
from . import tensor as T
from .evaluation import accuracy
from .graph import DatasetBundle, drop_edges_seeded
from .tensor import ContractError, Matrix, Tape


class TrainingError(RuntimeError):
    """Training diverged or violated an integrity contract."""


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    weight_decay: float = 0.0
    max_epochs: int = 2000
    patience: int = 100
    seed: int = 0
    drop_edge: float = 0.5
    lam: float = 1.0
    dropout: float = 0.0
    objective: str = L.RC
    stop_clean_gradient: bool = False
    monitor: bool = False
    monitor_draws: int = 10

    def __post_init__(self):
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if not 0.0 <= self.drop_edge <= 1.0:
            raise ValueError("drop_edge must be in [0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.objective not in L.OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")


def epoch_seed(seed: int, epoch: int) -> int:
    # stable derivation for per-epoch masks, independent of generator state
    return (seed * 1_000_003 + epoch) % (2**31 - 1)


class AdamState:
    """First/second moment accumulators per parameter plus the step counter."""

    def __init__(self, params: Sequence[Matrix]):
        self.m = {p: np.zeros(p.shape) for p in params}
        self.v = {p: np.zeros(p.shape) for p in params}
        self.step_count = 0


def adam_step(
    params: Sequence[Matrix],
    grads: dict[Matrix, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> None:
    """Bias-corrected Adam with classic L2 decay added to the gradient."""
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for p in params:
        if not p.requires_grad:
            raise ContractError(f"frozen parameter {p.name!r} passed to adam_step")
        g = grads.get(p)
        if g is None:
            continue
        if weight_decay:
            g = g + weight_decay * p.data
        m = state.m[p]
        v = state.v[p]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float | None
    bias_term: float | None
    robust_term: float | None
    val_acc: float
    test_bias: float | None = None
    test_robust: float | None = None

    def to_dict(self) -> dict:
        rec = {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "bias_term": self.bias_term,
            "robust_term": self.robust_term,
            "val_acc": self.val_acc,
        }
        if self.test_bias is not None:
            rec["test_bias"] = self.test_bias
            rec["test_robust"] = self.test_robust
        return rec


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = -1.0

    def observe(self, record: EpochRecord) -> bool:
        """Track the best epoch (strict improvement; ties keep the earliest)."""
        self.records.append(record)
        if record.val_acc > self.best_val_acc:
            self.best_val_acc = record.val_acc
            self.best_epoch = record.epoch
            return True
        return False

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)


def _check_finite_loss(value: float, epoch: int):
    if not np.isfinite(value):
        raise TrainingError(f"non-finite training loss at epoch {epoch}")


def pretrain(
    cfg: M.ModelConfig,
    tc: TrainConfig,
    data: DatasetBundle,
    split_key: str = "split_0",
    with_drop_edge: bool = False,
) -> tuple[M.ModelParams, History]:
    """Supervised cross-entropy training with validation early stopping.

    ``with_drop_edge`` resamples an edge-dropped graph every epoch (the
    augmentation baseline); evaluation always runs on the clean graph.
    """
    split = data.split(split_key)
    train_ids, val_ids = split["train"], split["val"]
    params = M.init_params(cfg, tc.seed)
    x = data.features
    labels = data.labels
    prop_clean = M.propagation_matrix(cfg, data.graph)
    rng = np.random.default_rng(tc.seed)
    state = AdamState(params.trainable())
    history = History()
    snapshot = params.clone()

    logq0 = M.predict(params, x, prop_clean)
    history.observe(EpochRecord(0, None, None, None, accuracy(logq0, labels, val_ids)))

    for epoch in range(1, tc.max_epochs + 1):
        if with_drop_edge and tc.drop_edge > 0:
            _, sub = drop_edges_seeded(data.graph, tc.drop_edge, epoch_seed(tc.seed, epoch))
            prop = M.propagation_matrix(cfg, sub)
        else:
            prop = prop_clean
        try:
            tape = Tape()
            logq = M.predict_value(params, x, prop, mode="train", rng=rng, tape=tape)
            loss = L.cross_entropy(logq, labels, train_ids, tape)
            loss_val = float(loss.data[0, 0])
            _check_finite_loss(loss_val, epoch)
            grads = tape.backward(loss, release=True)
            adam_step(params.trainable(), grads, state, tc.lr, tc.weight_decay)
            val_acc = accuracy(M.predict(params, x, prop_clean), labels, val_ids)
        except T.ContractError as exc:
            raise TrainingError(f"training diverged at epoch {epoch}: {exc}") from exc
        improved = history.observe(EpochRecord(epoch, loss_val, loss_val, 0.0, val_acc))
        if improved:
            snapshot = params.clone()
        if epoch - history.best_epoch >= tc.patience:
            break

    for dst, best in zip(params.layers, snapshot.layers):
        for key in dst:
            dst[key].data[...] = best[key].data
    return params, history


def tune_buffer(
    bm: B.BufferedModel,
    tc: TrainConfig,
    data: DatasetBundle,
    split_key: str = "split_0",
) -> tuple[B.BufferParams, History]:
    """Tune only the buffer weights with DropEdge-augmented objectives.

    The frozen model's clean-graph predictions are cached once; a fresh edge
    mask is sampled every epoch; validation accuracy is measured on the clean
    graph. The base parameter hash is checked before and after.
    """
    if any(w.data.any() for w in bm.buffers.weights):
        raise ContractError("tune_buffer expects freshly attached zero buffers")
    hash_before = bm.base.content_hash()
    if hash_before != bm.base_hash:
        raise TrainingError("base parameters drifted before tuning started")

    split = data.split(split_key)
    train_ids, val_ids, test_ids = split["train"], split["val"], split["test"]
    x = data.features
    labels = data.labels
    g = data.graph
    frozen_clean = M.predict(bm.base, x, M.propagation_matrix(bm.cfg, g))
    rng = np.random.default_rng(tc.seed)
    state = AdamState(bm.buffers.trainable())
    history = History()
    snapshot = bm.buffers.clone()

    def monitored(record: EpochRecord) -> EpochRecord:
        if not tc.monitor:
            return record
        logq = B.buffered_predict(bm, x, g)
        tb, tr = L.monitor_decomposition(
            logq, lambda sub: B.buffered_predict(bm, x, sub),
            g, labels, test_ids, tc.drop_edge,
            seed=epoch_seed(tc.seed, 500_000 + record.epoch), draws=tc.monitor_draws,
        )
        record.test_bias = tb
        record.test_robust = tr
        return record

    val0 = accuracy(B.buffered_predict(bm, x, g), labels, val_ids)
    history.observe(monitored(EpochRecord(0, None, None, None, val0)))

    for epoch in range(1, tc.max_epochs + 1):
        _, sub = drop_edges_seeded(g, tc.drop_edge, epoch_seed(tc.seed, epoch))
        try:
            tape = Tape()
            clean = B.buffered_predict_value(
                bm, x, g, mode="train", rng=rng, tape=tape, buffer_dropout=tc.dropout
            )
            dropped = B.buffered_predict_value(
                bm, x, sub, mode="train", rng=rng, tape=tape, buffer_dropout=tc.dropout
            )
            if tc.objective in (L.RC, L.RC_TRAIN_ONLY):
                total, report = L.rc_objective(
                    logq_frozen_clean=frozen_clean,
                    logq_clean=clean,
                    logq_dropped=dropped,
                    train_ids=train_ids,
                    lam=tc.lam,
                    robust_ids=train_ids if tc.objective == L.RC_TRAIN_ONLY else None,
                    stop_clean_gradient=tc.stop_clean_gradient,
                    tape=tape,
                )
            else:
                total, report = L.ablation_objective(
                    tc.objective,
                    logq_frozen_clean=frozen_clean,
                    logq_clean=clean,
                    logq_dropped=dropped,
                    labels=labels,
                    train_ids=train_ids,
                    tape=tape,
                )
            _check_finite_loss(report.total, epoch)
            grads = tape.backward(total, release=True)
            adam_step(bm.buffers.trainable(), grads, state, tc.lr, tc.weight_decay)
            val_acc = accuracy(B.buffered_predict(bm, x, g), labels, val_ids)
        except T.ContractError as exc:
            raise TrainingError(f"buffer tuning diverged at epoch {epoch}: {exc}") from exc
        improved = history.observe(
            monitored(EpochRecord(epoch, report.total, report.bias, report.robust, val_acc))
        )
        if improved:
            snapshot = bm.buffers.clone()
        if epoch - history.best_epoch >= tc.patience:
            break

    bm.buffers.load_from(snapshot)
    if bm.base.content_hash() != hash_before:
        raise TrainingError("base parameters changed during buffer tuning")
    return bm.buffers, history


def pretrain_joint_with_buffer(
    cfg: M.ModelConfig,
    tc: TrainConfig,
    data: DatasetBundle,
    variant: str = B.FULL,
    split_key: str = "split_0",
) -> tuple[B.BufferedModel, History]:
    """Base and buffer trained together from scratch (the no-pretraining ablation)."""
    split = data.split(split_key)
    train_ids, val_ids = split["train"], split["val"]
    params = M.init_params(cfg, tc.seed)
    bm = B.BufferedModel(params, B.BufferParams(cfg, variant), params.content_hash())
    x, labels, g = data.features, data.labels, data.graph
    trainables = params.trainable() + bm.buffers.trainable()
    rng = np.random.default_rng(tc.seed)
    state = AdamState(trainables)
    history = History()

    val0 = accuracy(B.buffered_predict(bm, x, g), labels, val_ids)
    history.observe(EpochRecord(0, None, None, None, val0))
    for epoch in range(1, tc.max_epochs + 1):
        _, sub = drop_edges_seeded(g, tc.drop_edge, epoch_seed(tc.seed, epoch))
        try:
            tape = Tape()
            logq = B.buffered_predict_value(
                bm, x, sub, mode="train", rng=rng, tape=tape, buffer_dropout=tc.dropout
            )
            loss = L.cross_entropy(logq, labels, train_ids, tape)
            loss_val = float(loss.data[0, 0])
            _check_finite_loss(loss_val, epoch)
            grads = tape.backward(loss, release=True)
            adam_step(trainables, grads, state, tc.lr, tc.weight_decay)
            val_acc = accuracy(B.buffered_predict(bm, x, g), labels, val_ids)
        except T.ContractError as exc:
            raise TrainingError(f"joint training diverged at epoch {epoch}: {exc}") from exc
        history.observe(EpochRecord(epoch, loss_val, loss_val, 0.0, val_acc))
        if epoch - history.best_epoch >= tc.patience:
            break
    bm.base_hash = params.content_hash()
    return bm, history


# ---------------------------------------------------------------------------
# grid sweeps


@dataclass
class SweepEntry:
    index: int
    point: dict
    mean_val_acc: float
    val_accs: list[float]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "point": self.point,
            "mean_val_acc": self.mean_val_acc,
            "val_accs": self.val_accs,
        }


def sweep_points(space: dict[str, Sequence]) -> list[dict]:
    """Cartesian product in the space's given key order."""
    keys = list(space.keys())
    return [dict(zip(keys, combo)) for combo in itertools.product(*space.values())]


def grid_sweep(
    run_fn: Callable[[dict, int], float],
    space: dict[str, Sequence],
    seeds: int = 5,
    master_seed: int = 0,
) -> list[SweepEntry]:
    """Evaluate every configuration over independent runs and rank by mean.

    ``run_fn(point, seed)`` returns a validation accuracy. Each run's seed
    derives from (master seed, configuration index, run index) so results are
    reproducible and mergeable in configuration order. Ranking sorts by mean
    accuracy descending; ties keep configuration serialization order.
    """
    entries = []
    for index, point in enumerate(sweep_points(space)):
        accs = [
            run_fn(point, epoch_seed(master_seed, index * 10_007 + s))
            for s in range(seeds)
        ]
        entries.append(SweepEntry(index, point, float(np.mean(accs)), [float(a) for a in accs]))
    return sorted(entries, key=lambda e: (-e.mean_val_acc, e.index))
