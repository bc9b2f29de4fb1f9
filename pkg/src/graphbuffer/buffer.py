"""The aggregation-buffer parameter block and its ablation variants.

A buffer is a per-layer weight block added to each layer's aggregate. The
full form row-scales the concatenation of all preceding representations by
1/(degree+1) before a linear map, which makes the block both edge-aware
(output changes when edges drop) and stable (Frobenius norm is smallest on
the unperturbed graph). Buffers start at zero, so attaching one leaves the
pretrained model's outputs bit-identical until tuning moves the weights.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from . import models as M
from .graph import Graph, node_degrees
from .models import ForwardTrace, ModelConfig, ModelParams, agg_width, propagation_matrix
from .tensor import Matrix, Tape

FULL = "full"
SINGLE_LAYER = "single_layer"
JKNET_STYLE = "jknet_style"
RESIDUAL_STYLE = "residual_style"
PLAIN_AGG = "plain_agg"
VARIANTS = (FULL, SINGLE_LAYER, JKNET_STYLE, RESIDUAL_STYLE, PLAIN_AGG)

_CONCAT_VARIANTS = (FULL, JKNET_STYLE)


def buffer_input_width(cfg: ModelConfig, layer: int, variant: str) -> int:
    if variant in _CONCAT_VARIANTS:
        return sum(cfg.dims[:layer])
    return cfg.dims[layer - 1]


class BufferParams:
    """Per-layer buffer weights; zero-initialized, the only trainables in step two."""

    def __init__(self, cfg: ModelConfig, variant: str, weights: list[Matrix] | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown buffer variant {variant!r}")
        if variant == PLAIN_AGG and cfg.arch == "mlp":
            raise ValueError("plain_agg buffers need an aggregation scheme; MLPs have none")
        self.cfg = cfg
        self.variant = variant
        if weights is None:
            weights = [
                T.parameter(
                    np.zeros((buffer_input_width(cfg, l, variant), agg_width(cfg, l))),
                    name=f"buffer{l}.w",
                )
                for l in range(1, cfg.num_layers + 1)
            ]
        self.weights = weights

    def named_parameters(self):
        for l, w in enumerate(self.weights, start=1):
            yield f"buffer{l}.w", w

    def trainable(self) -> list[Matrix]:
        return list(self.weights)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(str(p.shape).encode())
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()

    def clone(self) -> "BufferParams":
        return BufferParams(
            self.cfg,
            self.variant,
            [Matrix(w.data.copy(), requires_grad=w.requires_grad, name=w.name)
             for w in self.weights],
        )

    def load_from(self, other: "BufferParams"):
        for mine, theirs in zip(self.weights, other.weights):
            mine.data[...] = theirs.data


def buffer_forward(
    variant: str,
    prefix: list[Matrix],
    raw_adjacency_degrees: np.ndarray,
    w: Matrix,
    cfg_scheme_prop: T.CsrMatrix | None = None,
    tape: Tape | None = None,
) -> Matrix:
    """One layer's buffer output from the trace prefix H^(0:l-1).

    Degrees must come from the adjacency actually in use (clean A at
    inference, the dropped graph during DropEdge training).
    """
    if variant in _CONCAT_VARIANTS:
        h = prefix[0] if len(prefix) == 1 else T.concat_cols(prefix, tape)
    else:
        h = prefix[-1]
    if variant in (FULL, SINGLE_LAYER):
        h = T.scale_rows(h, 1.0 / (raw_adjacency_degrees + 1.0), tape)
    elif variant == PLAIN_AGG:
        if cfg_scheme_prop is None:
            raise T.ContractError("plain_agg buffer needs a propagation matrix")
        h = T.spmm(cfg_scheme_prop, h, tape)
    return T.matmul(h, w, tape)


@dataclass
class BufferedModel:
    """A frozen base model plus trainable buffers."""

    base: ModelParams
    buffers: BufferParams
    base_hash: str

    @property
    def cfg(self) -> ModelConfig:
        return self.base.cfg

    @property
    def variant(self) -> str:
        return self.buffers.variant


def attach(base: ModelParams, variant: str = FULL) -> BufferedModel:
    """Freeze the base and hang zero buffers on it; outputs are unchanged."""
    base.set_frozen(True)
    return BufferedModel(
        base=base,
        buffers=BufferParams(base.cfg, variant),
        base_hash=base.content_hash(),
    )


def detach(bm: BufferedModel) -> ModelParams:
    """Drop the buffers and give the original model back, unfrozen and intact."""
    if bm.base.content_hash() != bm.base_hash:
        raise T.ContractError("base parameters drifted while buffered")
    return bm.base.set_frozen(False)


def buffered_forward(
    bm: BufferedModel,
    x,
    g: Graph,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    tape: Tape | None = None,
    buffer_dropout: float = 0.0,
) -> ForwardTrace:
    """Forward with per-layer buffer additions.

    The base path always runs without its own dropout here (the frozen model
    is applied as at inference); ``buffer_dropout`` regularizes the buffer
    inputs only, in train mode. Both the aggregate's adjacency and the buffer
    degrees come from ``g``, which may be the clean or an edge-dropped graph.
    """
    prop = propagation_matrix(bm.cfg, g)
    degrees = node_degrees(g).astype(np.float64)
    training = mode == "train" and buffer_dropout > 0.0
    if training and rng is None:
        raise T.ContractError("buffer dropout needs a generator")

    def extra_agg(layer: int, hs: list[Matrix]) -> Matrix:
        if bm.variant in _CONCAT_VARIANTS:
            prefix = list(hs[:layer])
        else:
            prefix = [hs[layer - 1]]
        if training:
            prefix = [T.dropout(h, buffer_dropout, rng, tape) for h in prefix]
        return buffer_forward(
            bm.variant, prefix, degrees, bm.buffers.weights[layer - 1],
            cfg_scheme_prop=prop if bm.variant == PLAIN_AGG else None, tape=tape,
        )

    return M.forward(bm.base, x, prop, mode="eval", rng=None, tape=tape, extra_agg=extra_agg)


def buffered_predict(bm: BufferedModel, x, g: Graph) -> np.ndarray:
    """Eval-mode log-probabilities of the buffered model on graph ``g``."""
    trace = buffered_forward(bm, x, g, mode="eval")
    return T.log_softmax_rows(trace.logits).data


def buffered_predict_value(
    bm: BufferedModel, x, g: Graph, mode="eval", rng=None, tape=None, buffer_dropout=0.0
) -> Matrix:
    trace = buffered_forward(bm, x, g, mode=mode, rng=rng, tape=tape, buffer_dropout=buffer_dropout)
    return T.log_softmax_rows(trace.logits, tape)
