"""Base architectures (MLP, GCN, SGC, SAGE, GIN) with retained layer traces.

Every layer splits into an aggregate step and an update step. The aggregate
of layer ``l`` is what a buffer block adds to, so ``forward`` accepts an
``extra_agg`` hook invoked with the running trace before each update.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .graph import Graph, NormScheme, RANDOM_WALK
from .tensor import CsrMatrix, Matrix, Tape

ARCHS = ("mlp", "gcn", "sgc", "sage", "gin")


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    dims: tuple[int, ...]
    activation: str = "relu"
    dropout: float = 0.5
    scheme: NormScheme = field(default_factory=NormScheme)
    gin_hidden: int = 64

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if len(self.dims) < 2:
            raise ValueError("need at least one layer (dims = d0..dL)")
        if self.activation not in T.ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.arch == "sgc" and any(d != self.dims[0] for d in self.dims[1:-1]):
            raise ValueError("sgc propagation steps preserve width: dims[0:-1] must be equal")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def num_layers(self) -> int:
        return len(self.dims) - 1

    @property
    def num_classes(self) -> int:
        return self.dims[-1]


def agg_width(cfg: ModelConfig, layer: int) -> int:
    """Width of layer ``layer``'s aggregate (what buffer outputs must match)."""
    if cfg.arch in ("gcn", "mlp", "sage"):
        return cfg.dims[layer]
    # sgc propagation and gin aggregation keep the incoming width
    return cfg.dims[layer - 1]


def propagation_matrix(cfg: ModelConfig, g: Graph) -> CsrMatrix | None:
    """The adjacency operator each architecture consumes."""
    from .graph import normalize

    if cfg.arch == "mlp":
        return None
    if cfg.arch == "sage":
        return normalize(g, NormScheme(RANDOM_WALK, add_self_loops=cfg.scheme.add_self_loops))
    if cfg.arch == "gin":
        return g.adjacency
    return normalize(g, cfg.scheme)


class ModelParams:
    """Named per-layer parameters; freezing removes them from gradient flow."""

    def __init__(self, cfg: ModelConfig, layers: list[dict[str, Matrix]], frozen: bool = False):
        self.cfg = cfg
        self.layers = layers
        self.frozen = frozen
        self._apply_freeze()

    def _apply_freeze(self):
        for layer in self.layers:
            for p in layer.values():
                p.requires_grad = not self.frozen

    def set_frozen(self, flag: bool) -> "ModelParams":
        self.frozen = flag
        self._apply_freeze()
        return self

    def named_parameters(self):
        for i, layer in enumerate(self.layers, start=1):
            for name in sorted(layer):
                yield f"layer{i}.{name}", layer[name]

    def trainable(self) -> list[Matrix]:
        return [] if self.frozen else [p for _, p in self.named_parameters()]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(str(p.shape).encode())
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()

    def clone(self) -> "ModelParams":
        layers = [
            {k: Matrix(v.data.copy(), requires_grad=v.requires_grad, name=v.name)
             for k, v in layer.items()}
            for layer in self.layers
        ]
        return ModelParams(self.cfg, layers, frozen=self.frozen)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, zero GIN epsilon; deterministic per seed."""
    rng = np.random.default_rng(seed)
    layers: list[dict[str, Matrix]] = []
    for l in range(1, cfg.num_layers + 1):
        d_in, d_out = cfg.dims[l - 1], cfg.dims[l]
        name = f"layer{l}"
        layer: dict[str, Matrix] = {}
        if cfg.arch in ("mlp", "gcn"):
            layer["w"] = T.parameter(_glorot(rng, d_in, d_out), f"{name}.w")
            layer["b"] = T.parameter(np.zeros((1, d_out)), f"{name}.b")
        elif cfg.arch == "sgc":
            if l == cfg.num_layers:
                layer["w"] = T.parameter(_glorot(rng, d_in, d_out), f"{name}.w")
                layer["b"] = T.parameter(np.zeros((1, d_out)), f"{name}.b")
        elif cfg.arch == "sage":
            layer["w1"] = T.parameter(_glorot(rng, d_in, d_out), f"{name}.w1")
            layer["w2"] = T.parameter(_glorot(rng, d_in, d_out), f"{name}.w2")
            layer["b"] = T.parameter(np.zeros((1, d_out)), f"{name}.b")
        else:  # gin
            h = cfg.gin_hidden
            layer["wa"] = T.parameter(_glorot(rng, d_in, h), f"{name}.wa")
            layer["ba"] = T.parameter(np.zeros((1, h)), f"{name}.ba")
            layer["wb"] = T.parameter(_glorot(rng, h, d_out), f"{name}.wb")
            layer["bb"] = T.parameter(np.zeros((1, d_out)), f"{name}.bb")
            layer["eps"] = T.parameter(np.zeros((1, 1)), f"{name}.eps")
        layers.append(layer)
    return ModelParams(cfg, layers)


@dataclass
class ForwardTrace:
    """H^(0..L) plus each layer's pre-update aggregate."""

    h: list[Matrix]
    agg: list[Matrix]

    @property
    def logits(self) -> Matrix:
        return self.h[-1]


def forward(
    params: ModelParams,
    x,
    prop: CsrMatrix | None,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    tape: Tape | None = None,
    extra_agg=None,
) -> ForwardTrace:
    """Run the architecture, retaining all intermediate representations.

    ``extra_agg(layer, hs)`` may return a matrix added to layer ``layer``'s
    aggregate before the update step (the buffer hook). Dropout applies to
    each layer input in train mode only.
    """
    cfg = params.cfg
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train" and cfg.dropout > 0.0
    if training and rng is None:
        raise T.ContractError("train-mode forward with dropout needs a generator")
    h = x if isinstance(x, Matrix) else T.constant(x)
    if cfg.arch != "mlp":
        if prop is None:
            raise T.ContractError(f"{cfg.arch} forward needs a propagation matrix")
        if prop.cols != h.rows:
            raise T.DimensionError("propagation matrix does not match feature rows")

    hs: list[Matrix] = [h]
    aggs: list[Matrix] = []
    L = cfg.num_layers
    for l in range(1, L + 1):
        layer = params.layers[l - 1]
        h_in = hs[l - 1]
        if training:
            h_in = T.dropout(h_in, cfg.dropout, rng, tape)

        if cfg.arch == "mlp":
            agg = T.matmul(h_in, layer["w"], tape)
        elif cfg.arch == "gcn":
            agg = T.spmm(prop, T.matmul(h_in, layer["w"], tape), tape)
        elif cfg.arch == "sgc":
            agg = T.spmm(prop, h_in, tape)
        elif cfg.arch == "sage":
            agg = T.spmm(prop, T.matmul(h_in, layer["w1"], tape), tape)
        else:  # gin: raw adjacency aggregation
            agg = T.spmm(prop, h_in, tape)

        if extra_agg is not None:
            bump = extra_agg(l, hs)
            if bump is not None:
                agg = T.add(agg, bump, tape)
        aggs.append(agg)

        if cfg.arch in ("mlp", "gcn"):
            z = T.add_row_bias(agg, layer["b"], tape)
            out = T.activation(z, cfg.activation, tape) if l < L else z
        elif cfg.arch == "sgc":
            if l < L:
                out = agg
            else:
                out = T.add_row_bias(T.matmul(agg, layer["w"], tape), layer["b"], tape)
        elif cfg.arch == "sage":
            z = T.add_row_bias(
                T.add(agg, T.matmul(h_in, layer["w2"], tape), tape), layer["b"], tape
            )
            out = T.activation(z, cfg.activation, tape) if l < L else z
        else:  # gin update: linear -> relu -> linear on agg + (1 + eps) h_in
            scaled = T.mul_by_scalar_param(
                h_in, T.add_scalar_param(layer["eps"], 1.0, tape), tape
            )
            z = T.add(agg, scaled, tape)
            z = T.activation(T.add_row_bias(T.matmul(z, layer["wa"], tape), layer["ba"], tape), "relu", tape)
            out = T.add_row_bias(T.matmul(z, layer["wb"], tape), layer["bb"], tape)
        hs.append(out)
    return ForwardTrace(h=hs, agg=aggs)


def predict(params: ModelParams, x, prop: CsrMatrix | None) -> np.ndarray:
    """Eval-mode log-probabilities; a pure function of (params, x, prop)."""
    trace = forward(params, x, prop, mode="eval")
    return T.log_softmax_rows(trace.logits).data


def predict_value(
    params: ModelParams, x, prop, mode="eval", rng=None, tape=None, extra_agg=None
) -> Matrix:
    """Differentiable log-probabilities (used by the training objectives)."""
    trace = forward(params, x, prop, mode=mode, rng=rng, tape=tape, extra_agg=extra_agg)
    return T.log_softmax_rows(trace.logits, tape)
