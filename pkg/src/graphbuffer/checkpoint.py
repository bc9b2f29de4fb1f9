"""Self-describing binary containers for model and buffer parameters.

Layout: one version byte, a little-endian u32 header length, a JSON header
(kind, config echo, named tensor shapes, and for buffers the variant tag and
the content hash of the base checkpoint's parameters), then the tensor
payloads as float64 little-endian in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import buffer as B
from . import models as M
from .graph import NormScheme
from .tensor import Matrix

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """A checkpoint file is malformed or inconsistent with its companion."""


def _config_to_dict(cfg: M.ModelConfig) -> dict:
    return {
        "arch": cfg.arch,
        "dims": list(cfg.dims),
        "activation": cfg.activation,
        "dropout": cfg.dropout,
        "scheme": {"kind": cfg.scheme.kind, "add_self_loops": cfg.scheme.add_self_loops},
        "gin_hidden": cfg.gin_hidden,
    }


def config_from_dict(doc: dict) -> M.ModelConfig:
    return M.ModelConfig(
        arch=doc["arch"],
        dims=tuple(doc["dims"]),
        activation=doc["activation"],
        dropout=doc["dropout"],
        scheme=NormScheme(doc["scheme"]["kind"], doc["scheme"]["add_self_loops"]),
        gin_hidden=doc["gin_hidden"],
    )


def _write(path, header: dict, tensors: list[tuple[str, np.ndarray]]) -> None:
    header = dict(header)
    header["tensors"] = [{"name": n, "shape": list(t.shape)} for n, t in tensors]
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, t in tensors:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def _read(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 5:
        raise CheckpointError(f"{path}: truncated checkpoint")
    if raw[0] != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {raw[0]}")
    (hlen,) = struct.unpack("<I", raw[1:5])
    if len(raw) < 5 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[5:5 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed header: {exc}") from None
    offset = 5 + hlen
    tensors: dict[str, np.ndarray] = {}
    for entry in header.get("tensors", []):
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape))
        chunk = raw[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: tensor {entry['name']!r} payload truncated")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, tensors


def peek_kind(path) -> str:
    header, _ = _read(path)
    return header.get("kind", "model")


def save_model(params: M.ModelParams, path) -> None:
    tensors = [(name, p.data) for name, p in params.named_parameters()]
    _write(path, {"kind": "model", "config": _config_to_dict(params.cfg)}, tensors)


def load_model(path) -> M.ModelParams:
    header, tensors = _read(path)
    if header.get("kind") != "model":
        raise CheckpointError(f"{path}: expected a model checkpoint, found {header.get('kind')!r}")
    cfg = config_from_dict(header["config"])
    template = M.init_params(cfg, seed=0)
    layers = []
    for i, layer in enumerate(template.layers, start=1):
        restored = {}
        for key in layer:
            name = f"layer{i}.{key}"
            if name not in tensors:
                raise CheckpointError(f"{path}: missing tensor {name!r}")
            if tensors[name].shape != layer[key].shape:
                raise CheckpointError(f"{path}: tensor {name!r} has wrong shape")
            restored[key] = Matrix(tensors[name], requires_grad=True, name=name)
        layers.append(restored)
    return M.ModelParams(cfg, layers)


def save_buffer(buffers: B.BufferParams, base_hash: str, path) -> None:
    tensors = [(name, w.data) for name, w in buffers.named_parameters()]
    header = {
        "kind": "buffer",
        "config": _config_to_dict(buffers.cfg),
        "variant": buffers.variant,
        "base_hash": base_hash,
    }
    _write(path, header, tensors)


def load_buffer(path, base: M.ModelParams) -> B.BufferedModel:
    """Rebuild a buffered model; the base must hash to the stored reference."""
    header, tensors = _read(path)
    if header.get("kind") != "buffer":
        raise CheckpointError(f"{path}: expected a buffer checkpoint, found {header.get('kind')!r}")
    base_hash = base.content_hash()
    if header["base_hash"] != base_hash:
        raise CheckpointError(
            f"{path}: buffer references base {header['base_hash'][:12]}..., "
            f"given base hashes to {base_hash[:12]}..."
        )
    cfg = config_from_dict(header["config"])
    if cfg != base.cfg:
        raise CheckpointError(f"{path}: buffer config does not match the base model")
    bufs = B.BufferParams(cfg, header["variant"])
    for name, w in bufs.named_parameters():
        if name not in tensors:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        if tensors[name].shape != w.shape:
            raise CheckpointError(f"{path}: tensor {name!r} has wrong shape")
        w.data[...] = tensors[name]
    base.set_frozen(True)
    return B.BufferedModel(base=base, buffers=bufs, base_hash=base_hash)
