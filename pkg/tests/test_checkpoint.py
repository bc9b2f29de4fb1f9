import numpy as np
import pytest

from graphbuffer import buffer as B
from graphbuffer import checkpoint as C
from graphbuffer import graph as G
from graphbuffer import models as M


def make_params(arch="gcn", seed=3):
    dims = (4, 4, 3) if arch == "sgc" else (4, 6, 3)
    cfg = M.ModelConfig(arch=arch, dims=dims, activation="gelu", dropout=0.3,
                        scheme=G.NormScheme(G.RANDOM_WALK, False), gin_hidden=5)
    return M.init_params(cfg, seed)


@pytest.mark.parametrize("arch", M.ARCHS)
def test_model_round_trip_bitwise(arch, tmp_path):
    params = make_params(arch)
    path = tmp_path / "m.ckpt"
    C.save_model(params, path)
    loaded = C.load_model(path)
    assert loaded.cfg == params.cfg
    for (n1, p1), (n2, p2) in zip(params.named_parameters(), loaded.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p1.data, p2.data)
    assert loaded.content_hash() == params.content_hash()


def test_buffer_round_trip_with_hash_reference(tmp_path):
    params = make_params()
    bm = B.attach(params, B.FULL)
    rng = np.random.default_rng(0)
    for w in bm.buffers.weights:
        w.data[...] = rng.normal(size=w.shape)
    C.save_model(params, tmp_path / "base.ckpt")
    C.save_buffer(bm.buffers, bm.base_hash, tmp_path / "buf.ckpt")

    base = C.load_model(tmp_path / "base.ckpt")
    restored = C.load_buffer(tmp_path / "buf.ckpt", base)
    assert restored.variant == B.FULL
    for w1, w2 in zip(bm.buffers.weights, restored.buffers.weights):
        np.testing.assert_array_equal(w1.data, w2.data)


def test_buffer_rejects_wrong_base(tmp_path):
    params = make_params(seed=3)
    bm = B.attach(params, B.SINGLE_LAYER)
    C.save_buffer(bm.buffers, bm.base_hash, tmp_path / "buf.ckpt")
    other = make_params(seed=99)
    with pytest.raises(C.CheckpointError, match="hashes"):
        C.load_buffer(tmp_path / "buf.ckpt", other)


def test_kind_mismatch(tmp_path):
    params = make_params()
    C.save_model(params, tmp_path / "m.ckpt")
    with pytest.raises(C.CheckpointError, match="expected a buffer"):
        C.load_buffer(tmp_path / "m.ckpt", params)
    bm = B.attach(make_params(), B.FULL)
    C.save_buffer(bm.buffers, bm.base_hash, tmp_path / "b.ckpt")
    with pytest.raises(C.CheckpointError, match="expected a model"):
        C.load_model(tmp_path / "b.ckpt")


def test_peek_kind(tmp_path):
    params = make_params()
    C.save_model(params, tmp_path / "m.ckpt")
    assert C.peek_kind(tmp_path / "m.ckpt") == "model"


def test_truncated_payload_rejected(tmp_path):
    params = make_params()
    path = tmp_path / "m.ckpt"
    C.save_model(params, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(C.CheckpointError, match="truncated"):
        C.load_model(path)


def test_bad_version_rejected(tmp_path):
    params = make_params()
    path = tmp_path / "m.ckpt"
    C.save_model(params, path)
    raw = bytearray(path.read_bytes())
    raw[0] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(C.CheckpointError, match="version"):
        C.load_model(path)


def test_trailing_bytes_rejected(tmp_path):
    params = make_params()
    path = tmp_path / "m.ckpt"
    C.save_model(params, path)
    path.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(C.CheckpointError, match="trailing"):
        C.load_model(path)
