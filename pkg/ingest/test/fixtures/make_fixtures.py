"""Regenerate the committed test fixtures.

Two miniature datasets in the citation-benchmark wire format (protocol-2
pickles of scipy CSR matrices, numpy one-hot labels, an adjacency dict, and
a permuted test-index file), plus two hand-assembled legacy-writer pickles
that exercise the SHORT_BINSTRING byte path older files contain.

Run from this directory:  python3 make_fixtures.py
"""

import pickle
import struct
from collections import defaultdict
from pathlib import Path

import numpy as np
import scipy.sparse as sp

HERE = Path(__file__).parent


def write(name, obj):
    (HERE / name).write_bytes(pickle.dumps(obj, protocol=2))


def one_hot(labels, c):
    out = np.zeros((len(labels), c), dtype=np.int32)
    out[np.arange(len(labels)), labels] = 1
    return out


def make_tiny():
    # 8 nodes, 3 features, 2 classes; labeled 0..2, test {6, 7}
    d = HERE / "tiny"
    d.mkdir(exist_ok=True)
    rng = np.random.default_rng(42)
    feats = np.round(rng.random((8, 3)) * 4) / 2  # float32-exact values
    feats = feats.astype(np.float32)
    labels = np.array([0, 1, 0, 1, 0, 1, 1, 0])

    def dump(name, obj):
        (d / f"ind.tiny.{name}").write_bytes(pickle.dumps(obj, protocol=2))

    dump("x", sp.csr_matrix(feats[:3]))
    dump("y", one_hot(labels[:3], 2))
    dump("allx", sp.csr_matrix(feats[:6]))
    dump("ally", one_hot(labels[:6], 2))
    dump("tx", sp.csr_matrix(feats[6:8]))
    dump("ty", one_hot(labels[6:8], 2))
    graph = defaultdict(list, {
        0: [1, 2], 1: [0, 3], 2: [0, 2, 5],  # node 2 cites itself
        3: [1, 4], 4: [3, 6], 5: [2, 7], 6: [4, 7], 7: [5, 6, 5],  # dup entry
    })
    dump("graph", graph)
    (d / "ind.tiny.test.index").write_text("7\n6\n")
    import json
    (d / "expected.json").write_text(json.dumps(
        {"features": feats.tolist(), "labels": labels.tolist()}))


def make_gappy():
    # citeseer-style: test.index skips node 8 -> zero-feature filler node
    d = HERE / "gappy"
    d.mkdir(exist_ok=True)
    rng = np.random.default_rng(7)
    feats10 = (np.round(rng.random((10, 2)) * 4) / 2).astype(np.float32)
    feats10[8] = 0.0
    labels10 = np.array([0, 1, 2, 0, 1, 2, 0, 1, 0, 2])  # node 8 -> argmax(0) = 0

    def dump(name, obj):
        (d / f"ind.gappy.{name}").write_bytes(pickle.dumps(obj, protocol=2))

    dump("x", sp.csr_matrix(feats10[:3]))
    dump("y", one_hot(labels10[:3], 3))
    dump("allx", sp.csr_matrix(feats10[:7]))
    dump("ally", one_hot(labels10[:7], 3))
    dump("tx", sp.csr_matrix(feats10[[7, 9]]))
    ty = one_hot(labels10[[7, 9]], 3)
    dump("ty", ty)
    graph = defaultdict(list, {
        0: [1], 1: [0, 2], 2: [1], 3: [4], 4: [3, 9],
        5: [6], 6: [5], 7: [9], 8: [], 9: [4, 7],
    })
    dump("graph", graph)
    (d / "ind.gappy.test.index").write_text("9\n7\n")
    import json
    (d / "expected.json").write_text(json.dumps(
        {"features": feats10.tolist(), "labels": labels10.tolist()}))


def op(*parts):
    out = b""
    for p in parts:
        out += p if isinstance(p, bytes) else bytes([p])
    return out


def short_binstring(data: bytes) -> bytes:
    return op(0x55, len(data), data)


def make_legacy_pickles():
    # the exact opcode stream a py2 writer produces: SHORT_BINSTRING payloads,
    # GLOBAL 'scipy.sparse.csr csr_matrix', text module paths
    arr = np.array([[1, 2], [3, 4]], dtype=np.int32)
    raw = arr.tobytes()
    nd = op(
        0x80, 2,
        b"cnumpy.core.multiarray\n_reconstruct\n",
        b"cnumpy\nndarray\n",
        0x4B, 0, 0x85,
        short_binstring(b"b"),
        0x87, 0x52,
        0x28,
        0x4B, 1,
        0x4B, 2, 0x4B, 2, 0x86,
        b"cnumpy\ndtype\n",
        short_binstring(b"i4"),
        0x89, 0x88, 0x87, 0x52,
        0x28, 0x4B, 3, short_binstring(b"<"),
        0x4E, 0x4E, 0x4E,
        0x4A, struct.pack("<i", -1), 0x4A, struct.pack("<i", -1), 0x4B, 0,
        0x74, 0x62,
        0x89,
        short_binstring(raw),
        0x74, 0x62, 0x2E,
    )
    (HERE / "legacy_ndarray.pkl").write_bytes(nd)

    m = sp.csr_matrix(np.array([[0, 1.5], [2.5, 0]], dtype=np.float32))

    def legacy_ndarray_ops(a: np.ndarray, code: bytes) -> bytes:
        return op(
            b"cnumpy.core.multiarray\n_reconstruct\n",
            b"cnumpy\nndarray\n",
            0x4B, 0, 0x85,
            short_binstring(b"b"),
            0x87, 0x52,
            0x28,
            0x4B, 1,
            0x4B, a.shape[0], 0x85,
            b"cnumpy\ndtype\n",
            short_binstring(code),
            0x89, 0x88, 0x87, 0x52,
            0x28, 0x4B, 3, short_binstring(b"<"),
            0x4E, 0x4E, 0x4E,
            0x4A, struct.pack("<i", -1), 0x4A, struct.pack("<i", -1), 0x4B, 0,
            0x74, 0x62,
            0x89,
            short_binstring(a.tobytes()),
            0x74, 0x62,
        )

    csr = op(
        0x80, 2,
        b"cscipy.sparse.csr\ncsr_matrix\n",
        0x29, 0x81,
        0x7D,
        0x28,
        short_binstring(b"_shape"), 0x4B, 2, 0x4B, 2, 0x86,
        short_binstring(b"indptr"), legacy_ndarray_ops(m.indptr.astype(np.int32), b"i4"),
        short_binstring(b"indices"), legacy_ndarray_ops(m.indices.astype(np.int32), b"i4"),
        short_binstring(b"data"), legacy_ndarray_ops(m.data.astype(np.float32), b"f4"),
        0x75,
        0x62, 0x2E,
    )
    (HERE / "legacy_csr.pkl").write_bytes(csr)


if __name__ == "__main__":
    make_tiny()
    make_gappy()
    make_legacy_pickles()
    print("fixtures written")
