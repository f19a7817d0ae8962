import numpy as np
import pytest

from dynten import (
    NodeHeap, from_dense, gen_node_decls, ingest, to_dense, validate_structure,
    validate_tensor, walk_structure,
)
from dynten.runtime import io as tio
from dynten.runtime.io import dump_tensor
from dynten.runtime.tensor import TensorError

MTX = """%%MatrixMarket matrix coordinate real general
2 3 3
1 1 1.5
1 3 2.5
2 2 3.5
"""


def test_read_mtx():
    ext, entries = tio.read_mtx(MTX)
    assert ext == (2, 3)
    assert entries == [((0, 0), 1.5), ((0, 2), 2.5), ((1, 1), 3.5)]


def test_mtx_duplicate_rejected():
    bad = MTX.replace("2 2 3.5", "1 1 9.0")
    with pytest.raises(tio.IOError_, match="duplicate"):
        tio.read_mtx(bad)


def test_mtx_symmetric_rejected():
    bad = MTX.replace("general", "symmetric")
    with pytest.raises(tio.IOError_, match="general"):
        tio.read_mtx(bad)


def test_read_tns():
    ext, entries = tio.read_tns("1 2 4.0\n3 1 5.0\n")
    assert ext == (3, 2)
    assert entries == [((0, 1), 4.0), ((2, 0), 5.0)]


def test_tns_rank_check():
    with pytest.raises(tio.IOError_, match="inconsistent rank"):
        tio.read_tns("1 2 4.0\n3 5.0\n")


def test_ingest_blist_rows(reg, fmt):
    tv = ingest(MTX, fmt("A", "dense", "blist"), reg, mode="append")
    sset = reg.schema("blist")
    roots = tv.levels[1]["roots"]
    assert len(roots) == 2
    row0 = list(walk_structure(sset, tv.heap, roots[0]))
    assert row0 == [(0, 1.5), (2, 2.5)]
    assert not validate_tensor(tv, reg)


def test_ingest_empty_matrix(reg, fmt):
    text = "%%MatrixMarket matrix coordinate real general\n3 3 0\n"
    tv = ingest(text, fmt("A", "dense", "bst"), reg)
    assert tv.levels[1]["roots"] == [None, None, None]
    assert to_dense(tv, reg).sum() == 0.0


def test_explicit_zeros_kept(reg, fmt):
    text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 0.0\n2 2 1.0\n"
    tv = ingest(text, fmt("A", "dense", "bst"), reg)
    sset = reg.schema("bst")
    assert list(walk_structure(sset, tv.heap, tv.levels[1]["roots"][0])) \
        == [(0, 0.0)]


SIX = np.array([
    [1, 0, 2, 0, 0, 3],
    [0, 0, 0, 0, 0, 0],
    [4, 5, 0, 0, 6, 0],
    [0, 0, 0, 7, 0, 0],
    [0, 0, 8, 0, 9, 0],
    [0, 1, 0, 2, 0, 3],
], dtype=float)

SIX_FORMATS = [
    ("dense", "compressed"), ("dense", "bst"), ("dense", "blist"),
    ("dense", "ctree"), ("dense", "btree"), ("bst", "ctree"),
]


def test_cross_format_agreement(reg, fmt):
    for levels in SIX_FORMATS:
        f = fmt("A_" + "_".join(levels), *levels)
        tv = from_dense(SIX, f, reg)
        assert np.array_equal(to_dense(tv, reg), SIX), levels
        assert not validate_tensor(tv, reg), levels


def test_from_dense_drops_zeros(reg, fmt):
    tv = from_dense(np.zeros((4, 4)), fmt("A", "dense", "bst"), reg)
    assert tv.levels[1]["roots"] == [None] * 4


def test_roundtrip_random_binary(reg, fmt, rng):
    a = (rng.random((8, 8)) < 0.4).astype(float)
    tv = from_dense(a, fmt("A", "dense", "vblist"), reg)
    assert np.array_equal(to_dense(tv, reg), a)


def test_validate_catches_size_bound(reg):
    sset = reg.schema("ttree")
    heap = NodeHeap(gen_node_decls(sset))
    node = heap.alloc("ttree")
    heap.set(node, "B", 0)  # bound is [1, 4]
    root = heap.alloc("ttree_root")
    heap.set(root, "r", node)
    probs = validate_structure(sset, heap, root)
    assert any("size bound" in p for p in probs)


def test_validate_catches_seq_violation(reg):
    sset = reg.schema("bst")
    heap = NodeHeap(gen_node_decls(sset))
    small = heap.alloc("bst")
    heap.set(small, "ec", 1)
    big = heap.alloc("bst")
    heap.set(big, "ec", 8)
    heap.set(big, "l", small)
    heap.set(big, "r", None)
    root = heap.alloc("bst_root")
    heap.set(root, "r", big)
    assert not validate_structure(sset, heap, root)
    # swap children: now the larger coordinate sits on the left
    heap.set(big, "l", None)
    heap.set(big, "r", small)
    probs = validate_structure(sset, heap, root)
    assert any("seq ordering" in p for p in probs)


def test_validate_catches_broken_parent(reg):
    sset = reg.schema("rbtree")
    heap = NodeHeap(gen_node_decls(sset))
    child = heap.alloc("rbtree")
    heap.set(child, "ec", 1)
    top = heap.alloc("rbtree")
    heap.set(top, "ec", 5)
    heap.set(top, "l", child)
    root = heap.alloc("rbtree_root")
    heap.set(root, "r", top)
    probs = validate_structure(sset, heap, root)
    assert any("parent link" in p for p in probs)


def test_compressed_validation(reg, fmt):
    tv = from_dense(SIX, fmt("A", "dense", "compressed"), reg)
    assert not validate_tensor(tv, reg)
    tv.levels[1]["crd"][0], tv.levels[1]["crd"][1] = \
        tv.levels[1]["crd"][1], tv.levels[1]["crd"][0]
    assert any("strictly increasing" in p for p in validate_tensor(tv, reg))


def test_dump_format(reg, fmt):
    tv = from_dense(SIX[:2, :4], fmt("A", "dense", "blist"), reg)
    text = dump_tensor(tv, "A")
    lines = text.splitlines()
    assert lines[0] == "tensor A"
    assert "level 0 dense 2" in text
    assert "level 1 dynamic blist 4" in text
    assert "roots 1 @0 _" in text
    assert any(ln.startswith("node @0 blist_head") for ln in lines)
    assert lines[-1] == "end"
    # dumps are deterministic
    assert dump_tensor(tv, "A") == text


def test_compressed_only_innermost(reg, fmt):
    with pytest.raises(TensorError,
                       match="innermost|under dense"):
        from_dense(SIX, fmt("A", "compressed", "dense"), reg)
