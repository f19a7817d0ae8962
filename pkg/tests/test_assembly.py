import random

import pytest

from dynten import (
    NodeHeap, assemble_structure, gen_node_decls, ingest, validate_structure,
    walk_structure,
)
from dynten.runtime.tensor import TensorError

REGISTERED = [
    ("list", "append"), ("blist", "append"), ("vblist", "append"),
    ("bst", "append"), ("bst", "build"), ("rbtree", "build"),
    ("vblist", "build"),
]


def sequences(r):
    for n in (0, 1, 2, 17, 1000):
        coords = sorted(r.sample(range(max(1, n * 4)), n))
        yield [(c, c * 0.75 + 1.0) for c in coords]


@pytest.mark.parametrize("family,mode", REGISTERED)
def test_roundtrip(reg, family, mode):
    sset = reg.schema(family)
    r = random.Random(1234)
    heap = NodeHeap(gen_node_decls(sset))
    for elems in sequences(r):
        root = assemble_structure(reg, heap, family, "scalar", elems, mode)
        if not elems:
            assert root is None
            continue
        got = list(walk_structure(sset, heap, root))
        assert got == elems, (family, mode, len(elems))
        probs = validate_structure(sset, heap, root)
        assert not probs, (family, mode, probs)


def red_black_ok(heap, root):
    """No red node with a red child; equal black count on every path."""

    def color(n):
        return heap.get(n, "c")

    depths = {}
    # iterative post-order computing black heights
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if node is None:
            continue
        l, r = heap.get(node, "l"), heap.get(node, "r")
        if not done:
            stack.append((node, True))
            stack.append((l, False))
            stack.append((r, False))
            continue
        bl = depths.get(id(l), 1)
        br = depths.get(id(r), 1)
        if bl != br:
            return False
        if color(node):
            if (l is not None and color(l)) or (r is not None and color(r)):
                return False
        depths[id(node)] = bl + (0 if color(node) else 1)
    return True


def test_rbtree_build_red_black_property(reg):
    sset = reg.schema("rbtree")
    heap = NodeHeap(gen_node_decls(sset))
    r = random.Random(7)
    for n in (0, 1, 2, 3, 6, 17, 100, 1000):
        coords = sorted(r.sample(range(max(1, n * 3)), n))
        elems = [(c, float(c)) for c in coords]
        root = assemble_structure(reg, heap, "rbtree", "scalar", elems, "build")
        if n == 0:
            assert root is None
            continue
        tree = heap.get(root, "r")
        assert red_black_ok(heap, tree), n
        assert not validate_structure(sset, heap, root)


def test_rbtree_build_parent_links(reg):
    sset = reg.schema("rbtree")
    heap = NodeHeap(gen_node_decls(sset))
    elems = [(c, float(c)) for c in range(9)]
    root = assemble_structure(reg, heap, "rbtree", "scalar", elems, "build")
    tree = heap.get(root, "r")
    assert heap.get(tree, "p") is None
    stack = [tree]
    while stack:
        node = stack.pop()
        for m in ("l", "r"):
            ch = heap.get(node, m)
            if ch is not None:
                assert heap.get(ch, "p") is node
                stack.append(ch)


def test_blist_append_packs_blocks(reg):
    sset = reg.schema("blist")
    heap = NodeHeap(gen_node_decls(sset))
    elems = [(c, float(c)) for c in range(7)]
    root = assemble_structure(reg, heap, "blist", "scalar", elems, "append")
    node = heap.get(root, "h")
    sizes = []
    while node is not None:
        sizes.append(heap.get(node, "B"))
        node = heap.get(node, "n")
    assert sizes == [3, 3, 1]  # blocks packed to the schema capacity


def test_missing_impl_is_an_error(reg):
    heap = NodeHeap(gen_node_decls(reg.schema("ctree")))
    with pytest.raises(TensorError, match="no build implementation"):
        assemble_structure(reg, heap, "ctree", "scalar", [(0, 1.0)], "build")


def test_append_and_build_agree(reg, fmt):
    # same iteration sequence regardless of construction path
    text = "\n".join(f"{i} {v}" for i, v in
                     [(1, 2.0), (3, 4.5), (9, 1.0), (12, 8.0)])
    for family in ("bst", "vblist"):
        f = fmt(f"t_{family}", family)
        a = ingest(text, f, reg, mode="append")
        b = ingest(text, f, reg, mode="build")
        sset = reg.schema(family)
        wa = list(walk_structure(sset, a.heap, a.levels[0]["roots"][0]))
        wb = list(walk_structure(sset, b.heap, b.levels[0]["roots"][0]))
        assert wa == wb == [(0, 2.0), (2, 4.5), (8, 1.0), (11, 8.0)]


def test_bst_build_is_balanced(reg, fmt):
    import math
    from dynten import ingest
    n = 1000
    text = "\n".join(f"{i + 1} {float(i)}" for i in range(n))
    tv = ingest(text, fmt("v", "bst"), reg, mode="build")
    heap = tv.heap
    root = heap.get(tv.levels[0]["roots"][0], "r")

    def depth(node):
        best = 0
        stack = [(node, 1)]
        while stack:
            nd, d = stack.pop()
            if nd is None:
                continue
            best = max(best, d)
            stack.append((heap.get(nd, "l"), d + 1))
            stack.append((heap.get(nd, "r"), d + 1))
        return best

    assert depth(root) == math.ceil(math.log2(n + 1))
