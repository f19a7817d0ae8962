import random

import pytest

from dynten import (
    NodeHeap, build_structure, gen_coroutine, gen_iterator, gen_node_decls,
    ir, walk_structure,
)
from dynten.codegen.iterators import (
    IteratorError, SegCall, eliminate_recursion, optimize_iterator,
)
from dynten.ir import Module, Push, While, Yield, walk_stmts
from dynten.runtime.pyexec import Program


def machine_program(reg, family):
    sset = reg.schema(family)
    plan = gen_iterator(sset, family)
    m = Module(gen_node_decls(sset), [plan.machine], entry=plan.name,
               frames={plan.name: plan.frame})
    assert ir.check_module(m) == []
    return plan, Program(m)


def drain(prog, plan, entry_node):
    f = prog.func(plan.name)
    n, s, c, v = [entry_node], [], [0], [0.0]
    out = []
    st = f(0, n, s, c, v)
    while st:
        out.append((c[0], v[0]))
        st = f(st, n, s, c, v)
    assert s == [], "stack must drain at exhaustion"
    return out


def entry_of(reg, family, heap, root):
    from dynten.codegen.common import entry_info
    sset = reg.schema(family)
    drill, _ = entry_info(sset, sset.root_candidates[0])
    if root is None:
        return None
    return heap.get(root, drill) if drill else root


def test_coroutine_stage(reg):
    co = gen_coroutine(reg.schema("bst"), "bst", "scalar", "bst")
    stmts = list(walk_stmts(co.body))
    assert sum(isinstance(s, Yield) for s in stmts) == 1
    calls = [s for s in stmts if isinstance(s, ir.Call)]
    assert [c.func for c in calls] == ["co_bst_bst", "co_bst_bst"]


def test_coroutine_rejects_unsorted(reg):
    with pytest.raises(IteratorError, match="unsorted"):
        gen_coroutine(reg.schema("blist_unsorted"), "blist", "scalar",
                      "blist_unsorted")


def test_optimized_bst_shape(reg):
    # tail call optimized into a loop, remaining self-recursion null-guarded
    sset = reg.schema("bst")
    co = {n: gen_coroutine(sset, n, "scalar", "bst") for n in ["bst"]}
    segs = optimize_iterator(sset, "bst", "scalar", "bst", co)
    assert len(segs) == 1
    body = segs[0].body
    assert isinstance(body[0], While)
    guards = [s for s in walk_stmts(body) if isinstance(s, ir.If)]
    assert any(isinstance(x, SegCall) for g in guards for x in g.then)


def test_list_machine_is_stackless(reg):
    plan, prog = machine_program(reg, "list")
    assert not any(isinstance(s, Push) for s in walk_stmts(plan.machine.body))
    l2 = ["list", 5, 5.0, None]
    l1 = ["list", 2, 2.0, l2]
    assert drain(prog, plan, l1) == [(2, 2.0), (5, 5.0)]


def test_prefix_inlined_into_single_function(reg):
    plan, _ = machine_program(reg, "ctree")
    # one function handles both node types of the family
    assert {seg.node for seg in plan.segments} == {"prefix", "ctree"}
    assert plan.machine.name == "iter_ctree"


def test_bst_machine_structure(reg):
    plan, _ = machine_program(reg, "bst")
    text = ir.render_c(Module(gen_node_decls(reg.schema("bst")),
                              [plan.machine], entry=plan.name,
                              frames={plan.name: plan.frame}))
    assert "uint8_t iter_bst(uint8_t st, bst** n, iter_bst_stack* s," in text
    assert "goto iter_bst_res1;" in text
    assert "iter_bst_stack_push(s, 0, (*n));" in text
    assert "while ((*n) != NULL)" in text


def test_machine_yields_are_numbered(reg):
    plan, _ = machine_program(reg, "ctree")
    # prefix block, head, chunk: three yield sites
    assert plan.yields == 3
    assert not any(isinstance(s, Yield) for s in walk_stmts(plan.machine.body))


@pytest.mark.parametrize("family", [
    "list", "blist", "blist_holes", "blist_fixed", "vblist", "ttree",
    "rbtree", "ctree", "btree", "bst",
])
def test_enumeration_matches_walker(reg, family):
    sset = reg.schema(family)
    plan, prog = machine_program(reg, family)
    r = random.Random(hash(family) & 0xFFFF)
    heap = NodeHeap(gen_node_decls(sset))
    for trial in range(25):
        n = r.choice([0, 1, 2, 3, 7, 20, 81, 333])
        coords = sorted(r.sample(range(max(1, n * 5)), n))
        elems = [(c, c + 0.25) for c in coords]
        root = build_structure(sset, heap, elems, rng=r)
        prog.reset(node_sink=heap.nodes)
        got = drain(prog, plan, entry_of(reg, family, heap, root))
        want = list(walk_structure(sset, heap, root))
        assert got == want == elems, (family, n)
        assert [a for a, _ in got] == sorted({a for a, _ in got}), family


def test_interleaved_co_iteration(reg):
    # two resumable cursors over one function, per the merge loop shape
    plan, prog = machine_program(reg, "bst")
    f = prog.func(plan.name)
    b = ["bst", 4, 4.0, ["bst", 9, 9.0, None, None], ["bst", 1, 1.0, None, None]]
    c = ["bst", 4, 40.0, ["bst", 8, 80.0, None, None], None]
    bn, bs, bc, bv = [b], [], [0], [0.0]
    cn, cs, cc, cv = [c], [], [0], [0.0]
    bstate, cstate = f(0, bn, bs, bc, bv), f(0, cn, cs, cc, cv)
    hits = []
    while bstate and cstate:
        j = min(bc[0], cc[0])
        if bc[0] == j and cc[0] == j:
            hits.append((j, bv[0] * cv[0]))
        if bc[0] == j:
            bstate = f(bstate, bn, bs, bc, bv)
        if cc[0] == j:
            cstate = f(cstate, cn, cs, cc, cv)
    assert hits == [(4, 160.0)]


def test_deep_chain_bounded_stack(reg):
    # an appended bst degenerates to a right spine; iterating it must not
    # grow the explicit stack (the walk is the tail loop)
    plan, prog = machine_program(reg, "bst")
    root = None
    for c in range(2000, -1, -1):
        root = ["bst", c, float(c), root, None]
    f = prog.func(plan.name)
    n, s, cc, vv = [root], [], [0], [0.0]
    st = f(0, n, s, cc, vv)
    seen = 0
    max_depth = 0
    while st:
        seen += 1
        max_depth = max(max_depth, len(s))
        st = f(st, n, s, cc, vv)
    assert seen == 2001
    assert max_depth <= 2
