import random

import pytest

from dynten import NodeHeap, build_structure, gen_map, gen_node_decls, ir
from dynten.codegen.maps import MapError, MapPlan
from dynten.ir import (
    Call, Cst, Fld, Idx, Module, Param, PushVec, Set, Task, Var, While,
    walk_stmts,
)
from dynten.runtime.pyexec import Program
from dynten.runtime.walkers import walk_structure


def visit_plan(reg, family, order="locality", parallel=False):
    sset = reg.schema(family)
    captured = [Param("outc", ("vec", "int32")), Param("outv", ("vec", "float64"))]

    def body(coord, value):
        return [PushVec(Var("outc"), coord), PushVec(Var("outv"), value)]

    plan = MapPlan(sset, family, "scalar", "visit", body, captured,
                   order=order, parallel=parallel)
    return gen_map(plan)


def run_visit(reg, family, elems, order="locality", rng=None):
    sset = reg.schema(family)
    heap = NodeHeap(gen_node_decls(sset))
    root = build_structure(sset, heap, elems, rng=rng)
    ms = visit_plan(reg, family, order)
    entry = Module(gen_node_decls(sset), ms.funcs, entry=ms.entry)
    prog = Program(entry)
    prog.reset(node_sink=heap.nodes)
    outc, outv = [], []
    start = root if ms.drill is None else (heap.get(root, ms.drill) if root else None)
    prog.func(ms.entry)(start, outc, outv)
    return outc, outv


def test_map_visits_each_element_once(reg, rng=None):
    r = random.Random(5)
    for family in ["bst", "blist", "ctree", "btree", "ttree", "list"]:
        coords = sorted(r.sample(range(500), 60))
        elems = [(c, c * 1.5) for c in coords]
        outc, outv = run_visit(reg, family, elems, rng=r)
        assert sorted(outc) == coords, family
        assert len(outc) == len(coords), family


def test_coordinate_order_map(reg):
    r = random.Random(6)
    coords = sorted(r.sample(range(300), 40))
    elems = [(c, 0.5 * c) for c in coords]
    outc, _ = run_visit(reg, "bst", elems, order="coordinate", rng=r)
    assert outc == coords  # exactly in seq order


def test_locality_first_visits_node_elements_before_children(reg):
    # for ttree, locality-first differs from coordinate order: the root
    # block comes before both subtrees
    ms = visit_plan(reg, "ttree")
    func = next(f for f in ms.funcs if f.name == "visit")
    stmts = func.body[0].then
    kinds = ["loop" if isinstance(s, ir.For) else
             "call" if isinstance(s, (Call, ir.If)) else "other"
             for s in stmts]
    assert kinds[0] == "loop"  # element block first, subtrees after


def test_single_tail_map_is_a_loop(reg):
    ms = visit_plan(reg, "blist")
    func = next(f for f in ms.funcs if f.name == "visit")
    assert isinstance(func.body[0], While)
    assert not any(isinstance(s, Call) for s in walk_stmts(func.body))


def test_coordinate_order_rejects_unsorted(reg):
    with pytest.raises(MapError, match="unsorted"):
        visit_plan(reg, "blist_unsorted", order="coordinate")


def test_supertype_dispatcher(reg):
    ms = visit_plan(reg, "btree")
    names = {f.name for f in ms.funcs}
    assert {"visit_btree", "visit_btree_internal", "visit_btree_leaf"} <= names
    dispatcher = next(f for f in ms.funcs if f.name == "visit_btree")
    assert any(isinstance(s, ir.Dispatch) for s in walk_stmts(dispatcher.body))


def test_parallel_tasks_are_annotations_only(reg):
    seq = visit_plan(reg, "bst", parallel=False)
    par = visit_plan(reg, "bst", parallel=True)
    stripped = [ir.strip_annotations(Module([], [f])).funcs[0]
                for f in par.funcs]
    assert stripped == seq.funcs
    spawned = [s for f in par.funcs for s in walk_stmts(f.body)
               if isinstance(s, Task)]
    assert spawned and all(t.fanout for t in spawned)


def test_chain_parallel_tasks_per_node(reg):
    par = visit_plan(reg, "blist", parallel=True)
    func = next(f for f in par.funcs if f.name == "visit")
    tasks = [s for s in walk_stmts(func.body) if isinstance(s, Task)]
    assert len(tasks) == 1 and not tasks[0].fanout
