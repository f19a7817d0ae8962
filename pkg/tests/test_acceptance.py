"""Acceptance criteria, one test per criterion, each printing a PASS line
with its runtime.  Run with `pytest tests/test_acceptance.py -v -s`.
"""

import random
import time

import numpy as np
import pytest

from dynten import (
    NodeHeap, NotationError, assemble_structure, bind_formats,
    build_structure, from_dense, gen_iterator, gen_kernel, gen_node_decls,
    interpret, ir, load_stock_schema, oracle_eval, parse_notation, to_dense,
    validate_structure, validate_tensor, walk_structure, STOCK_FAMILIES,
)
from dynten.cli import main as cli_main
from dynten.ir import Module
from dynten.runtime.pyexec import Program
from dynten.codegen.common import entry_info

from conftest import random_matrix, random_vector
from test_schema import EXPECTED_FACTS, EXPECTED_ROOTS
from test_assembly import REGISTERED, red_black_ok


def report(name, t0, budget):
    dt = time.perf_counter() - t0
    print(f"ACCEPTANCE PASS: {name} ({dt:.2f}s, budget {budget}s)")
    assert dt < budget, f"{name} exceeded its {budget}s budget ({dt:.1f}s)"


def test_schema_suite():
    t0 = time.perf_counter()
    from dynten.schema import family_sorted
    assert len(STOCK_FAMILIES) == 11
    for family in STOCK_FAMILIES:
        s = load_stock_schema(family)
        assert s.validated
        facts = {n.name: (n.single_tail, n.is_sorted) for n in s.nodes}
        assert facts == EXPECTED_FACTS[family], family
        assert s.root_candidates == EXPECTED_ROOTS[family], family
        assert family_sorted(s, s.root_candidates[0]) is \
            (family != "blist_unsorted")
    report("schema suite (11 stock schemas, derived facts)", t0, 1.0)


def test_declaration_goldens():
    t0 = time.perf_counter()
    from dynten.ir import Func, Ret
    for family in ("bst", "blist", "btree"):
        recs = gen_node_decls(load_stock_schema(family))
        m = Module(recs, [Func("compute", [], None, [Ret()])])
        lines = [ln for ln in ir.render_c(m).splitlines()
                 if ln.startswith(("struct ", "enum "))]
        got = "\n".join(lines) + "\n"
        with open(f"tests/goldens/decls_{family}.txt", encoding="utf-8") as fh:
            assert got == fh.read(), family
    report("declaration goldens (bst, blist, btree)", t0, 1.0)


SORTED_FAMILIES = [f for f in STOCK_FAMILIES if f != "blist_unsorted"]


def _sizes(r, count=1000):
    sizes = []
    for i in range(count):
        u = r.random()
        if u < 0.85:
            sizes.append(r.randint(0, 60))
        elif u < 0.98:
            sizes.append(r.randint(60, 800))
        else:
            sizes.append(r.randint(800, 3000))
    sizes[-1] = 10_000  # one full-size structure per schema
    return sizes


@pytest.mark.parametrize("family", SORTED_FAMILIES)
def test_iterator_property_suite(reg, family):
    t0 = time.perf_counter()
    sset = reg.schema(family)
    plan = gen_iterator(sset, family)
    m = Module(gen_node_decls(sset), [plan.machine], entry=plan.name,
               frames={plan.name: plan.frame})
    assert ir.check_module(m) == []
    prog = Program(m)
    step = prog.func(plan.name)
    drill, _ = entry_info(sset, sset.root_candidates[0])
    r = random.Random(0xACCE97 + hash(family) % 1000)
    heap = NodeHeap(gen_node_decls(sset))
    total = 0
    for n in _sizes(r):
        coords = sorted(r.sample(range(n * 3 + 1), n))
        elems = [(c, float(c) + 0.25) for c in coords]
        root = build_structure(sset, heap, elems, rng=r)
        entry = (heap.get(root, drill) if drill and root is not None
                 else root)
        nv, stack, c, v = [entry], [], [0], [0.0]
        got = []
        st = step(0, nv, stack, c, v)
        prev = -1
        while st:
            got.append((c[0], v[0]))
            assert c[0] > prev, "coordinates must strictly increase"
            prev = c[0]
            st = step(st, nv, stack, c, v)
        assert stack == []
        want = list(walk_structure(sset, heap, root))
        assert got == want == elems, (family, n)
        total += n
        del heap.nodes[:]
    report(f"iterator property suite [{family}] "
           f"(1000 structures, {total} elements)", t0, 60.0)


def test_assembly_roundtrip(reg):
    t0 = time.perf_counter()
    r = random.Random(0xA55E)
    for family, mode in REGISTERED:
        sset = reg.schema(family)
        heap = NodeHeap(gen_node_decls(sset))
        for n in (0, 1, 2, 17, 1000):
            coords = sorted(r.sample(range(n * 4 + 1), n))
            elems = [(c, c * 0.5 + 1.0) for c in coords]
            root = assemble_structure(reg, heap, family, "scalar", elems, mode)
            if n == 0:
                assert root is None
                continue
            assert list(walk_structure(sset, heap, root)) == elems, \
                (family, mode, n)
            assert not validate_structure(sset, heap, root), (family, mode)
            if family == "rbtree" and mode == "build":
                assert red_black_ok(heap, heap.get(root, "r")), n
    report("assembly roundtrip (7 registered impls x lengths 0,1,2,17,1000)",
           t0, 30.0)


VEC_OUTS = [(("dense",), "auto"), (("compressed",), "auto"),
            (("bst",), "append"), (("blist",), "append"),
            (("bst",), "build")]
MAT_OUTS = [(("dense", "dense"), "auto"), (("dense", "compressed"), "auto"),
            (("dense", "blist"), "append"), (("dense", "bst"), "append"),
            (("dense", "bst"), "build"), ("same", "map")]
MAT_FORMATS = [("dense", "bst"), ("dense", "blist"), ("dense", "ctree"),
               ("dense", "btree"), ("bst", "ctree"), ("dense", "compressed"),
               ("dense", "dense")]
ADD_PARTNER = {("dense", "dense"): ("dense", "dense")}


def grid_cells():
    for a in MAT_FORMATS:
        for y, assemble in VEC_OUTS:
            yield ("spmv", "forall(i) forall(j) y(i) += A(i,j) * x(j)",
                   {"A": a, "x": ("dense",), "y": y}, assemble)
            yield ("pagerank",
                   "forall(i) forall(j) y(i) += A(i,j) * x(j) * inv(d(j))",
                   {"A": a, "x": ("dense",), "d": ("dense",), "y": y}, assemble)
        b = ADD_PARTNER.get(a, ("dense", "compressed"))
        for c, assemble in MAT_OUTS:
            cf = a if c == "same" else c
            yield ("add", "forall(i) forall(j) C(i,j) = A(i,j) + B(i,j)",
                   {"A": a, "B": b, "C": cf}, assemble)
            yield ("mul", "forall(i) forall(j) C(i,j) = A(i,j) * B(i,j)",
                   {"A": a, "B": b, "C": cf}, assemble)
            yield ("copy", "forall(i) forall(j) C(i,j) = A(i,j)",
                   {"A": a, "C": cf}, assemble)


def test_kernel_grid(reg, fmt):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0x6121D)
    n = 100
    mats = {f: random_matrix(rng, n, n, 0.05) for f in MAT_FORMATS}
    dense_b = random_matrix(rng, n, n, 0.05)
    x = random_vector(rng, n)
    d = random_vector(rng, n)
    tensors = {}

    def tensor_for(name, levels, dense):
        key = (name, levels)
        if key not in tensors:
            tensors[key] = from_dense(dense, fmt(f"{name}_{'_'.join(levels)}",
                                                 *levels), reg)
        return tensors[key]

    ran, skipped = 0, 0
    for kernel, expr, formats, assemble in grid_cells():
        spec = parse_notation(expr)
        binds = {t: fmt(t, *lv) for t, lv in formats.items()}
        try:
            bound = bind_formats(spec, binds, assemble=assemble, registry=reg)
            module = gen_kernel(bound, reg)
        except (NotationError,) as e:
            skipped += 1
            continue
        dense_inputs = {}
        inputs = {}
        for t in spec.tensors[1:]:
            if t == "A":
                dense_inputs[t] = mats[formats["A"]]
            elif t == "B":
                dense_inputs[t] = (dense_b if formats["B"] != ("dense", "dense")
                                   else mats[("dense", "dense")])
            elif t == "x":
                dense_inputs[t] = x
            else:
                dense_inputs[t] = d
            inputs[t] = tensor_for(t, formats[t], dense_inputs[t])
        out, counters = interpret(module, inputs, reg)
        got = to_dense(out, reg)
        want = oracle_eval(spec, dense_inputs)
        assert np.array_equal(got, want), (kernel, formats, assemble)
        assert not validate_tensor(out, reg), (kernel, formats, assemble)
        ran += 1
    assert ran >= 40, f"only {ran} valid grid cells"
    report(f"kernel grid ({ran} cells exact vs oracle, {skipped} invalid "
           "combinations skipped)", t0, 300.0)


def test_stack_safety(reg, fmt):
    t0 = time.perf_counter()
    n = 10 ** 6
    heap = NodeHeap(gen_node_decls(reg.schema("list")))
    elems = [(i, 1.0) for i in range(n)]
    root = assemble_structure(reg, heap, "list", "scalar", elems, "append")
    from dynten.runtime.tensor import TensorValue
    a = TensorValue(fmt("a", "list"), (n,), [{"roots": [root]}], None, heap)

    # map over the chain
    spec = parse_notation("forall(i) y(i) += a(i)")
    bound = bind_formats(spec, {"a": fmt("a", "list"), "y": fmt("y", "dense")},
                         registry=reg)
    module = gen_kernel(bound, reg)
    out, counters = interpret(module, {"a": a}, reg)
    assert counters["max_call_depth"] <= 16, counters
    assert sum(out.vals) == float(n)
    map_depth = counters["max_call_depth"]

    # iterate the chain into an ordered sink
    spec2 = parse_notation("forall(i) y(i) = a(i)")
    bound2 = bind_formats(spec2, {"a": fmt("a", "list"),
                                  "y": fmt("y2", "compressed")}, registry=reg)
    module2 = gen_kernel(bound2, reg)
    out2, counters2 = interpret(module2, {"a": a}, reg)
    assert counters2["max_call_depth"] <= 16, counters2
    assert len(out2.levels[0]["crd"]) == n
    assert counters2["elements_yielded"] == n
    report(f"stack safety (10^6-element list: map depth {map_depth}, "
           f"iterate depth {counters2['max_call_depth']})", t0, 120.0)


SPMV_ARGS = ["--expr", "forall(i) forall(j) y(i) += A(i,j)*x(j)",
             "--format", "A=dense,bst", "--format", "x=dense",
             "--format", "y=dense", "--seed", "42"]


def test_determinism(tmp_path):
    t0 = time.perf_counter()
    outs = []
    for i in range(2):
        mod = tmp_path / f"m{i}.json"
        csrc = tmp_path / f"k{i}.c"
        assert cli_main(["compile"] + SPMV_ARGS + ["--output", str(mod)]) == 0
        assert cli_main(["emit-c"] + SPMV_ARGS + ["--output", str(csrc)]) == 0
        outs.append((mod.read_bytes(), csrc.read_bytes()))
    assert outs[0] == outs[1]
    report("determinism (byte-identical compile and emit-c)", t0, 30.0)
