"""Watch a traversal coroutine become a resumable state machine.

The pipeline: a mechanical recursive coroutine per node type, tail-call
optimization plus null guards, inlining to a single self-recursive
body, then recursion elimination onto an explicit caller-owned stack
with numbered yield sites.
"""

from dynten import gen_coroutine, gen_iterator, gen_node_decls, ir, stock_registry
from dynten.ir import Module

reg = stock_registry()
sset = reg.schema("bst")

print("=== stage 1: the mechanical coroutine ===")
co = gen_coroutine(sset, "bst", "scalar", "bst")
print(ir.format_module(Module([], [co])))

plan = gen_iterator(sset, "bst")
print("=== stage 2: after tail-call optimization + guards (segments) ===")
for seg in plan.segments:
    print(f"segment over {seg.node}:")
    out = []
    ir._fmt_stmts(seg.body, out, 1)
    print("\n".join(out))

print("\n=== stage 3: the state machine, rendered as C ===")
m = Module(gen_node_decls(sset), [plan.machine], entry=plan.name,
           frames={plan.name: plan.frame})
text = ir.render_c(m)
print(text[text.index("uint8_t iter_bst(uint8_t"):])

print("=== driving two cursors at once (element-wise intersection) ===")
from dynten.runtime.pyexec import Program

prog = Program(m)
step = prog.func(plan.name)
b = ["bst", 4, 2.0, ["bst", 7, 3.0, None, None], ["bst", 1, 8.0, None, None]]
c = ["bst", 4, 10.0, ["bst", 9, 1.0, None, None], None]
bn, bs, bc, bv = [b], [], [0], [0.0]
cn, cs, cc, cv = [c], [], [0], [0.0]
bstate, cstate = step(0, bn, bs, bc, bv), step(0, cn, cs, cc, cv)
while bstate and cstate:
    j = min(bc[0], cc[0])
    if bc[0] == j and cc[0] == j:
        print(f"  match at {j}: {bv[0]} * {cv[0]} = {bv[0] * cv[0]}")
    if bc[0] == j:
        bstate = step(bstate, bn, bs, bc, bv)
    if cc[0] == j:
        cstate = step(cstate, cn, cs, cc, cv)
