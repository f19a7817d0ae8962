"""Where results go: the four ways kernels assemble dynamic outputs.

Deep-copy maps mirror an operand's structure; appends feed
append_first/append_rest inlined from the registry; bulk build stages
coordinates and values then builds each structure at once; and static
sinks (dense, pos/crd/vals) need no registry at all.
"""

import numpy as np

from dynten import (
    bind_formats, define_format, from_dense, gen_kernel, interpret,
    oracle_eval, parse_notation, stock_registry, to_dense, validate_tensor,
    walk_structure,
)

reg = stock_registry()
rng = np.random.default_rng(21)
n = 12
A = np.where(rng.random((n, n)) < 0.25, rng.random((n, n)), 0.0)

copy = parse_notation("forall(i) forall(j) C(i,j) = A(i,j)")
fa = define_format("A", ["dense", "bst"], reg)
want = oracle_eval(copy, {"A": A})

for c_levels, assemble in [(("dense", "bst"), "map"),
                           (("dense", "blist"), "append"),
                           (("dense", "bst"), "build"),
                           (("dense", "compressed"), "auto")]:
    fc = define_format("C", c_levels, reg)
    bound = bind_formats(copy, {"A": fa, "C": fc}, assemble=assemble,
                         registry=reg)
    module = gen_kernel(bound, reg)
    out, _ = interpret(module, {"A": from_dense(A, fa, reg)}, reg)
    ok = np.array_equal(to_dense(out, reg), want)
    valid = not validate_tensor(out, reg)
    print(f"C as {','.join(c_levels):18s} assemble={bound.assemble:6s} "
          f"exact={ok} invariants={valid}")

# peek at one assembled row: append packed a block list row in order
fc = define_format("C", ["dense", "blist"], reg)
bound = bind_formats(copy, {"A": fa, "C": fc}, assemble="append", registry=reg)
out, _ = interpret(gen_kernel(bound, reg), {"A": from_dense(A, fa, reg)}, reg)
row = next(r for r in out.levels[1]["roots"] if r is not None)
print("one appended row:", list(walk_structure(reg.schema("blist"), out.heap, row)))
