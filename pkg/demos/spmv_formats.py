"""One statement, many storage layouts.

The same sparse matrix-vector product runs over a matrix stored six
different ways; every result matches the dense oracle bit for bit.
"""

import numpy as np

from dynten import (
    bind_formats, define_format, from_dense, gen_kernel, interpret,
    oracle_eval, parse_notation, stock_registry, to_dense,
)

reg = stock_registry()
rng = np.random.default_rng(11)

n = 64
A = np.where(rng.random((n, n)) < 0.08, rng.random((n, n)) + 0.5, 0.0)
x = rng.random(n) + 0.5

spec = parse_notation("forall(i) forall(j) y(i) += A(i,j) * x(j)")
want = oracle_eval(spec, {"A": A, "x": x})

for levels in [("dense", "compressed"), ("dense", "bst"), ("dense", "blist"),
               ("dense", "ctree"), ("dense", "btree"), ("bst", "ctree")]:
    fa = define_format("A", levels, reg)
    fx = define_format("x", ["dense"], reg)
    fy = define_format("y", ["dense"], reg)
    bound = bind_formats(spec, {"A": fa, "x": fx, "y": fy}, registry=reg)
    module = gen_kernel(bound, reg)
    inputs = {"A": from_dense(A, fa, reg), "x": from_dense(x, fx, reg)}
    out, counters = interpret(module, inputs, reg)
    exact = np.array_equal(to_dense(out, reg), want)
    print(f"A as {','.join(levels):22s} exact={exact}  "
          f"depth={counters['max_call_depth']:2d}  "
          f"yields={counters['elements_yielded']}")
