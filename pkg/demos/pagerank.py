"""Full PageRank over a dynamic adjacency matrix.

The inner kernel y(i) += A(i,j) * x(j) * inv(d(j)) is generated once
for A stored as a BST of C-trees; the convergence loop, damping, and
the degree vector live here in the driver, as an application would.
New edges are inserted between rounds to show the point of dynamic
storage: no rebuild, just node insertions (here via re-ingestion of the
grown edge list into the same format).
"""

import numpy as np

from dynten import (
    bind_formats, define_format, from_dense, gen_kernel, interpret,
    parse_notation, stock_registry, to_dense,
)
from dynten.runtime.pyexec import Program

reg = stock_registry()
rng = np.random.default_rng(3)

n = 50
edges = {(i, j) for i, j in zip(rng.integers(0, n, 300), rng.integers(0, n, 300))
         if i != j}

spec = parse_notation("forall(i) forall(j) y(i) += A(i,j) * x(j) * inv(d(j))")
fa = define_format("A", ["bst", "ctree"], reg)
dv = define_format("d", ["dense"], reg)
xv = define_format("x", ["dense"], reg)
yv = define_format("y", ["dense"], reg)
bound = bind_formats(spec, {"A": fa, "x": xv, "d": dv, "y": yv}, registry=reg)
module = gen_kernel(bound, reg)
program = Program(module)  # compile once, run every iteration

DAMPING = 0.85


def adjacency():
    dense = np.zeros((n, n))
    for i, j in edges:
        dense[j, i] = 1.0  # follow in-links: rank flows j <- i
    return dense


def pagerank(A_tv, d, iters=60):
    x = np.full(n, 1.0 / n)
    for _ in range(iters):
        inputs = {"A": A_tv, "x": from_dense(x, xv, reg),
                  "d": from_dense(d, dv, reg)}
        out, _ = interpret(module, inputs, reg, program=program)
        y = to_dense(out, reg)
        x_new = (1.0 - DAMPING) / n + DAMPING * y
        if np.abs(x_new - x).max() < 1e-12:
            x = x_new
            break
        x = x_new
    return x


dense = adjacency()
d = np.maximum(dense.sum(axis=0), 1.0)  # out-degrees, 1 for dangling
A = from_dense(dense, fa, reg)
ranks = pagerank(A, d)
top = np.argsort(ranks)[::-1][:5]
print("top nodes:", [(int(i), round(float(ranks[i]), 5)) for i in top])

# the graph grows: point ten new edges at node 0, re-rank
for src in range(10, 20):
    edges.add((src, 0))
dense = adjacency()
d = np.maximum(dense.sum(axis=0), 1.0)
ranks2 = pagerank(from_dense(dense, fa, reg), d)
print(f"rank of node 0: {ranks[0]:.5f} -> {ranks2[0]:.5f} after new in-links")
assert ranks2[0] > ranks[0]
