"""Independent dense brute-force evaluator for verification.

Deliberately shares only the statement types with the compiler: plain
nested Python loops in forall order over dense arrays, accumulating in
loop order.  Because the generated kernels also combine and sum the
same floats in ascending coordinate order, interpreter results are
expected to match this oracle bit for bit.
"""

from __future__ import annotations

import numpy as np

from .notation import Access, BinE, ConstE, InvE, KernelSpec, accesses_of


class OracleError(Exception):
    pass


def oracle_eval(spec: KernelSpec, args: dict) -> np.ndarray:
    """Evaluate a statement over dense operands.

    args: tensor name -> array-like.  Returns the dense output;
    accumulate mode adds into a zero-initialized result in loop order.
    inv(0) is an error.
    """
    arrays = {}
    for a in accesses_of(spec.rhs):
        if a.tensor not in args:
            raise OracleError(f"missing operand {a.tensor!r}")
        arrays[a.tensor] = np.asarray(args[a.tensor], dtype=np.float64)

    extent = {}
    for a in accesses_of(spec.rhs):
        arr = arrays[a.tensor]
        if arr.ndim != len(a.indices):
            raise OracleError(f"operand {a.tensor!r} has rank {arr.ndim}, "
                              f"access {a} expects {len(a.indices)}")
        for k, v in enumerate(a.indices):
            if extent.setdefault(v, arr.shape[k]) != arr.shape[k]:
                raise OracleError(f"extent mismatch at index {v!r}")
    for v in spec.foralls:
        if v not in extent:
            raise OracleError(f"no operand fixes the extent of {v!r}")

    out_shape = tuple(extent[v] for v in spec.lhs.indices)
    out = np.zeros(out_shape, dtype=np.float64)

    idx = {}

    def value(e):
        if isinstance(e, ConstE):
            return e.value
        if isinstance(e, Access):
            return float(arrays[e.tensor][tuple(idx[v] for v in e.indices)])
        if isinstance(e, InvE):
            x = value(e.access)
            if x == 0.0:
                raise OracleError(f"inv of zero entry in {e.access.tensor!r}")
            return 1.0 / x
        if isinstance(e, BinE):
            a, b = value(e.a), value(e.b)
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            return a * b
        raise OracleError(f"cannot evaluate {e}")

    def loop(k):
        if k == len(spec.foralls):
            key = tuple(idx[v] for v in spec.lhs.indices)
            v = value(spec.rhs)
            if spec.mode == "accumulate":
                out[key] += v
            else:
                out[key] = v
            return
        var = spec.foralls[k]
        for i in range(extent[var]):
            idx[var] = i
            loop(k + 1)

    loop(0)
    return out
