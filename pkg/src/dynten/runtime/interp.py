"""Run kernel modules against TensorValues.

interpret() marshals inputs per the calling convention recorded in the
module, preallocates the output (zeroed dense storage, open pos arrays,
null roots, a fresh heap), executes the translated entry function, and
wraps the results.  Execution is sequential and deterministic; task
annotations run inline in program order.
"""

from __future__ import annotations

from .. import ir
from ..formats import define_format
from .heap import NodeHeap
from .pyexec import Program, InterpreterError
from .tensor import TensorValue, empty_tensor


def output_extents(module, inputs):
    """Extent per output dimension, derived from matching input dims."""
    meta = module.meta
    accesses = meta["accesses"]
    out_name = meta["output"]
    extent_of = {}
    for t, indices in accesses.items():
        if t == out_name or t not in inputs:
            continue
        for k, v in enumerate(indices):
            extent_of.setdefault(v, inputs[t].extents[k])
    ext = []
    for v in accesses[out_name]:
        if v not in extent_of:
            raise InterpreterError(
                f"cannot derive extent of output dimension {v!r}")
        ext.append(extent_of[v])
    return tuple(ext)


def output_format(module, registry):
    meta = module.meta
    out_name = meta["output"]
    for entry in meta["layouts"]:
        if entry["tensor"] == out_name:
            descs = [lv["family"] if lv["kind"] == "dynamic" else lv["kind"]
                     for lv in entry["levels"]]
            return define_format(out_name, descs, registry)
    raise InterpreterError(f"module lacks a layout for output {out_name!r}")


def interpret(module, inputs, registry, program=None):
    """Execute a checked module; returns (output TensorValue, counters).

    inputs: tensor name -> TensorValue for every input.  A precompiled
    Program may be supplied to amortize translation across runs.
    """
    meta = module.meta
    out_name = meta["output"]
    fmt = output_format(module, registry)
    ext = output_extents(module, inputs)
    out = empty_tensor(fmt, ext, registry)

    args = {}
    for entry in meta["layouts"]:
        t = entry["tensor"]
        if entry["role"] == "in":
            if t not in inputs:
                raise InterpreterError(f"missing input tensor {t!r}")
            tv = inputs[t]
            want = [lv["kind"] for lv in entry["levels"]]
            have = [lv.kind for lv in tv.fmt.levels]
            if want != have:
                raise InterpreterError(
                    f"input {t!r} has levels {have}, kernel expects {want}")
            args.update(tv.entry_args(registry, role="in", name=t))
        else:
            args.update(out.entry_args(registry, role="out", name=t))

    prog = program if program is not None else Program(module)
    sink = out.heap.nodes if out.heap is not None else []
    prog.reset(node_sink=sink)
    counters = prog.call_entry(args)
    return out, counters
