"""Command-line front door: compile, emit, run, and check kernels.

    dynten compile --expr "forall(i) forall(j) y(i) += A(i,j)*x(j)" \
        --format A=dense,bst --format x=dense --format y=dense

Subcommands share the compilation flags; `run` and `check` add tensor
inputs (`--input NAME=FILE` for .mtx/.tns files, or
`NAME=random:100x100:0.05` for seeded random data).  Exit codes:
0 success, 1 user error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import ir
from .formats import FormatError, define_format, stock_registry
from .notation import NotationError, bind_formats, parse_notation
from .codegen.kernel import KernelError, gen_kernel
from .codegen.maps import MapError
from .codegen.iterators import IteratorError
from .oracle import OracleError, oracle_eval
from .runtime import io as tio
from .runtime.ingest import ingest_file
from .runtime.interp import interpret
from .runtime.pyexec import InterpreterError
from .runtime.tensor import TensorError, from_dense, to_dense, to_entries
from .schema import SchemaError, parse_schema, validate

USER_ERRORS = (SchemaError, NotationError, FormatError, OracleError,
               TensorError, tio.IOError_, MapError, IteratorError,
               FileNotFoundError, ValueError)
INTERNAL_ERRORS = (KernelError, InterpreterError)


def build_parser():
    p = argparse.ArgumentParser(
        prog="dynten",
        description="sparse tensor algebra kernels over dynamic structures")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--expr", required=True,
                        help="statement, e.g. 'forall(i) a(i) = b(i)'")
        sp.add_argument("--format", action="append", default=[],
                        metavar="NAME=lv1,lv2",
                        help="tensor format: levels are dense, compressed, "
                             "or a schema family name")
        sp.add_argument("--schema", action="append", default=[],
                        metavar="FILE", help="extra .nsl schema file")
        sp.add_argument("--assemble", default="auto",
                        choices=["auto", "map", "append", "build"],
                        help="dynamic output assembly: auto picks deep-copy "
                             "map when legal, else append, else build")
        sp.add_argument("--parallel", action="store_true",
                        help="annotate parallel loops/tasks in emitted C")
        sp.add_argument("--depth", type=int, default=8,
                        help="task recursion depth bound")
        sp.add_argument("--seed", type=int, default=0,
                        help="seed for random: inputs")
        sp.add_argument("--emit-ir", action="store_true",
                        help="print readable IR to stdout")
        sp.add_argument("--output", help="output file")
        return sp

    common(sub.add_parser("compile", help="lower and write the module"))
    ec = common(sub.add_parser("emit-c", help="render the kernel as C11 source"))
    ec.add_argument("--harness", action="store_true",
                    help="append a dump-loading, timing, printing driver")
    for name, help_ in (("run", "interpret the kernel on inputs"),
                        ("check", "compare the interpreter with the oracle")):
        sp = common(sub.add_parser(name, help=help_))
        sp.add_argument("--input", action="append", default=[],
                        metavar="NAME=SRC",
                        help=".mtx/.tns path or random:SHAPE:DENSITY")
        sp.add_argument("--dump-inputs", metavar="DIR",
                        help="write each ingested input as DIR/<name>.dump")
    return p


def load_registry(schema_files):
    reg = stock_registry()
    for path in schema_files:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        family = path.rsplit("/", 1)[-1].removesuffix(".nsl")
        reg.add_schema(validate(parse_schema(text, family)), family)
    return reg


def parse_format_args(format_args, registry):
    out = {}
    for item in format_args:
        name, _, levels = item.partition("=")
        if not levels:
            raise FormatError(f"bad --format {item!r}, expected NAME=lv1,lv2")
        out[name] = define_format(name, levels.split(","), registry)
    return out


def compile_kernel(args):
    registry = load_registry(args.schema)
    spec = parse_notation(args.expr)
    formats = parse_format_args(args.format, registry)
    for t in spec.tensors:
        if t not in formats:
            raise NotationError(f"missing --format for tensor {t!r}")
    bound = bind_formats(spec, formats, assemble=args.assemble,
                         registry=registry)
    module = gen_kernel(bound, registry, parallel=args.parallel,
                        depth=args.depth)
    return registry, spec, formats, bound, module


def load_input(name, src, fmt, registry, seed):
    if src.startswith("random:"):
        parts = src.split(":")
        shape = tuple(int(x) for x in parts[1].split("x"))
        density = float(parts[2]) if len(parts) > 2 else 0.05
        rng = np.random.default_rng(seed + sum(ord(c) for c in name))
        dense = rng.random(shape) + 0.5
        if any(lv.kind != "dense" for lv in fmt.levels):
            dense = np.where(rng.random(shape) < density, dense, 0.0)
        return from_dense(dense, fmt, registry), dense
    tv = ingest_file(src, fmt, registry)
    return tv, None


def cmd_compile(args):
    registry, spec, formats, bound, module = compile_kernel(args)
    for note in bound.notes():
        print(note)
    if args.emit_ir:
        print(ir.format_module(module))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(ir.to_json(module))
        print(f"wrote module to {args.output}")
    return 0


def cmd_emit_c(args):
    registry, _, _, bound, module = compile_kernel(args)
    if args.harness:
        from .charness import render_harness
        text = render_harness(module, registry, parallel=args.parallel)
    else:
        text = ir.render_c(module, parallel=args.parallel)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.emit_ir:
        print(ir.format_module(module))
    return 0


def parse_inputs(args, spec, formats, registry):
    sources = {}
    for item in args.input:
        name, _, src = item.partition("=")
        sources[name] = src
    inputs, dense = {}, {}
    for t in spec.tensors[1:]:
        if t not in sources:
            raise NotationError(f"missing --input for tensor {t!r}")
        tv, d = load_input(t, sources[t], formats[t], registry, args.seed)
        inputs[t] = tv
        dense[t] = d
    return inputs, dense


def cmd_run(args):
    registry, spec, formats, bound, module = compile_kernel(args)
    inputs, _ = parse_inputs(args, spec, formats, registry)
    if args.dump_inputs:
        import os
        from .runtime.io import dump_tensor
        os.makedirs(args.dump_inputs, exist_ok=True)
        for name, tv in inputs.items():
            path = os.path.join(args.dump_inputs, name + ".dump")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(dump_tensor(tv, name))
    out, counters = interpret(module, inputs, registry)
    text = tio.write_tns(out.extents, to_entries(out, registry))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for k, v in counters.items():
        print(f"{k}: {v}", file=sys.stderr)
    return 0


def cmd_check(args):
    registry, spec, formats, bound, module = compile_kernel(args)
    inputs, dense = parse_inputs(args, spec, formats, registry)
    dense_args = {t: (dense[t] if dense[t] is not None
                      else to_dense(inputs[t], registry))
                  for t in inputs}
    want = oracle_eval(spec, dense_args)
    out, counters = interpret(module, inputs, registry)
    got = to_dense(out, registry)
    abs_diff = float(np.max(np.abs(got - want))) if got.size else 0.0
    denom = np.maximum(np.abs(want), 1e-300)
    rel_diff = float(np.max(np.abs(got - want) / denom)) if got.size else 0.0
    exact = np.array_equal(got, want)
    print(f"max abs diff: {abs_diff!r}")
    print(f"max rel diff: {rel_diff!r}")
    if exact:
        print("check: PASS (exact)")
        return 0
    if rel_diff <= 1e-12:
        # documented fallback for platforms with nonstandard contraction
        print("check: PASS (within 1e-12 relative)")
        return 0
    print("check: FAIL")
    return 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {"compile": cmd_compile, "emit-c": cmd_emit_c,
                "run": cmd_run, "check": cmd_check}
    try:
        return handlers[args.command](args)
    except USER_ERRORS as e:
        print(f"dynten: error: {e}", file=sys.stderr)
        return 1
    except INTERNAL_ERRORS as e:
        print(f"dynten: internal error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
