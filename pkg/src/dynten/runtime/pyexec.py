"""Execute IR modules by translating them to Python source.

Nodes are plain lists: slot 0 holds the record name, the remaining
slots hold members in declaration order.  Structured functions become
ordinary Python functions; functions containing labels and gotos
(iterator state machines) become program-counter loops so resuming in
the middle of nested loops works the same way the emitted C does.

A Program owns the compiled namespace plus run counters: current and
maximum call depth, plus elements yielded by iterator functions.
"""

from __future__ import annotations

import sys

from .. import ir
from ..ir import (
    AddSet, Alloc, AllocArr, Bin, Call, Cast, ClearStack, ClearVec, Cst,
    Decl, Dispatch, Empty, Fld, For, Goto, Idx, If, Label, Len, Neg, Not,
    Null, Pop, Push, PushVec, Ret, Set, Task, Top, Var, While,
    walk_stmts,
)


class InterpreterError(Exception):
    """A fault inside generated code (indicates a code generation bug)."""


_DEFAULTS = {"bool": "False", "float64": "0.0"}


def _scalar_default(t):
    if isinstance(t, str):
        return _DEFAULTS.get(t, "0")
    kind = t[0]
    if kind in ("ref", "arrref", "strec", "anyref"):
        return "None"
    if kind == "arr":
        return f"[{_scalar_default(t[1])}]*{t[2]}"
    if kind == "vec":
        return "[]"
    if kind == "stack":
        return "[]"
    if kind == "tag":
        return "0"
    raise ValueError(f"no default for {t!r}")


def _is_ref_type(t):
    return isinstance(t, tuple) and t[0] == "ref"


class Program:
    """A compiled module ready to run."""

    def __init__(self, module: ir.Module):
        self.module = module
        self.slots = {}
        self.record_types = {}
        for r in module.records:
            smap = {}
            for i, (name, t) in enumerate(r.members):
                smap[name] = (i + 1, t)
            self.slots[r.name] = smap
        self.ns = {"__builtins__": {"len": len, "min": min, "max": max,
                                    "range": range, "print": print}}
        self.sources = {}
        self.ctx = [0, 0, 0, 0]  # depth, max depth, yields, nodes visited
        self.nodes = []
        self.ns["_ctx"] = self.ctx
        self.ns["_nodes"] = self.nodes
        ref_params = {f.name: [p.ref for p in f.params] for f in module.funcs}
        for f in module.funcs:
            src = _Transpiler(self, f, ref_params).emit()
            self.sources[f.name] = src
            try:
                code = compile(src, f"<dynten:{f.name}>", "exec")
                exec(code, self.ns)
            except SyntaxError as e:  # pragma: no cover - transpiler bug
                raise InterpreterError(
                    f"bad generated python for {f.name}: {e}\n{src}") from e

    def reset(self, node_sink=None):
        self.ctx[0] = self.ctx[1] = self.ctx[2] = self.ctx[3] = 0
        self.nodes = node_sink if node_sink is not None else []
        self.ns["_nodes"] = self.nodes

    def counters(self):
        return {"max_call_depth": self.ctx[1],
                "elements_yielded": self.ctx[2],
                "nodes_visited": self.ctx[3],
                "nodes_allocated": len(self.nodes)}

    def func(self, name):
        return self.ns[name]

    def call_entry(self, args: dict):
        """Invoke the entry function with storage objects bound by name."""
        entry = self.module.func(self.module.entry)
        vals = []
        for p in entry.params:
            if p.name not in args:
                raise InterpreterError(f"missing entry argument {p.name}")
            v = args[p.name]
            vals.append([v] if p.ref else v)
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(100_000)
        try:
            self.ns[self.module.entry](*vals)
        except InterpreterError:
            raise
        except (TypeError, IndexError, AttributeError, KeyError,
                ZeroDivisionError) as e:
            raise InterpreterError(self._fault(e)) from e
        finally:
            sys.setrecursionlimit(old)
        for p, v in zip(entry.params, vals):
            if p.ref:
                args[p.name] = v[0]
        return self.counters()

    def _fault(self, e):
        import traceback
        for frame in reversed(traceback.extract_tb(e.__traceback__)):
            if frame.filename.startswith("<dynten:"):
                fname = frame.filename[len("<dynten:"):-1]
                src = self.sources.get(fname, "")
                lines = src.splitlines()
                line = lines[frame.lineno - 1].strip() if frame.lineno <= len(lines) else "?"
                kind = ("null-handle dereference"
                        if isinstance(e, TypeError) else
                        "out-of-bounds or missing storage"
                        if isinstance(e, IndexError) else "fault")
                return f"{kind} in {fname} at: {line}"
        return f"fault in generated code: {e}"


class _Transpiler:
    def __init__(self, program, func, ref_params):
        self.p = program
        self.f = func
        self.ref_params = ref_params
        self.types = {}
        self.cells = set()
        self.lines = []
        self.indent = 1
        self.tmp = 0
        for prm in func.params:
            self.types[prm.name] = prm.type
            if prm.ref:
                self.cells.add(prm.name)
        for s in walk_stmts(func.body):
            if isinstance(s, Decl):
                self.types[s.name] = s.type
                if isinstance(s.type, tuple) and s.type[0] == "strec":
                    self.types[s.name] = ("ref", s.type[1])
            elif isinstance(s, For):
                self.types[s.var] = "int32"
            elif isinstance(s, Dispatch):
                for rec, var, _ in s.cases:
                    self.types[var] = ("ref", rec)
            elif isinstance(s, Call):
                refs = self.ref_params.get(s.func)
                if refs is None:
                    continue
                for a, is_ref in zip(s.args, refs):
                    if is_ref and isinstance(a, Var) and a.name not in self.cells:
                        self.cells.add(a.name)

    # -- source assembly ----------------------------------------------------

    def out(self, line):
        self.lines.append("    " * self.indent + line)

    def emit(self):
        params = ", ".join(p.name for p in self.f.params)
        head = f"def {self.f.name}({params}):"
        self.lines = [head]
        self.out("_ctx[0] += 1")
        self.out("if _ctx[0] > _ctx[1]: _ctx[1] = _ctx[0]")
        if self.f.kind in ("map", "iterator"):
            self.out("_ctx[3] += 1")  # traversal function invocations
        for prm in self.f.params:
            if prm.name in self.cells and not prm.ref:
                self.out(f"{prm.name} = [{prm.name}]")
        if any(isinstance(s, (Label, Goto)) for s in walk_stmts(self.f.body)):
            self.emit_flat()
        else:
            self.emit_stmts(self.f.body)
            self.emit_return(None)
        return "\n".join(self.lines) + "\n"

    def emit_return(self, value_src):
        if self.f.kind == "iterator" and value_src not in (None, "0"):
            self.out("_ctx[2] += 1")  # one element yielded per nonzero state
        self.out("_ctx[0] -= 1")
        self.out(f"return {value_src}" if value_src else "return")

    # -- expressions ----------------------------------------------------------

    def etype(self, e):
        if isinstance(e, Var):
            return self.types.get(e.name)
        if isinstance(e, Fld):
            ot = self.etype(e.obj)
            if _is_ref_type(ot):
                return self.p.slots[ot[1]][e.member][1]
            return None
        if isinstance(e, Idx):
            at = self.etype(e.arr)
            if isinstance(at, tuple) and at[0] in ("arr", "arrref", "vec"):
                return at[1]
            return None
        if isinstance(e, Cast):
            return ("ref", e.record)
        if isinstance(e, Null):
            return ("ref", None)
        if isinstance(e, Top):
            st = self.etype(e.stack)
            if isinstance(st, tuple) and st[0] == "stack":
                return self.p.module.frames[st[1]][e.slot][1]
        return None

    def expr(self, e):
        if isinstance(e, Cst):
            return repr(e.value)
        if isinstance(e, Null):
            return "None"
        if isinstance(e, Var):
            return f"{e.name}[0]" if e.name in self.cells else e.name
        if isinstance(e, Fld):
            ot = self.etype(e.obj)
            if not _is_ref_type(ot):
                raise InterpreterError(
                    f"{self.f.name}: member access on value of unknown type: "
                    f"{ir.fmt_expr(e)}")
            slot, _ = self.p.slots[ot[1]][e.member]
            return f"{self.expr(e.obj)}[{slot}]"
        if isinstance(e, Idx):
            return f"{self.expr(e.arr)}[{self.expr(e.index)}]"
        if isinstance(e, Bin):
            a, b = self.expr(e.a), self.expr(e.b)
            if e.op in ("min", "max"):
                return f"{e.op}({a}, {b})"
            if e.op in ("==", "!="):
                ref = _is_ref_type(self.etype(e.a)) or _is_ref_type(self.etype(e.b))
                if ref:
                    op = "is" if e.op == "==" else "is not"
                    return f"({a} {op} {b})"
            return f"({a} {e.op} {b})"
        if isinstance(e, Not):
            return f"(not {self.expr(e.a)})"
        if isinstance(e, Neg):
            return f"(-{self.expr(e.a)})"
        if isinstance(e, Cast):
            return self.expr(e.a)
        if isinstance(e, Len):
            return f"len({self.expr(e.vec)})"
        if isinstance(e, Top):
            return f"{self.expr(e.stack)}[-1][{e.slot}]"
        if isinstance(e, Empty):
            return f"(not {self.expr(e.stack)})"
        raise InterpreterError(f"cannot compile expression {e!r}")

    def record_literal(self, record):
        r = self.p.module.record(record)
        parts = [repr(record)]
        for name, t in r.members:
            parts.append(_scalar_default(t))
        return "[" + ", ".join(parts) + "]"

    # -- structured statements -----------------------------------------------

    def emit_stmts(self, stmts):
        if not stmts:
            self.out("pass")
            return
        for s in stmts:
            self.emit_stmt(s)

    def emit_stmt(self, s):
        if isinstance(s, Decl):
            init = self.expr(s.init) if s.init is not None else self.default_of(s)
            if s.name in self.cells:
                self.out(f"{s.name} = [{init}]")
            else:
                self.out(f"{s.name} = {init}")
        elif isinstance(s, Set):
            self.out(f"{self.expr(s.lhs)} = {self.expr(s.rhs)}")
        elif isinstance(s, AddSet):
            self.out(f"{self.expr(s.lhs)} += {self.expr(s.rhs)}")
        elif isinstance(s, If):
            self.out(f"if {self.expr(s.cond)}:")
            self.indent += 1
            self.emit_stmts(s.then)
            self.indent -= 1
            if s.els:
                self.out("else:")
                self.indent += 1
                self.emit_stmts(s.els)
                self.indent -= 1
        elif isinstance(s, While):
            self.out(f"while {self.expr(s.cond)}:")
            self.indent += 1
            self.emit_stmts(s.body)
            self.indent -= 1
        elif isinstance(s, For):
            self.out(f"for {s.var} in range({self.expr(s.lo)}, {self.expr(s.hi)}):")
            self.indent += 1
            self.emit_stmts(s.body)
            self.indent -= 1
        elif isinstance(s, Alloc):
            lhs = self.expr(s.lhs)
            self.out(f"{lhs} = {self.record_literal(s.record)}")
            self.out(f"_nodes.append({lhs})")
        elif isinstance(s, AllocArr):
            self.out(f"{self.expr(s.lhs)} = "
                     f"[{_scalar_default(s.elem)}]*({self.expr(s.size)})")
        elif isinstance(s, PushVec):
            self.out(f"{self.expr(s.vec)}.append({self.expr(s.value)})")
        elif isinstance(s, ClearVec):
            self.out(f"del {self.expr(s.vec)}[:]")
        elif isinstance(s, Call):
            self.emit_call(s)
        elif isinstance(s, Ret):
            self.emit_return(self.expr(s.value) if s.value is not None else None)
        elif isinstance(s, Push):
            vals = ", ".join(self.expr(v) for v in s.values)
            self.out(f"{self.expr(s.stack)}.append([{vals}])")
        elif isinstance(s, Pop):
            self.out(f"{self.expr(s.stack)}.pop()")
        elif isinstance(s, ClearStack):
            self.out(f"del {self.expr(s.stack)}[:]")
        elif isinstance(s, Task):
            self.emit_stmts(s.body)
        elif isinstance(s, Dispatch):
            obj = self.expr(s.obj)
            t = self.fresh("t")
            self.out(f"{t} = {obj}")
            for i, (rec, var, body) in enumerate(s.cases):
                kw = "if" if i == 0 else "elif"
                self.out(f"{kw} {t}[0] == {rec!r}:")
                self.indent += 1
                self.out(f"{var} = {t}")
                self.emit_stmts(body)
                self.indent -= 1
        else:
            raise InterpreterError(f"cannot compile statement {s!r}")

    def default_of(self, decl):
        t = decl.type
        if isinstance(t, tuple) and t[0] == "strec":
            return self.record_literal(t[1])
        return _scalar_default(t)

    def emit_call(self, s):
        refs = self.ref_params[s.func]
        args = []
        for a, is_ref in zip(s.args, refs):
            if is_ref:
                if not (isinstance(a, Var) and a.name in self.cells):
                    raise InterpreterError(
                        f"{self.f.name}: by-ref argument to {s.func} must be "
                        f"a plain variable, got {ir.fmt_expr(a)}")
                args.append(a.name)
            else:
                args.append(self.expr(a))
        call = f"{s.func}({', '.join(args)})"
        if s.ret is not None:
            self.out(f"{self.expr(s.ret)} = {call}")
        else:
            self.out(call)

    def fresh(self, base):
        self.tmp += 1
        return f"_{base}{self.tmp}"

    # -- flattened (goto-capable) emission ------------------------------------

    def emit_flat(self):
        blocks = _Flattener(self).flatten(self.f.body)
        self.out("pc = 0")
        self.out("while True:")
        self.indent += 1
        for i, block in enumerate(blocks):
            self.out(f"{'if' if i == 0 else 'elif'} pc == {i}:")
            self.indent += 1
            emitted = False
            for kind, payload in block:
                if kind == "line":
                    self.out(payload)
                    emitted = True
                elif kind == "jump":
                    self.out(f"pc = {payload}; continue")
                    emitted = True
                elif kind == "branch":
                    cond, target = payload
                    self.out(f"if {cond}:")
                    self.out(f"    pc = {target}; continue")
                    emitted = True
                elif kind == "return":
                    if self.f.kind == "iterator" and payload not in (None, "0"):
                        self.out("_ctx[2] += 1")
                    self.out("_ctx[0] -= 1")
                    self.out(f"return {payload}" if payload else "return")
                    emitted = True
            if not emitted:
                self.out("pass")
            self.indent -= 1
        self.indent -= 1


class _Flattener:
    """Lower structured statements with labels/gotos to basic blocks."""

    def __init__(self, tr):
        self.tr = tr
        self.blocks = [[]]
        self.labels = {}
        self.fixups = []  # (block index, op index, label)
        self.gen = 0

    def flatten(self, stmts):
        self.walk(stmts)
        self.block().append(("return", None))
        for bi, oi, label in self.fixups:
            kind, payload = self.blocks[bi][oi]
            target = self.labels[label]
            if kind == "jump":
                self.blocks[bi][oi] = ("jump", target)
            else:
                self.blocks[bi][oi] = ("branch", (payload[0], target))
        # every block must end in a transfer so the pc loop can't spin
        for i, b in enumerate(self.blocks):
            if not b or b[-1][0] not in ("jump", "return"):
                b.append(("jump", i + 1))
        return self.blocks

    def block(self):
        return self.blocks[-1]

    def new_block(self):
        self.blocks.append([])
        return len(self.blocks) - 1

    def fresh_label(self):
        self.gen += 1
        return f"__L{self.gen}"

    def mark(self, label):
        # labels start a fresh block; fall through from the previous block
        if self.block():
            self.jump(label)
        idx = self.new_block()
        self.labels[label] = idx

    def jump(self, label):
        self.block().append(("jump", None))
        self.fixups.append((len(self.blocks) - 1, len(self.block()) - 1, label))
        self.new_block()

    def branch(self, cond_src, label):
        self.block().append(("branch", (cond_src, None)))
        self.fixups.append((len(self.blocks) - 1, len(self.block()) - 1, label))

    def walk(self, stmts):
        tr = self.tr
        for s in stmts:
            if isinstance(s, Label):
                self.mark(s.name)
            elif isinstance(s, Goto):
                self.jump(s.name)
            elif isinstance(s, If):
                els = self.fresh_label()
                end = self.fresh_label()
                self.branch(f"not {tr.expr(s.cond)}", els)
                self.walk(s.then)
                if s.els:
                    self.jump(end)
                    self.mark(els)
                    self.walk(s.els)
                    self.mark(end)
                else:
                    self.mark(els)
            elif isinstance(s, While):
                top = self.fresh_label()
                end = self.fresh_label()
                self.mark(top)
                self.branch(f"not {tr.expr(s.cond)}", end)
                self.walk(s.body)
                self.jump(top)
                self.mark(end)
            elif isinstance(s, For):
                top = self.fresh_label()
                end = self.fresh_label()
                self.line(f"{s.var} = {tr.expr(s.lo)}")
                self.mark(top)
                self.branch(f"not ({s.var} < {tr.expr(s.hi)})", end)
                self.walk(s.body)
                self.line(f"{s.var} += 1")
                self.jump(top)
                self.mark(end)
            elif isinstance(s, Ret):
                self.block().append(
                    ("return", tr.expr(s.value) if s.value is not None else None))
                self.new_block()
            elif isinstance(s, Task):
                self.walk(s.body)
            elif isinstance(s, Dispatch):
                end = self.fresh_label()
                t = tr.fresh("t")
                self.line(f"{t} = {tr.expr(s.obj)}")
                arms = [(rec, var, body, self.fresh_label())
                        for rec, var, body in s.cases]
                for rec, var, body, lab in arms:
                    self.branch(f"{t}[0] == {rec!r}", lab)
                self.jump(end)
                for rec, var, body, lab in arms:
                    self.mark(lab)
                    self.line(f"{var} = {t}")
                    self.walk(body)
                    self.jump(end)
                self.mark(end)
            else:
                # straight-line statement: reuse the structured emitter
                saved_lines, saved_indent = tr.lines, tr.indent
                tr.lines, tr.indent = [], 0
                tr.emit_stmt(s)
                for line in tr.lines:
                    self.line(line)
                tr.lines, tr.indent = saved_lines, saved_indent

    def line(self, src):
        self.block().append(("line", src))
