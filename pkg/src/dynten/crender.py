"""Render an IR module to a single self-contained C11 source file.

The output dialect: C11, malloc/calloc allocation, optional OpenMP task
pragmas, entry symbol `compute`.  Supertypes become structs embedded as
the first member of their subtypes plus a type-tag enum; explicit call
stacks and growable output arrays become small generated struct types
with reallocating push helpers.  Output is deterministic: identical
modules render to identical bytes.
"""

from __future__ import annotations

from . import ir
from .ir import (
    AddSet, Alloc, AllocArr, Bin, Call, Cast, ClearStack, ClearVec, Cst,
    Decl, Dispatch, Empty, Fld, For, Goto, Idx, If, Label, Len, Neg, Not,
    Null, Pop, Push, PushVec, Ret, Set, Task, Top, Var, While, Yield,
    walk_exprs, walk_stmts,
)

_C_SCALARS = {"bool": "bool", "float64": "double",
              **{t: t + "_t" for t in ir.INT_TYPES}}

_PREC = {
    "or": 1, "and": 2,
    "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6, "//": 6,
}
_C_OP = {"or": "||", "and": "&&", "//": "/"}
_SHORT = {"int32": "i32", "float64": "f64"}


def render_c(m: ir.Module, parallel: bool = False) -> str:
    return _Renderer(m, parallel).render()


class _Renderer:
    def __init__(self, m, parallel):
        self.m = m
        self.parallel = parallel
        self.lines = []
        self.indent = 0
        self.in_par = False
        self.depth_expr = "d"
        self.par_funcs = set()
        if parallel:
            has_task = {f.name for f in m.funcs if f.name != m.entry and any(
                isinstance(s, Task) and not s.entry for s in walk_stmts(f.body))}
            while True:
                grown = set(has_task)
                for f in m.funcs:
                    if f.name == m.entry or f.name in grown:
                        continue
                    for s in walk_stmts(f.body):
                        if isinstance(s, Call) and s.func in grown:
                            grown.add(f.name)
                            break
                if grown == has_task:
                    break
                has_task = grown
            self.par_funcs = has_task

    # ------------------------------------------------------------------
    # usage pre-scan

    def scan(self):
        vec_elems = set()
        minmax = set()
        for f in self.m.funcs:
            for p in f.params:
                if isinstance(p.type, tuple) and p.type[0] == "vec":
                    vec_elems.add(p.type[1])
            for s in walk_stmts(f.body):
                if isinstance(s, Decl) and isinstance(s.type, tuple) \
                        and s.type[0] == "vec":
                    vec_elems.add(s.type[1])
                for e in walk_exprs(s):
                    if isinstance(e, Bin) and e.op in ("min", "max"):
                        minmax.add(e.op)
        return sorted(vec_elems), sorted(minmax)

    # ------------------------------------------------------------------
    # types

    def ctype(self, t):
        if isinstance(t, str):
            return _C_SCALARS[t]
        kind = t[0]
        if kind == "ref":
            return f"{t[1]}*"
        if kind == "arrref":
            return f"{self.ctype(t[1])}*"
        if kind == "vec":
            return f"vec_{_SHORT[t[1]]}*"
        if kind == "stack":
            return f"{t[1]}_stack*"
        if kind == "strec":
            return f"{t[1]}*"
        if kind == "anyref":
            return "void*"
        if kind == "tag":
            return "uint8_t"
        raise ValueError(f"no C type for {t!r}")

    def member_decl(self, name, t):
        if isinstance(t, tuple) and t[0] == "arr":
            return f"{self.ctype(t[1])} {name}[{t[2]}]"
        return f"{self.ctype(t)} {name}"

    # ------------------------------------------------------------------
    # output helpers

    def out(self, text=""):
        self.lines.append("    " * self.indent + text if text else "")

    # ------------------------------------------------------------------
    # expressions

    def expr(self, e, prec=0):
        if isinstance(e, Cst):
            if isinstance(e.value, bool):
                return "true" if e.value else "false"
            if isinstance(e.value, float):
                return _c_float(e.value)
            return str(e.value)
        if isinstance(e, Null):
            return "NULL"
        if isinstance(e, Var):
            return f"(*{e.name})" if self.refs.get(e.name) else e.name
        if isinstance(e, Fld):
            return f"{self.expr(e.obj, 9)}->{e.member}"
        if isinstance(e, Idx):
            base = self.expr(e.arr, 9)
            if isinstance(e.arr, Var) and e.arr.name in self.vecs:
                base += "->data"
            return f"{base}[{self.expr(e.index)}]"
        if isinstance(e, Bin):
            if e.op in ("min", "max"):
                return f"{e.op}_i32({self.expr(e.a)}, {self.expr(e.b)})"
            p = _PREC[e.op]
            op = _C_OP.get(e.op, e.op)
            s = f"{self.expr(e.a, p)} {op} {self.expr(e.b, p + 1)}"
            return f"({s})" if p < prec else s
        if isinstance(e, Not):
            return f"!{self.expr(e.a, 9)}"
        if isinstance(e, Neg):
            return f"-{self.expr(e.a, 9)}"
        if isinstance(e, Cast):
            return f"(({e.record}*){self.expr(e.a, 9)})"
        if isinstance(e, Len):
            return f"{self.expr(e.vec, 9)}->len"
        if isinstance(e, Top):
            s = self.sname(e.stack)
            return f"{s}->data[{s}->len - 1].{self.layout(e.stack)[e.slot][0]}"
        if isinstance(e, Empty):
            s = self.sname(e.stack)
            res = f"{s}->len == 0"
            return f"({res})" if prec > 0 else res
        raise ValueError(f"cannot render expression {e!r}")

    def sname(self, e):
        assert isinstance(e, Var), "stacks are plain variables"
        return e.name

    def layout(self, e):
        return self.m.frames[self.stacks[e.name]]

    # ------------------------------------------------------------------
    # statements

    def stmt(self, s):
        if isinstance(s, Decl):
            if s.init is not None:
                self.out(f"{s.name} = {self.expr(s.init)};")
        elif isinstance(s, Set):
            self.out(f"{self.expr(s.lhs)} = {self.expr(s.rhs)};")
        elif isinstance(s, AddSet):
            self.out(f"{self.expr(s.lhs)} += {self.expr(s.rhs)};")
        elif isinstance(s, If):
            self.out(f"if ({self.expr(s.cond)}) {{")
            self.block(s.then)
            if s.els:
                self.out("} else {")
                self.block(s.els)
            self.out("}")
        elif isinstance(s, While):
            self.out(f"while ({self.expr(s.cond)}) {{")
            self.block(s.body)
            self.out("}")
        elif isinstance(s, For):
            if s.parallel and self.parallel:
                self.out("#pragma omp parallel for schedule(dynamic, 64)")
            v = s.var
            self.out(f"for ({v} = {self.expr(s.lo)}; {v} < {self.expr(s.hi)}; {v}++) {{")
            self.block(s.body)
            self.out("}")
        elif isinstance(s, Alloc):
            rec = self.m.record(s.record)
            lhs = self.expr(s.lhs)
            self.out(f"{lhs} = ({s.record}*)calloc(1, sizeof({s.record}));")
            if rec.supertype is not None:
                self.out(f"(({rec.supertype}*){lhs})->tp = "
                         f"{rec.supertype}_tp_{s.record};")
        elif isinstance(s, AllocArr):
            et = self.ctype(s.elem)
            self.out(f"{self.expr(s.lhs)} = ({et}*)calloc("
                     f"(size_t)({self.expr(s.size)}), sizeof({et}));")
        elif isinstance(s, PushVec):
            elem = self.vecs[s.vec.name]
            self.out(f"vec_{_SHORT[elem]}_push({s.vec.name}, {self.expr(s.value)});")
        elif isinstance(s, ClearVec):
            self.out(f"{s.vec.name}->len = 0;")
        elif isinstance(s, Call):
            self.render_call(s)
        elif isinstance(s, Ret):
            if s.value is None:
                self.out("return;")
            else:
                self.out(f"return {self.expr(s.value)};")
        elif isinstance(s, Push):
            it = self.stacks[self.sname(s.stack)]
            vals = ", ".join(self.expr(v) for v in s.values)
            self.out(f"{it}_stack_push({self.sname(s.stack)}, {vals});")
        elif isinstance(s, Pop):
            self.out(f"{self.sname(s.stack)}->len--;")
        elif isinstance(s, ClearStack):
            self.out(f"{self.sname(s.stack)}->len = 0;")
        elif isinstance(s, Label):
            self.lines.append(f"{s.name}:;")
        elif isinstance(s, Goto):
            self.out(f"goto {s.name};")
        elif isinstance(s, Task):
            self.render_task(s)
        elif isinstance(s, Dispatch):
            self.render_dispatch(s)
        else:
            raise ValueError(f"cannot render statement {s!r}")

    def render_call(self, s, depth_arg=None):
        target = self.m.func(s.func)
        args = [self.call_arg(a, p) for a, p in zip(s.args, target.params)]
        name = s.func
        if self.in_par and s.func in self.par_funcs:
            name += "_par"
            args.append(depth_arg or self.depth_expr)
        call = f"{name}({', '.join(args)})"
        if s.ret is not None:
            self.out(f"{self.expr(s.ret)} = {call};")
        else:
            self.out(f"{call};")

    def call_arg(self, a, p):
        if p.ref:
            if isinstance(a, Var) and self.refs.get(a.name):
                return a.name  # forward the pointer
            return f"&{self.expr(a, 9)}"
        if isinstance(p.type, tuple) and p.type[0] == "arrref" \
                and isinstance(a, Var) and a.name in self.vecs:
            return f"{a.name}->data"  # staged buffers feed array params
        return self.expr(a)

    def render_task(self, s):
        if not self.parallel:
            for sub in s.body:
                self.stmt(sub)
            return
        if s.entry:
            self.out("#pragma omp parallel")
            self.out("#pragma omp single")
            self.out("{")
            prev, prev_d = self.in_par, self.depth_expr
            self.in_par = True
            self.depth_expr = str(self.m.meta.get("depth", 8))
            self.block(s.body)
            self.in_par, self.depth_expr = prev, prev_d
            self.out("}")
            return
        if s.fanout:
            call = s.body[0]
            assert isinstance(call, Call) and len(s.body) == 1
            self.out(f"if ({self.depth_expr} != 0) {{")
            self.indent += 1
            self.out("#pragma omp task")
            self.render_call(call, depth_arg=f"(uint8_t)({self.depth_expr} - 1)")
            self.indent -= 1
            self.out("} else {")
            self.indent += 1
            prev = self.in_par
            self.in_par = False  # fall back to the sequential function
            self.stmt(call)
            self.in_par = prev
            self.indent -= 1
            self.out("}")
            return
        self.out("#pragma omp task")
        self.out("{")
        self.block(s.body)
        self.out("}")

    def render_dispatch(self, s):
        obj = self.expr(s.obj, 9)
        sup = self.m.record(s.cases[0][0]).supertype
        self.out(f"switch ({obj}->tp) {{")
        for rec, var, body in s.cases:
            self.out(f"case {sup}_tp_{rec}: {{")
            self.indent += 1
            self.out(f"{rec}* {var} = ({rec}*){obj};")
            self.out(f"(void){var};")
            for sub in body:
                self.stmt(sub)
            self.out("break;")
            self.indent -= 1
            self.out("}")
        self.out("}")

    def block(self, stmts):
        self.indent += 1
        for s in stmts:
            self.stmt(s)
        self.indent -= 1

    # ------------------------------------------------------------------
    # functions

    def signature(self, f, par_variant=False):
        params = []
        for p in f.params:
            t = self.ctype(p.type)
            if p.ref and not _composite(p.type):
                t += "*"
            params.append(f"{t} {p.name}")
        if par_variant:
            params.append("uint8_t d")
        ret = "void" if f.ret is None else self.ctype(f.ret)
        name = f.name + ("_par" if par_variant else "")
        return f"{ret} {name}({', '.join(params) or 'void'})"

    def func(self, f, par_variant=False, static=False):
        self.refs = {p.name: p.ref and not _composite(p.type) for p in f.params}
        self.vecs = {p.name: p.type[1] for p in f.params
                     if isinstance(p.type, tuple) and p.type[0] == "vec"}
        self.stacks = {p.name: p.type[1] for p in f.params
                       if isinstance(p.type, tuple) and p.type[0] == "stack"}
        self.in_par = par_variant
        self.depth_expr = "d"

        decls = []
        for s in walk_stmts(f.body):
            if isinstance(s, Decl):
                decls.append((s.name, s.type))
                if isinstance(s.type, tuple) and s.type[0] == "vec":
                    self.vecs[s.name] = s.type[1]
                elif isinstance(s.type, tuple) and s.type[0] == "stack":
                    self.stacks[s.name] = s.type[1]
            elif isinstance(s, For):
                decls.append((s.var, "int32"))

        kw = "static " if static else ""
        self.out(f"{kw}{self.signature(f, par_variant)} {{")
        self.indent += 1
        seen = set()
        for name, t in decls:
            if name in seen:
                continue
            seen.add(name)
            if isinstance(t, tuple) and t[0] == "vec":
                self.out(f"vec_{_SHORT[t[1]]} {name}_v = {{NULL, 0, 0}};")
                self.out(f"vec_{_SHORT[t[1]]}* {name} = &{name}_v;")
            elif isinstance(t, tuple) and t[0] == "stack":
                self.out(f"{t[1]}_stack {name}_s = {{NULL, 0, 0}};")
                self.out(f"{t[1]}_stack* {name} = &{name}_s;")
            elif isinstance(t, tuple) and t[0] == "strec":
                self.out(f"{t[1]} {name}_v;")
                self.out(f"{t[1]}* {name} = &{name}_v;")
                self.out(f"memset({name}, 0, sizeof({t[1]}));")
            else:
                self.out(self.member_decl(name, t) + ";")
        self.indent -= 1
        self.block(f.body)
        self.out("}")
        self.out()

    # ------------------------------------------------------------------
    # module

    def render(self):
        vec_elems, minmax = self.scan()
        head = [
            "/* generated by dynten; do not edit */",
            "#include <stdint.h>",
            "#include <stdbool.h>",
            "#include <stdlib.h>",
            "#include <string.h>",
            "",
        ]
        for op in minmax:
            cmp = "<" if op == "min" else ">"
            head.append(f"static inline int32_t {op}_i32(int32_t a, int32_t b) "
                        f"{{ return a {cmp} b ? a : b; }}")
        if minmax:
            head.append("")
        for elem in vec_elems:
            ct, sh = self.ctype(elem), _SHORT[elem]
            head += [
                f"typedef struct {{ {ct}* data; int32_t len; int32_t cap; }} vec_{sh};",
                f"static void vec_{sh}_push(vec_{sh}* v, {ct} x) {{",
                "    if (v->len == v->cap) {",
                "        v->cap = v->cap ? 2 * v->cap : 8;",
                f"        v->data = ({ct}*)realloc(v->data, (size_t)v->cap * sizeof({ct}));",
                "    }",
                "    v->data[v->len++] = x;",
                "}",
                "",
            ]

        for r in self.m.records:
            head.append(f"typedef struct {r.name} {r.name};")
        head.append("")
        for r in self.m.records:
            tag = next((t for _, t in r.members
                        if isinstance(t, tuple) and t[0] == "tag"), None)
            if tag is not None:
                parts = ", ".join(f"{r.name}_tp_{n} = {i}"
                                  for i, n in enumerate(tag[1]))
                head.append(f"enum {{ {parts} }};")
        for r in self.m.records:
            members = []
            if r.supertype is not None:
                members.append(f"{r.supertype} base;")
            for name, t in r.members:
                if isinstance(t, tuple) and t[0] == "tag":
                    members.append("uint8_t tp;")
                else:
                    members.append(self.member_decl(name, t) + ";")
            head.append(f"struct {r.name} {{ " + " ".join(members) + " };")
        head.append("")

        for it, layout in sorted(self.m.frames.items()):
            frame = " ".join(self.member_decl(n, t) + ";" for n, t in layout)
            head.append(f"typedef struct {{ {frame} }} {it}_frame;")
            head.append(f"typedef struct {{ {it}_frame* data; int32_t len; "
                        f"int32_t cap; }} {it}_stack;")
            args = ", ".join(self.member_decl(n, t) for n, t in layout)
            sets = " ".join(f"s->data[s->len].{n} = {n};" for n, _ in layout)
            head += [
                f"static void {it}_stack_push({it}_stack* s, {args}) {{",
                "    if (s->len == s->cap) {",
                "        s->cap = s->cap ? 2 * s->cap : 16;",
                f"        s->data = ({it}_frame*)realloc(s->data, "
                f"(size_t)s->cap * sizeof({it}_frame));",
                "    }",
                f"    {sets} s->len++;",
                "}",
                "",
            ]

        for f in self.m.funcs:
            kw = "" if f.name == self.m.entry else "static "
            head.append(kw + self.signature(f) + ";")
            if f.name in self.par_funcs:
                head.append("static " + self.signature(f, par_variant=True) + ";")
        head.append("")

        for f in self.m.funcs:
            static = f.name != self.m.entry
            self.func(f, static=static)
            if f.name in self.par_funcs:
                self.func(f, par_variant=True, static=True)

        return "\n".join(head + self.lines) + "\n"


def _composite(t):
    return isinstance(t, tuple) and t[0] in ("vec", "stack", "arrref", "strec")


def _c_float(v):
    s = repr(float(v))
    if "e" in s or "." in s or "inf" in s or "nan" in s:
        return s
    return s + ".0"
