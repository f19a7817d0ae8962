"""Imperative IR for generated kernels, plus the portable-C renderer.

Every generated artifact (record declarations, map functions, iterator
state machines, assembly bodies, kernel entry points) is built from the
small statement/expression language below.  The interpreter executes it
directly; render_c() turns a checked module into a single self-contained
C11 translation unit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, is_dataclass, fields as dc_fields

# ---------------------------------------------------------------------------
# Types
#
# Member/value types are plain data: a string for scalars ("int32",
# "int64", "uint8" .. "uint64", "bool", "float64") or a tuple:
#   ("ref", record)          nullable node reference
#   ("arr", elem, capacity)  inline array member
#   ("arrref", elem)         reference to a heap array
#   ("vec", elem)            growable vector (staging buffers, outputs)
#   ("stack", iterator)      explicit call stack, layout in Module.frames
#   ("strec", record)        assembly-state record held by value
#   ("tag", (names...))      concrete-type tag member of a supertype record

INT_TYPES = {"int8", "uint8", "int16", "uint16", "int32", "uint32",
             "int64", "uint64"}


def Ref(record):
    return ("ref", record)


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Cst:
    value: object  # int | float | bool


@dataclass(frozen=True)
class Null:
    pass


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Fld:
    obj: object
    member: str


@dataclass(frozen=True)
class Idx:
    arr: object
    index: object


@dataclass(frozen=True)
class Bin:
    op: str  # + - * / // < <= > >= == != and or min max
    a: object
    b: object


@dataclass(frozen=True)
class Not:
    a: object


@dataclass(frozen=True)
class Neg:
    a: object


@dataclass(frozen=True)
class Cast:
    """Reinterpret a node reference between a supertype and a subtype."""

    a: object
    record: str


@dataclass(frozen=True)
class Len:
    vec: object


@dataclass(frozen=True)
class Top:
    """Slot of the top frame of an explicit stack (usable as lvalue)."""

    stack: object
    slot: int


@dataclass(frozen=True)
class Empty:
    stack: object


# ---------------------------------------------------------------------------
# Statements


@dataclass
class Decl:
    name: str
    type: object
    init: object = None


@dataclass
class Set:
    lhs: object
    rhs: object


@dataclass
class AddSet:
    """Reduction accumulate: lhs += rhs."""

    lhs: object
    rhs: object


@dataclass
class If:
    cond: object
    then: list
    els: list = None


@dataclass
class While:
    cond: object
    body: list


@dataclass
class For:
    """Counted loop over [lo, hi). `parallel` is emission-only metadata."""

    var: str
    lo: object
    hi: object
    body: list
    parallel: bool = False


@dataclass
class Alloc:
    lhs: object
    record: str


@dataclass
class AllocArr:
    lhs: object
    elem: object
    size: object


@dataclass
class PushVec:
    vec: object
    value: object


@dataclass
class ClearVec:
    vec: object


@dataclass
class Yield:
    """Coroutine yield; must be lowered away before a module is built."""

    coord: object
    value: object


@dataclass
class Call:
    func: str
    args: list
    ret: object = None


@dataclass
class Ret:
    value: object = None


@dataclass
class Push:
    stack: object
    values: list


@dataclass
class Pop:
    stack: object


@dataclass
class ClearStack:
    stack: object


@dataclass
class Label:
    name: str


@dataclass
class Goto:
    name: str


@dataclass
class Task:
    """Parallel-task annotation.

    The wrapped body is the computation; `fanout` selects depth-guarded
    spawning (tree children) versus plain per-node tasks (tail chains),
    and `entry` marks the top-level region around the root call.
    Interpreters execute the body inline in program order.
    """

    body: list
    fanout: bool = False
    entry: bool = False


@dataclass
class Dispatch:
    """Branch on the concrete type of a supertype reference.

    cases: list of (record_name, bound_var, body); bound_var sees the
    reference at its concrete type.
    """

    obj: object
    cases: list


# ---------------------------------------------------------------------------
# Declarations


@dataclass
class Record:
    name: str
    members: list  # [(name, type)]
    supertype: str = None

    def member_type(self, name):
        for m, t in self.members:
            if m == name:
                return t
        return None


@dataclass
class Param:
    name: str
    type: object
    ref: bool = False  # passed by reference (in-out scalar or handle)


@dataclass
class Func:
    name: str
    params: list
    ret: object  # None or a value type
    body: list
    kind: str = ""  # "map" | "iterator" | "entry" | "helper"


@dataclass
class Module:
    records: list
    funcs: list
    entry: str = "compute"
    tensors: list = field(default_factory=list)  # [(name, role, [(param, type)])]
    frames: dict = field(default_factory=dict)   # iterator -> [(slot, type)]
    meta: dict = field(default_factory=dict)

    def record(self, name):
        for r in self.records:
            if r.name == name:
                return r
        return None

    def func(self, name):
        for f in self.funcs:
            if f.name == name:
                return f
        return None


# ---------------------------------------------------------------------------
# Structural walking helpers

def walk_stmts(stmts):
    """Yield every statement, recursing into nested bodies."""
    for s in stmts:
        yield s
        for sub in _substmts(s):
            yield from walk_stmts(sub)


def _substmts(s):
    if isinstance(s, If):
        return [s.then] + ([s.els] if s.els else [])
    if isinstance(s, While):
        return [s.body]
    if isinstance(s, For):
        return [s.body]
    if isinstance(s, Task):
        return [s.body]
    if isinstance(s, Dispatch):
        return [body for _, _, body in s.cases]
    return []


def stmt_exprs(stmt):
    """Root expressions appearing directly in one statement."""
    if isinstance(stmt, Decl):
        return [] if stmt.init is None else [stmt.init]
    if isinstance(stmt, (Set, AddSet)):
        return [stmt.lhs, stmt.rhs]
    if isinstance(stmt, If):
        return [stmt.cond]
    if isinstance(stmt, While):
        return [stmt.cond]
    if isinstance(stmt, For):
        return [stmt.lo, stmt.hi]
    if isinstance(stmt, Alloc):
        return [stmt.lhs]
    if isinstance(stmt, AllocArr):
        return [stmt.lhs, stmt.size]
    if isinstance(stmt, PushVec):
        return [stmt.vec, stmt.value]
    if isinstance(stmt, ClearVec):
        return [stmt.vec]
    if isinstance(stmt, Yield):
        return [stmt.coord, stmt.value]
    if isinstance(stmt, Call):
        return list(stmt.args) + ([stmt.ret] if stmt.ret is not None else [])
    if isinstance(stmt, Ret):
        return [] if stmt.value is None else [stmt.value]
    if isinstance(stmt, Push):
        return [stmt.stack] + list(stmt.values)
    if isinstance(stmt, (Pop, ClearStack)):
        return [stmt.stack]
    if isinstance(stmt, Dispatch):
        return [stmt.obj]
    return []


def walk_exprs(stmt):
    """Yield every expression (including subexpressions) in a statement."""
    work = list(stmt_exprs(stmt))
    while work:
        e = work.pop()
        yield e
        if isinstance(e, Fld):
            work.append(e.obj)
        elif isinstance(e, Idx):
            work.extend([e.arr, e.index])
        elif isinstance(e, Bin):
            work.extend([e.a, e.b])
        elif isinstance(e, (Not, Neg, Cast)):
            work.append(e.a)
        elif isinstance(e, Len):
            work.append(e.vec)
        elif isinstance(e, (Top, Empty)):
            work.append(e.stack)


# ---------------------------------------------------------------------------
# Module checking

def check_module(m: Module):
    """Verify module invariants; returns a list of problem strings."""
    problems = []
    record_names = set()
    for r in m.records:
        if r.name in record_names:
            problems.append(f"duplicate record {r.name}")
        record_names.add(r.name)
    for r in m.records:
        seen = set()
        for name, t in r.members:
            if name in seen:
                problems.append(f"record {r.name}: duplicate member {name}")
            seen.add(name)
            for ref in _type_refs(t):
                if ref not in record_names:
                    problems.append(f"record {r.name}: member {name} references "
                                    f"undeclared record {ref}")
            if isinstance(t, tuple) and t[0] == "arr" and t[2] < 1:
                problems.append(f"record {r.name}: member {name} has capacity < 1")
        if r.supertype is not None and r.supertype not in record_names:
            problems.append(f"record {r.name}: undeclared supertype {r.supertype}")

    func_names = {}
    for f in m.funcs:
        if f.name in func_names:
            problems.append(f"duplicate function {f.name}")
        func_names[f.name] = f

    if m.entry not in func_names:
        problems.append(f"entry function {m.entry} is missing")

    for f in m.funcs:
        labels = set()
        gotos = []
        pushes, pops = {}, {}
        scope = {p.name for p in f.params}
        for s in walk_stmts(f.body):
            if isinstance(s, Yield):
                problems.append(f"{f.name}: unlowered yield")
            elif isinstance(s, Label):
                if s.name in labels:
                    problems.append(f"{f.name}: duplicate label {s.name}")
                labels.add(s.name)
            elif isinstance(s, Goto):
                gotos.append(s.name)
            elif isinstance(s, Decl):
                scope.add(s.name)
            elif isinstance(s, For):
                scope.add(s.var)
            elif isinstance(s, Dispatch):
                for rec, var, _ in s.cases:
                    scope.add(var)
                    if rec not in record_names:
                        problems.append(f"{f.name}: dispatch on undeclared record {rec}")
            elif isinstance(s, Call):
                target = func_names.get(s.func)
                if target is None:
                    problems.append(f"{f.name}: call to undeclared function {s.func}")
                elif len(s.args) != len(target.params):
                    problems.append(f"{f.name}: call to {s.func} with "
                                    f"{len(s.args)} args, expected {len(target.params)}")
            elif isinstance(s, Alloc):
                if s.record not in record_names:
                    problems.append(f"{f.name}: alloc of undeclared record {s.record}")
            elif isinstance(s, Push):
                k = _stack_key(s.stack)
                pushes[k] = pushes.get(k, 0) + 1
                layout = m.frames.get(_func_stack_layout(f, s.stack))
                if layout is not None and len(s.values) != len(layout):
                    problems.append(f"{f.name}: push of {len(s.values)} slots onto "
                                    f"stack with {len(layout)}-slot frames")
            elif isinstance(s, Pop):
                k = _stack_key(s.stack)
                pops[k] = pops.get(k, 0) + 1
        for g in gotos:
            if g not in labels:
                problems.append(f"{f.name}: goto to unknown label {g}")
        for k, n in pushes.items():
            # more than one push site means real recursion; it must unwind
            if n > 1 and pops.get(k, 0) == 0:
                problems.append(f"{f.name}: stack {k} is pushed but never popped")
        for s in walk_stmts(f.body):
            for e in walk_exprs(s):
                if isinstance(e, Var) and e.name not in scope:
                    problems.append(f"{f.name}: undeclared variable {e.name}")
    return problems


def _type_refs(t):
    if isinstance(t, tuple):
        if t[0] in ("ref", "strec"):
            return [t[1]]
        if t[0] in ("arr", "arrref", "vec"):
            return _type_refs(t[1])
    return []


def _stack_key(e):
    return e.name if isinstance(e, Var) else str(e)


def _func_stack_layout(f, stack_expr):
    if not isinstance(stack_expr, Var):
        return None
    for p in f.params:
        if p.name == stack_expr.name and isinstance(p.type, tuple) \
                and p.type[0] == "stack":
            return p.type[1]
    return None


# ---------------------------------------------------------------------------
# IR serialization (machine-readable module files)

def to_json(m: Module) -> str:
    return json.dumps(_enc(m), indent=1)


def _enc(x):
    if is_dataclass(x):
        d = {"!": type(x).__name__}
        for f in dc_fields(x):
            d[f.name] = _enc(getattr(x, f.name))
        return d
    if isinstance(x, tuple):
        return ["()"] + [_enc(v) for v in x]
    if isinstance(x, list):
        return ["[]"] + [_enc(v) for v in x]
    if isinstance(x, dict):
        return {"!": "dict", "items": [[_enc(k), _enc(v)] for k, v in x.items()]}
    return x


_NODE_TYPES = None


def from_json(text: str) -> Module:
    global _NODE_TYPES
    if _NODE_TYPES is None:
        _NODE_TYPES = {c.__name__: c for c in (
            Cst, Null, Var, Fld, Idx, Bin, Not, Neg, Cast, Len, Top, Empty,
            Decl, Set, AddSet, If, While, For, Alloc, AllocArr, PushVec,
            ClearVec, Yield, Call, Ret, Push, Pop, ClearStack, Label, Goto,
            Task, Dispatch, Record, Param, Func, Module)}
    return _dec(json.loads(text))


def _dec(x):
    if isinstance(x, dict):
        tag = x["!"]
        if tag == "dict":
            return {_dec(k): _dec(v) for k, v in x["items"]}
        cls = _NODE_TYPES[tag]
        return cls(**{k: _dec(v) for k, v in x.items() if k != "!"})
    if isinstance(x, list):
        vals = [_dec(v) for v in x[1:]]
        return tuple(vals) if x[0] == "()" else vals
    return x


# ---------------------------------------------------------------------------
# Human-readable IR dump

def format_module(m: Module) -> str:
    out = []
    for r in m.records:
        sup = f" : {r.supertype}" if r.supertype else ""
        out.append(f"record {r.name}{sup} {{")
        for name, t in r.members:
            out.append(f"  {name}: {_fmt_type(t)}")
        out.append("}")
    for it, layout in sorted(m.frames.items()):
        slots = ", ".join(f"{n}: {_fmt_type(t)}" for n, t in layout)
        out.append(f"frame {it} ({slots})")
    for f in m.funcs:
        params = ", ".join(
            ("&" if p.ref else "") + f"{p.name}: {_fmt_type(p.type)}"
            for p in f.params)
        ret = "" if f.ret is None else f" -> {_fmt_type(f.ret)}"
        out.append(f"func {f.name}({params}){ret} {{")
        _fmt_stmts(f.body, out, 1)
        out.append("}")
    return "\n".join(out) + "\n"


def _fmt_type(t):
    if isinstance(t, str):
        return t
    kind = t[0]
    if kind == "ref":
        return f"ref {t[1]}"
    if kind == "arr":
        return f"{_fmt_type(t[1])}[{t[2]}]"
    if kind == "arrref":
        return f"{_fmt_type(t[1])}[]"
    if kind == "vec":
        return f"vec<{_fmt_type(t[1])}>"
    if kind == "stack":
        return f"stack<{t[1]}>"
    if kind == "strec":
        return f"state {t[1]}"
    if kind == "tag":
        return "tag{" + ",".join(t[1]) + "}"
    return str(t)


def _fmt_stmts(stmts, out, depth):
    pad = "  " * depth
    for s in stmts:
        if isinstance(s, If):
            out.append(f"{pad}if {fmt_expr(s.cond)} {{")
            _fmt_stmts(s.then, out, depth + 1)
            if s.els:
                out.append(f"{pad}}} else {{")
                _fmt_stmts(s.els, out, depth + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, While):
            out.append(f"{pad}while {fmt_expr(s.cond)} {{")
            _fmt_stmts(s.body, out, depth + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, For):
            par = " parallel" if s.parallel else ""
            out.append(f"{pad}for{par} {s.var} in [{fmt_expr(s.lo)}, {fmt_expr(s.hi)}) {{")
            _fmt_stmts(s.body, out, depth + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, Task):
            tag = "entry" if s.entry else ("fanout" if s.fanout else "chain")
            out.append(f"{pad}task[{tag}] {{")
            _fmt_stmts(s.body, out, depth + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, Dispatch):
            out.append(f"{pad}dispatch {fmt_expr(s.obj)} {{")
            for rec, var, body in s.cases:
                out.append(f"{pad}  {rec} as {var}:")
                _fmt_stmts(body, out, depth + 2)
            out.append(f"{pad}}}")
        else:
            out.append(pad + _fmt_flat(s))


def _fmt_flat(s):
    if isinstance(s, Decl):
        init = f" = {fmt_expr(s.init)}" if s.init is not None else ""
        return f"var {s.name}: {_fmt_type(s.type)}{init}"
    if isinstance(s, Set):
        return f"{fmt_expr(s.lhs)} = {fmt_expr(s.rhs)}"
    if isinstance(s, AddSet):
        return f"{fmt_expr(s.lhs)} += {fmt_expr(s.rhs)}"
    if isinstance(s, Alloc):
        return f"{fmt_expr(s.lhs)} = new {s.record}"
    if isinstance(s, AllocArr):
        return f"{fmt_expr(s.lhs)} = new {_fmt_type(s.elem)}[{fmt_expr(s.size)}]"
    if isinstance(s, PushVec):
        return f"push {fmt_expr(s.vec)}, {fmt_expr(s.value)}"
    if isinstance(s, ClearVec):
        return f"clear {fmt_expr(s.vec)}"
    if isinstance(s, Yield):
        return f"yield ({fmt_expr(s.coord)}, {fmt_expr(s.value)})"
    if isinstance(s, Call):
        args = ", ".join(fmt_expr(a) for a in s.args)
        ret = f"{fmt_expr(s.ret)} = " if s.ret is not None else ""
        return f"{ret}{s.func}({args})"
    if isinstance(s, Ret):
        return "return" if s.value is None else f"return {fmt_expr(s.value)}"
    if isinstance(s, Push):
        vals = ", ".join(fmt_expr(v) for v in s.values)
        return f"push-frame {fmt_expr(s.stack)}, ({vals})"
    if isinstance(s, Pop):
        return f"pop-frame {fmt_expr(s.stack)}"
    if isinstance(s, ClearStack):
        return f"clear-stack {fmt_expr(s.stack)}"
    if isinstance(s, Label):
        return f"{s.name}:"
    if isinstance(s, Goto):
        return f"goto {s.name}"
    return str(s)


def fmt_expr(e):
    if isinstance(e, Cst):
        return repr(e.value)
    if isinstance(e, Null):
        return "null"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Fld):
        return f"{fmt_expr(e.obj)}.{e.member}"
    if isinstance(e, Idx):
        return f"{fmt_expr(e.arr)}[{fmt_expr(e.index)}]"
    if isinstance(e, Bin):
        if e.op in ("min", "max"):
            return f"{e.op}({fmt_expr(e.a)}, {fmt_expr(e.b)})"
        return f"({fmt_expr(e.a)} {e.op} {fmt_expr(e.b)})"
    if isinstance(e, Not):
        return f"!{fmt_expr(e.a)}"
    if isinstance(e, Neg):
        return f"-{fmt_expr(e.a)}"
    if isinstance(e, Cast):
        return f"({e.record}){fmt_expr(e.a)}"
    if isinstance(e, Len):
        return f"len({fmt_expr(e.vec)})"
    if isinstance(e, Top):
        return f"top({fmt_expr(e.stack)})[{e.slot}]"
    if isinstance(e, Empty):
        return f"empty({fmt_expr(e.stack)})"
    return str(e)


def strip_annotations(m: Module) -> Module:
    """Clone a module with all parallel annotations removed.

    Task wrappers are replaced by their bodies and parallel loop flags
    cleared; parallelism never changes the computation, so stripping an
    annotated module yields its sequential twin.
    """

    def walk(stmts):
        out = []
        for s in stmts:
            if isinstance(s, Task):
                out.extend(walk(s.body))
            elif isinstance(s, If):
                out.append(If(s.cond, walk(s.then),
                              walk(s.els) if s.els else None))
            elif isinstance(s, While):
                out.append(While(s.cond, walk(s.body)))
            elif isinstance(s, For):
                out.append(For(s.var, s.lo, s.hi, walk(s.body), parallel=False))
            elif isinstance(s, Dispatch):
                out.append(Dispatch(s.obj,
                                    [(r, v, walk(b)) for r, v, b in s.cases]))
            else:
                out.append(s)
        return out

    funcs = [Func(f.name, f.params, f.ret, walk(f.body), f.kind)
             for f in m.funcs]
    meta = {k: v for k, v in m.meta.items() if k != "parallel"}
    return Module(m.records, funcs, m.entry, m.tensors, m.frames, meta)


def render_c(m: Module, parallel: bool = False) -> str:
    """Render a checked, yield-free module to C11 source text."""
    from .crender import render_c as _render
    return _render(m, parallel)
