"""The iterator pipeline: recursive coroutines lowered to resumable
state-machine functions.

Stage 1 emits, per node type, a coroutine that yields stored elements
in seq order and recurses into children.  Stage 2 applies tail-call
optimization (a trailing self-recursion becomes a loop), inserts null
guards around nullable child recursion, and inlines supertype dispatch,
leaving a list of self-contained segments.  Stage 3 eliminates the
remaining recursion with an explicit caller-owned call stack and
numbers every yield site, producing one function of the shape

    uint8 iter_X(uint8 st, X*& n, stack& s, int32& c, V& v)

that returns the next element per call (state 0 starts, return 0 means
exhausted).  Loop counters that must survive a suspension live in the
stack frames; iterators over chains with no counters stay stackless.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import ir
from ..ir import (
    Bin, Call, Cast, Cst, Decl, Dispatch, Empty, Fld, For, Goto, Idx, If,
    Label, Not, Null, Param, Pop, Push, Ref, Ret, Set, Top, Var, While,
    Yield,
)
from ..schema import SchemaSet
from .common import entry_info, reachable_nodes
from .decls import decl_name, payload_type


class IteratorError(Exception):
    pass


@dataclass
class SegCall:
    """Stage-2 pseudo statement: recurse into another segment."""

    seg: int
    arg: object


@dataclass
class Segment:
    node: str   # concrete node type, or a supertype for the entry shim
    body: list


@dataclass
class IteratorPlan:
    family: str
    payload: str
    name: str
    entry_record: str
    value_type: object
    coroutines: list
    segments: list
    machine: object = None
    frame: list = None  # stack frame layout, None when stackless
    yields: int = 0


def iter_name(family, payload="scalar"):
    return "iter_" + decl_name(family, payload)


def _co_name(family, node):
    return f"co_{family}_{node}"


def _rec(node, payload):
    return decl_name(node, payload)


# ---------------------------------------------------------------------------
# Stage 1: coroutines


def gen_coroutine(sset: SchemaSet, node_name: str, payload: str,
                  family: str) -> ir.Func:
    """Mechanical recursive coroutine for one node type, in seq order."""
    if node_name in sset.supertypes:
        return _dispatch_coroutine(sset, node_name, payload, family)
    node = sset.node(node_name)
    if not node.is_sorted:
        raise IteratorError(f"cannot iterate unsorted node {node_name!r}")
    n = Var("n")
    groups = _seq_groups(node)
    stmts = []
    loops = 0
    for group in groups:
        if len(group) == 1 and group[0].array_len is None:
            f = group[0]
            if f.kind == "elem":
                y = [Yield(Fld(n, f.name + "c"), Fld(n, f.name + "v"))]
                if not f.nonempty:
                    y = [If(Bin("!=", Fld(n, f.name + "c"), Cst(-1)), y)]
                stmts.extend(y)
            else:
                stmts.append(Call(_co_name(family, f.target), [Fld(n, f.name)]))
        else:
            loops += 1
            p = "p" if loops == 1 else f"p{loops}"
            size = (Cst(group[0].array_len) if isinstance(group[0].array_len, int)
                    else Fld(n, group[0].array_len))
            inner = []
            for f in group:
                if f.kind == "elem":
                    y = [Yield(Idx(Fld(n, f.name + "c"), Var(p)),
                               Idx(Fld(n, f.name + "v"), Var(p)))]
                    if not f.nonempty:
                        y = [If(Bin("!=", Idx(Fld(n, f.name + "c"), Var(p)),
                                  Cst(-1)), y)]
                    inner.extend(y)
                else:
                    inner.append(Call(_co_name(family, f.target),
                                      [Idx(Fld(n, f.name), Var(p))]))
            stmts.append(For(p, Cst(0), size, inner))
    body = [If(Bin("!=", n, Null()), stmts)]
    return ir.Func(_co_name(family, node_name),
                   [Param("n", Ref(_rec(node_name, payload)))], None, body,
                   kind="coroutine")


def _dispatch_coroutine(sset, supertype, payload, family):
    n = Var("n")
    cases = [( _rec(sub.name, payload), f"as_{sub.name}",
               [Call(_co_name(family, sub.name), [Var(f"as_{sub.name}")])])
             for sub in sset.subtypes_of(supertype)]
    body = [If(Bin("!=", n, Null()), [Dispatch(n, cases)])]
    return ir.Func(_co_name(family, supertype),
                   [Param("n", Ref(_rec(supertype, payload)))], None, body,
                   kind="coroutine")


def _seq_groups(node):
    if node.seq is not None:
        return [[node.field_named(x) for x in e.names] for e in node.seq]
    payload = node.fields_of_kind("elem", "child")
    return [[f] for f in payload]


# ---------------------------------------------------------------------------
# Stage 2: tail-call optimization, null guards, inlining into segments


def optimize_iterator(sset: SchemaSet, entry_type: str, payload: str,
                      family: str, coroutines: dict) -> list:
    """Turn coroutines into the segment list of one merged function."""
    concretes = reachable_nodes(sset, entry_type)
    seg_index = {}
    segments = []

    entry_is_super = entry_type in sset.supertypes
    if entry_is_super:
        segments.append(None)  # reserved for the dispatch shim
    for name in concretes:
        seg_index[name] = len(segments)
        segments.append(None)

    def child_target_expr(call):
        # recover the field behind the call argument for nullability
        arg = call.args[0]
        base = arg.arr if isinstance(arg, Idx) else arg
        assert isinstance(base, Fld)
        return base.member

    def rewrite_calls(node, stmts):
        out = []
        for s in stmts:
            if isinstance(s, Call):
                target = s.func[len(f"co_{family}_"):]
                fname = child_target_expr(s)
                fdef = node.field_named(fname)
                rew = _call_to_seg(sset, payload, family, seg_index, target,
                                   s.args[0])
                if not fdef.nonempty:
                    rew = [If(Bin("!=", s.args[0], Null()), rew)]
                out.extend(rew)
            elif isinstance(s, If):
                out.append(If(s.cond, rewrite_calls(node, s.then),
                              rewrite_calls(node, s.els) if s.els else None))
            elif isinstance(s, While):
                out.append(While(s.cond, rewrite_calls(node, s.body)))
            elif isinstance(s, For):
                out.append(For(s.var, s.lo, s.hi, rewrite_calls(node, s.body)))
            else:
                out.append(s)
        return out

    for name in concretes:
        node = sset.node(name)
        co = coroutines[name]
        body = co.body
        # tail-call optimization: a trailing direct self-recursion becomes
        # a walk of the node variable
        assert len(body) == 1 and isinstance(body[0], If)
        inner = body[0].then
        if inner and isinstance(inner[-1], Call) \
                and inner[-1].func == _co_name(family, name):
            tail_expr = inner[-1].args[0]
            inner = inner[:-1] + [Set(Var("n"), tail_expr)]
            seg_body = [While(Bin("!=", Var("n"), Null()),
                              rewrite_calls(node, inner))]
        else:
            seg_body = [If(body[0].cond, rewrite_calls(node, inner))]
        segments[seg_index[name]] = Segment(name, seg_body)

    if entry_is_super:
        shim = _call_to_seg(sset, payload, family, seg_index, entry_type,
                            Var("n"))
        segments[0] = Segment(entry_type,
                              [If(Bin("!=", Var("n"), Null()), shim)])
    return segments


def _call_to_seg(sset, payload, family, seg_index, target, arg):
    """A recursion site: direct SegCall, or dispatch inlined around it."""
    if target in sset.supertypes:
        cases = []
        for sub in sset.subtypes_of(target):
            v = f"as_{sub.name}"
            cases.append((_rec(sub.name, payload), v,
                          [SegCall(seg_index[sub.name], Var(v))]))
        return [Dispatch(arg, cases)]
    return [SegCall(seg_index[target], arg)]


# ---------------------------------------------------------------------------
# Stage 3: recursion elimination and yield numbering


def _walk(stmts):
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from _walk(s.then)
            if s.els:
                yield from _walk(s.els)
        elif isinstance(s, While):
            yield from _walk(s.body)
        elif isinstance(s, For):
            yield from _walk(s.body)
        elif isinstance(s, Dispatch):
            for _, _, b in s.cases:
                yield from _walk(b)


def _rename_expr(e, old, new):
    if isinstance(e, Var):
        return Var(new) if e.name == old else e
    if isinstance(e, Fld):
        return Fld(_rename_expr(e.obj, old, new), e.member)
    if isinstance(e, Idx):
        return Idx(_rename_expr(e.arr, old, new), _rename_expr(e.index, old, new))
    if isinstance(e, Bin):
        return Bin(e.op, _rename_expr(e.a, old, new), _rename_expr(e.b, old, new))
    if isinstance(e, Not):
        return Not(_rename_expr(e.a, old, new))
    if isinstance(e, Cast):
        return Cast(_rename_expr(e.a, old, new), e.record)
    return e


def _rename_stmts(stmts, old, new):
    out = []
    for s in stmts:
        if isinstance(s, Yield):
            out.append(Yield(_rename_expr(s.coord, old, new),
                             _rename_expr(s.value, old, new)))
        elif isinstance(s, SegCall):
            out.append(SegCall(s.seg, _rename_expr(s.arg, old, new)))
        elif isinstance(s, Set):
            out.append(Set(_rename_expr(s.lhs, old, new),
                           _rename_expr(s.rhs, old, new)))
        elif isinstance(s, If):
            out.append(If(_rename_expr(s.cond, old, new),
                          _rename_stmts(s.then, old, new),
                          _rename_stmts(s.els, old, new) if s.els else None))
        elif isinstance(s, While):
            out.append(While(_rename_expr(s.cond, old, new),
                             _rename_stmts(s.body, old, new)))
        elif isinstance(s, For):
            out.append(For(s.var, _rename_expr(s.lo, old, new),
                           _rename_expr(s.hi, old, new),
                           _rename_stmts(s.body, old, new)))
        elif isinstance(s, Dispatch):
            out.append(Dispatch(_rename_expr(s.obj, old, new),
                                [(rec, var, _rename_stmts(b, old, new))
                                 for rec, var, b in s.cases]))
        else:
            out.append(s)
    return out


def _persistent_locals(segments):
    """Loop counters live across a yield or a recursion site."""
    extras = []

    def scan(stmts):
        for s in stmts:
            if isinstance(s, For):
                if any(isinstance(x, (Yield, SegCall)) for x in _walk(s.body)):
                    if s.var not in extras:
                        extras.append(s.var)
                scan(s.body)
            elif isinstance(s, If):
                scan(s.then)
                if s.els:
                    scan(s.els)
            elif isinstance(s, While):
                scan(s.body)
            elif isinstance(s, Dispatch):
                for _, _, b in s.cases:
                    scan(b)

    for seg in segments:
        scan(seg.body)
    return extras


class _MachineCtx:
    def __init__(self, name, framed, extras, extra_slot, nvars):
        self.name = name
        self.framed = framed
        self.extras = extras
        self.extra_slot = extra_slot
        self.nvars = nvars
        self.yields = 0
        self.calls = len(nvars) - 1  # call ids follow the segment-start ids
        self.call_labels = []
        self.current = 0

    def nvar(self):
        return Var(self.nvars[self.current])

    def save_frame(self, seg):
        s = Var("s")
        out = [Set(Top(s, 1), self.nvar())]
        for x in self._seg_extras(seg):
            out.append(Set(Top(s, self.extra_slot[x]), Var(x)))
        return out

    def restore_frame(self, seg):
        s = Var("s")
        out = [Set(self.nvar(), Top(s, 1))]
        for x in self._seg_extras(seg):
            out.append(Set(Var(x), Top(s, self.extra_slot[x])))
        return out

    def _seg_extras(self, seg):
        found = []
        for s in _walk(seg.body):
            if isinstance(s, For) and s.var in self.extra_slot \
                    and s.var not in found:
                found.append(s.var)
        return found

    def rewrite(self, stmts, seg):
        out = []
        for s in stmts:
            if isinstance(s, Yield):
                self.yields += 1
                y = self.yields
                if self.framed:
                    out += self.save_frame(seg)
                out.append(Set(Var("oc"), s.coord))
                out.append(Set(Var("ov"), s.value))
                out.append(Ret(Cst(y)))
                out.append(Label(f"{self.name}_res{y}"))
                if self.framed:
                    out += self.restore_frame(seg)
            elif isinstance(s, SegCall):
                self.calls += 1
                m = self.calls
                lab = f"{self.name}_call{m}"
                self.call_labels.append((m, lab))
                svar = Var("s")
                out.append(Set(Top(svar, 0), Cst(m)))
                out += self.save_frame(seg)
                out.append(Push(svar, [Cst(s.seg), s.arg]
                                + [Cst(0)] * len(self.extras)))
                out.append(Goto(f"{self.name}_end"))
                out.append(Label(lab))
                out += self.restore_frame(seg)
            elif isinstance(s, If):
                out.append(If(s.cond, self.rewrite(s.then, seg),
                              self.rewrite(s.els, seg) if s.els else None))
            elif isinstance(s, While):
                out.append(While(s.cond, self.rewrite(s.body, seg)))
            elif isinstance(s, For):
                out.append(For(s.var, s.lo, s.hi, self.rewrite(s.body, seg)))
            elif isinstance(s, Dispatch):
                out.append(Dispatch(s.obj, [
                    (rec, var, self.rewrite(b, seg)) for rec, var, b in s.cases]))
            else:
                out.append(s)
        return out


def eliminate_recursion(sset: SchemaSet, segments: list, payload: str,
                        family: str, entry_type: str):
    """Build the resumable state machine; returns (func, frame, yields)."""
    name = iter_name(family, payload)
    vt = payload_type(payload)
    entry_rec = _rec(entry_type, payload)

    seg_calls = sum(1 for seg in segments for s in _walk(seg.body)
                    if isinstance(s, SegCall))
    extras = _persistent_locals(segments)
    framed = len(segments) > 1 or seg_calls > 0 or bool(extras)

    node_recs = {_rec(seg.node, payload) for seg in segments}
    slot_t = Ref(next(iter(node_recs))) if len(node_recs) == 1 else ("anyref",)
    frame = [("st", "uint8"), ("n", slot_t if framed else Ref(entry_rec))]
    frame += [(x, "int32") for x in extras]
    extra_slot = {x: 2 + i for i, x in enumerate(extras)}

    nvars = {k: ("n" if k == 0 else f"n{k}") for k in range(len(segments))}
    ctx = _MachineCtx(name, framed, extras, extra_slot, nvars)

    seg_bodies = []
    for k, seg in enumerate(segments):
        ctx.current = k
        seg_body = _rename_stmts(seg.body, "n", nvars[k])
        seg_bodies.append(ctx.rewrite(seg_body, Segment(seg.node, seg_body)))

    body = []
    for k, seg in enumerate(segments):
        if k > 0:
            body.append(Decl(nvars[k], Ref(_rec(seg.node, payload)), Null()))
    for x in extras:
        body.append(Decl(x, "int32", Cst(0)))
    for y in range(1, ctx.yields + 1):
        body.append(If(Bin("==", Var("st"), Cst(y)), [Goto(f"{name}_res{y}")]))

    if not framed:
        body += seg_bodies[0]
        body.append(Ret(Cst(0)))
        return _machine_func(name, entry_rec, vt, body), frame, ctx.yields

    s = Var("s")
    body.append(Push(s, [Cst(0), Var("n")] + [Cst(0)] * len(extras)))
    loop = []
    for k in range(1, len(segments)):
        loop.append(If(Bin("==", Top(s, 0), Cst(k)), [Goto(f"{name}_seg{k}")]))
    for m, lab in ctx.call_labels:
        loop.append(If(Bin("==", Top(s, 0), Cst(m)), [Goto(lab)]))
    for k in range(len(segments)):
        if k > 0:
            loop.append(Label(f"{name}_seg{k}"))
        loop.append(Set(Var(nvars[k]), Top(s, 1)))
        loop += seg_bodies[k]
        loop.append(Pop(s))
        loop.append(Goto(f"{name}_end"))
    loop.append(Label(f"{name}_end"))
    body.append(While(Not(Empty(s)), loop))
    body.append(Ret(Cst(0)))
    return _machine_func(name, entry_rec, vt, body), frame, ctx.yields


def _machine_func(name, entry_rec, vt, body):
    return ir.Func(name, [
        Param("st", "uint8"),
        Param("n", Ref(entry_rec), ref=True),
        Param("s", ("stack", name)),
        Param("oc", "int32", ref=True),
        Param("ov", vt, ref=True),
    ], "uint8", body, kind="iterator")


# ---------------------------------------------------------------------------
# Orchestration


def gen_iterator(sset: SchemaSet, family: str, payload: str = "scalar") -> IteratorPlan:
    """Run the full pipeline for one family; entry is the drilled root."""
    root = sset.root_candidates[0]
    _, entry_type = entry_info(sset, root)
    concretes = reachable_nodes(sset, entry_type)
    wanted = list(concretes)
    for n in concretes:
        node = sset.node(n)
        for f in node.fields_of_kind("child"):
            if f.target in sset.supertypes and f.target not in wanted:
                wanted.append(f.target)
    if entry_type in sset.supertypes and entry_type not in wanted:
        wanted.append(entry_type)
    coroutines = {n: gen_coroutine(sset, n, payload, family) for n in wanted}
    segments = optimize_iterator(sset, entry_type, payload, family, coroutines)
    machine, frame, yields = eliminate_recursion(sset, segments, payload,
                                                 family, entry_type)
    return IteratorPlan(
        family=family, payload=payload, name=iter_name(family, payload),
        entry_record=_rec(entry_type, payload),
        value_type=payload_type(payload),
        coroutines=[coroutines[n] for n in wanted],
        segments=segments, machine=machine, frame=frame, yields=yields)
