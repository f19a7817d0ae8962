"""Generate map functions over dynamic structures.

One function per reachable node type, plus a dispatcher per supertype.
Locality-first order computes on all of a node's stored elements before
descending into children; coordinate order follows the seq attribute.
Nodes with a single same-type child compile to loops instead of
recursion, and parallel plans wrap child recursion (or per-node bodies
on chains) in task annotations.

Deep-copy variants allocate and return an output node per input node,
copying coordinates, sizes, and metadata, computing values via the
caller-supplied body, and fixing parent links on the copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import ir
from ..ir import (
    Alloc, AllocArr, Bin, Call, Cst, Decl, Dispatch, Fld, For, Idx, If,
    Not, Null, Param, Ref, Ret, Set, Task, Var, While,
)
from ..schema import SchemaSet
from .common import entry_info, reachable_nodes, primary_node
from .decls import decl_name


class MapError(Exception):
    pass


@dataclass
class MapPlan:
    sset: SchemaSet
    family: str
    payload: str              # "scalar" or next level's root record name
    prefix: str               # function name prefix, e.g. "map_A"
    body: object              # assemble=False: f(coord, value) -> stmts
                              # assemble=True:  f(coord, value, sink_lvalue) -> stmts
    captured: list            # extra Params threaded through every function
    order: str = "locality"   # "locality" | "coordinate"
    parallel: bool = False
    depth: int = 8
    assemble: bool = False
    inner_copy: object = None  # assemble: f(src_handle, sink_lvalue) -> stmts
                               # for non-scalar payloads (nested deep copy)


@dataclass
class MapSet:
    funcs: list
    entry: str          # function to invoke
    entry_node: str     # node type it takes
    drill: str          # head member to drill through, or None


def _fname(plan, node):
    main = primary_node(plan.sset)
    if node == main:
        return plan.prefix
    return f"{plan.prefix}_{node}"


def _rec(plan, node):
    return decl_name(node, plan.payload)


def gen_map(plan: MapPlan) -> MapSet:
    """Emit map functions for every node type reachable from the root.

    Plain maps start at the drilled entry (the kernel reaches through
    simple head nodes inline); deep-copy maps start at the root node
    itself, since the head must be copied too.
    """
    sset = plan.sset
    root = sset.root_candidates[0]
    if plan.assemble:
        drill, entry_type = None, root
    else:
        drill, entry_type = entry_info(sset, root)
    funcs = []
    for name in reachable_nodes(sset, entry_type):
        node = sset.node(name)
        if plan.order == "coordinate" and not node.is_sorted:
            raise MapError(f"coordinate-order map over unsorted node {name!r}")
        gen = _AssembleGen(plan, node) if plan.assemble else _MapGen(plan, node)
        funcs.append(gen.func())
    for st in sset.supertypes:
        if plan.assemble:
            funcs.append(_assemble_dispatcher(plan, st))
        else:
            funcs.append(_dispatcher(plan, st))
    entry = _target_fn(plan, entry_type)
    return MapSet(funcs, entry, entry_type, drill)


def _target_fn(plan, declared_type):
    """Function handling a child of the declared type (node or supertype)."""
    if declared_type in plan.sset.supertypes:
        return f"{plan.prefix}_{declared_type}"
    node = plan.sset.node(declared_type)
    if node.supertype is not None:
        # references to a subtype are stored as supertype references
        return f"{plan.prefix}_{node.supertype}"
    return _fname(plan, declared_type)


def _dispatcher(plan, supertype):
    n = Var("n")
    cases = []
    for sub in plan.sset.subtypes_of(supertype):
        v = f"as_{sub.name}"
        cases.append((_rec(plan, sub.name), v,
                      [Call(_fname(plan, sub.name),
                            [Var(v)] + [Var(p.name) for p in plan.captured])]))
    body = [If(Bin("!=", n, Null()), [Dispatch(n, cases)])]
    return ir.Func(f"{plan.prefix}_{supertype}",
                   [Param("n", Ref(_rec(plan, supertype)))] + list(plan.captured),
                   None, body, kind="map")


def _assemble_dispatcher(plan, supertype):
    n = Var("n")
    out_t = Ref(_rec(plan, supertype))
    cases = []
    for sub in plan.sset.subtypes_of(supertype):
        v = f"as_{sub.name}"
        cases.append((_rec(plan, sub.name), v,
                      [Call(_fname(plan, sub.name),
                            [Var(v)] + [Var(p.name) for p in plan.captured],
                            ret=Var("out"))]))
    body = [
        Decl("out", out_t, Null()),
        If(Bin("!=", n, Null()), [Dispatch(n, cases)]),
        Ret(Var("out")),
    ]
    return ir.Func(f"{plan.prefix}_{supertype}",
                   [Param("n", Ref(_rec(plan, supertype)))] + list(plan.captured),
                   out_t, body, kind="map")


def _visit_entries(node, order):
    """Field visit order: (entry list of lists of FieldDef)."""
    payload = node.fields_of_kind("elem", "child")
    if order == "coordinate" and node.seq is not None:
        return [[node.field_named(x) for x in e.names] for e in node.seq]
    elems = [f for f in payload if f.kind == "elem"]
    children = [f for f in payload if f.kind == "child"]
    return [[f] for f in elems] + [[f] for f in children]


class _MapGen:
    def __init__(self, plan, node):
        self.plan = plan
        self.node = node
        self.n = Var("n")
        self.loops = 0

    def func(self):
        plan, node = self.plan, self.node
        tail = node.fields_of_kind("child")[0].name if node.single_tail else None
        stmts = []
        for group in _visit_entries(node, plan.order):
            if len(group) == 1 and group[0].name == tail:
                continue  # the tail link drives the loop itself
            stmts.extend(self.entry_stmts(group))
        if node.single_tail:
            if plan.parallel and stmts:
                stmts = [Task(stmts, fanout=False)]
            body = [While(Bin("!=", self.n, Null()),
                          stmts + [Set(self.n, Fld(self.n, tail))])]
        else:
            body = [If(Bin("!=", self.n, Null()), stmts)]
        params = [Param("n", Ref(_rec(plan, node.name)))] + list(plan.captured)
        return ir.Func(_fname(plan, node.name), params, None, body, kind="map")

    def entry_stmts(self, group):
        if len(group) == 1 and group[0].array_len is None:
            f = group[0]
            if f.kind == "elem":
                return self.scalar_elem(f)
            return self.child_call(Fld(self.n, f.name), f)
        # array group: one combined counted loop
        size = self.size_expr(group[0])
        p = self.fresh_loop()
        inner = []
        for f in group:
            if f.kind == "elem":
                inner.extend(self.array_elem(f, p))
            else:
                inner.extend(self.child_call(Idx(Fld(self.n, f.name), Var(p)), f))
        return [For(p, Cst(0), size, inner)]

    def fresh_loop(self):
        self.loops += 1
        return "p" if self.loops == 1 else f"p{self.loops}"

    def size_expr(self, f):
        if isinstance(f.array_len, int):
            return Cst(f.array_len)
        return Fld(self.n, f.array_len)

    def scalar_elem(self, f):
        stmts = self.plan.body(Fld(self.n, f.name + "c"), Fld(self.n, f.name + "v"))
        if not f.nonempty:
            return [If(Bin("!=", Fld(self.n, f.name + "c"), Cst(-1)), stmts)]
        return stmts

    def array_elem(self, f, p):
        coord = Idx(Fld(self.n, f.name + "c"), Var(p))
        stmts = self.plan.body(coord, Idx(Fld(self.n, f.name + "v"), Var(p)))
        if not f.nonempty:
            return [If(Bin("!=", coord, Cst(-1)), stmts)]
        return stmts

    def child_call(self, child_expr, f):
        call = Call(_target_fn(self.plan, f.target),
                    [child_expr] + [Var(p.name) for p in self.plan.captured])
        stmts = [call]
        if self.plan.parallel and not self.node.single_tail:
            stmts = [Task([call], fanout=True)]
        if not f.nonempty:
            return [If(Bin("!=", child_expr, Null()), stmts)]
        return stmts


class _AssembleGen:
    """Deep-copy maps: one fresh output node per input node."""

    def __init__(self, plan, node):
        self.plan = plan
        self.node = node
        self.n = Var("n")
        self.ret = Var("ret")
        self.loops = 0

    def out_type(self):
        node = self.node
        name = node.supertype if node.supertype is not None else node.name
        return Ref(_rec(self.plan, name))

    def func(self):
        plan, node = self.plan, self.node
        rec = _rec(plan, node.name)
        params = [Param("n", Ref(rec))] + list(plan.captured)
        if node.single_tail:
            body = self.chain_body(rec)
        else:
            copy = [Alloc(self.ret, rec)]
            copy += self.copy_fields()
            result = self.ret
            if node.supertype is not None:
                result = ir.Cast(self.ret, _rec(plan, node.supertype))
            body = [
                If(Bin("==", self.n, Null()), [Ret(Null())]),
                Decl("ret", Ref(rec)),
            ] + copy + [Ret(result)]
        return ir.Func(_fname(plan, node.name), params, self.out_type(), body,
                       kind="map")

    def chain_body(self, rec):
        node = self.node
        tail = node.fields_of_kind("child")[0].name
        copy = [Alloc(self.ret, rec)] + self.copy_fields(skip_tail=tail)
        link = [
            If(Bin("==", Var("prev"), Null()),
               [Set(Var("head"), self.ret)],
               [Set(Fld(Var("prev"), tail), self.ret)]),
        ]
        if node.parent_owner == node.name and node.fields_of_kind("parent"):
            pfield = node.fields_of_kind("parent")[0].name
            link.append(Set(Fld(self.ret, pfield), Var("prev")))
        head = Var("head")
        result = head if node.supertype is None \
            else ir.Cast(head, _rec(self.plan, node.supertype))
        return [
            Decl("head", Ref(rec), Null()),
            Decl("prev", Ref(rec), Null()),
            Decl("ret", Ref(rec)),
            While(Bin("!=", self.n, Null()),
                  copy + link + [Set(Var("prev"), self.ret),
                                 Set(self.n, Fld(self.n, tail))]),
            Ret(result),
        ]

    def copy_fields(self, skip_tail=None):
        out = []
        for f in self.node.fields:
            if f.kind == "elem":
                out.extend(self.copy_elem(f))
            elif f.kind == "child":
                if f.name == skip_tail:
                    out.append(Set(Fld(self.ret, f.name), Null()))
                else:
                    out.extend(self.copy_child(f))
            elif f.kind == "size":
                out.append(Set(Fld(self.ret, f.name), Fld(self.n, f.name)))
            elif f.kind == "parent":
                out.append(Set(Fld(self.ret, f.name), Null()))
            else:
                out.append(Set(Fld(self.ret, f.name), Fld(self.n, f.name)))
        return out

    def value_stmts(self, coord, src, sink):
        if self.plan.payload == "scalar":
            return self.plan.body(coord, src, sink)
        return self.plan.inner_copy(coord, src, sink)

    def copy_elem(self, f):
        n, ret = self.n, self.ret
        if f.array_len is None:
            coord = Fld(n, f.name + "c")
            out = [Set(Fld(ret, f.name + "c"), coord)]
            compute = self.value_stmts(coord, Fld(n, f.name + "v"),
                                       Fld(ret, f.name + "v"))
            if not f.nonempty:
                compute = [If(Bin("!=", coord, Cst(-1)), compute)]
            return out + compute
        cap = self.node.array_capacity(f)
        size = self.size_expr(f)
        out = []
        if cap is None:  # heap array: allocate to the run-time size
            out.append(AllocArr(Fld(ret, f.name + "c"), "int32", size))
            vt = "float64" if self.plan.payload == "scalar" \
                else Ref(self.plan.payload)
            out.append(AllocArr(Fld(ret, f.name + "v"), vt, size))
            bound = size
        else:
            bound = Cst(cap) if isinstance(f.array_len, int) else size
        p = self.fresh_loop()
        coord = Idx(Fld(n, f.name + "c"), Var(p))
        inner = [Set(Idx(Fld(ret, f.name + "c"), Var(p)), coord)]
        compute = self.value_stmts(coord, Idx(Fld(n, f.name + "v"), Var(p)),
                                   Idx(Fld(ret, f.name + "v"), Var(p)))
        if not f.nonempty:
            compute = [If(Bin("!=", coord, Cst(-1)), compute)]
        out.append(For(p, Cst(0), bound, inner + compute))
        return out

    def size_expr(self, f):
        if isinstance(f.array_len, int):
            return Cst(f.array_len)
        return Fld(self.n, f.array_len)

    def copy_child(self, f):
        plan = self.plan
        fn = _target_fn(plan, f.target)
        target_node = plan.sset.node(f.target)

        def one(src, dst):
            stmts = [Call(fn, [src] + [Var(p.name) for p in plan.captured],
                          ret=dst)]
            stmts.extend(self.fix_parent(f.target, dst))
            return stmts

        if f.array_len is None:
            return one(Fld(self.n, f.name), Fld(self.ret, f.name))
        cap = self.node.array_capacity(f)
        size = self.size_expr(f)
        out = []
        if cap is None:
            rt = self.child_ref_type(f)
            out.append(AllocArr(Fld(self.ret, f.name), rt, size))
            bound = size
        else:
            bound = Cst(cap) if isinstance(f.array_len, int) else size
        p = self.fresh_loop()
        out.append(For(p, Cst(0), bound,
                       one(Idx(Fld(self.n, f.name), Var(p)),
                           Idx(Fld(self.ret, f.name), Var(p)))))
        return out

    def child_ref_type(self, f):
        target = f.target
        tnode = self.plan.sset.node(target)
        if tnode is not None and tnode.supertype is not None:
            target = tnode.supertype
        return Ref(_rec(self.plan, target))

    def fix_parent(self, declared_target, dst):
        """Point the fresh child's parent field back at the fresh parent."""
        if declared_target in self.plan.sset.supertypes:
            return []  # no stock schema mixes parents with supertypes
        tnode = self.plan.sset.node(declared_target)
        if tnode is None or tnode.supertype is not None:
            return []
        pf = tnode.fields_of_kind("parent")
        if pf and tnode.parent_owner == self.node.name:
            return [If(Bin("!=", dst, Null()),
                       [Set(Fld(dst, pf[0].name), self.ret)])]
        return []

    def fresh_loop(self):
        self.loops += 1
        return "p" if self.loops == 1 else f"p{self.loops}"
