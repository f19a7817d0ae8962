"""Tensor formats composed of per-dimension level formats, plus the
assembly registry.

A level is dense (one extent), compressed (pos/crd arrays), or dynamic
(a validated node-schema family plus its root node).  Dynamic levels
must form a suffix of the composition: a pointer structure stores its
subtensors inside elem payloads, so nothing static can follow it.

The registry maps (family, mode) to assembly implementations: IR bodies
for append_first/append_rest or bulk build, written against the
family's record members so kernels can inline them directly.
"""

from __future__ import annotations

import importlib.resources
import os
from dataclasses import dataclass, field

from . import ir
from .ir import (
    AddSet, Alloc, AllocArr, Bin, Call, Cst, Decl, Fld, For, Idx, If,
    Null, Param, Ref, Ret, Set, Var, While,
)
from .schema import SchemaSet, SchemaError, Diagnostic, parse_schema, validate, family_sorted
from .codegen.decls import gen_node_decls

STOCK_FAMILIES = [
    "list", "blist", "blist_holes", "blist_fixed", "blist_unsorted",
    "vblist", "ttree", "rbtree", "ctree", "btree", "bst",
]


class FormatError(Exception):
    pass


@dataclass(frozen=True)
class LevelFormat:
    kind: str                 # "dense" | "compressed" | "dynamic"
    family: str = None        # dynamic only: schema family name
    root: str = None          # dynamic only: root-candidate node name
    ordered: bool = True
    full: bool = False
    unique: bool = True

    def __str__(self):
        return self.family if self.kind == "dynamic" else self.kind


@dataclass(frozen=True)
class TensorFormat:
    name: str
    levels: tuple

    @property
    def order(self):
        return len(self.levels)

    def __str__(self):
        return f"{self.name}=" + ",".join(str(lv) for lv in self.levels)


@dataclass
class AssemblyImpl:
    """Assembly interface implementation for one family.

    For mode "append": `state` lists the members of the tracking record,
    `first`/`rest` are the bodies of append_first(c, v, st, ret) and
    append_rest(c, v, st).  For mode "build": `build` is the body of
    build(ecrd, evals, sz, ret).  `helpers` are support functions the
    bodies may call (they are copied into generated modules).
    """

    family: str
    mode: str
    state: list = None
    first: list = None
    rest: list = None
    build: list = None
    helpers: list = field(default_factory=list)

    def state_record_name(self):
        return f"st_{self.family}_append"


class Registry:
    """Schema families and their registered assembly implementations."""

    def __init__(self):
        self.schemas: dict[str, SchemaSet] = {}
        self.assembly: dict[tuple, AssemblyImpl] = {}

    # -- schemas ------------------------------------------------------------

    def add_schema(self, sset: SchemaSet, family: str = None):
        family = family or sset.source_name
        if not sset.validated:
            raise FormatError(f"schema family {family!r} is not validated")
        if family in self.schemas:
            raise FormatError(f"duplicate schema family {family!r}")
        self.schemas[family] = sset
        return family

    def schema(self, family) -> SchemaSet:
        s = self.schemas.get(family)
        if s is None:
            raise FormatError(f"unknown schema family {family!r}")
        return s

    def root_node(self, family) -> str:
        s = self.schema(family)
        if len(s.root_candidates) != 1:
            raise FormatError(
                f"family {family!r} has {len(s.root_candidates)} root candidates; "
                "exactly one is required for use as a level format")
        return s.root_candidates[0]

    # -- assembly -----------------------------------------------------------

    def register_assembly(self, impl: AssemblyImpl):
        key = (impl.family, impl.mode)
        if key in self.assembly:
            raise FormatError(f"duplicate assembly registration for {key}")
        sset = self.schema(impl.family)
        _check_impl(impl, sset)
        self.assembly[key] = impl

    def lookup_assembly(self, family, mode) -> AssemblyImpl | None:
        return self.assembly.get((family, mode))


def _check_impl(impl: AssemblyImpl, sset: SchemaSet):
    """Bodies may reference only members of the family's records, the
    state record, and the fixed parameter names."""
    members = set()
    for rec in gen_node_decls(sset, "scalar"):
        members.update(name for name, _ in rec.members)
    if impl.state:
        members.update(name for name, _ in impl.state)
    bodies = [b for b in (impl.first, impl.rest, impl.build) if b]
    for h in impl.helpers:
        bodies.append(h.body)
    problems = []
    for body in bodies:
        for s in ir.walk_stmts(body):
            for e in ir.walk_exprs(s):
                if isinstance(e, Fld) and e.member not in members:
                    problems.append(f"undeclared field {e.member!r}")
    if impl.mode == "append" and not (impl.first and impl.rest):
        problems.append("append impl needs append_first and append_rest bodies")
    if impl.mode == "build" and not impl.build:
        problems.append("build impl needs a build body")
    if problems:
        raise FormatError(f"assembly impl for {impl.family!r}: "
                          + "; ".join(sorted(set(problems))))


# ---------------------------------------------------------------------------
# Format composition

def define_format(name, level_descs, registry: Registry) -> TensorFormat:
    """Compose level formats into a tensor format.

    level_descs: iterable of "dense", "compressed", or a schema family
    name registered in `registry`.
    """
    levels = []
    seen_dynamic = False
    for k, desc in enumerate(level_descs):
        if desc == "dense":
            lv = LevelFormat("dense", ordered=True, full=True)
        elif desc == "compressed":
            lv = LevelFormat("compressed", ordered=True)
        else:
            sset = registry.schema(desc)
            root = registry.root_node(desc)
            lv = LevelFormat("dynamic", family=desc, root=root,
                             ordered=family_sorted(sset, root))
        if seen_dynamic and lv.kind != "dynamic":
            raise FormatError(
                f"format {name!r}: static level {desc!r} cannot follow a "
                "dynamic level (subtensors live inside node payloads)")
        seen_dynamic = seen_dynamic or lv.kind == "dynamic"
        levels.append(lv)
    if not levels:
        raise FormatError(f"format {name!r} needs at least one level")
    return TensorFormat(name, tuple(levels))


# ---------------------------------------------------------------------------
# Stock schemas and assembly implementations

def load_stock_schema(family: str) -> SchemaSet:
    override = os.environ.get("DYNTEN_SCHEMA_PATH")
    if override:
        path = os.path.join(override, family + ".nsl")
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                return validate(parse_schema(fh.read(), family))
    res = importlib.resources.files("dynten") / "schemas" / (family + ".nsl")
    return validate(parse_schema(res.read_text(encoding="utf-8"), family))


def stock_registry() -> Registry:
    """A registry preloaded with the stock families and their assembly."""
    reg = Registry()
    for family in STOCK_FAMILIES:
        reg.add_schema(load_stock_schema(family), family)
    for impl in _stock_impls(reg):
        reg.register_assembly(impl)
    return reg


def _stock_impls(reg):
    return [
        _list_append(),
        _blist_append(reg.schema("blist")),
        _vblist_append(),
        _bst_append(),
        _bst_build(),
        _rbtree_build(),
        _vblist_build(),
    ]


def _elem_params(ret_record):
    return [Param("c", "int32"), Param("v", "float64"),
            Param("st", ("ref", "st")), Param("ret", Ref(ret_record))]


def _list_append():
    node = Var("node")
    nn = Var("nn")
    first = [
        Decl("node", Ref("list")),
        Alloc(node, "list"),
        Set(Fld(node, "ec"), Var("c")),
        Set(Fld(node, "ev"), Var("v")),
        Set(Fld(node, "n"), Null()),
        Set(Fld(Var("ret"), "h"), node),
        Set(Fld(Var("st"), "node"), node),
    ]
    rest = [
        Decl("nn", Ref("list")),
        Alloc(nn, "list"),
        Set(Fld(nn, "ec"), Var("c")),
        Set(Fld(nn, "ev"), Var("v")),
        Set(Fld(nn, "n"), Null()),
        Set(Fld(Fld(Var("st"), "node"), "n"), nn),
        Set(Fld(Var("st"), "node"), nn),
    ]
    return AssemblyImpl("list", "append", state=[("node", Ref("list"))],
                        first=first, rest=rest)


def _blist_append(sset):
    # capacity from the schema's in-clause, not a hard-coded block size
    node_schema = sset.node("blist")
    cap = node_schema.array_capacity(node_schema.field_named("e"))
    node = Var("node")
    nn = Var("nn")
    first = [
        Decl("node", Ref("blist")),
        Alloc(node, "blist"),
        Set(Idx(Fld(node, "ec"), Cst(0)), Var("c")),
        Set(Idx(Fld(node, "ev"), Cst(0)), Var("v")),
        Set(Fld(node, "B"), Cst(1)),
        Set(Fld(node, "n"), Null()),
        Set(Fld(Var("ret"), "h"), node),
        Set(Fld(Var("st"), "node"), node),
    ]
    rest = [
        Decl("node", Ref("blist"), Fld(Var("st"), "node")),
        If(Bin("==", Fld(node, "B"), Cst(cap)), [
            Decl("nn", Ref("blist")),
            Alloc(nn, "blist"),
            Set(Fld(nn, "B"), Cst(0)),
            Set(Fld(nn, "n"), Null()),
            Set(Fld(Fld(Var("st"), "node"), "n"), nn),
            Set(Fld(Var("st"), "node"), nn),
            Set(Var("node"), nn),
        ]),
        Set(Idx(Fld(node, "ec"), Fld(node, "B")), Var("c")),
        Set(Idx(Fld(node, "ev"), Fld(node, "B")), Var("v")),
        Set(Fld(node, "B"), Bin("+", Fld(node, "B"), Cst(1))),
    ]
    return AssemblyImpl("blist", "append", state=[("node", Ref("blist"))],
                        first=first, rest=rest)


_VBLIST_BATCH = 4


def _vblist_append():
    node = Var("node")
    nn = Var("nn")
    batch = Cst(_VBLIST_BATCH)
    first = [
        Decl("node", Ref("vblist")),
        Alloc(node, "vblist"),
        AllocArr(Fld(node, "ec"), "int32", batch),
        AllocArr(Fld(node, "ev"), "float64", batch),
        Set(Idx(Fld(node, "ec"), Cst(0)), Var("c")),
        Set(Idx(Fld(node, "ev"), Cst(0)), Var("v")),
        Set(Fld(node, "B"), Cst(1)),
        Set(Fld(node, "n"), Null()),
        Set(Fld(Var("ret"), "h"), node),
        Set(Fld(Var("st"), "node"), node),
    ]
    rest = [
        Decl("node", Ref("vblist"), Fld(Var("st"), "node")),
        If(Bin("==", Fld(node, "B"), batch), [
            Decl("nn", Ref("vblist")),
            Alloc(nn, "vblist"),
            AllocArr(Fld(nn, "ec"), "int32", batch),
            AllocArr(Fld(nn, "ev"), "float64", batch),
            Set(Fld(nn, "B"), Cst(0)),
            Set(Fld(nn, "n"), Null()),
            Set(Fld(Fld(Var("st"), "node"), "n"), nn),
            Set(Fld(Var("st"), "node"), nn),
            Set(Var("node"), nn),
        ]),
        Set(Idx(Fld(node, "ec"), Fld(node, "B")), Var("c")),
        Set(Idx(Fld(node, "ev"), Fld(node, "B")), Var("v")),
        Set(Fld(node, "B"), Bin("+", Fld(node, "B"), Cst(1))),
    ]
    return AssemblyImpl("vblist", "append", state=[("node", Ref("vblist"))],
                        first=first, rest=rest)


def _bst_append():
    # coordinates arrive sorted, so appending extends the right spine
    node = Var("node")
    nn = Var("nn")
    first = [
        Decl("node", Ref("bst")),
        Alloc(node, "bst"),
        Set(Fld(node, "ec"), Var("c")),
        Set(Fld(node, "ev"), Var("v")),
        Set(Fld(node, "l"), Null()),
        Set(Fld(node, "r"), Null()),
        Set(Fld(Var("ret"), "r"), node),
        Set(Fld(Var("st"), "node"), node),
    ]
    rest = [
        Decl("nn", Ref("bst")),
        Alloc(nn, "bst"),
        Set(Fld(nn, "ec"), Var("c")),
        Set(Fld(nn, "ev"), Var("v")),
        Set(Fld(nn, "l"), Null()),
        Set(Fld(nn, "r"), Null()),
        Set(Fld(Fld(Var("st"), "node"), "r"), nn),
        Set(Fld(Var("st"), "node"), nn),
    ]
    return AssemblyImpl("bst", "append", state=[("node", Ref("bst"))],
                        first=first, rest=rest)


def _build_params():
    return [Param("ecrd", ("arrref", "int32")), Param("evals", ("arrref", "float64")),
            Param("sz", "int32"), Param("ret", ("ref", "ret"))]


def _bst_build():
    helper = ir.Func("build_bst", [
        Param("ecrd", ("arrref", "int32")), Param("evals", ("arrref", "float64")),
        Param("s", "int32"), Param("e", "int32"),
    ], Ref("bst"), [
        If(Bin(">", Var("s"), Var("e")), [Ret(Null())]),
        Decl("node", Ref("bst")),
        Alloc(Var("node"), "bst"),
        Decl("m", "int32", Bin("//", Bin("+", Bin("+", Var("s"), Var("e")), Cst(1)), Cst(2))),
        Set(Fld(Var("node"), "ec"), Idx(Var("ecrd"), Var("m"))),
        Set(Fld(Var("node"), "ev"), Idx(Var("evals"), Var("m"))),
        Call("build_bst", [Var("ecrd"), Var("evals"), Var("s"),
                           Bin("-", Var("m"), Cst(1))], ret=Fld(Var("node"), "l")),
        Call("build_bst", [Var("ecrd"), Var("evals"), Bin("+", Var("m"), Cst(1)),
                           Var("e")], ret=Fld(Var("node"), "r")),
        Ret(Var("node")),
    ], kind="helper")
    body = [
        Call("build_bst", [Var("ecrd"), Var("evals"), Cst(0),
                           Bin("-", Var("sz"), Cst(1))], ret=Fld(Var("ret"), "r")),
    ]
    return AssemblyImpl("bst", "build", build=body, helpers=[helper])


def _rbtree_build():
    # median split; nodes on the overflow bottom level are red, which keeps
    # black counts equal on every root-to-null path
    helper = ir.Func("build_rbt", [
        Param("ecrd", ("arrref", "int32")), Param("evals", ("arrref", "float64")),
        Param("s", "int32"), Param("e", "int32"),
        Param("d", "int32"), Param("dmax", "int32"),
    ], Ref("rbtree"), [
        If(Bin(">", Var("s"), Var("e")), [Ret(Null())]),
        Decl("node", Ref("rbtree")),
        Alloc(Var("node"), "rbtree"),
        Decl("m", "int32", Bin("//", Bin("+", Bin("+", Var("s"), Var("e")), Cst(1)), Cst(2))),
        Set(Fld(Var("node"), "ec"), Idx(Var("ecrd"), Var("m"))),
        Set(Fld(Var("node"), "ev"), Idx(Var("evals"), Var("m"))),
        Set(Fld(Var("node"), "p"), Null()),
        Set(Fld(Var("node"), "c"), Bin(">", Var("d"), Var("dmax"))),
        Call("build_rbt", [Var("ecrd"), Var("evals"), Var("s"),
                           Bin("-", Var("m"), Cst(1)), Bin("+", Var("d"), Cst(1)),
                           Var("dmax")], ret=Fld(Var("node"), "l")),
        Call("build_rbt", [Var("ecrd"), Var("evals"), Bin("+", Var("m"), Cst(1)),
                           Var("e"), Bin("+", Var("d"), Cst(1)),
                           Var("dmax")], ret=Fld(Var("node"), "r")),
        If(Bin("!=", Fld(Var("node"), "l"), Null()),
           [Set(Fld(Fld(Var("node"), "l"), "p"), Var("node"))]),
        If(Bin("!=", Fld(Var("node"), "r"), Null()),
           [Set(Fld(Fld(Var("node"), "r"), "p"), Var("node"))]),
        Ret(Var("node")),
    ], kind="helper")
    body = [
        Decl("dmax", "int32", Cst(0)),
        Decl("t", "int32", Bin("+", Var("sz"), Cst(1))),
        While(Bin(">", Var("t"), Cst(1)), [
            Set(Var("t"), Bin("//", Var("t"), Cst(2))),
            Set(Var("dmax"), Bin("+", Var("dmax"), Cst(1))),
        ]),
        Call("build_rbt", [Var("ecrd"), Var("evals"), Cst(0),
                           Bin("-", Var("sz"), Cst(1)), Cst(1), Var("dmax")],
             ret=Fld(Var("ret"), "r")),
    ]
    return AssemblyImpl("rbtree", "build", build=body, helpers=[helper])


def _vblist_build():
    node = Var("node")
    body = [
        If(Bin(">", Var("sz"), Cst(0)), [
            Decl("node", Ref("vblist")),
            Alloc(node, "vblist"),
            AllocArr(Fld(node, "ec"), "int32", Var("sz")),
            AllocArr(Fld(node, "ev"), "float64", Var("sz")),
            For("p", Cst(0), Var("sz"), [
                Set(Idx(Fld(node, "ec"), Var("p")), Idx(Var("ecrd"), Var("p"))),
                Set(Idx(Fld(node, "ev"), Var("p")), Idx(Var("evals"), Var("p"))),
            ]),
            Set(Fld(node, "B"), Var("sz")),
            Set(Fld(node, "n"), Null()),
            Set(Fld(Var("ret"), "h"), node),
        ]),
    ]
    return AssemblyImpl("vblist", "build", build=body)
