"""Translate node schemas into record declarations.

Each elem field f becomes a coordinate member `fc` (int32, -1 when the
slot is empty) and a value member `fv` whose type depends on the level:
float64 at the innermost level, a handle to the next level's root
record otherwise.  Child references point at the target's supertype
record when it has one; bounded arrays become inline members sized by
the in-clause upper bound, unbounded ones become array references.
"""

from __future__ import annotations

from .. import ir
from ..schema import SchemaSet


def decl_name(node: str, payload: str) -> str:
    """Record name for a node at a level with the given elem payload."""
    if payload == "scalar":
        return node
    return f"{node}__{payload}"


def payload_type(payload: str):
    return "float64" if payload == "scalar" else ir.Ref(payload)


def gen_node_decls(sset: SchemaSet, payload: str = "scalar") -> list:
    """Emit one record per supertype and node of a validated schema set.

    `payload` is "scalar" for the innermost tensor level, or the root
    record name of the next level for outer dynamic levels.
    """
    assert sset.validated, "schema set must be validated first"
    records = []
    for st in sset.supertypes:
        subs = tuple(decl_name(n.name, payload) for n in sset.subtypes_of(st))
        records.append(ir.Record(decl_name(st, payload),
                                 [("tp", ("tag", subs))]))
    for node in sset.nodes:
        members = []
        for f in node.fields:
            if f.kind == "elem":
                cap = node.array_capacity(f) if f.is_array else None
                members.append((f.name + "c", _shape("int32", f, cap)))
                members.append((f.name + "v", _shape(payload_type(payload), f, cap)))
            elif f.kind == "child":
                target = f.target
                tnode = sset.node(target)
                if tnode is not None and tnode.supertype is not None:
                    target = tnode.supertype
                cap = node.array_capacity(f) if f.is_array else None
                members.append((f.name, _shape(ir.Ref(decl_name(target, payload)),
                                               f, cap)))
            elif f.kind == "size":
                members.append((f.name, "int32"))
            elif f.kind == "parent":
                owner = node.parent_owner
                onode = sset.node(owner)
                if onode is not None and onode.supertype is not None:
                    owner = onode.supertype
                members.append((f.name, ir.Ref(decl_name(owner, payload))))
            else:
                members.append((f.name, f.meta_type))
        sup = decl_name(node.supertype, payload) if node.supertype else None
        records.append(ir.Record(decl_name(node.name, payload), members, sup))
    return records


def _shape(base, f, cap):
    if not f.is_array:
        return base
    if cap is not None:
        return ("arr", base, cap)
    return ("arrref", base)
