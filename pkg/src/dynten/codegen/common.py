"""Shared helpers for the code generators."""

from __future__ import annotations

from ..schema import SchemaSet


def entry_info(sset: SchemaSet, root_node: str):
    """How kernels enter a structure given its root-candidate node.

    Simple heads (one scalar child field, nothing else) are drilled
    through inline, matching handwritten kernels; anything else is
    entered via the root node itself.  Returns (drill_member, entry_type)
    where drill_member is None when the root is entered directly.
    """
    root = sset.node(root_node)
    if len(root.fields) == 1 and root.fields[0].kind == "child" \
            and not root.fields[0].is_array:
        return root.fields[0].name, root.fields[0].target
    return None, root_node


def reachable_nodes(sset: SchemaSet, entry_type: str):
    """Concrete node types reachable from entry_type, in BFS order."""
    order = []
    seen = set()
    work = list(sset.concrete_types(entry_type))
    while work:
        name = work.pop(0)
        if name in seen:
            continue
        seen.add(name)
        order.append(name)
        node = sset.node(name)
        for f in node.fields_of_kind("child"):
            for c in sset.concrete_types(f.target):
                if c not in seen:
                    work.append(c)
    return order


def primary_node(sset: SchemaSet):
    """The family's main node: the sole non-root-candidate type, if any."""
    non_roots = [n.name for n in sset.nodes if n.name not in sset.root_candidates]
    return non_roots[0] if len(non_roots) == 1 else None


class Names:
    """Deterministic unique-name allocator for one module."""

    def __init__(self):
        self.taken = set()

    def claim(self, name):
        if name in self.taken:
            raise ValueError(f"name {name} already in use")
        self.taken.add(name)
        return name

    def fresh(self, base):
        if base not in self.taken:
            self.taken.add(base)
            return base
        k = 2
        while f"{base}{k}" in self.taken:
            k += 1
        self.taken.add(f"{base}{k}")
        return f"{base}{k}"
