"""Structure walkers: element enumeration and invariant checking.

walk_structure is the independent traversal oracle used to verify
generated iterators: a direct reading of the seq attribute, executed
with an explicit stack of per-node step generators so arbitrarily deep
chains cannot exhaust the host stack.
"""

from __future__ import annotations

from ..schema import SchemaSet, COORD_EMPTY
from .heap import NodeHeap


def _entry_groups(node):
    if node.seq is not None:
        return [[node.field_named(x) for x in e.names] for e in node.seq]
    payload = node.fields_of_kind("elem", "child")
    return [[f] for f in payload]


def walk_structure(sset: SchemaSet, heap: NodeHeap, root):
    """Yield (coord, value) in seq order from a structure instance.

    Empty elem slots (coordinate -1) are skipped.  Nodes without a seq
    attribute are walked in declaration order, elements before children.
    """

    def node_steps(node):
        schema = sset.node(_schema_name(node))
        get = heap.get
        groups = _entry_groups(schema)
        for gi, group in enumerate(groups):
            last_group = gi == len(groups) - 1
            if len(group) == 1 and group[0].array_len is None:
                f = group[0]
                if f.kind == "elem":
                    c = get(node, f.name + "c")
                    if c != COORD_EMPTY:
                        yield ("emit", c, get(node, f.name + "v"))
                else:
                    child = get(node, f.name)
                    if child is not None:
                        yield ("tail" if last_group else "descend", child)
            else:
                size = (group[0].array_len if isinstance(group[0].array_len, int)
                        else get(node, group[0].array_len))
                for p in range(size):
                    for f in group:
                        if f.kind == "elem":
                            c = get(node, f.name + "c")[p]
                            if c != COORD_EMPTY:
                                yield ("emit", c, get(node, f.name + "v")[p])
                        else:
                            child = get(node, f.name)[p]
                            if child is not None:
                                yield ("descend", child)

    if root is None:
        return
    stack = [node_steps(root)]
    while stack:
        try:
            step = next(stack[-1])
        except StopIteration:
            stack.pop()
            continue
        if step[0] == "emit":
            yield (step[1], step[2])
        elif step[0] == "tail":
            stack[-1] = node_steps(step[1])  # tail link, reuse the frame
        else:
            stack.append(node_steps(step[1]))


def _schema_name(node):
    # record names carry a payload suffix for outer levels
    name = node[0]
    return name.split("__", 1)[0]


def count_nodes(sset: SchemaSet, heap: NodeHeap, root):
    """Number of nodes reachable through child references."""
    seen = 0
    stack = [root] if root is not None else []
    while stack:
        node = stack.pop()
        seen += 1
        schema = sset.node(_schema_name(node))
        for f in schema.fields_of_kind("child"):
            if f.array_len is None:
                v = heap.get(node, f.name)
                if v is not None:
                    stack.append(v)
            else:
                size = (f.array_len if isinstance(f.array_len, int)
                        else heap.get(node, f.array_len))
                arr = heap.get(node, f.name) or []
                for p in range(min(size, len(arr))):
                    if arr[p] is not None:
                        stack.append(arr[p])
    return seen


def validate_structure(sset: SchemaSet, heap: NodeHeap, root,
                       extent=None) -> list:
    """Check every schema invariant on a live structure.

    Returns a list of violation strings (empty when the structure is
    conforming): size bounds, slot occupancy for nonempty fields,
    seq-order strict increase, parent-link consistency, and handle
    types.
    """
    problems = []
    if root is None:
        return problems

    root_schema = sset.node(_schema_name(root))
    if root_schema is None:
        return [f"unknown node type {root[0]!r}"]
    if root_schema.name not in sset.root_candidates:
        problems.append(f"root node {root[0]!r} is not a root candidate")

    stack = [(root, None)]  # (node, owner node or None)
    while stack:
        node, owner = stack.pop()
        schema = sset.node(_schema_name(node))
        if schema is None:
            problems.append(f"unknown node type {node[0]!r}")
            continue
        for f in schema.fields:
            if f.kind == "size":
                b = heap.get(node, f.name)
                lo, hi = f.bounds if f.bounds is not None else (0, None)
                if b < lo or (hi is not None and b > hi):
                    problems.append(
                        f"{schema.name}.{f.name}: size bound violated "
                        f"({b} not in [{lo}, {hi if hi is not None else '*'}])")
            elif f.kind == "parent":
                p = heap.get(node, f.name)
                expected = owner if (owner is not None and
                                     _schema_name(owner) == schema.parent_owner) \
                    else None
                if p is not expected:
                    problems.append(
                        f"{schema.name}.{f.name}: parent link inconsistent")
            elif f.kind == "elem":
                problems.extend(_check_elem(heap, sset, schema, node, f, extent))
            elif f.kind == "child":
                problems.extend(_check_child(heap, sset, schema, node, f, stack))

    coords = [c for c, _ in walk_structure(sset, heap, root)]
    if _family_sorted_from(sset, _schema_name(root)):
        for a, b in zip(coords, coords[1:]):
            if a >= b:
                problems.append(f"seq ordering violated: {a} then {b}")
                break
    if extent is not None:
        for c in coords:
            if not (0 <= c < extent):
                problems.append(f"coordinate {c} outside extent {extent}")
                break
    return problems


def _family_sorted_from(sset, root_name):
    from ..schema import family_sorted
    return family_sorted(sset, root_name)


def _check_elem(heap, sset, schema, node, f, extent):
    problems = []
    if f.array_len is None:
        c = heap.get(node, f.name + "c")
        if f.nonempty and c == COORD_EMPTY:
            problems.append(f"{schema.name}.{f.name}: nonempty slot is empty")
        return problems
    size = (f.array_len if isinstance(f.array_len, int)
            else heap.get(node, f.array_len))
    arr = heap.get(node, f.name + "c")
    if arr is None or len(arr) < size:
        problems.append(f"{schema.name}.{f.name}: array shorter than its size")
        return problems
    if f.nonempty:
        for p in range(size):
            if arr[p] == COORD_EMPTY:
                problems.append(
                    f"{schema.name}.{f.name}[{p}]: nonempty slot is empty")
                break
    return problems


def _check_child(heap, sset, schema, node, f, stack):
    problems = []

    def check_one(child, where):
        if child is None:
            if f.nonempty:
                problems.append(f"{where}: nonempty child is null")
            return
        cname = _schema_name(child)
        allowed = set(sset.concrete_types(f.target))
        if cname not in allowed:
            problems.append(f"{where}: reference to {child[0]!r}, expected "
                            f"{sorted(allowed)}")
            return
        stack.append((child, node))

    if f.array_len is None:
        check_one(heap.get(node, f.name), f"{schema.name}.{f.name}")
    else:
        size = (f.array_len if isinstance(f.array_len, int)
                else heap.get(node, f.array_len))
        arr = heap.get(node, f.name) or []
        for p in range(min(size, len(arr))):
            check_one(arr[p], f"{schema.name}.{f.name}[{p}]")
        if len(arr) < size:
            problems.append(f"{schema.name}.{f.name}: array shorter than size")
    return problems
