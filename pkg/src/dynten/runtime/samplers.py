"""Build conforming structure instances directly on a heap.

Given sorted (coordinate, value) pairs, the builder distributes them
across a node's seq entries, recursing into children via an explicit
work stack (chains of any length are safe).  Shapes are driven by a
seeded RNG; passing none uses a fixed seed, giving a deterministic
canonical shape.  Every produced instance satisfies the schema
invariants: occupancy of nonempty slots, size bounds, seq ordering,
parent links, and reference types.

This is how families without registered assembly implementations
(C-trees, B-trees, T-trees, the block-list variants) are materialized
from file or dense input.
"""

from __future__ import annotations

import random

from ..schema import SchemaSet, COORD_EMPTY
from ..codegen.decls import decl_name
from .heap import NodeHeap

INF = None  # unbounded upper limit


class SamplerError(Exception):
    pass


def _add(a, b):
    return INF if a is INF or b is INF else a + b


def _mul(a, b):
    if a is INF or b is INF:
        return 0 if (a == 0 or b == 0) else INF
    return a * b


def _min_cap(a, b):
    if a is INF:
        return b
    if b is INF:
        return a
    return min(a, b)


class _Bounds:
    """Min/max element capacity per node type.

    Types on (or reaching) a child-reference cycle have unbounded
    capacity; the rest form a DAG and converge by fixpoint.  Minimum
    capacities always converge for satisfiable schemas.
    """

    def __init__(self, sset: SchemaSet):
        self.sset = sset
        self.lo = {n.name: 0 for n in sset.nodes}
        self.hi = {n.name: 0 for n in sset.nodes}
        for st in sset.supertypes:
            self.lo[st] = 0
            self.hi[st] = 0

        graph = {}
        for node in sset.nodes:
            targets = set()
            for f in node.fields_of_kind("child"):
                targets.update(sset.concrete_types(f.target))
            graph[node.name] = targets
        reaches = {n: set(t) for n, t in graph.items()}
        for _ in range(len(graph)):
            for n in reaches:
                extra = set()
                for t in reaches[n]:
                    extra |= reaches.get(t, set())
                reaches[n] |= extra
        cyclic = {n for n in reaches if n in reaches[n]}
        unbounded = {n for n in reaches if reaches[n] & cyclic or n in cyclic}

        for _ in range(len(sset.nodes) + len(sset.supertypes) + 2):
            changed = False
            for node in sset.nodes:
                lo, hi = self.node_bounds(node)
                if node.name in unbounded:
                    hi = INF
                if (lo, hi) != (self.lo[node.name], self.hi[node.name]):
                    self.lo[node.name], self.hi[node.name] = lo, hi
                    changed = True
            for st in sset.supertypes:
                subs = self.sset.subtypes_of(st)
                lo = min(self.lo[s.name] for s in subs)
                hi = INF if any(self.hi[s.name] is INF for s in subs) \
                    else max(self.hi[s.name] for s in subs)
                if (lo, hi) != (self.lo[st], self.hi[st]):
                    self.lo[st], self.hi[st] = lo, hi
                    changed = True
            if not changed:
                break

    def node_bounds(self, node):
        lo, hi = 0, 0
        for group in _groups(node):
            glo, ghi = self.group_bounds(node, group)
            lo, hi = _add(lo, glo), _add(hi, ghi)
        return lo, hi

    def of(self, name):
        return self.lo[name], self.hi[name]

    def field_bounds(self, node, f):
        if f.kind == "elem":
            if f.array_len is None:
                return (1, 1) if f.nonempty else (0, 1)
            if isinstance(f.array_len, int):
                return (f.array_len, f.array_len) if f.nonempty \
                    else (0, f.array_len)
            sf = node.field_named(f.array_len)
            lo, hi = sf.bounds if sf.bounds is not None else (0, INF)
            return (lo, hi) if f.nonempty else (0, hi)
        tlo, thi = self.of(f.target)
        if f.array_len is None:
            return (tlo if f.nonempty else 0, thi)
        if isinstance(f.array_len, int):
            cap = f.array_len
            return (_mul(cap, tlo) if f.nonempty else 0, _mul(cap, thi))
        sf = node.field_named(f.array_len)
        lo, hi = sf.bounds if sf.bounds is not None else (0, INF)
        return (_mul(lo, tlo) if f.nonempty else 0, _mul(hi, thi))

    def group_bounds(self, node, group):
        if len(group) == 1:
            return self.field_bounds(node, group[0])
        # interleaved arrays share one size; per-iteration bounds compose
        ilo, ihi = 0, 0
        for f in group:
            if f.kind == "elem":
                ilo, ihi = _add(ilo, 1), _add(ihi, 1)
            else:
                tlo, thi = self.of(f.target)
                ilo = _add(ilo, tlo if f.nonempty else 0)
                ihi = _add(ihi, thi)
        sf = group[0]
        if isinstance(sf.array_len, int):
            blo, bhi = (sf.array_len, sf.array_len)
        else:
            b = node.field_named(sf.array_len)
            blo, bhi = b.bounds if b.bounds is not None else (0, INF)
        if not group[0].nonempty and all(f.kind == "elem" for f in group):
            return (0, _mul(bhi, ihi))
        return (_mul(blo, ilo), _mul(bhi, ihi))


def _groups(node):
    if node.seq is not None:
        return [[node.field_named(x) for x in e.names] for e in node.seq]
    return [[f] for f in node.fields_of_kind("elem", "child")]


class Builder:
    def __init__(self, sset: SchemaSet, heap: NodeHeap, payload="scalar",
                 rng=None):
        self.sset = sset
        self.heap = heap
        self.payload = payload
        self.rng = rng if rng is not None else random.Random(0x5EED)
        self.bounds = _Bounds(sset)
        self._patches = []

    def rec(self, node_name):
        return decl_name(node_name, self.payload)

    def pick(self, lo, hi):
        if hi is INF:
            # geometric-ish tail keeps shapes finite but varied
            span = lo + self.rng.randrange(0, 8)
            return span
        return self.rng.randint(lo, hi)

    def build(self, elems):
        """Build a structure for the sorted (coord, value) pairs."""
        from ..schema import family_sorted
        root_name = self.sset.root_candidates[0]
        if not elems:
            return None
        if not family_sorted(self.sset, root_name):
            elems = list(elems)
            self.rng.shuffle(elems)
        return self._build_type(root_name, elems, None)

    def _build_type(self, type_name, elems, owner):
        """Allocate a subtree of declared type holding exactly `elems`."""
        out = [None]
        work = [(type_name, elems, out, 0, owner)]
        while work:
            tname, es, sink, slot, owner_node = work.pop()
            node = self._build_node(tname, es, owner_node, work)
            sink[slot] = node
        return out[0]

    def _build_node(self, type_name, elems, owner, work):
        sset = self.sset
        if type_name in sset.supertypes:
            feas = []
            for sub in sset.subtypes_of(type_name):
                lo, hi = self.bounds.of(sub.name)
                if lo <= len(elems) and (hi is INF or len(elems) <= hi):
                    feas.append(sub.name)
            if not feas:
                raise SamplerError(
                    f"no subtype of {type_name!r} can hold {len(elems)} elements")
            type_name = self.rng.choice(feas)
        node_schema = sset.node(type_name)
        node = self.heap.alloc(self.rec(type_name))

        groups = _groups(node_schema)
        gbounds = [self.bounds.group_bounds(node_schema, g) for g in groups]
        remaining = len(elems)
        cursor = 0
        for gi, group in enumerate(groups):
            lo_rest = 0
            hi_rest = 0
            for glo, ghi in gbounds[gi + 1:]:
                lo_rest = _add(lo_rest, glo)
                hi_rest = _add(hi_rest, ghi)
            glo, ghi = gbounds[gi]
            take_lo = max(glo, 0 if hi_rest is INF else remaining - hi_rest)
            take_hi = _min_cap(ghi, remaining - lo_rest)
            if take_hi < take_lo:
                raise SamplerError(
                    f"cannot distribute {remaining} elements into {type_name!r}")
            take = self.pick(take_lo, take_hi)
            take = max(take_lo, min(take, take_hi))
            self._fill_group(node_schema, node, group, elems[cursor:cursor + take],
                             work)
            cursor += take
            remaining -= take
        if remaining:
            raise SamplerError(f"{remaining} elements left over in {type_name!r}")

        for f in node_schema.fields_of_kind("parent"):
            expected = owner if (owner is not None and
                                 owner[0].split("__", 1)[0]
                                 == node_schema.parent_owner) else None
            self.heap.set(node, f.name, expected)
        for f in node_schema.fields:
            if f.kind == "metadata" and f.meta_type == "bool":
                self.heap.set(node, f.name, bool(self.rng.getrandbits(1)))
        return node

    def _fill_group(self, schema, node, group, elems, work):
        heap = self.heap
        if len(group) == 1 and group[0].array_len is None:
            f = group[0]
            if f.kind == "elem":
                if elems:
                    heap.set(node, f.name + "c", elems[0][0])
                    heap.set(node, f.name + "v", elems[0][1])
                else:
                    heap.set(node, f.name + "c", COORD_EMPTY)
            else:
                if elems:
                    sink = [None]
                    work.append((f.target, elems, sink, 0, node))
                    self._defer(node, f.name, sink)
                else:
                    heap.set(node, f.name, None)
            return
        if len(group) == 1 and group[0].kind == "elem":
            self._fill_elem_array(schema, node, group[0], elems)
            return
        self._fill_interleaved(schema, node, group, elems, work)

    def _defer(self, node, member, sink):
        # the worker writes into sink; alias the member slot to it
        slot = self.heap.slot(node[0], member)
        node[slot] = sink  # temporary
        self._patches.append((node, slot, sink))

    def _fill_elem_array(self, schema, node, f, elems):
        heap = self.heap
        n = len(elems)
        capacity = schema.array_capacity(f)  # None for heap arrays
        if isinstance(f.array_len, int):
            slots = f.array_len
        else:
            sf = schema.field_named(f.array_len)
            lo, hi = sf.bounds if sf.bounds is not None else (0, INF)
            if f.nonempty:
                slots = n
            else:
                upper = n + 4 if hi is INF else hi
                slots = self.pick(max(lo, n), max(max(lo, n), upper))
                slots = max(max(lo, n), min(slots, upper))
            heap.set(node, f.array_len, slots)
        coords = [COORD_EMPTY] * slots
        vals = [0.0] * slots
        if f.nonempty:
            positions = range(n)
        else:
            positions = sorted(self.rng.sample(range(slots), n)) if n else []
        for p, (c, v) in zip(positions, elems):
            coords[p] = c
            vals[p] = v
        if capacity is not None:
            # bounded arrays are inline members at record capacity; fill
            # in place and mark the tail empty
            arrc = heap.get(node, f.name + "c")
            arrv = heap.get(node, f.name + "v")
            for i in range(slots):
                arrc[i] = coords[i]
                arrv[i] = vals[i]
            for i in range(slots, capacity):
                arrc[i] = COORD_EMPTY
        else:
            heap.set(node, f.name + "c", coords)
            heap.set(node, f.name + "v", vals)

    def _fill_interleaved(self, schema, node, group, elems, work):
        """Groups like {c, e}: per position, each member in order."""
        heap = self.heap
        child = [f for f in group if f.kind == "child"]
        elem = [f for f in group if f.kind == "elem"]
        assert len(child) <= 1 and len(elem) == 1, "unsupported group shape"
        ch = child[0] if child else None
        ef = elem[0]
        sf = schema.field_named(ef.array_len)
        blo, bhi = sf.bounds if sf.bounds is not None else (0, INF)
        clo = self.bounds.of(ch.target)[0] if ch else 0
        per = 1 + (clo if ch and ch.nonempty else 0)
        n = len(elems)
        bmax = n // per if per else n
        if bhi is not INF:
            bmax = min(bmax, bhi)
        b = self.pick(max(blo, 1 if n else blo), max(bmax, blo))
        b = max(blo, min(b, bmax))
        heap.set(node, ef.array_len, b)
        coords = heap.get(node, ef.name + "c")
        vals = heap.get(node, ef.name + "v")
        children = heap.get(node, ch.name) if ch else None

        # choose child subtree sizes: b subtrees, each >= clo (if nonempty),
        # consuming everything but the b interleaved elements
        budget = n - b
        sizes = []
        for p in range(b):
            lo = clo if (ch and ch.nonempty) else 0
            rest_min = sum(clo if (ch and ch.nonempty) else 0
                           for _ in range(p + 1, b))
            hi = budget - rest_min
            take = self.pick(lo, hi) if ch else 0
            take = max(lo, min(take, hi))
            sizes.append(take)
            budget -= take
        if budget:
            sizes[-1] += budget  # any leftover joins the last subtree
        cursor = 0
        for p in range(b):
            if ch:
                sub = elems[cursor:cursor + sizes[p]]
                cursor += sizes[p]
                if sub:
                    sink = [None]
                    work.append((ch.target, sub, sink, 0, node))
                    children[p] = sink
                    self._patches.append((children, p, sink))
                else:
                    children[p] = None
            coords[p] = elems[cursor][0]
            vals[p] = elems[cursor][1]
            cursor += 1
        for p in range(b, len(coords)):
            coords[p] = COORD_EMPTY
        assert cursor == n


def build_structure(sset: SchemaSet, heap: NodeHeap, elems, payload="scalar",
                    rng=None):
    """Build one conforming instance; returns the root handle or None."""
    b = Builder(sset, heap, payload, rng)
    root = b.build(list(elems))
    for container, slot, sink in b._patches:
        container[slot] = sink[0]
    return root
