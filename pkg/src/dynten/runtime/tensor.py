"""Tensor storage: format-shaped containers over arrays and node heaps.

A TensorValue carries per-level storage following the kernel calling
convention: dense levels are extents, compressed levels pos/crd arrays,
dynamic levels root handles (one per position of the static prefix;
deeper dynamic levels live inside elem payloads).  Values sit in a
float array when the last level is static, otherwise inside nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..codegen.decls import gen_node_decls, decl_name
from ..codegen.layout import build_layout
from ..formats import TensorFormat
from ..schema import COORD_EMPTY
from .heap import NodeHeap
from .samplers import build_structure
from .walkers import walk_structure, validate_structure as _validate_one
from .pyexec import Program
from .. import ir


class TensorError(Exception):
    pass


@dataclass
class TensorValue:
    fmt: TensorFormat
    extents: tuple
    levels: list
    vals: list = None
    heap: NodeHeap = None

    @property
    def order(self):
        return self.fmt.order

    def entry_args(self, registry, role="in", name=None):
        """Storage objects keyed by entry parameter name.

        `name` overrides the tensor name used in parameter names (the
        kernel's operand name may differ from the value's format name).
        """
        lay = build_layout(name or self.fmt.name, self.fmt, role, registry)
        args = {}
        for k, lv in enumerate(self.fmt.levels):
            if lv.kind == "dense":
                args[lay.param("N", k)] = int(self.extents[k])
            elif lv.kind == "compressed":
                args[lay.param("pos", k)] = self.levels[k]["pos"]
                args[lay.param("crd", k)] = self.levels[k]["crd"]
            elif self.levels[k] is not None:
                args[lay.param("roots", k)] = self.levels[k]["roots"]
        if self.vals is not None:
            args[lay.param("vals")] = self.vals
        return args


def _records_for(fmt, registry):
    records = []
    payload = "scalar"
    for k in range(fmt.order - 1, -1, -1):
        lv = fmt.levels[k]
        if lv.kind != "dynamic":
            payload = "scalar"
            continue
        records.extend(gen_node_decls(registry.schema(lv.family), payload))
        payload = decl_name(lv.root, payload)
    dedup = {}
    for r in records:
        dedup.setdefault(r.name, r)
    return list(dedup.values())


def _payload_chain(fmt, registry):
    """Per level: payload record name feeding its elem values."""
    payloads = [None] * fmt.order
    payload = "scalar"
    for k in range(fmt.order - 1, -1, -1):
        lv = fmt.levels[k]
        if lv.kind != "dynamic":
            payload = "scalar"
            continue
        payloads[k] = payload
        payload = decl_name(lv.root, payload)
    return payloads


def _static_positions(fmt, extents, upto):
    n = 1
    for k in range(upto):
        if fmt.levels[k].kind != "dense":
            raise TensorError(
                "dynamic and compressed levels must sit under dense levels")
        n *= extents[k]
    return n


def empty_tensor(fmt, extents, registry) -> TensorValue:
    """Preallocated output container matching the calling convention."""
    extents = tuple(int(x) for x in extents)
    if len(extents) != fmt.order:
        raise TensorError(f"format {fmt} needs {fmt.order} extents")
    levels = []
    heap = None
    vals = None
    for k, lv in enumerate(fmt.levels):
        if lv.kind == "dense":
            levels.append(None)
        elif lv.kind == "compressed":
            positions = _static_positions(fmt, extents, k)
            levels.append({"pos": [0] * (positions + 1), "crd": []})
        else:
            if heap is None:
                heap = NodeHeap(_records_for(fmt, registry))
            if k == 0 or fmt.levels[k - 1].kind != "dynamic":
                positions = _static_positions(fmt, extents, k)
                levels.append({"roots": [None] * positions})
            else:
                levels.append(None)
    last = fmt.levels[-1]
    if last.kind == "dense":
        total = _static_positions(fmt, extents, fmt.order)
        vals = [0.0] * total
    elif last.kind == "compressed":
        vals = []
    return TensorValue(fmt, extents, levels, vals, heap)


# ---------------------------------------------------------------------------
# Assembly through registered implementations

def _retarget_type(t, names):
    if isinstance(t, tuple):
        if t[0] in ("ref", "strec") and t[1] in names:
            return (t[0], names[t[1]])
        if t[0] in ("arr",):
            return (t[0], _retarget_type(t[1], names), t[2])
        if t[0] in ("arrref", "vec"):
            return (t[0], _retarget_type(t[1], names))
    return t


def _retarget_stmts(stmts, names):
    """Point record references at the payload-suffixed declarations, so
    impl bodies written against base records work at outer levels."""
    out = []
    for s in stmts:
        if isinstance(s, ir.Alloc):
            out.append(ir.Alloc(s.lhs, names.get(s.record, s.record)))
        elif isinstance(s, ir.Decl):
            out.append(ir.Decl(s.name, _retarget_type(s.type, names), s.init))
        elif isinstance(s, ir.If):
            out.append(ir.If(s.cond, _retarget_stmts(s.then, names),
                             _retarget_stmts(s.els, names) if s.els else None))
        elif isinstance(s, ir.While):
            out.append(ir.While(s.cond, _retarget_stmts(s.body, names)))
        elif isinstance(s, ir.For):
            out.append(ir.For(s.var, s.lo, s.hi,
                              _retarget_stmts(s.body, names), s.parallel))
        elif isinstance(s, ir.Dispatch):
            out.append(ir.Dispatch(s.obj, [
                (names.get(r, r), v, _retarget_stmts(b, names))
                for r, v, b in s.cases]))
        else:
            out.append(s)
    return out


def _assembly_program(registry, family, payload, mode):
    cache = getattr(registry, "_exec_cache", None)
    if cache is None:
        cache = registry._exec_cache = {}
    key = (family, payload, mode)
    if key in cache:
        return cache[key]
    impl = registry.lookup_assembly(family, mode)
    if impl is None:
        raise TensorError(f"no {mode} implementation registered for "
                          f"family {family!r}")
    sset = registry.schema(family)
    records = gen_node_decls(sset, payload)
    names = {}
    for n in sset.nodes:
        names[n.name] = decl_name(n.name, payload)
    for st in sset.supertypes:
        names[st] = decl_name(st, payload)
    root_record = decl_name(registry.root_node(family), payload)
    vt = "float64" if payload == "scalar" else ir.Ref(payload)
    funcs = []
    if mode == "append":
        strec = ir.Record(impl.state_record_name(),
                          [(m, _retarget_type(t, names)) for m, t in impl.state])
        records = records + [strec]
        funcs.append(ir.Func("append_first", [
            ir.Param("c", "int32"), ir.Param("v", vt),
            ir.Param("st", ir.Ref(strec.name)),
            ir.Param("ret", ir.Ref(root_record))], None,
            _retarget_stmts(impl.first, names)))
        funcs.append(ir.Func("append_rest", [
            ir.Param("c", "int32"), ir.Param("v", vt),
            ir.Param("st", ir.Ref(strec.name))], None,
            _retarget_stmts(impl.rest, names)))
    else:
        for h in impl.helpers:
            funcs.append(ir.Func(h.name,
                                 [ir.Param(p.name, _retarget_type(p.type, names),
                                           p.ref) for p in h.params],
                                 _retarget_type(h.ret, names),
                                 _retarget_stmts(h.body, names), kind=h.kind))
        funcs.append(ir.Func("build", [
            ir.Param("ecrd", ("arrref", "int32")),
            ir.Param("evals", ("arrref", vt)),
            ir.Param("sz", "int32"),
            ir.Param("ret", ir.Ref(root_record))], None,
            _retarget_stmts(impl.build, names)))
    module = ir.Module(records, funcs, entry=funcs[-1].name)
    prog = Program(module)
    cache[key] = (prog, root_record, impl.state_record_name()
                  if mode == "append" else None)
    return cache[key]


def assemble_structure(registry, heap, family, payload, elems, mode="auto",
                       rng=None):
    """Build one structure from sorted (coord, value) pairs.

    mode: append/build use the registered implementation; direct uses
    the canonical structure builder; auto prefers append, then build,
    then direct.
    """
    if not elems:
        return None
    if mode == "auto":
        # bulk build first: it yields balanced shapes (appends to a bst
        # in coordinate order degenerate into a right spine)
        if registry.lookup_assembly(family, "build") is not None:
            mode = "build"
        elif registry.lookup_assembly(family, "append") is not None:
            mode = "append"
        else:
            mode = "direct"
    if mode == "direct":
        sset = registry.schema(family)
        return build_structure(sset, heap, elems, payload, rng)
    prog, root_record, strec = _assembly_program(registry, family, payload, mode)
    heap.add_records(prog.module.records)
    prog.reset(node_sink=heap.nodes)
    ret = heap.alloc(root_record)
    if mode == "append":
        st = heap.alloc(strec)
        first = prog.func("append_first")
        rest = prog.func("append_rest")
        c0, v0 = elems[0]
        first(c0, v0, st, ret)
        for c, v in elems[1:]:
            rest(c, v, st)
    else:
        coords = [c for c, _ in elems]
        vals = [v for _, v in elems]
        prog.func("build")(coords, vals, len(elems), ret)
    return ret


# ---------------------------------------------------------------------------
# Construction from entries / dense arrays

def from_entries(fmt, extents, entries, registry, mode="auto",
                 rng=None) -> TensorValue:
    """Build a TensorValue from sorted unique (coords, value) entries."""
    extents = tuple(int(x) for x in extents)
    entries = sorted(entries, key=lambda e: e[0])
    tv = empty_tensor(fmt, extents, registry)
    payloads = _payload_chain(fmt, registry)

    def group(entries, k):
        """Split entries by coordinate k, preserving order."""
        out = []
        cur, bucket = None, []
        for coords, v in entries:
            if coords[k] != cur:
                if bucket:
                    out.append((cur, bucket))
                cur, bucket = coords[k], []
            bucket.append((coords, v))
        if bucket:
            out.append((cur, bucket))
        return out

    def build_dyn(k, entries):
        lv = fmt.levels[k]
        if k == fmt.order - 1:
            elems = [(coords[k], v) for coords, v in entries]
        else:
            elems = []
            for c, bucket in group(entries, k):
                h = build_dyn(k + 1, bucket)
                if h is not None:
                    elems.append((c, h))
        if not elems:
            return None
        return assemble_structure(registry, tv.heap, lv.family, payloads[k],
                                  elems, mode, rng)

    def build_static(k, entries, position):
        lv = fmt.levels[k]
        if lv.kind == "dynamic":
            tv.levels[k]["roots"][position] = build_dyn(k, entries)
            return
        if lv.kind == "dense":
            if k == fmt.order - 1:
                for coords, v in entries:
                    tv.vals[position * extents[k] + coords[k]] = v
                return
            for c, bucket in group(entries, k):
                build_static(k + 1, bucket, position * extents[k] + c)
            return
        # compressed
        st = tv.levels[k]
        if k == fmt.order - 1:
            for coords, v in entries:
                st["crd"].append(coords[k])
                tv.vals.append(v)
        else:
            raise TensorError("compressed levels are supported only innermost")
        st["pos"][position + 1] = len(st["crd"])

    if any(lv.kind == "compressed" for lv in fmt.levels):
        kc = next(k for k, lv in enumerate(fmt.levels)
                  if lv.kind == "compressed")
        if kc != fmt.order - 1:
            raise TensorError("compressed levels are supported only innermost")
        positions = _static_positions(fmt, extents, kc)
        # visit every static position so pos is closed over empty rows
        buckets = {p: [] for p in range(positions)}
        for coords, v in entries:
            p = 0
            for k in range(kc):
                p = p * extents[k] + coords[k]
            buckets[p].append((coords, v))
        st = tv.levels[kc]
        for p in range(positions):
            for coords, v in buckets[p]:
                st["crd"].append(coords[kc])
                tv.vals.append(v)
            st["pos"][p + 1] = len(st["crd"])
        return tv

    if entries:
        build_static(0, entries, 0)
    return tv


def from_dense(arr, fmt, registry, mode="auto", rng=None) -> TensorValue:
    """Lossy only for explicit zeros: zero entries are dropped."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != fmt.order:
        raise TensorError(f"array rank {a.ndim} != format order {fmt.order}")
    entries = [(tuple(int(x) for x in idx), float(a[tuple(idx)]))
               for idx in np.argwhere(a != 0.0)]
    return from_entries(fmt, a.shape, entries, registry, mode, rng)


def to_entries(tv, registry):
    """Iterate (coords, value) entries of any TensorValue, in order."""
    fmt = tv.fmt
    out = []

    def static_pos_iter(k, position, coords):
        lv = fmt.levels[k]
        if lv.kind == "dense":
            for i in range(tv.extents[k]):
                descend(k + 1, position * tv.extents[k] + i, coords + (i,))
        elif lv.kind == "compressed":
            st = tv.levels[k]
            for p in range(st["pos"][position], st["pos"][position + 1]):
                descend(k + 1, p, coords + (st["crd"][p],))
        else:
            root = tv.levels[k]["roots"][position]
            dyn_walk(k, root, coords)

    def descend(k, position, coords):
        if k == fmt.order:
            out.append((coords, tv.vals[position]))
            return
        static_pos_iter(k, position, coords)

    def dyn_walk(k, root, coords):
        lv = fmt.levels[k]
        sset = registry.schema(lv.family)
        if k == fmt.order - 1:
            for c, v in walk_structure(sset, tv.heap, root):
                out.append((coords + (c,), v))
        else:
            for c, h in walk_structure(sset, tv.heap, root):
                dyn_walk(k + 1, h, coords + (c,))

    static_pos_iter(0, 0, ())
    return out


def to_dense(tv, registry) -> np.ndarray:
    a = np.zeros(tv.extents, dtype=np.float64)
    for coords, v in to_entries(tv, registry):
        a[coords] = v
    return a


def validate_tensor(tv, registry):
    """Run every schema invariant over all live structures plus the
    static-level well-formedness checks."""
    problems = []
    for k, lv in enumerate(tv.fmt.levels):
        if lv.kind == "compressed":
            st = tv.levels[k]
            pos, crd = st["pos"], st["crd"]
            for a, b in zip(pos, pos[1:]):
                if b < a:
                    problems.append(f"level {k}: pos not nondecreasing")
                    break
            for p0, p1 in zip(pos, pos[1:]):
                for x, y in zip(crd[p0:p1], crd[p0 + 1:p1]):
                    if y <= x:
                        problems.append(f"level {k}: crd not strictly "
                                        "increasing within a segment")
                        break
        elif lv.kind == "dynamic" and tv.levels[k] is not None:
            sset = registry.schema(lv.family)
            for i, root in enumerate(tv.levels[k]["roots"]):
                probs = _validate_one(sset, tv.heap, root,
                                      extent=tv.extents[k])
                problems.extend(f"root[{i}]: {p}" for p in probs)
                if root is not None and k < tv.fmt.order - 1:
                    inner = tv.fmt.levels[k + 1]
                    inner_sset = registry.schema(inner.family)
                    for c, h in walk_structure(sset, tv.heap, root):
                        probs = _validate_one(inner_sset, tv.heap, h,
                                              extent=tv.extents[k + 1])
                        problems.extend(f"root[{i}]/{c}: {p}" for p in probs)
    return problems
