"""Lower a bound statement to a complete kernel module.

Levels lower outer to inner in forall order.  Dense levels become
counted loops, a single sparse operand becomes a positional loop or a
generated map, and co-iterated levels become merge loops driving
iterator state machines and/or compressed cursors.  Output entries are
scattered into dense storage, appended to pos/crd/vals, appended
through inlined append_first/append_rest, staged and bulk-built, or
produced by deep-copy maps.
"""

from __future__ import annotations

from .. import ir
from ..ir import (
    AddSet, Alloc, Bin, Call, ClearStack, ClearVec, Cst, Decl, Fld, For,
    Goto, Idx, If, Label, Len, Not, Null, Param, PushVec, Ref, Ret, Set,
    Task, Var, While,
)
from ..notation import (
    Access, BinE, BoundKernel, ConstE, InvE, NotationError, accesses_of,
    _terms,
)
from .common import Names
from .decls import gen_node_decls, payload_type
from .iterators import gen_iterator
from .layout import build_layout, layout_meta
from .maps import MapPlan, gen_map


class KernelError(Exception):
    pass


def gen_kernel(bound: BoundKernel, registry, parallel: bool = False,
               depth: int = 8) -> ir.Module:
    return _Gen(bound, registry, parallel, depth).build()


class _Gen:
    def __init__(self, bound, registry, parallel, depth):
        self.b = bound
        self.spec = bound.spec
        self.reg = registry
        self.parallel = parallel
        self.depth = depth
        self.names = Names()
        self.records = {}
        self.funcs = []
        self.frames = {}
        self.iter_plans = {}
        self.helper_names = set()
        self.symtab = {}   # name -> type, for captured-parameter resolution
        self.tmp = 0

        order = self.spec.tensors[1:] + [self.spec.tensors[0]]
        self.layouts = {}
        for t in order:
            role = "out" if t == self.spec.lhs.tensor else "in"
            self.layouts[t] = build_layout(t, self.spec.bindings[t], role,
                                           registry)
        self.plan_by_var = {p.var: p for p in bound.plans}
        rv = self.spec.reduction_vars
        if rv and self.spec.foralls[-len(rv):] != rv:
            raise KernelError("reduction variables must be innermost")
        self.first_red = (len(self.spec.foralls) - len(rv)) if rv else None
        self.acc = None

    # ------------------------------------------------------------------
    # records and shared functions

    def need_records(self, family, payload):
        sset = self.reg.schema(family)
        for r in gen_node_decls(sset, payload):
            if r.name not in self.records:
                self.records[r.name] = r

    def need_iterator(self, family, payload):
        key = (family, payload)
        if key not in self.iter_plans:
            plan = gen_iterator(self.reg.schema(family), family, payload)
            self.iter_plans[key] = plan
            self.funcs.append(plan.machine)
            self.frames[plan.name] = plan.frame
            self.names.claim(plan.name)
        return self.iter_plans[key]

    def fresh(self, base):
        return self.names.fresh(base)

    # ------------------------------------------------------------------
    # access bookkeeping

    def level_of(self, access, var):
        return access.indices.index(var)

    def value_of(self, t, state):
        kind, e = state[t]
        if kind == "val":
            return e
        if kind == "ord":
            return Idx(Var(self.layouts[t].param("vals")), e)
        raise KernelError(f"tensor {t} not fully consumed")

    def compile_expr(self, e, state, present=None):
        if isinstance(e, ConstE):
            return Cst(e.value)
        if isinstance(e, Access):
            return self.value_of(e.tensor, state)
        if isinstance(e, InvE):
            return Bin("/", Cst(1.0), self.value_of(e.access.tensor, state))
        if isinstance(e, BinE):
            if e.op in "+-" and present is not None:
                return self.compile_terms(e, state, present)
            return Bin(e.op, self.compile_expr(e.a, state, present),
                       self.compile_expr(e.b, state, present))
        raise KernelError(f"cannot compile expression {e}")

    def compile_terms(self, e, state, present):
        """Sum of terms restricted to those whose sparse operands are present."""
        acc = None
        for sign, term in _terms(e):
            sparse_in_term = [a.tensor for a in accesses_of(term)
                              if a.tensor in self.all_sparse]
            if not set(sparse_in_term) <= present:
                continue
            val = self.compile_expr(term, state)
            if sign < 0:
                val = ir.Neg(val)
            acc = val if acc is None else Bin("+", acc, val)
        return acc if acc is not None else Cst(0.0)

    # ------------------------------------------------------------------

    def build(self):
        spec = self.spec
        self.all_sparse = {t for p in self.b.plans for t, _ in p.sparse}

        for t, lay in self.layouts.items():
            for info in lay.levels:
                if info.kind == "dynamic":
                    self.need_records(info.family, info.payload)
        # assembly state/helpers may add more records later

        params = []
        for t in spec.tensors[1:] + [spec.tensors[0]]:
            for pname, ptype in self.layouts[t].params():
                params.append(Param(pname, ptype))
                self.symtab[pname] = ptype

        state = {t: ("ord", Cst(0)) for t in spec.tensors}
        if self.b.assemble == "map":
            body = self.lower_deepcopy(state)
        else:
            body = self.lower(0, state)

        compute = ir.Func("compute", params, None, body, kind="entry")
        self.funcs.append(compute)
        tensors = [(t, self.layouts[t].role,
                    [list(p) for p in self.layouts[t].params()])
                   for t in spec.tensors[1:] + [spec.tensors[0]]]
        accesses = {spec.lhs.tensor: list(spec.lhs.indices)}
        for a in accesses_of(spec.rhs):
            accesses.setdefault(a.tensor, list(a.indices))
        m = ir.Module(list(self.records.values()), self.funcs,
                      entry="compute", tensors=tensors, frames=self.frames,
                      meta={"depth": self.depth,
                            "parallel": self.parallel,
                            "statement": str(spec),
                            "output": spec.lhs.tensor,
                            "mode": spec.mode,
                            "accesses": accesses,
                            "layouts": layout_meta(list(self.layouts.values()))})
        problems = ir.check_module(m)
        if problems:
            raise KernelError("generated module fails checks: "
                              + "; ".join(problems))
        return m

    # ------------------------------------------------------------------
    # recursive lowering

    def lower(self, k, state):
        spec = self.spec
        if k == len(spec.foralls):
            return self.sink(state)
        if self.first_red is not None and k == self.first_red:
            acc = self.fresh("acc")
            self.symtab[acc] = "float64"
            prev, self.acc = self.acc, acc
            inner = self.lower_level(k, state)
            self.acc = prev
            store = self.write_output(Var(acc), state)
            return [Decl(acc, "float64", Cst(0.0))] + inner + store
        return self.lower_level(k, state)

    def lower_level(self, k, state):
        var = self.spec.foralls[k]
        plan = self.plan_by_var[var]
        prelude, postlude = self.output_structure_hooks(var, state)
        if plan.strategy == "dense":
            stmts = self.lower_dense(k, var, plan, state)
        elif plan.strategy == "map":
            stmts = self.lower_map(k, var, plan, state)
        else:
            stmts = self.lower_merge(k, var, plan, state)
        return prelude + stmts + postlude

    # -- dense loops --------------------------------------------------------

    def extent_of(self, var):
        for a in accesses_of(self.spec.rhs) + [self.spec.lhs]:
            if var in a.indices:
                kt = a.indices.index(var)
                if self.spec.bindings[a.tensor].levels[kt].kind == "dense":
                    return Var(self.layouts[a.tensor].param("N", kt))
        raise KernelError(f"no dense extent available for {var!r}")

    def lower_dense(self, k, var, plan, state):
        iv = var
        self.symtab[iv] = "int32"
        new_state = dict(state)
        for a in accesses_of(self.spec.rhs) + [self.spec.lhs]:
            t = a.tensor
            if var not in a.indices:
                continue
            kt = a.indices.index(var)
            lv = self.spec.bindings[t].levels[kt]
            if lv.kind != "dense":
                continue
            kind, e = state[t]
            new_state[t] = ("ord", _advance(e, self.layouts[t].param("N", kt), iv))
        inner = self.lower(k + 1, new_state)
        par = self.parallel and k == 0 and self.parallel_safe()
        return [For(iv, Cst(0), self.extent_of(var), inner, parallel=par)]

    def parallel_safe(self):
        # shared growable sinks cannot take concurrent writers
        out_fmt = self.spec.bindings[self.spec.lhs.tensor]
        if any(lv.kind == "compressed" for lv in out_fmt.levels):
            return False
        if self.b.assemble in ("append", "build"):
            dyn = [k for k, lv in enumerate(out_fmt.levels)
                   if lv.kind == "dynamic"]
            # per-row structures are independent; a single shared structure
            # appended across rows is not
            return bool(dyn) and dyn[0] > 0
        return True

    # -- single sparse traversal ---------------------------------------------

    def lower_map(self, k, var, plan, state):
        t = plan.map_operand
        kt = self.level_of(self._access(t), var)
        lv = self.spec.bindings[t].levels[kt]
        if lv.kind == "compressed":
            return self.lower_pos_loop(k, var, t, kt, state)
        return self.lower_dynamic_map(k, var, t, kt, state)

    def _access(self, t):
        for a in accesses_of(self.spec.rhs):
            if a.tensor == t:
                return a
        return self.spec.lhs

    def lower_pos_loop(self, k, var, t, kt, state):
        lay = self.layouts[t]
        kind, e = state[t]
        p = self.fresh(f"p_{t}")
        self.symtab[p] = "int32"
        iv = var
        self.symtab[iv] = "int32"
        new_state = dict(state)
        new_state[t] = ("ord", Var(p))
        inner = [Decl(iv, "int32", Idx(Var(lay.param("crd", kt)), Var(p)))]
        inner += self._bind_dense_positions(var, iv, state, new_state)
        inner += self.lower(k + 1, new_state)
        pos = Var(lay.param("pos", kt))
        return [For(p, Idx(pos, e), Idx(pos, Bin("+", e, Cst(1))), inner)]

    def _bind_dense_positions(self, var, iv, state, new_state):
        """Advance dense-level cursors of the other tensors at this var."""
        for a in accesses_of(self.spec.rhs) + [self.spec.lhs]:
            t = a.tensor
            if var not in a.indices or t not in new_state:
                continue
            kt = a.indices.index(var)
            lv = self.spec.bindings[t].levels[kt]
            if lv.kind == "dense":
                kind, e = state[t]
                new_state[t] = ("ord",
                                _advance(e, self.layouts[t].param("N", kt),
                                         iv))
        return []

    def handle_of(self, t, kt, state):
        """Root handle expression for tensor t's dynamic level kt."""
        lay = self.layouts[t]
        info = lay.levels[kt]
        kind, e = state[t]
        if kind == "ord":
            assert info.has_roots
            return Idx(Var(lay.param("roots", kt)), e)
        assert kind == "root"
        return e

    def drilled(self, t, kt, state, stmts):
        """Declare and return the entry-node variable for a traversal."""
        info = self.layouts[t].levels[kt]
        root = self.handle_of(t, kt, state)
        nv = self.fresh(f"n_{t}")
        self.symtab[nv] = Ref(info.entry_record)
        if info.drill is None:
            stmts.append(Decl(nv, Ref(info.entry_record), root))
        else:
            stmts.append(Decl(nv, Ref(info.entry_record), Null()))
            stmts.append(If(Bin("!=", root, Null()),
                            [Set(Var(nv), Fld(root, info.drill))]))
        return nv

    def lower_dynamic_map(self, k, var, t, kt, state):
        info = self.layouts[t].levels[kt]
        sset = self.reg.schema(info.family)
        iv = var
        self.symtab[iv] = "int32"
        last = kt == len(self.layouts[t].levels) - 1

        # build the per-element body once against placeholder coordinate and
        # value, then instantiate it per visit site by substitution
        new_state = dict(state)
        new_state[t] = ("val", Var("__ev")) if last else ("root", Var("__ev"))
        self._bind_dense_positions(var, iv, state, new_state)
        template = _with_coord(iv, self.lower(k + 1, new_state))
        captured = self.captured_params(template, skip={"__ec", "__ev", iv})

        def body(coord, value):
            return _subst(template, {"__ec": coord, "__ev": value})

        # sums run in coordinate order so they match the dense oracle; an
        # unsorted operand cannot offer that and keeps locality order
        # (ordered sinks over unsorted operands were rejected at bind time)
        lv_fmt = self.spec.bindings[t].levels[kt]
        order = "coordinate" if self._needs_ordered_map(k, var) \
            and lv_fmt.ordered else "locality"
        prefix = self.fresh(f"map_{t}")
        par = self.parallel and k == 0 and order == "locality" \
            and self.parallel_safe()
        plan = MapPlan(sset, info.family, info.payload, prefix, body,
                       captured, order=order, parallel=par, depth=self.depth)
        mapset = gen_map(plan)
        for f in mapset.funcs:
            if f.name != prefix:
                self.names.claim(f.name)
            self.funcs.append(f)

        stmts = []
        nv = self.drilled(t, kt, state, stmts)
        call = Call(mapset.entry, [Var(nv)] + [Var(p.name) for p in captured])
        if par:
            stmts.append(Task([call], entry=True))
        else:
            stmts.append(call)
        return stmts

    def _needs_ordered_map(self, k, var):
        # sums must run in coordinate order to match the dense oracle, and
        # ordered sinks need in-order emission
        if var in self.spec.reduction_vars:
            return True
        plan = self.plan_by_var[var]
        if plan.output_level is None:
            return False
        lv = self.spec.bindings[self.spec.lhs.tensor].levels[plan.output_level]
        return lv.kind != "dense"

    def captured_params(self, probe_stmts, skip=()):
        locals_ = set(skip)
        for s in ir.walk_stmts(probe_stmts):
            if isinstance(s, Decl):
                locals_.add(s.name)
            elif isinstance(s, For):
                locals_.add(s.var)
            elif isinstance(s, ir.Dispatch):
                for _, v, _b in s.cases:
                    locals_.add(v)
        used = []
        written = set()
        for s in ir.walk_stmts(probe_stmts):
            for e in ir.walk_exprs(s):
                if isinstance(e, Var) and e.name not in locals_ \
                        and e.name not in used:
                    used.append(e.name)
            # direct scalar assignment makes the variable itself written;
            # writes through members or elements mutate the object instead
            if isinstance(s, (Set, AddSet)) and isinstance(s.lhs, Var):
                written.add(s.lhs.name)
        params = []
        for name in self.symtab:
            if name in used:
                t = self.symtab[name]
                is_ref = name in written and not isinstance(t, tuple)
                params.append(Param(name, t, ref=is_ref))
        missing = [u for u in used if u not in self.symtab]
        if missing:
            raise KernelError(f"map body uses unknown variables {missing}")
        return params

    # -- merges ---------------------------------------------------------------

    def lower_merge(self, k, var, plan, state):
        streams = []
        stmts = []
        iv = var
        self.symtab[iv] = "int32"
        for t, kt in plan.sparse:
            lv = self.spec.bindings[t].levels[kt]
            if lv.kind == "dynamic":
                streams.append(self.dyn_stream(t, kt, state, stmts))
            else:
                streams.append(self.cmp_stream(t, kt, state, stmts))
        last_level = {t: kt == len(self.layouts[t].levels) - 1
                      for t, kt in plan.sparse}

        def bind(present):
            new_state = dict(state)
            for s in streams:
                if s["t"] in present:
                    if s["kind"] == "dyn":
                        v = Var(s["val"])
                        new_state[s["t"]] = ("val", v) if last_level[s["t"]] \
                            else ("root", v)
                    else:
                        new_state[s["t"]] = ("ord", Var(s["p"]))
            self._bind_dense_positions(var, iv, state, new_state)
            return new_state

        if len(streams) == 1:
            s = streams[0]
            body = s["refresh"]()
            body.append(Decl(iv, "int32", s["coord"]))
            body += self.lower(k + 1, bind({s["t"]}))
            body += s["advance"](None)
            return stmts + [While(s["cont"], body)]

        a, b = streams
        if plan.merge_kind == "intersection":
            body = a["refresh"]() + b["refresh"]()
            body.append(Decl(iv, "int32", Bin("min", a["coord"], b["coord"])))
            hit = self.lower(k + 1, bind({a["t"], b["t"]}))
            body.append(If(Bin("and", Bin("==", a["coord"], Var(iv)),
                              Bin("==", b["coord"], Var(iv))), hit))
            body += a["advance"](Var(iv))
            body += b["advance"](Var(iv))
            return stmts + [While(Bin("and", a["cont"], b["cont"]), body)]

        # union: innermost level only (checked at bind time)
        if k + 1 != len(self.spec.foralls):
            raise KernelError("union merges are supported only at the "
                              "innermost index variable")
        both = self.sink(bind({a["t"], b["t"]}), present={a["t"], b["t"]})
        only_a = self.sink(bind({a["t"]}), present={a["t"]})
        only_b = self.sink(bind({b["t"]}), present={b["t"]})
        body = a["refresh"]() + b["refresh"]()
        body.append(Decl(iv, "int32", Bin("min", a["coord"], b["coord"])))
        body.append(If(Bin("and", Bin("==", a["coord"], Var(iv)),
                           Bin("==", b["coord"], Var(iv))), both,
                       [If(Bin("==", a["coord"], Var(iv)), only_a, only_b)]))
        body += a["advance"](Var(iv))
        body += b["advance"](Var(iv))
        out = stmts + [While(Bin("and", a["cont"], b["cont"]), body)]
        for s, branch in ((a, only_a), (b, only_b)):
            drain = s["refresh"]()
            drain.append(Decl(iv, "int32", s["coord"]))
            drain += [_clone(x) for x in branch]
            drain += s["advance"](None)
            out.append(While(s["cont"], drain))
        return out

    def dyn_stream(self, t, kt, state, stmts):
        info = self.layouts[t].levels[kt]
        plan = self.need_iterator(info.family, info.payload)
        nv = self.drilled(t, kt, state, stmts)
        stk = self.fresh(f"stk_{t}")
        stv = self.fresh(f"st_{t}")
        cv = self.fresh(f"c_{t}")
        vv = self.fresh(f"v_{t}")
        vt = payload_type(info.payload)
        self.symtab.update({stk: ("stack", plan.name), stv: "uint8",
                            cv: "int32", vv: vt})
        stmts.append(Decl(stk, ("stack", plan.name)))
        stmts.append(ClearStack(Var(stk)))
        stmts.append(Decl(cv, "int32", Cst(0)))
        stmts.append(Decl(vv, vt, Cst(0.0) if vt == "float64" else Null()))
        stmts.append(Decl(stv, "uint8"))
        args = [Cst(0), Var(nv), Var(stk), Var(cv), Var(vv)]
        stmts.append(Call(plan.name, args, ret=Var(stv)))

        def advance(cond_coord):
            call = Call(plan.name,
                        [Var(stv), Var(nv), Var(stk), Var(cv), Var(vv)],
                        ret=Var(stv))
            if cond_coord is None:
                return [call]
            return [If(Bin("==", Var(cv), cond_coord), [call])]

        return {"kind": "dyn", "t": t, "coord": Var(cv), "val": vv,
                "cont": Bin("!=", Var(stv), Cst(0)),
                "refresh": lambda: [], "advance": advance, "p": None}

    def cmp_stream(self, t, kt, state, stmts):
        lay = self.layouts[t]
        kind, e = state[t]
        p = self.fresh(f"p_{t}")
        pe = self.fresh(f"pend_{t}")
        cv = self.fresh(f"c_{t}")
        self.symtab.update({p: "int32", pe: "int32", cv: "int32"})
        pos = Var(lay.param("pos", kt))
        stmts.append(Decl(p, "int32", Idx(pos, e)))
        stmts.append(Decl(pe, "int32", Idx(pos, Bin("+", e, Cst(1)))))

        def refresh():
            return [Decl(cv, "int32", Idx(Var(lay.param("crd", kt)), Var(p)))]

        def advance(cond_coord):
            if cond_coord is None:
                return [Set(Var(p), Bin("+", Var(p), Cst(1)))]
            return [If(Bin("==", Var(cv), cond_coord),
                       [Set(Var(p), Bin("+", Var(p), Cst(1)))])]

        return {"kind": "cmp", "t": t, "coord": Var(cv), "val": None,
                "cont": Bin("<", Var(p), Var(pe)),
                "refresh": refresh, "advance": advance, "p": p}

    # -- output ----------------------------------------------------------------

    def output_structure_hooks(self, var, state):
        """Per-structure prelude/postlude for dynamic or compressed sinks."""
        spec = self.spec
        if var not in spec.lhs.indices or self.b.assemble == "map":
            return [], []
        ko = spec.lhs.indices.index(var)
        out = spec.lhs.tensor
        lv = spec.bindings[out].levels[ko]
        lay = self.layouts[out]
        prelude, postlude = [], []
        if lv.kind == "compressed":
            kind, e = state[out]
            postlude.append(Set(Idx(Var(lay.param("pos", ko)),
                                    Bin("+", e, Cst(1))),
                                Len(Var(lay.param("crd", ko)))))
        elif lv.kind == "dynamic" and self.b.assemble == "append":
            impl = self.reg.lookup_assembly(lv.family, "append")
            self.append_ctx = self.setup_append(out, ko, impl, prelude, state)
        elif lv.kind == "dynamic" and self.b.assemble == "build":
            impl = self.reg.lookup_assembly(lv.family, "build")
            self.build_ctx = self.setup_build(out, ko, impl, prelude,
                                              postlude, state)
        return prelude, postlude

    def setup_append(self, out, ko, impl, prelude, state):
        lay = self.layouts[out]
        info = lay.levels[ko]
        strec = impl.state_record_name()
        if strec not in self.records:
            self.records[strec] = ir.Record(strec, list(impl.state))
        first = self.fresh("afirst")
        astate = self.fresh("astate")
        aret = self.fresh("aret")
        self.symtab.update({first: "bool", astate: ("strec", strec),
                            aret: Ref(info.root_record)})
        prelude.append(Decl(first, "bool", Cst(True)))
        prelude.append(Decl(astate, ("strec", strec)))
        prelude.append(Decl(aret, Ref(info.root_record), Null()))
        kind, e = state[out]
        return {"first": first, "astate": astate, "aret": aret,
                "impl": impl, "roots": Idx(Var(lay.param("roots", ko)), e),
                "record": info.root_record}

    def setup_build(self, out, ko, impl, prelude, postlude, state):
        lay = self.layouts[out]
        info = lay.levels[ko]
        bufc = self.fresh("bufc")
        bufv = self.fresh("bufv")
        bret = self.fresh("bret")
        self.symtab.update({bufc: ("vec", "int32"), bufv: ("vec", "float64"),
                            bret: Ref(info.root_record)})
        prelude += [Decl(bufc, ("vec", "int32")), ClearVec(Var(bufc)),
                    Decl(bufv, ("vec", "float64")), ClearVec(Var(bufv)),
                    Decl(bret, Ref(info.root_record), Null())]
        for h in impl.helpers:
            if h.name not in self.helper_names:
                self.helper_names.add(h.name)
                self.names.claim(h.name)
                self.funcs.append(h)
        kind, e = state[out]
        build_body = self.inline_impl(
            impl.build, {"ecrd": Var(bufc), "evals": Var(bufv),
                         "sz": Len(Var(bufc)), "ret": Var(bret)})
        postlude.append(If(Bin(">", Len(Var(bufc)), Cst(0)),
                           [Alloc(Var(bret), info.root_record)]
                           + build_body
                           + [Set(Idx(Var(lay.param("roots", ko)), e),
                                  Var(bret))]))
        return {"bufc": bufc, "bufv": bufv}

    def inline_impl(self, body, argmap):
        self.tmp += 1
        prefix = f"x{self.tmp}_"
        return _subst(body, argmap, prefix, self.symtab)

    def sink(self, state, present=None):
        if present is None:
            present = set(self.all_sparse)
        value = self.compile_expr(self.spec.rhs, state, present)
        if self.acc is not None:
            return [AddSet(Var(self.acc), value)]
        return self.write_output(value, state)

    def write_output(self, value, state):
        spec = self.spec
        out = spec.lhs.tensor
        fmt = spec.bindings[out]
        lay = self.layouts[out]
        lv = fmt.levels[-1]
        if lv.kind == "dense":
            kind, e = state[out]
            target = Idx(Var(lay.param("vals")), e)
            if spec.mode == "accumulate":
                return [AddSet(target, value)]
            return [Set(target, value)]
        iv_last = Var(spec.lhs.indices[-1])
        if lv.kind == "compressed":
            ko = fmt.order - 1
            return [PushVec(Var(lay.param("crd", ko)), iv_last),
                    PushVec(Var(lay.param("vals")), value)]
        if self.b.assemble == "build":
            ctx = self.build_ctx
            return [PushVec(Var(ctx["bufc"]), iv_last),
                    PushVec(Var(ctx["bufv"]), value)]
        ctx = self.append_ctx
        impl = ctx["impl"]
        argmap = {"c": iv_last, "st": Var(ctx["astate"]),
                  "ret": Var(ctx["aret"])}
        vtmp = self.fresh("aval")
        self.symtab[vtmp] = "float64"
        first_body = self.inline_impl(impl.first, {**argmap, "v": Var(vtmp)})
        rest_body = self.inline_impl(impl.rest, {**argmap, "v": Var(vtmp)})
        return [Decl(vtmp, "float64", value),
                If(Var(ctx["first"]),
                   [Alloc(Var(ctx["aret"]), ctx["record"])]
                   + first_body
                   + [Set(ctx["roots"], Var(ctx["aret"])),
                      Set(Var(ctx["first"]), Cst(False))],
                   rest_body)]

    # -- deep copy --------------------------------------------------------------

    def lower_deepcopy(self, state):
        """Assemble the output by deep-copying the mirrored operand.

        Dense prefix levels become shared loops; at the first dynamic
        level each root handle is copied by a generated deep-copy map,
        with nested levels copied recursively through elem payloads.
        """
        spec = self.spec
        src = self.b.copy_of
        out = spec.lhs.tensor
        fmt = spec.bindings[out]

        def rec(k, state):
            lv = fmt.levels[k]
            if lv.kind == "dense":
                iv = spec.lhs.indices[k]
                self.symtab[iv] = "int32"
                ns = dict(state)
                for a in accesses_of(spec.rhs) + [spec.lhs]:
                    t = a.tensor
                    if iv in a.indices:
                        kt = a.indices.index(iv)
                        if spec.bindings[t].levels[kt].kind == "dense":
                            kind, e = state[t]
                            ns[t] = ("ord", _advance(
                                e, self.layouts[t].param("N", kt), iv))
                par = self.parallel and k == 0
                return [For(iv, Cst(0), self.extent_of(iv), rec(k + 1, ns),
                            parallel=par)]
            entry, captured = self.asm_level(k, state)
            src_root = self.handle_of(src, k, state)
            kind, e = state[out]
            out_lay = self.layouts[out]
            target = Idx(Var(out_lay.param("roots", k)), e)
            return [Call(entry, [src_root]
                         + [Var(p.name) for p in captured], ret=target)]

        return rec(0, state)

    def asm_level(self, k, state):
        """Deep-copy map functions for output levels k..r; innermost first."""
        spec = self.spec
        src = self.b.copy_of
        info = self.layouts[src].levels[k]
        sset = self.reg.schema(info.family)
        iv = spec.lhs.indices[k]
        self.symtab[iv] = "int32"
        last = k == len(self.layouts[src].levels) - 1

        if last:
            ns = dict(state)
            ns[src] = ("val", Var("__ev"))
            self._bind_dense_positions(iv, iv, state, ns)
            value = self.compile_expr(spec.rhs, ns)
            template = _with_coord(iv, [Set(Var("__sink"), value)])
            inner_copy = None

            def body(coord, srcval, sink):
                return _subst(template, {"__ec": coord, "__ev": srcval,
                                         "__sink": sink})
        else:
            inner_entry, inner_captured = self.asm_level(k + 1, state)
            template = _with_coord(iv, [
                Call(inner_entry,
                     [Var("__ev")] + [Var(p.name) for p in inner_captured],
                     ret=Var("__sink"))])
            body = None

            def inner_copy(coord, src_handle, sink):
                return _subst(template, {"__ec": coord, "__ev": src_handle,
                                         "__sink": sink})

        captured = self.captured_params(template,
                                        skip={"__ec", "__ev", "__sink", iv})
        prefix = self.fresh(f"copy_{spec.lhs.tensor}_{info.family}")
        plan = MapPlan(sset, info.family, info.payload, prefix, body,
                       captured, order="locality", parallel=False,
                       assemble=True, inner_copy=inner_copy)
        mapset = gen_map(plan)
        for f in mapset.funcs:
            if f.name != prefix:
                self.names.claim(f.name)
            self.funcs.append(f)
        return mapset.entry, captured


def _with_coord(iv, stmts):
    """Prefix a coordinate binding, unless the body never reads it."""
    used = any(isinstance(e, Var) and e.name == iv
               for s in ir.walk_stmts(stmts) for e in ir.walk_exprs(s))
    if used:
        return [Decl(iv, "int32", Var("__ec"))] + stmts
    return stmts


def _advance(pos, n_param, iv):
    """Flat ordinal after a dense level: pos * N + iv."""
    if isinstance(pos, Cst) and pos.value == 0:
        return Var(iv)
    return Bin("+", Bin("*", pos, Var(n_param)), Var(iv))


def _clone(s):
    return _subst([s], {})[0]


def _subst(stmts, argmap, prefix=None, symtab=None):
    """Clone statements, substituting expressions for variables.

    With a prefix, declared locals are renamed (used when inlining
    assembly bodies so repeated inlining cannot collide); the rename map
    is threaded through argmap.
    """
    argmap = dict(argmap)

    def ex(e):
        if isinstance(e, Var):
            return argmap.get(e.name, e)
        if isinstance(e, Fld):
            return Fld(ex(e.obj), e.member)
        if isinstance(e, Idx):
            return Idx(ex(e.arr), ex(e.index))
        if isinstance(e, Bin):
            return Bin(e.op, ex(e.a), ex(e.b))
        if isinstance(e, ir.Not):
            return ir.Not(ex(e.a))
        if isinstance(e, ir.Neg):
            return ir.Neg(ex(e.a))
        if isinstance(e, ir.Cast):
            return ir.Cast(ex(e.a), e.record)
        if isinstance(e, Len):
            return Len(ex(e.vec))
        if isinstance(e, ir.Top):
            return ir.Top(ex(e.stack), e.slot)
        if isinstance(e, ir.Empty):
            return ir.Empty(ex(e.stack))
        return e

    def local(name):
        if prefix is None:
            return name
        new = prefix + name
        argmap[name] = Var(new)
        return new

    def walk(stmts):
        out = []
        for s in stmts:
            if isinstance(s, Decl):
                init = ex(s.init) if s.init is not None else None
                out.append(Decl(local(s.name), s.type, init))
                if symtab is not None and prefix is not None:
                    symtab[prefix + s.name] = s.type
            elif isinstance(s, Set):
                out.append(Set(ex(s.lhs), ex(s.rhs)))
            elif isinstance(s, AddSet):
                out.append(AddSet(ex(s.lhs), ex(s.rhs)))
            elif isinstance(s, If):
                then = walk(s.then)
                els = walk(s.els) if s.els else None
                out.append(If(ex(s.cond), then, els))
            elif isinstance(s, While):
                out.append(While(ex(s.cond), walk(s.body)))
            elif isinstance(s, For):
                lo, hi = ex(s.lo), ex(s.hi)
                out.append(For(local(s.var), lo, hi, walk(s.body), s.parallel))
                if symtab is not None and prefix is not None:
                    symtab[prefix + s.var] = "int32"
            elif isinstance(s, Alloc):
                out.append(Alloc(ex(s.lhs), s.record))
            elif isinstance(s, ir.AllocArr):
                out.append(ir.AllocArr(ex(s.lhs), s.elem, ex(s.size)))
            elif isinstance(s, PushVec):
                out.append(PushVec(ex(s.vec), ex(s.value)))
            elif isinstance(s, ClearVec):
                out.append(ClearVec(ex(s.vec)))
            elif isinstance(s, Call):
                ret = ex(s.ret) if s.ret is not None else None
                out.append(Call(s.func, [ex(a) for a in s.args], ret=ret))
            elif isinstance(s, Ret):
                out.append(Ret(ex(s.value) if s.value is not None else None))
            elif isinstance(s, ClearStack):
                out.append(ClearStack(ex(s.stack)))
            elif isinstance(s, ir.Push):
                out.append(ir.Push(ex(s.stack), [ex(v) for v in s.values]))
            elif isinstance(s, ir.Pop):
                out.append(ir.Pop(ex(s.stack)))
            elif isinstance(s, Task):
                out.append(Task(walk(s.body), s.fanout, s.entry))
            elif isinstance(s, ir.Dispatch):
                out.append(ir.Dispatch(ex(s.obj),
                                       [(r, v, walk(b)) for r, v, b in s.cases]))
            elif isinstance(s, (Label, Goto)):
                out.append(s)
            else:
                raise KernelError(f"cannot substitute into {s!r}")
        return out

    return walk(stmts)
