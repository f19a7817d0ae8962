"""Index-notation statements and per-level lowering strategy selection.

Statements are written as explicit foralls over named index variables,
an output access with `=` (assign) or `+=` (accumulate), and a
right-hand side built from tensor accesses, scalar constants, `+`, `-`,
`*`, and `inv(...)` on dense accesses:

    forall(i) forall(j) y(i) += A(i,j) * x(j) * inv(d(j))

Binding tensor formats to a parsed statement fixes, per index variable,
how that dimension is computed: a dense loop, a traversal of a single
sparse operand (map), or co-iteration of one or two ordered sparse
streams (merge), intersecting for products and unioning for sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .formats import TensorFormat


class NotationError(Exception):
    pass


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Access:
    tensor: str
    indices: tuple

    def __str__(self):
        return f"{self.tensor}({', '.join(self.indices)})"


@dataclass(frozen=True)
class ConstE:
    value: float

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class BinE:
    op: str  # + - *
    a: object
    b: object

    def __str__(self):
        return f"({self.a} {self.op} {self.b})"


@dataclass(frozen=True)
class InvE:
    access: Access

    def __str__(self):
        return f"inv({self.access})"


def accesses_of(e):
    if isinstance(e, Access):
        return [e]
    if isinstance(e, InvE):
        return [e.access]
    if isinstance(e, BinE):
        return accesses_of(e.a) + accesses_of(e.b)
    return []


def _terms(e, sign=1):
    """Flatten top-level +/- into (sign, term) pairs."""
    if isinstance(e, BinE) and e.op in "+-":
        rhs_sign = sign if e.op == "+" else -sign
        return _terms(e.a, sign) + _terms(e.b, rhs_sign)
    return [(sign, e)]


def _factors(e):
    if isinstance(e, BinE) and e.op == "*":
        return _factors(e.a) + _factors(e.b)
    return [e]


# ---------------------------------------------------------------------------
# Parsing


@dataclass
class KernelSpec:
    foralls: list
    lhs: Access
    mode: str  # "assign" | "accumulate"
    rhs: object
    bindings: dict = None  # tensor -> TensorFormat once bound

    @property
    def reduction_vars(self):
        return [v for v in self.foralls if v not in self.lhs.indices]

    @property
    def tensors(self):
        names = [self.lhs.tensor]
        for a in accesses_of(self.rhs):
            if a.tensor not in names:
                names.append(a.tensor)
        return names

    def __str__(self):
        heads = " ".join(f"forall({v})" for v in self.foralls)
        op = "=" if self.mode == "assign" else "+="
        return f"{heads} {self.lhs} {op} {self.rhs}"


def _tokenize(text):
    toks = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "+" and i + 1 < n and text[i + 1] == "=":
            toks.append("+=")
            i += 2
            continue
        if ch in "()+-*=,":
            toks.append(ch)
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] in ".eE" or
                             (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            toks.append(("num", text[i:j]))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("name", text[i:j]))
            i = j
            continue
        raise NotationError(f"unexpected character {ch!r} in statement")
    return toks


class _P:
    def __init__(self, toks):
        self.toks = toks
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self):
        t = self.peek()
        if t is None:
            raise NotationError("unexpected end of statement")
        self.i += 1
        return t

    def expect(self, tok):
        t = self.next()
        if t != tok:
            raise NotationError(f"expected {tok!r}, found {t!r}")

    def name(self):
        t = self.next()
        if not (isinstance(t, tuple) and t[0] == "name"):
            raise NotationError(f"expected a name, found {t!r}")
        return t[1]

    def access(self, tensor):
        self.expect("(")
        idx = [self.name()]
        while self.peek() == ",":
            self.next()
            idx.append(self.name())
        self.expect(")")
        if len(set(idx)) != len(idx):
            raise NotationError(f"access {tensor} repeats an index variable")
        return Access(tensor, tuple(idx))

    def expr(self):
        e = self.term()
        while self.peek() in ("+", "-"):
            op = self.next()
            e = BinE(op, e, self.term())
        return e

    def term(self):
        e = self.factor()
        while self.peek() == "*":
            self.next()
            e = BinE("*", e, self.factor())
        return e

    def factor(self):
        t = self.peek()
        if t == "(":
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        if t == "-":
            self.next()
            return BinE("*", ConstE(-1.0), self.factor())
        t = self.next()
        if isinstance(t, tuple) and t[0] == "num":
            return ConstE(float(t[1]))
        if isinstance(t, tuple) and t[0] == "name":
            if t[1] == "inv":
                self.expect("(")
                inner = self.name()
                acc = self.access(inner)
                self.expect(")")
                return InvE(acc)
            return self.access(t[1])
        raise NotationError(f"unexpected token {t!r} in expression")


def parse_notation(text: str) -> KernelSpec:
    """Parse a statement; formats are bound separately."""
    p = _P(_tokenize(text))
    foralls = []
    while True:
        t = p.peek()
        if isinstance(t, tuple) and t == ("name", "forall"):
            p.next()
            p.expect("(")
            foralls.append(p.name())
            p.expect(")")
        else:
            break
    if not foralls:
        raise NotationError("statement needs at least one forall(...)")
    if len(set(foralls)) != len(foralls):
        raise NotationError("duplicate forall variable")
    lhs = p.access(p.name())
    op = p.next()
    if op not in ("=", "+="):
        raise NotationError(f"expected '=' or '+=', found {op!r}")
    rhs = p.expr()
    if p.peek() is not None:
        raise NotationError(f"trailing tokens after statement: {p.peek()!r}")

    spec = KernelSpec(foralls, lhs, "assign" if op == "=" else "accumulate", rhs)
    arity = {}
    for a in [lhs] + accesses_of(rhs):
        for v in a.indices:
            if v not in foralls:
                raise NotationError(f"unbound index variable {v!r} in {a}")
        prev = arity.setdefault(a.tensor, len(a.indices))
        if prev != len(a.indices):
            raise NotationError(f"tensor {a.tensor!r} accessed with arities "
                                f"{prev} and {len(a.indices)}")
    for a in accesses_of(rhs):
        if a.tensor == lhs.tensor:
            raise NotationError(f"output tensor {lhs.tensor!r} may not be read "
                                "on the right-hand side")
    for v in lhs.indices:
        if v not in foralls:
            raise NotationError(f"unbound index variable {v!r} in {lhs}")
    if spec.mode == "assign" and spec.reduction_vars:
        raise NotationError("'=' with reduction variables "
                            f"{spec.reduction_vars}; use '+='")
    return spec


# ---------------------------------------------------------------------------
# Binding and strategy selection


@dataclass
class LevelPlan:
    var: str
    strategy: str             # "dense" | "map" | "merge"
    sparse: list = field(default_factory=list)  # [(tensor, level idx)]
    merge_kind: str = None    # "intersection" | "union" | None
    map_operand: str = None   # map strategy: the traversed tensor
    output_level: int = None  # lhs level index for this var, if any
    reduction: bool = False

    def note(self):
        extra = ""
        if self.strategy == "merge":
            kind = self.merge_kind or "enumerate"
            streams = ",".join(t for t, _ in self.sparse)
            extra = f" ({kind}: {streams})"
        elif self.strategy == "map":
            extra = f" (over {self.map_operand})"
        return f"{self.strategy} strategy at level {self.var}{extra}"


@dataclass
class BoundKernel:
    spec: KernelSpec
    assemble: str             # "none" | "map" | "append" | "build"
    plans: list
    copy_of: str = None       # map assembly: the deep-copied operand

    def notes(self):
        out = [p.note() for p in self.plans]
        if self.assemble != "none":
            out.append(f"output assembly: {self.assemble}"
                       + (f" (deep copy of {self.copy_of})" if self.copy_of else ""))
        return out


def _level_of(access, fmt, var):
    if var not in access.indices:
        return None
    k = access.indices.index(var)
    return k, fmt.levels[k]


def bind_formats(spec: KernelSpec, bindings: dict, assemble: str = "auto",
                 registry=None) -> BoundKernel:
    """Check formats against the statement and fix per-level strategies.

    `assemble` is auto, map, append, or build for dynamic outputs
    ("auto" prefers deep-copy map, then append, then build).  The
    registry is consulted for append/build availability; without one,
    both are assumed registered.
    """
    for t in spec.tensors:
        if t not in bindings:
            raise NotationError(f"missing format binding for tensor {t!r}")
    spec.bindings = dict(bindings)
    forall_pos = {v: k for k, v in enumerate(spec.foralls)}
    for a in [spec.lhs] + accesses_of(spec.rhs):
        fmt = bindings[a.tensor]
        if len(a.indices) != fmt.order:
            raise NotationError(
                f"arity mismatch: {a} has {len(a.indices)} indices but format "
                f"{fmt} has {fmt.order} levels")
        positions = [forall_pos[v] for v in a.indices]
        if positions != sorted(positions):
            raise NotationError(
                f"access {a}: index order must match the forall (loop) order; "
                "transposed accesses are not supported")
    for node in _walk_expr(spec.rhs):
        if isinstance(node, InvE):
            fmt = bindings[node.access.tensor]
            if any(lv.kind != "dense" for lv in fmt.levels):
                raise NotationError(
                    f"inv({node.access.tensor}) requires a dense operand")

    out_fmt = bindings[spec.lhs.tensor]
    assemble = _resolve_assemble(spec, bindings, assemble, registry)
    copy_of = assemble[1] if isinstance(assemble, tuple) else None
    assemble = assemble[0] if isinstance(assemble, tuple) else assemble

    plans = []
    for var in spec.foralls:
        rhs_ops = []
        for a in accesses_of(spec.rhs):
            pos = _level_of(a, bindings[a.tensor], var)
            if pos is not None:
                rhs_ops.append((a, pos[0], pos[1]))
        out_pos = _level_of(spec.lhs, out_fmt, var)
        sparse = [(a, k, lv) for a, k, lv in rhs_ops if lv.kind != "dense"]
        plan = LevelPlan(var, "dense",
                         sparse=[(a.tensor, k) for a, k, lv in sparse],
                         output_level=out_pos[0] if out_pos else None,
                         reduction=var in spec.reduction_vars)

        order_free = _order_insensitive(spec, out_fmt, out_pos, assemble)
        if not sparse:
            plan.strategy = "dense"
        else:
            single = _single_multiplicative(spec.rhs, sparse)
            if single is not None and order_free:
                plan.strategy = "map"
                plan.map_operand = single.tensor
            else:
                plan.strategy = "merge"
                plan.merge_kind = _merge_kind(spec.rhs, sparse, var)
                for a, k, lv in sparse:
                    if not lv.ordered:
                        raise NotationError(
                            f"merge requires ordered operands, but level {k} of "
                            f"{a.tensor} ({lv.family or lv.kind}) is unsorted")
                if len(sparse) > 2:
                    raise NotationError(
                        f"{len(sparse)} sparse operands share index {var!r}; "
                        "at most 2-way merges are supported")
        plans.append(plan)

    _check_output_feasible(spec, out_fmt, plans, assemble)
    return BoundKernel(spec, assemble, plans, copy_of=copy_of)


def _walk_expr(e):
    yield e
    if isinstance(e, BinE):
        yield from _walk_expr(e.a)
        yield from _walk_expr(e.b)


def _single_multiplicative(rhs, sparse):
    """The lone sparse access if the rhs is one product term containing it."""
    if len(sparse) != 1:
        return None
    terms = _terms(rhs)
    if len(terms) != 1:
        return None
    target = sparse[0][0]
    hits = [f for f in _factors(terms[0][1])
            if isinstance(f, Access) and f == target]
    return target if len(hits) == 1 else None


def _merge_kind(rhs, sparse, var):
    """intersection for one product term, union for a sum of terms."""
    sparse_accesses = [a for a, _, _ in sparse]
    terms = _terms(rhs)
    if len(terms) == 1:
        factors = _factors(terms[0][1])
        for a in sparse_accesses:
            if sum(1 for f in factors if f == a) != 1:
                raise NotationError(
                    f"cannot merge at {var!r}: {a} does not appear as a "
                    "factor of the product")
        return "intersection" if len(sparse_accesses) > 1 else None
    # additive: each term must contain at most one sparse access, and every
    # sparse access must be matched to exactly one term
    seen = {}
    for sign, t in terms:
        in_term = [a for a in accesses_of(t) if a in sparse_accesses]
        if len(in_term) > 1:
            raise NotationError(
                f"cannot merge at {var!r}: term {t} multiplies two sparse operands "
                "inside a sum")
        if len(in_term) == 0:
            raise NotationError(
                f"cannot merge at {var!r}: term {t} has no sparse operand; "
                "adding a dense term to a sparse result is not supported")
        a = in_term[0]
        if a in seen:
            raise NotationError(f"{a} appears in more than one term")
        seen[a] = (sign, t)
    return "union" if len(sparse_accesses) > 1 else None


def _order_insensitive(spec, out_fmt, out_pos, assemble):
    if out_pos is None:
        return True  # reduction accumulator
    _, lv = out_pos
    if lv.kind == "dense":
        return True
    if lv.kind == "dynamic" and assemble == "map":
        return True  # deep copy mirrors the traversal, no appends
    return False


def _formats_equal(a: TensorFormat, b: TensorFormat):
    return tuple((lv.kind, lv.family) for lv in a.levels) == \
        tuple((lv.kind, lv.family) for lv in b.levels)


def _map_copy_candidate(spec, bindings):
    """The operand a deep-copy output can mirror, if any."""
    out_fmt = bindings[spec.lhs.tensor]
    if all(lv.kind != "dynamic" for lv in out_fmt.levels):
        return None
    terms = _terms(spec.rhs)
    if len(terms) != 1:
        return None
    candidates = []
    for a in accesses_of(spec.rhs):
        fmt = bindings[a.tensor]
        if any(lv.kind != "dense" for lv in fmt.levels):
            candidates.append(a)
    if len(candidates) != 1:
        return None
    a = candidates[0]
    factors = _factors(terms[0][1])
    if sum(1 for f in factors if f == a) != 1:
        return None
    if a.indices != spec.lhs.indices:
        return None
    if not _formats_equal(bindings[a.tensor], out_fmt):
        return None
    if spec.reduction_vars:
        return None
    return a.tensor


def _assembly_family(out_fmt):
    """Family of the output's single trailing dynamic level, if that shape."""
    dyn = [k for k, lv in enumerate(out_fmt.levels) if lv.kind == "dynamic"]
    if dyn == [out_fmt.order - 1]:
        return out_fmt.levels[-1].family
    return None


def _resolve_assemble(spec, bindings, assemble, registry):
    out_fmt = bindings[spec.lhs.tensor]
    dynamic_out = any(lv.kind == "dynamic" for lv in out_fmt.levels)
    if not dynamic_out:
        if assemble in ("map", "append", "build"):
            raise NotationError(
                f"assemble mode {assemble!r} requires a dynamic output format")
        return "none"

    copy_of = _map_copy_candidate(spec, bindings)
    family = _assembly_family(out_fmt)

    def registered(mode):
        if family is None:
            return False
        if registry is None:
            return True
        return registry.lookup_assembly(family, mode) is not None

    if assemble == "auto":
        if copy_of is not None:
            return ("map", copy_of)
        if registered("append"):
            return "append"
        if registered("build"):
            return "build"
        raise NotationError(
            f"no way to assemble output format {out_fmt}: deep copy does not "
            "apply and no append/build implementation is registered"
            + (f" for family {family!r}" if family else ""))
    if assemble == "map":
        if copy_of is None:
            raise NotationError(
                "deep-copy assembly requires the output format to equal the "
                "format of the single sparse operand it mirrors")
        return ("map", copy_of)
    if assemble in ("append", "build"):
        if family is None:
            raise NotationError(
                "append/build assembly requires the output's dynamic levels "
                "to be exactly its last level")
        if not registered(assemble):
            raise NotationError(
                f"no {assemble} implementation registered for family {family!r}")
        return assemble
    raise NotationError(f"unknown assemble mode {assemble!r}")


def _check_output_feasible(spec, out_fmt, plans, assemble):
    plan_by_var = {p.var: p for p in plans}
    for k, lv in enumerate(out_fmt.levels):
        var = spec.lhs.indices[k]
        plan = plan_by_var[var]
        ordered_sink = (lv.kind == "compressed" or
                        (lv.kind == "dynamic" and assemble in ("append", "build")))
        if lv.kind == "compressed":
            # pos must be closed for every row, so all enclosing output
            # dimensions must be visited exhaustively (dense loops)
            for j in range(k):
                outer = plan_by_var[spec.lhs.indices[j]]
                if outer.strategy != "dense":
                    raise NotationError(
                        f"compressed output level {k} needs dense loops over "
                        f"all outer output dimensions, but level {j} uses "
                        f"{outer.strategy}")
        if ordered_sink and lv.kind == "dynamic" and not lv.ordered:
            # appending into an unsorted structure is fine order-wise, but
            # the stock impls emit in coordinate order anyway
            pass
