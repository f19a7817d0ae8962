"""Node schema language: parsing and validation.

A schema file declares the node types of one linked data structure
(a "family"): which element slots, child references, size fields and
metadata each node carries, and in which coordinate order stored
elements appear (the ``seq`` attribute).  Validated schema sets drive
everything downstream: record declaration, map/iterator generation,
structure validation and sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

RESERVED = {
    "def", "supertype", "seq", "elem", "size", "parent", "in", "nonempty",
}
META_TYPES = {
    "bool", "int8", "uint8", "int16", "uint16", "int32", "uint32",
    "int64", "uint64",
}

COORD_EMPTY = -1  # sentinel coordinate for elem slots holding no element


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def __str__(self):
        return f"{self.line}:{self.col}: {self.message}"


class SchemaError(Exception):
    """Raised for lexical, syntactic, or semantic schema problems."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass
class FieldDef:
    """One field of a node.

    kind is one of "elem", "child", "size", "parent", "metadata".
    array_len is None for scalars, an int for constant-size arrays, or
    the name of a size field of the same node.  bounds is the (lo, hi)
    of a size field's in-clause, hi=None meaning unbounded.
    """

    name: str
    kind: str
    target: str | None = None
    array_len: int | str | None = None
    nonempty: bool = False
    bounds: tuple[int, int | None] | None = None
    meta_type: str | None = None
    line: int = 0

    @property
    def is_array(self):
        return self.array_len is not None


@dataclass
class SeqEntry:
    """A seq term: a bare field name or a braced interleave group."""

    names: tuple[str, ...]
    grouped: bool

    def __str__(self):
        if self.grouped:
            return "{" + ", ".join(self.names) + "}"
        return self.names[0]


@dataclass
class NodeSchema:
    name: str
    supertype: str | None
    fields: list[FieldDef]
    seq: list[SeqEntry] | None
    line: int = 0
    # filled in by validate():
    single_tail: bool = False
    is_sorted: bool = False
    parent_owner: str | None = None

    def field_named(self, name) -> FieldDef | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    def fields_of_kind(self, *kinds) -> list[FieldDef]:
        return [f for f in self.fields if f.kind in kinds]

    def array_capacity(self, f: FieldDef) -> int | None:
        """Declared capacity of an array field, None if only known at run time.

        For arrays sized by a size field the capacity is the field's
        in-clause upper bound when one exists.
        """
        if isinstance(f.array_len, int):
            return f.array_len
        size_field = self.field_named(f.array_len)
        if size_field is not None and size_field.bounds is not None:
            return size_field.bounds[1]  # may be None (unbounded)
        return None


@dataclass
class SchemaSet:
    """All node schemas of one data structure family."""

    supertypes: list[str]
    nodes: list[NodeSchema]
    source_name: str = "<schema>"
    validated: bool = False
    root_candidates: list[str] = field(default_factory=list)

    def node(self, name) -> NodeSchema | None:
        for n in self.nodes:
            if n.name == name:
                return n
        return None

    def subtypes_of(self, supertype) -> list[NodeSchema]:
        return [n for n in self.nodes if n.supertype == supertype]

    def concrete_types(self, name) -> list[str]:
        """Node names a reference of declared type `name` may point at."""
        if name in self.supertypes:
            return [n.name for n in self.subtypes_of(name)]
        return [name]


# ---------------------------------------------------------------------------
# Lexer

_PUNCT = "{}[]:=,*"


@dataclass(frozen=True)
class _Tok:
    kind: str  # name | int | punct | newline | eof
    text: str
    line: int
    col: int


def _lex(text):
    toks = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "\n":
            if toks and toks[-1].kind != "newline":
                toks.append(_Tok("newline", "\n", line, col))
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch in _PUNCT:
            toks.append(_Tok("punct", ch, line, col))
            i += 1
            col += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(_Tok("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(_Tok("name", text[i:j], line, col))
            col += j - i
            i = j
            continue
        raise SchemaError([Diagnostic(line, col, f"unexpected character {ch!r}")])
    toks.append(_Tok("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, toks, source_name):
        self.toks = toks
        self.pos = 0
        self.source_name = source_name

    def peek(self, skip_newlines=False):
        p = self.pos
        if skip_newlines:
            while self.toks[p].kind == "newline":
                p += 1
        return self.toks[p]

    def next(self, skip_newlines=False):
        if skip_newlines:
            while self.toks[self.pos].kind == "newline":
                self.pos += 1
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def fail(self, tok, message):
        raise SchemaError([Diagnostic(tok.line, tok.col, message)])

    def expect(self, text, skip_newlines=False):
        t = self.next(skip_newlines)
        if t.text != text:
            self.fail(t, f"expected {text!r}, found {t.text!r}")
        return t

    def expect_name(self, what, skip_newlines=False):
        t = self.next(skip_newlines)
        if t.kind != "name":
            self.fail(t, f"expected {what}, found {t.text!r}")
        if t.text in RESERVED or t.text in META_TYPES:
            self.fail(t, f"{t.text!r} is a reserved word")
        return t

    def parse(self) -> SchemaSet:
        supertypes = []
        nodes = []
        while True:
            t = self.peek(skip_newlines=True)
            if t.kind == "eof":
                break
            if t.text != "def":
                self.fail(t, f"expected 'def', found {t.text!r}")
            self.next(skip_newlines=True)
            t = self.peek()
            if t.text == "supertype":
                if nodes:
                    self.fail(t, "supertype definitions must precede node definitions")
                self.next()
                supertypes.append(self.expect_name("supertype name").text)
            else:
                nodes.append(self.parse_node())
        if not nodes:
            raise SchemaError([Diagnostic(1, 1, "no node definitions")])
        return SchemaSet(supertypes, nodes, self.source_name)

    def parse_node(self) -> NodeSchema:
        name_tok = self.expect_name("node name")
        supertype = None
        if self.peek().text == ":":
            self.next()
            supertype = self.expect_name("supertype name").text
        self.expect("{", skip_newlines=True)
        fields = []
        seq = None
        while True:
            t = self.peek(skip_newlines=True)
            if t.text == "}":
                self.next(skip_newlines=True)
                break
            if t.kind == "eof":
                self.fail(t, f"unterminated body of node {name_tok.text!r}")
            if t.text == "seq":
                self.next(skip_newlines=True)
                if seq is not None:
                    self.fail(t, "duplicate seq attribute")
                seq = self.parse_seq()
                continue
            if seq is not None:
                self.fail(t, "fields may not follow the seq attribute")
            fields.append(self.parse_field())
        if not fields:
            self.fail(name_tok, f"empty node body in {name_tok.text!r}")
        return NodeSchema(name_tok.text, supertype, fields, seq, line=name_tok.line)

    def parse_field(self) -> FieldDef:
        name_tok = self.expect_name("field name", skip_newlines=True)
        self.expect(":")
        t = self.next()
        fd = FieldDef(name_tok.text, "metadata", line=name_tok.line)
        if t.text == "elem":
            fd.kind = "elem"
            self.parse_array_suffix(fd)
        elif t.text == "size":
            fd.kind = "size"
            if self.peek().text == "in":
                self.next()
                fd.bounds = self.parse_bounds()
        elif t.text == "parent":
            fd.kind = "parent"
        elif t.text in META_TYPES:
            fd.kind = "metadata"
            fd.meta_type = t.text
        elif t.kind == "name" and t.text not in RESERVED:
            fd.kind = "child"
            fd.target = t.text
            self.parse_array_suffix(fd)
        else:
            self.fail(t, f"expected a field type, found {t.text!r}")
        self.end_of_line()
        return fd

    def parse_array_suffix(self, fd):
        if self.peek().text == "[":
            self.next()
            t = self.next()
            if t.kind == "int":
                fd.array_len = int(t.text)
            elif t.kind == "name":
                fd.array_len = t.text
            else:
                self.fail(t, "array size must be a constant or a size field name")
            self.expect("]")
        if self.peek().text == "nonempty":
            self.next()
            fd.nonempty = True

    def parse_bounds(self):
        self.expect("[")
        lo_tok = self.next()
        if lo_tok.kind != "int":
            self.fail(lo_tok, "lower bound must be a constant")
        self.expect(",")
        t = self.next()
        if t.text == "*":
            hi = None
        elif t.kind == "int":
            hi = int(t.text)
        else:
            self.fail(t, "upper bound must be a constant or '*'")
        self.expect("]")
        return (int(lo_tok.text), hi)

    def parse_seq(self):
        self.expect("=")
        entries = []
        while True:
            t = self.next()
            if t.text == "{":
                names = [self.expect_name("field name").text]
                while self.peek().text == ",":
                    self.next()
                    names.append(self.expect_name("field name").text)
                self.expect("}")
                entries.append(SeqEntry(tuple(names), True))
            elif t.kind == "name" and t.text not in RESERVED:
                entries.append(SeqEntry((t.text,), False))
            else:
                self.fail(t, f"expected a seq entry, found {t.text!r}")
            if self.peek().text == ",":
                self.next()
                continue
            break
        self.end_of_line()
        return entries

    def end_of_line(self):
        t = self.peek()
        if t.kind not in ("newline", "eof") and t.text != "}":
            self.fail(t, f"expected end of line, found {t.text!r}")


def parse_schema(text: str, source_name: str = "<schema>") -> SchemaSet:
    """Parse node schema source into an unvalidated SchemaSet."""
    return _Parser(_lex(text), source_name).parse()


# ---------------------------------------------------------------------------
# Validation

def validate(s: SchemaSet) -> SchemaSet:
    """Check all schema invariants and compute derived facts.

    Returns the same set, marked validated, with single_tail/is_sorted
    per node, parent owner types, and root candidates filled in.
    Raises SchemaError listing every problem found.
    """
    diags = []

    def err(line, message):
        diags.append(Diagnostic(line, 0, message))

    names = {}
    for st in s.supertypes:
        if st in names:
            err(0, f"duplicate definition of {st!r}")
        names[st] = "supertype"
    for node in s.nodes:
        if node.name in names:
            err(node.line, f"duplicate definition of {node.name!r}")
        names[node.name] = "node"

    node_names = {n.name for n in s.nodes}
    for st in s.supertypes:
        if not s.subtypes_of(st):
            err(0, f"supertype {st!r} has no subtypes")
    for node in s.nodes:
        if node.supertype is not None and node.supertype not in s.supertypes:
            err(node.line, f"unknown supertype {node.supertype!r} on node {node.name!r}")

    for node in s.nodes:
        seen = set()
        for f in node.fields:
            if f.name in seen:
                err(f.line, f"duplicate field {f.name!r} in node {node.name!r}")
            seen.add(f.name)
        for f in node.fields:
            if f.kind == "child" and f.target not in names:
                err(f.line, f"unresolved child type {f.target!r} in node {node.name!r}")
            if f.kind in ("size", "parent") and f.is_array:
                err(f.line, f"{f.kind} field {f.name!r} cannot be an array")
            if f.nonempty and f.kind not in ("elem", "child"):
                err(f.line, f"nonempty is not allowed on {f.kind} field {f.name!r}")
            if f.kind == "size" and f.bounds is not None:
                lo, hi = f.bounds
                if lo < 0 or (hi is not None and lo > hi):
                    err(f.line, f"bounds of size field {f.name!r} violate 0 <= lo <= hi")
            if isinstance(f.array_len, int) and f.array_len <= 0:
                err(f.line, f"array field {f.name!r} must have positive size")
            elif isinstance(f.array_len, str):
                sf = node.field_named(f.array_len)
                if sf is None or sf.kind != "size":
                    err(f.line,
                        f"array field {f.name!r} sized by {f.array_len!r}, "
                        f"which is not a size field of node {node.name!r}")

        if node.seq is not None:
            used = set()
            for entry in node.seq:
                for fname in entry.names:
                    f = node.field_named(fname)
                    if f is None or f.kind not in ("elem", "child"):
                        err(node.line,
                            f"seq of node {node.name!r} references {fname!r}, "
                            "which is not an elem or child field")
                        continue
                    if fname in used:
                        err(node.line, f"seq of node {node.name!r} repeats {fname!r}")
                    used.add(fname)
                    if entry.grouped and len(entry.names) > 1 and not f.is_array:
                        err(node.line,
                            f"seq group of node {node.name!r} contains scalar field {fname!r}")
                if entry.grouped and len(entry.names) > 1:
                    lens = {node.field_named(x).array_len
                            for x in entry.names if node.field_named(x)}
                    if len(lens) > 1:
                        err(node.line,
                            f"seq group {entry} of node {node.name!r} mixes array sizes")
            # normalize: bare arrays become singleton groups, braced scalars
            # lose their redundant braces
            for entry in node.seq:
                f = node.field_named(entry.names[0])
                if f is not None and len(entry.names) == 1:
                    entry.grouped = f.is_array

    # parent owners: the node's own type if it references itself, else the
    # unique referencing type
    referencing = {n.name: set() for n in s.nodes}
    for node in s.nodes:
        for f in node.fields_of_kind("child"):
            for concrete in s.concrete_types(f.target):
                if concrete in referencing:
                    referencing[concrete].add(node.name)
    for node in s.nodes:
        for f in node.fields_of_kind("parent"):
            refs = referencing[node.name]
            if node.name in refs:
                node.parent_owner = node.name
            elif len(refs) == 1:
                node.parent_owner = next(iter(refs))
            else:
                err(f.line,
                    f"parent field {f.name!r}: node {node.name!r} is referenced by "
                    f"{sorted(refs) or 'no'} types, owner is ambiguous")

    # root candidates and reachability
    referenced = set()
    for node in s.nodes:
        for f in node.fields_of_kind("child"):
            referenced.update(s.concrete_types(f.target))
    roots = [n.name for n in s.nodes if n.name not in referenced]
    if not roots:
        err(0, "no root candidate: every node type is referenced as a child")
    reachable = set(roots)
    work = list(roots)
    while work:
        node = s.node(work.pop())
        if node is None:
            continue  # unresolved target, already diagnosed
        for f in node.fields_of_kind("child"):
            for concrete in s.concrete_types(f.target):
                if concrete not in reachable:
                    reachable.add(concrete)
                    work.append(concrete)
    for node in s.nodes:
        if node.name not in reachable:
            err(node.line, f"node {node.name!r} is unreachable from any root candidate")

    if diags:
        raise SchemaError(diags)

    for node in s.nodes:
        children = node.fields_of_kind("child")
        node.single_tail = (
            len(children) == 1
            and not children[0].is_array
            and children[0].target == node.name
        )
        payload = node.fields_of_kind("elem", "child")
        if node.seq is not None:
            covered = {x for e in node.seq for x in e.names}
            node.is_sorted = covered == {f.name for f in payload}
        else:
            node.is_sorted = len(payload) <= 1 and all(not f.is_array for f in payload)

    s.root_candidates = roots
    s.validated = True
    return s


def family_sorted(s: SchemaSet, root: str) -> bool:
    """True when every node type reachable from `root` is sorted."""
    seen = set()
    work = [root]
    while work:
        name = work.pop()
        if name in seen:
            continue
        seen.add(name)
        node = s.node(name)
        if not node.is_sorted:
            return False
        for f in node.fields_of_kind("child"):
            work.extend(s.concrete_types(f.target))
    return True


# ---------------------------------------------------------------------------
# Canonical printer

def print_schema(s: SchemaSet) -> str:
    """Render a SchemaSet back to canonical source text."""
    out = []
    for st in s.supertypes:
        out.append(f"def supertype {st}")
        out.append("")
    for node in s.nodes:
        head = f"def {node.name}"
        if node.supertype:
            head += f" : {node.supertype}"
        out.append(head + " {")
        for f in node.fields:
            out.append("  " + _print_field(f))
        if node.seq is not None:
            out.append("  seq = " + ", ".join(str(e) for e in node.seq))
        out.append("}")
        out.append("")
    return "\n".join(out).rstrip() + "\n"


def _print_field(f: FieldDef) -> str:
    if f.kind == "elem":
        t = "elem"
    elif f.kind == "child":
        t = f.target
    elif f.kind == "size":
        t = "size"
    elif f.kind == "parent":
        t = "parent"
    else:
        t = f.meta_type
    if f.array_len is not None:
        t += f"[{f.array_len}]"
    if f.kind == "size" and f.bounds is not None:
        lo, hi = f.bounds
        t += f" in [{lo}, {'*' if hi is None else hi}]"
    if f.nonempty:
        t += " nonempty"
    return f"{f.name} : {t}"
