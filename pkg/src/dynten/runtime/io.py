"""Tensor file readers/writers and the structure debug dump.

Matrix Market coordinate files (rank 2) and FROSTT-style .tns files
(one line per entry: 1-based coordinates then the value) are accepted;
duplicate coordinates are an error.  The debug dump is a line-oriented
rendering of a TensorValue (static arrays plus one line per reachable
node) that golden tests and the native loader both consume.
"""

from __future__ import annotations


class IOError_(Exception):
    pass


def read_mtx(text):
    """Parse Matrix Market coordinate format; returns (extents, entries)."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("%%MatrixMarket"):
        raise IOError_("missing MatrixMarket header")
    head = lines[0].split()
    if len(head) < 5 or head[1] != "matrix" or head[2] != "coordinate":
        raise IOError_(f"unsupported MatrixMarket header: {lines[0]!r}")
    field, symmetry = head[3], head[4]
    if field not in ("real", "integer", "pattern"):
        raise IOError_(f"unsupported field type {field!r}")
    if symmetry != "general":
        raise IOError_(f"only general symmetry is supported, got {symmetry!r}")
    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise IOError_("missing size line")
    dims = body[0].split()
    if len(dims) != 3:
        raise IOError_(f"bad size line: {body[0]!r}")
    rows, cols, nnz = (int(x) for x in dims)
    entries = []
    for ln in body[1:]:
        parts = ln.split()
        i, j = int(parts[0]) - 1, int(parts[1]) - 1
        v = 1.0 if field == "pattern" else float(parts[2])
        if not (0 <= i < rows and 0 <= j < cols):
            raise IOError_(f"entry ({i + 1}, {j + 1}) outside {rows}x{cols}")
        entries.append(((i, j), v))
    if len(entries) != nnz:
        raise IOError_(f"expected {nnz} entries, found {len(entries)}")
    _reject_duplicates(entries)
    return (rows, cols), entries


def read_tns(text, extents=None):
    """Parse whitespace-separated coordinates + value lines (1-based)."""
    entries = []
    rank = None
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#") or ln.startswith("%"):
            continue
        parts = ln.split()
        if rank is None:
            rank = len(parts) - 1
            if rank < 1:
                raise IOError_(f"bad entry line: {ln!r}")
        elif len(parts) != rank + 1:
            raise IOError_(f"inconsistent rank on line: {ln!r}")
        coords = tuple(int(x) - 1 for x in parts[:-1])
        if any(c < 0 for c in coords):
            raise IOError_(f"coordinates must be positive: {ln!r}")
        entries.append((coords, float(parts[-1])))
    if rank is None:
        raise IOError_("no entries in tensor file")
    _reject_duplicates(entries)
    inferred = tuple(max(c[k] for c, _ in entries) + 1 for k in range(rank))
    if extents is not None:
        if len(extents) != rank:
            raise IOError_(f"extent rank {len(extents)} != file rank {rank}")
        for a, b in zip(inferred, extents):
            if a > b:
                raise IOError_(f"entries exceed given extents {extents}")
        return tuple(extents), entries
    return inferred, entries


def _reject_duplicates(entries):
    seen = set()
    for c, _ in entries:
        if c in seen:
            raise IOError_(f"duplicate coordinates {tuple(x + 1 for x in c)}")
        seen.add(c)


def write_tns(extents, entries):
    out = []
    for coords, v in entries:
        out.append(" ".join(str(c + 1) for c in coords) + " " + fmt_float(v))
    return "\n".join(out) + ("\n" if out else "")


def fmt_float(v):
    return repr(float(v))


# ---------------------------------------------------------------------------
# Debug dump

def dump_tensor(tv, name="T"):
    """Line-oriented dump of a TensorValue, including reachable nodes."""
    out = [f"tensor {name}", f"order {tv.fmt.order}"]
    ids = {}
    todo = []

    def ref(node):
        if node is None:
            return "_"
        key = id(node)
        if key not in ids:
            ids[key] = len(ids)
            todo.append(node)
        return f"@{ids[key]}"

    for k, lv in enumerate(tv.fmt.levels):
        if lv.kind == "dense":
            out.append(f"level {k} dense {tv.extents[k]}")
        elif lv.kind == "compressed":
            out.append(f"level {k} compressed {tv.extents[k]}")
            st = tv.levels[k]
            out.append(f"pos {k} " + " ".join(str(x) for x in st["pos"]))
            out.append(f"crd {k} " + " ".join(str(x) for x in st["crd"]))
        else:
            out.append(f"level {k} dynamic {lv.family} {tv.extents[k]}")
            st = tv.levels[k]
            if st is not None:
                out.append(f"roots {k} " + " ".join(ref(r) for r in st["roots"]))
    if tv.vals is not None:
        out.append("vals " + " ".join(fmt_float(v) for v in tv.vals))

    lines = []
    i = 0
    while i < len(todo):
        node = todo[i]
        i += 1
        rec = tv.heap.records[node[0]]
        parts = [f"node @{ids[id(node)]}", node[0]]
        for (mname, mtype), val in zip(rec.members, node[1:]):
            parts.append(_dump_member(mtype, val, ref))
        lines.append(" ".join(parts))
    out.extend(lines)
    out.append("end")
    return "\n".join(out) + "\n"


def _dump_member(mtype, val, ref):
    if isinstance(mtype, tuple) and mtype[0] in ("arr", "arrref"):
        if val is None:
            return "_"
        if mtype[0] == "arr" and len(val) != mtype[2]:
            raise IOError_(f"inline array holds {len(val)} slots, "
                           f"record declares {mtype[2]}")
        inner = " ".join(_dump_member(mtype[1], v, ref) for v in val)
        return f"[ {inner} ]"
    if isinstance(mtype, tuple) and mtype[0] == "ref":
        return ref(val)
    if mtype == "bool":
        return "b1" if val else "b0"
    if mtype == "float64":
        return fmt_float(val)
    return str(val)
