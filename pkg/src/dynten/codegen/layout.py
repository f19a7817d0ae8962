"""Tensor calling convention shared by kernels, the interpreter, and the
native loader.

Per tensor T with levels L1..Lr (1-based suffixes):
  dense       -> int32 T_N{k}
  compressed  -> int32[] T_pos{k}, T_crd{k} (outputs grow T_crd{k} as a vec)
  dynamic     -> root-record[] T_roots{k}, present only when every level
                 above is static (otherwise handles live in elem payloads)
  values      -> float64[] T_vals when the last level is static
                 (vec for compressed outputs; dense outputs are prewritten)
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import ir
from ..formats import TensorFormat
from .common import entry_info
from .decls import decl_name


@dataclass
class LevelInfo:
    kind: str
    family: str = None
    root_node: str = None
    root_record: str = None
    payload: str = None
    drill: str = None        # head member drilled through (simple heads)
    entry_type: str = None   # node or supertype entered after the drill
    entry_record: str = None
    has_roots: bool = False  # separate roots array exists for this level


@dataclass
class TensorLayout:
    name: str
    fmt: TensorFormat
    role: str  # "in" | "out"
    levels: list = field(default_factory=list)

    def param(self, base, k=None):
        return f"{self.name}_{base}{k + 1}" if k is not None else f"{self.name}_{base}"

    def params(self):
        """[(name, type)] in declaration order for the entry signature."""
        out = []
        vt = "float64"
        for k, (lv, info) in enumerate(zip(self.fmt.levels, self.levels)):
            if lv.kind == "dense":
                out.append((self.param("N", k), "int32"))
            elif lv.kind == "compressed":
                out.append((self.param("pos", k), ("arrref", "int32")))
                if self.role == "out":
                    out.append((self.param("crd", k), ("vec", "int32")))
                else:
                    out.append((self.param("crd", k), ("arrref", "int32")))
            else:
                if info.has_roots:
                    out.append((self.param("roots", k),
                                ("arrref", ir.Ref(info.root_record))))
        last = self.fmt.levels[-1]
        if last.kind != "dynamic":
            if self.role == "out" and last.kind == "compressed":
                out.append((self.param("vals"), ("vec", "float64")))
            else:
                out.append((self.param("vals"), ("arrref", "float64")))
        return out


def build_layout(name, fmt: TensorFormat, role, registry) -> TensorLayout:
    lay = TensorLayout(name, fmt, role)
    payload = "scalar"
    infos = []
    for k in range(fmt.order - 1, -1, -1):
        lv = fmt.levels[k]
        if lv.kind != "dynamic":
            infos.append(LevelInfo(kind=lv.kind))
            payload = "scalar"
            continue
        sset = registry.schema(lv.family)
        drill, entry_type = entry_info(sset, lv.root)
        info = LevelInfo(
            kind="dynamic", family=lv.family, root_node=lv.root,
            root_record=decl_name(lv.root, payload), payload=payload,
            drill=drill, entry_type=entry_type,
            entry_record=decl_name(entry_type, payload),
            has_roots=(k == 0 or fmt.levels[k - 1].kind != "dynamic"))
        infos.append(info)
        payload = info.root_record
    lay.levels = list(reversed(infos))
    return lay


def layout_meta(layouts):
    """Serializable summary stored in Module.meta for the runtime."""
    out = []
    for lay in layouts:
        levels = []
        for lv, info in zip(lay.fmt.levels, lay.levels):
            levels.append({
                "kind": lv.kind, "family": info.family,
                "root_node": info.root_node, "root_record": info.root_record,
                "payload": info.payload, "has_roots": info.has_roots,
            })
        out.append({"tensor": lay.name, "role": lay.role, "levels": levels,
                    "params": [list(p) for p in lay.params()]})
    return out
