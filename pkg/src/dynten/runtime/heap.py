"""Generic node storage for dynamic structures.

A node is a plain list: slot 0 holds its record name, the remaining
slots hold members in record order.  The heap tracks every allocation
(the arena never shrinks during a run) so structures can be dumped and
validated, and hands out member slot indices for host-side code.
"""

from __future__ import annotations

from .. import ir


class HeapError(Exception):
    pass


def default_value(t):
    if isinstance(t, str):
        return False if t == "bool" else (0.0 if t == "float64" else 0)
    kind = t[0]
    if kind in ("ref", "arrref", "strec", "anyref"):
        return None
    if kind == "arr":
        return [default_value(t[1]) for _ in range(t[2])]
    if kind == "vec":
        return []
    if kind == "tag":
        return 0
    raise HeapError(f"no default for member type {t!r}")


class NodeHeap:
    def __init__(self, records):
        self.records = {}
        self.slots = {}
        self.nodes = []
        self.add_records(records)

    def add_records(self, records):
        for r in records:
            if r.name in self.records:
                continue
            self.records[r.name] = r
            self.slots[r.name] = {name: i + 1
                                  for i, (name, _) in enumerate(r.members)}

    def alloc(self, record):
        r = self.records.get(record)
        if r is None:
            raise HeapError(f"unknown record {record!r}")
        node = [record] + [default_value(t) for _, t in r.members]
        self.nodes.append(node)
        return node

    def slot(self, record, member):
        try:
            return self.slots[record][member]
        except KeyError:
            raise HeapError(f"record {record!r} has no member {member!r}")

    def get(self, node, member):
        return node[self.slot(node[0], member)]

    def set(self, node, member, value):
        node[self.slot(node[0], member)] = value

    def member_type(self, node, member):
        return self.records[node[0]].member_type(member)
