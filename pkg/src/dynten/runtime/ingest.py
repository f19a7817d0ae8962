"""File ingestion: parse, sort, and assemble tensors in any format."""

from __future__ import annotations

from . import io as tio
from .tensor import TensorValue, from_entries


def ingest(text, fmt, registry, mode="auto", extents=None,
           rng=None) -> TensorValue:
    """Build a tensor from Matrix Market or .tns text.

    Entries are sorted lexicographically; static levels are assembled
    directly and dynamic levels through the registered append/build
    implementations (mode auto prefers build, then append, then the
    canonical direct builder for families with no registration).
    """
    if text.lstrip().startswith("%%MatrixMarket"):
        ext, entries = tio.read_mtx(text)
        if fmt.order != 2:
            raise tio.IOError_(f"matrix file for format of order {fmt.order}")
        if extents is not None:
            ext = tuple(extents)
    else:
        ext, entries = tio.read_tns(text, extents)
        if len(ext) != fmt.order:
            raise tio.IOError_(
                f"tensor file rank {len(ext)} != format order {fmt.order}")
    entries.sort(key=lambda e: e[0])
    return from_entries(fmt, ext, entries, registry, mode=mode, rng=rng)


def ingest_file(path, fmt, registry, mode="auto", extents=None) -> TensorValue:
    with open(path, encoding="utf-8") as fh:
        return ingest(fh.read(), fmt, registry, mode=mode, extents=extents)
