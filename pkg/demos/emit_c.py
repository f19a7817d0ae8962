"""Render a kernel as a self-contained C11 file and try the system
compiler on it (skipped when no toolchain is around).
"""

import shutil
import subprocess
import tempfile
from pathlib import Path

from dynten import (
    bind_formats, define_format, gen_kernel, ir, parse_notation,
    stock_registry,
)

reg = stock_registry()
spec = parse_notation("forall(i) forall(j) a(i,j) = b(i,j) * c(i,j)")
binds = {"b": define_format("b", ["dense", "bst"], reg),
         "c": define_format("c", ["dense", "bst"], reg),
         "a": define_format("a", ["dense", "dense"], reg)}
bound = bind_formats(spec, binds, registry=reg)
module = gen_kernel(bound, reg, parallel=True)

text = ir.render_c(module, parallel=True)
print(text)

cc = shutil.which("cc")
if cc:
    with tempfile.TemporaryDirectory() as td:
        src = Path(td) / "kernel.c"
        src.write_text(text)
        res = subprocess.run([cc, "-std=c11", "-Wall", "-c", str(src),
                              "-o", str(Path(td) / "kernel.o")],
                             capture_output=True, text=True)
        print("cc exit:", res.returncode, res.stderr or "(no warnings)")
else:
    print("no C compiler found; skipping the compile check")
