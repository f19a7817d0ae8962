"""dynten: sparse tensor algebra kernels over dynamic pointer-based
data structures.

Declare how a linked structure stores elements (node schemas), compose
per-dimension formats, state a tensor computation in index notation,
and get generated kernels: runnable in the bundled interpreter and
renderable as portable C.
"""

from .schema import (
    SchemaError, SchemaSet, NodeSchema, FieldDef, SeqEntry,
    parse_schema, validate, print_schema, family_sorted,
)
from .formats import (
    AssemblyImpl, FormatError, LevelFormat, Registry, TensorFormat,
    define_format, load_stock_schema, stock_registry, STOCK_FAMILIES,
)
from .notation import (
    Access, BoundKernel, KernelSpec, NotationError,
    bind_formats, parse_notation,
)
from .codegen.decls import gen_node_decls
from .codegen.maps import MapPlan, gen_map
from .codegen.iterators import (
    IteratorPlan, eliminate_recursion, gen_coroutine, gen_iterator,
    optimize_iterator,
)
from .codegen.kernel import KernelError, gen_kernel
from .oracle import OracleError, oracle_eval
from .runtime.heap import NodeHeap
from .runtime.ingest import ingest, ingest_file
from .runtime.interp import interpret
from .runtime.pyexec import InterpreterError, Program
from .runtime.samplers import build_structure
from .runtime.tensor import (
    TensorError, TensorValue, assemble_structure, empty_tensor,
    from_dense, from_entries, to_dense, to_entries, validate_tensor,
)
from .runtime.walkers import count_nodes, validate_structure, walk_structure
from . import ir

__version__ = "0.1.0"
