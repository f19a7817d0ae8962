"""Emit a self-contained native driver around a rendered kernel.

The driver loads each input tensor from the runtime's structure dump
format (no ingestion logic is duplicated in C: node lines are replayed
into calloc'd records in two passes), runs `compute` a requested number
of times, reports the median wall time on stderr, and prints the
output's entries (1-based coordinates, %.17g values) on stdout so a
checker can diff them against the interpreter.

Usage of the produced binary:
    ./kernel INPUT1.dump INPUT2.dump ... [reps]
"""

from __future__ import annotations

from . import ir
from .codegen.common import entry_info
from .codegen.decls import decl_name
from .codegen.iterators import gen_iterator, iter_name
from .crender import render_c, _Renderer

_TOKENIZER = r"""static char* h_buf;
static char* h_cur;
static char* h_end;
static inline void h_read(const char* path) {
    FILE* f = fopen(path, "rb");
    if (!f) { fprintf(stderr, "cannot open %s\n", path); exit(2); }
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    fseek(f, 0, SEEK_SET);
    h_buf = (char*)malloc((size_t)n + 1);
    if (fread(h_buf, 1, (size_t)n, f) != (size_t)n) exit(2);
    h_buf[n] = 0;
    fclose(f);
    h_cur = h_buf;
    h_end = h_buf + n;
}
/* token reader; treats NULs like spaces so regions can be rescanned */
static inline char* h_tok(void) {
    while (h_cur < h_end && (*h_cur == 0 || *h_cur == ' ' || *h_cur == '\n'
                             || *h_cur == '\r' || *h_cur == '\t'))
        h_cur++;
    if (h_cur >= h_end) return NULL;
    char* s = h_cur;
    while (h_cur < h_end && *h_cur && *h_cur != ' ' && *h_cur != '\n'
           && *h_cur != '\r' && *h_cur != '\t')
        h_cur++;
    if (h_cur < h_end) *h_cur++ = 0;
    return s;
}
static inline void h_expect(const char* what) {
    char* t = h_tok();
    if (!t || strcmp(t, what) != 0) {
        fprintf(stderr, "dump parse error: expected %s, found %s\n",
                what, t ? t : "<eof>");
        exit(2);
    }
}
static inline long h_int(void) { return strtol(h_tok(), NULL, 10); }
static inline double h_f64(void) { return strtod(h_tok(), NULL); }
static void** h_nodes;
static inline void* h_ref(void) {
    char* t = h_tok();
    if (t[0] == '_') return NULL;
    return h_nodes[strtol(t + 1, NULL, 10)];
}
static inline long h_ref_id(void) {
    char* t = h_tok();
    if (t[0] == '_') return -1;
    return strtol(t + 1, NULL, 10);
}
static inline int32_t* h_ints(long n) {
    int32_t* a = (int32_t*)calloc((size_t)(n > 0 ? n : 1), sizeof(int32_t));
    for (long i = 0; i < n; i++) a[i] = (int32_t)h_int();
    return a;
}
static inline double* h_f64s(long n) {
    double* a = (double*)calloc((size_t)(n > 0 ? n : 1), sizeof(double));
    for (long i = 0; i < n; i++) a[i] = h_f64();
    return a;
}
"""


def render_harness(module: ir.Module, registry, parallel=False) -> str:
    full = ir.Module(list(module.records), list(module.funcs), module.entry,
                     module.tensors, dict(module.frames), module.meta)
    g = _HarnessGen(full, registry)
    g.ensure_output_iterators()
    kernel_src = render_c(full, parallel=parallel)
    # clock_gettime needs the POSIX feature macro under strict -std=c11
    return "#define _POSIX_C_SOURCE 199309L\n" + kernel_src + g.emit()


class _HarnessGen:
    def __init__(self, module, registry):
        self.m = module
        self.reg = registry
        self.meta = module.meta
        self.layouts = self.meta["layouts"]
        self.inputs = [e for e in self.layouts if e["role"] == "in"]
        self.output = next(e for e in self.layouts if e["role"] == "out")
        self.lines = []
        self._ren = _Renderer(module, False)

    def ensure_output_iterators(self):
        for lv in self.output["levels"]:
            if lv["kind"] != "dynamic":
                continue
            name = iter_name(lv["family"], lv["payload"])
            if self.m.func(name) is None:
                plan = gen_iterator(self.reg.schema(lv["family"]),
                                    lv["family"], lv["payload"])
                self.m.funcs.insert(0, plan.machine)
                self.m.frames[plan.name] = plan.frame

    # ------------------------------------------------------------------

    def out(self, text=""):
        self.lines.append(text)

    def ctype(self, t):
        return self._ren.ctype(t)

    def emit(self):
        self.out("")
        self.out("/* ---- harness: dump loader and timing driver ---- */")
        self.out("#include <stdio.h>")
        self.out("#include <time.h>")
        self.out("")
        self.out(_TOKENIZER)
        self.emit_storage()
        self.emit_node_support()
        for entry in self.inputs:
            self.emit_loader(entry)
        self.emit_output_alloc()
        self.emit_reset()
        self.emit_print()
        self.emit_main()
        return "\n".join(self.lines) + "\n"

    def emit_storage(self):
        for entry in self.layouts:
            t = entry["tensor"]
            self.out(f"static long {t}_ext[{len(entry['levels'])}];")
            for pname, ptype in entry["params"]:
                tt = tuple_of(ptype)
                if isinstance(tt, tuple) and tt[0] == "vec":
                    short = "i32" if tt[1] == "int32" else "f64"
                    self.out(f"static vec_{short} {pname};")
                else:
                    self.out(f"static {self.ctype(tt)} {pname};")
        self.out("")

    # -- node replay ----------------------------------------------------

    def concrete_records(self):
        return [r for r in self.m.records
                if not any(isinstance(mt, tuple) and mt[0] == "tag"
                           for _, mt in r.members)]

    def emit_node_support(self):
        recs = self.concrete_records()
        self.out("static void* h_alloc_rec(const char* name) {")
        for r in recs:
            self.out(f'    if (strcmp(name, "{r.name}") == 0) {{')
            self.out(f"        {r.name}* n = ({r.name}*)calloc(1, "
                     f"sizeof({r.name}));")
            if r.supertype:
                self.out(f"        (({r.supertype}*)n)->tp = "
                         f"{r.supertype}_tp_{r.name};")
            self.out("        return n;")
            self.out("    }")
        self.out('    fprintf(stderr, "unknown record %s\\n", name);')
        self.out("    exit(2);")
        self.out("}")
        for r in recs:
            self.out(f"static void h_fill_{r.name}({r.name}* n) {{")
            for mname, mt in r.members:
                self.out(self.member_reader(f"n->{mname}", mt))
            self.out("}")
        self.out("static void h_fill(const char* name, void* n) {")
        for r in recs:
            self.out(f'    if (strcmp(name, "{r.name}") == 0) '
                     f"{{ h_fill_{r.name}(({r.name}*)n); return; }}")
        self.out("    exit(2);")
        self.out("}")
        self.out(r"""static void h_load_nodes(void) {
    char* region = h_cur;
    long count = 0;
    /* pass 0: find the id range (tokens get NUL-split in place) */
    for (;;) {
        char* t = h_tok();
        if (!t || strcmp(t, "end") == 0) break;
        if (strcmp(t, "node") == 0) {
            long id = strtol(h_tok() + 1, NULL, 10);
            if (id + 1 > count) count = id + 1;
        }
    }
    h_nodes = (void**)calloc((size_t)(count > 0 ? count : 1), sizeof(void*));
    /* pass 1: allocate by record name */
    h_cur = region;
    for (;;) {
        char* t = h_tok();
        if (!t || strcmp(t, "end") == 0) break;
        if (strcmp(t, "node") == 0) {
            long id = strtol(h_tok() + 1, NULL, 10);
            h_nodes[id] = h_alloc_rec(h_tok());
        }
    }
    /* pass 2: fill members (forward references now resolve) */
    h_cur = region;
    for (;;) {
        char* t = h_tok();
        if (!t || strcmp(t, "end") == 0) break;
        if (strcmp(t, "node") == 0) {
            long id = strtol(h_tok() + 1, NULL, 10);
            h_fill(h_tok(), h_nodes[id]);
        }
    }
}""")
        self.out("")

    def member_reader(self, target, mt):
        if isinstance(mt, tuple) and mt[0] == "arr":
            return (f'    h_expect("[");\n'
                    f"    for (int32_t i = 0; i < {mt[2]}; i++) "
                    f"{target}[i] = {self.elem_reader(mt[1])};\n"
                    f'    h_expect("]");')
        if isinstance(mt, tuple) and mt[0] == "arrref":
            ct = self.ctype(mt[1])
            rd = self.token_reader(mt[1], "t")
            return (f'    {{\n'
                    f"        int32_t cap = 8, len = 0;\n"
                    f"        {ct}* a = ({ct}*)malloc(sizeof({ct}) * (size_t)cap);\n"
                    f'        h_expect("[");\n'
                    f"        for (;;) {{\n"
                    f"            char* t = h_tok();\n"
                    f"            if (t[0] == ']' && !t[1]) break;\n"
                    f"            if (len == cap) {{ cap *= 2; "
                    f"a = ({ct}*)realloc(a, sizeof({ct}) * (size_t)cap); }}\n"
                    f"            a[len++] = {rd};\n"
                    f"        }}\n"
                    f"        {target} = a;\n"
                    f"    }}")
        return f"    {target} = {self.elem_reader(mt)};"

    def elem_reader(self, mt):
        if mt == "float64":
            return "h_f64()"
        if mt == "bool":
            return "(h_tok()[1] == '1')"
        if isinstance(mt, str):
            return f"({self.ctype(mt)})h_int()"
        if isinstance(mt, tuple) and mt[0] == "ref":
            return f"({mt[1]}*)h_ref()"
        raise ValueError(f"cannot read member type {mt!r}")

    def token_reader(self, mt, tok):
        """Read one already-fetched token (for length-scanned arrays)."""
        if mt == "float64":
            return f"strtod({tok}, NULL)"
        if mt == "bool":
            return f"({tok}[1] == '1')"
        if isinstance(mt, str):
            return f"({self.ctype(mt)})strtol({tok}, NULL, 10)"
        if isinstance(mt, tuple) and mt[0] == "ref":
            return (f"({mt[1]}*)({tok}[0] == '_' ? NULL : "
                    f"h_nodes[strtol({tok} + 1, NULL, 10)])")
        raise ValueError(f"cannot read member type {mt!r}")

    # -- per-tensor loaders ----------------------------------------------

    def emit_loader(self, entry):
        t = entry["tensor"]
        levels = entry["levels"]
        self.out(f"static void h_load_{t}(const char* path) {{")
        self.out("    h_read(path);")
        self.out('    h_expect("tensor"); h_tok();')
        self.out(f'    h_expect("order"); if (h_int() != {len(levels)}) '
                 "exit(2);")
        positions = "1"
        fixups = []
        for k, lv in enumerate(levels):
            self.out(f'    h_expect("level"); h_int(); h_tok();')
            if lv["kind"] == "dynamic":
                self.out("    h_tok();  /* family name */")
            self.out(f"    {t}_ext[{k}] = h_int();")
            if lv["kind"] == "compressed":
                self.out(f'    h_expect("pos"); h_int();')
                self.out(f"    {t}_pos{k + 1} = h_ints(({positions}) + 1);")
                self.out(f'    h_expect("crd"); h_int();')
                self.out(f"    {t}_crd{k + 1} = "
                         f"h_ints({t}_pos{k + 1}[{positions}]);")
            elif lv["kind"] == "dynamic" and lv["has_roots"]:
                self.out(f'    h_expect("roots"); h_int();')
                self.out(f"    long n_roots{k} = {positions};")
                self.out(f"    long* ids{k} = (long*)malloc(sizeof(long) * "
                         f"(size_t)n_roots{k});")
                self.out(f"    for (long p = 0; p < n_roots{k}; p++) "
                         f"ids{k}[p] = h_ref_id();")
                rec = lv["root_record"]
                fixups.append(
                    f"    {t}_roots{k + 1} = ({rec}**)calloc("
                    f"(size_t)n_roots{k}, sizeof({rec}*));\n"
                    f"    for (long p = 0; p < n_roots{k}; p++)\n"
                    f"        {t}_roots{k + 1}[p] = ids{k}[p] < 0 ? NULL : "
                    f"({rec}*)h_nodes[ids{k}[p]];\n"
                    f"    free(ids{k});")
            if lv["kind"] == "dense":
                self.out(f"    {t}_N{k + 1} = (int32_t){t}_ext[{k}];")
                positions = f"({positions}) * {t}_ext[{k}]"
            elif lv["kind"] == "compressed":
                positions = f"{t}_pos{k + 1}[{positions}]"
        if levels[-1]["kind"] != "dynamic":
            self.out(f'    h_expect("vals");')
            self.out(f"    {t}_vals = h_f64s({positions});")
        self.out("    h_load_nodes();")
        for fix in fixups:
            self.out(fix)
        self.out("    free(h_buf);")
        self.out("}")
        self.out("")

    # -- output management -------------------------------------------------

    def extent_exprs(self):
        accesses = self.meta["accesses"]
        out_name = self.meta["output"]
        src = {}
        for t, indices in accesses.items():
            if t == out_name:
                continue
            for k, v in enumerate(indices):
                src.setdefault(v, f"{t}_ext[{k}]")
        return [src[v] for v in accesses[out_name]]

    def _dense_product(self, upto):
        t = self.output["tensor"]
        prod = "1"
        for k in range(upto):
            prod = f"({prod}) * {t}_ext[{k}]"
        return prod

    def emit_output_alloc(self):
        entry = self.output
        t = entry["tensor"]
        self.out("static void h_alloc_out(void) {")
        for k, e in enumerate(self.extent_exprs()):
            self.out(f"    {t}_ext[{k}] = {e};")
        for k, lv in enumerate(entry["levels"]):
            prod = self._dense_product(k)
            if lv["kind"] == "dense":
                self.out(f"    {t}_N{k + 1} = (int32_t){t}_ext[{k}];")
            elif lv["kind"] == "compressed":
                self.out(f"    {t}_pos{k + 1} = (int32_t*)calloc("
                         f"(size_t)(({prod}) + 1), sizeof(int32_t));")
            elif lv["has_roots"]:
                rec = lv["root_record"]
                self.out(f"    {t}_roots{k + 1} = ({rec}**)calloc("
                         f"(size_t)({prod}), sizeof({rec}*));")
        last = entry["levels"][-1]
        if last["kind"] == "dense":
            prod = self._dense_product(len(entry["levels"]))
            self.out(f"    {t}_vals = (double*)calloc((size_t)({prod}), "
                     "sizeof(double));")
        self.out("}")
        self.out("")

    def emit_reset(self):
        entry = self.output
        t = entry["tensor"]
        self.out("static void h_reset_out(void) {")
        for k, lv in enumerate(entry["levels"]):
            prod = self._dense_product(k)
            if lv["kind"] == "compressed":
                self.out(f"    memset({t}_pos{k + 1}, 0, sizeof(int32_t) * "
                         f"(size_t)(({prod}) + 1));")
                self.out(f"    {t}_crd{k + 1}.len = 0;")
            elif lv["kind"] == "dynamic" and lv["has_roots"]:
                rec = lv["root_record"]
                self.out(f"    memset({t}_roots{k + 1}, 0, sizeof({rec}*) * "
                         f"(size_t)({prod}));")
        last = entry["levels"][-1]
        if last["kind"] == "dense":
            prod = self._dense_product(len(entry["levels"]))
            self.out(f"    memset({t}_vals, 0, sizeof(double) * "
                     f"(size_t)({prod}));")
        elif last["kind"] == "compressed":
            self.out(f"    {t}_vals.len = 0;")
        self.out("}")
        self.out("")

    def emit_print(self):
        entry = self.output
        t = entry["tensor"]
        levels = entry["levels"]
        self.out("static void h_print_out(void) {")
        coords = []

        def printer(pad, value):
            cfmt = " ".join(["%d"] * len(coords))
            cargs = ", ".join(f"(int){c} + 1" for c in coords)
            self.out(f'{pad}printf("{cfmt} %.17g\\n", {cargs}, {value});')

        def emit_level(k, pos, handle, depth):
            pad = "    " * (depth + 1)
            lv = levels[k]
            last = k == len(levels) - 1
            if lv["kind"] == "dense":
                iv = f"i{k}"
                self.out(f"{pad}for (long {iv} = 0; {iv} < {t}_ext[{k}]; "
                         f"{iv}++) {{")
                coords.append(iv)
                if last:
                    printer(pad + "    ",
                            f"{t}_vals[({pos}) * {t}_ext[{k}] + {iv}]")
                else:
                    emit_level(k + 1, f"(({pos}) * {t}_ext[{k}] + {iv})",
                               None, depth + 1)
                coords.pop()
                self.out(f"{pad}}}")
            elif lv["kind"] == "compressed":
                p = f"p{k}"
                self.out(f"{pad}for (int32_t {p} = {t}_pos{k + 1}[{pos}]; "
                         f"{p} < {t}_pos{k + 1}[({pos}) + 1]; {p}++) {{")
                coords.append(f"{t}_crd{k + 1}.data[{p}]")
                printer(pad + "    ", f"{t}_vals.data[{p}]")
                coords.pop()
                self.out(f"{pad}}}")
            else:
                fam, payload = lv["family"], lv["payload"]
                it = iter_name(fam, payload)
                sset = self.reg.schema(fam)
                drill, entry_type = entry_info(sset, lv["root_node"])
                entry_rec = decl_name(entry_type, payload)
                root = handle if handle else f"{t}_roots{k + 1}[{pos}]"
                nv, sv, cv, vv = f"n{k}", f"s{k}", f"c{k}", f"v{k}"
                vt = "double" if payload == "scalar" else f"{payload}*"
                vinit = "0.0" if payload == "scalar" else "NULL"
                self.out(f"{pad}{{")
                self.out(f"{pad}    {entry_rec}* {nv} = NULL;")
                if drill:
                    self.out(f"{pad}    if ({root}) {nv} = ({root})->{drill};")
                else:
                    self.out(f"{pad}    {nv} = {root};")
                self.out(f"{pad}    {it}_stack {sv} = {{NULL, 0, 0}};")
                self.out(f"{pad}    int32_t {cv} = 0;")
                self.out(f"{pad}    {vt} {vv} = {vinit};")
                self.out(f"{pad}    uint8_t st{k} = {it}(0, &{nv}, &{sv}, "
                         f"&{cv}, &{vv});")
                self.out(f"{pad}    while (st{k}) {{")
                coords.append(cv)
                if last:
                    printer(pad + "        ", vv)
                else:
                    emit_level(k + 1, None, vv, depth + 2)
                coords.pop()
                self.out(f"{pad}        st{k} = {it}(st{k}, &{nv}, &{sv}, "
                         f"&{cv}, &{vv});")
                self.out(f"{pad}    }}")
                self.out(f"{pad}    free({sv}.data);")
                self.out(f"{pad}}}")

        emit_level(0, "0", None, 0)
        self.out("}")
        self.out("")

    def emit_main(self):
        n_in = len(self.inputs)
        self.out("static int h_cmp_ll(const void* a, const void* b) {")
        self.out("    long long x = *(const long long*)a, "
                 "y = *(const long long*)b;")
        self.out("    return x < y ? -1 : (x > y ? 1 : 0);")
        self.out("}")
        self.out("int main(int argc, char** argv) {")
        names = " ".join(e["tensor"] + ".dump" for e in self.inputs)
        self.out(f"    if (argc < {n_in + 1}) {{")
        self.out(f'        fprintf(stderr, "usage: %s {names} [reps]\\n", '
                 "argv[0]);")
        self.out("        return 2;")
        self.out("    }")
        for i, entry in enumerate(self.inputs):
            self.out(f"    h_load_{entry['tensor']}(argv[{i + 1}]);")
        self.out(f"    int reps = argc > {n_in + 1} ? "
                 f"atoi(argv[{n_in + 1}]) : 1;")
        self.out("    if (reps < 1) reps = 1;")
        self.out("    h_alloc_out();")
        self.out("    long long* times = (long long*)malloc("
                 "sizeof(long long) * (size_t)reps);")
        args = []
        for entry in self.layouts:
            for pname, ptype in entry["params"]:
                tt = tuple_of(ptype)
                if isinstance(tt, tuple) and tt[0] == "vec":
                    args.append(f"&{pname}")
                else:
                    args.append(pname)
        self.out("    for (int r = 0; r < reps; r++) {")
        self.out("        h_reset_out();")
        self.out("        struct timespec t0, t1;")
        self.out("        clock_gettime(CLOCK_MONOTONIC, &t0);")
        self.out(f"        compute({', '.join(args)});")
        self.out("        clock_gettime(CLOCK_MONOTONIC, &t1);")
        self.out("        times[r] = (t1.tv_sec - t0.tv_sec) * 1000000000LL "
                 "+ (t1.tv_nsec - t0.tv_nsec);")
        self.out("    }")
        self.out("    qsort(times, (size_t)reps, sizeof(long long), "
                 "h_cmp_ll);")
        self.out('    fprintf(stderr, "median_ns %lld\\n", times[reps / 2]);')
        self.out("    h_print_out();")
        self.out("    return 0;")
        self.out("}")


def tuple_of(ptype):
    """Parameter types round-trip through JSON as tagged lists."""
    if isinstance(ptype, list):
        if ptype and ptype[0] == "()":
            return tuple(tuple_of(x) for x in ptype[1:])
        return tuple(tuple_of(x) for x in ptype)
    return ptype
