import numpy as np
import pytest

from dynten.cli import main
from dynten import gen_kernel, interpret, ir, from_dense
from dynten.runtime.pyexec import InterpreterError


SPMV = ["--expr", "forall(i) forall(j) y(i) += A(i,j)*x(j)",
        "--format", "A=dense,bst", "--format", "x=dense",
        "--format", "y=dense"]


def test_compile_prints_strategy(capsys):
    assert main(["compile"] + SPMV) == 0
    out = capsys.readouterr().out
    assert "map strategy at level j" in out


def test_missing_binding_exit_code(capsys):
    rc = main(["compile", "--expr", "forall(i) y(i) += x(i)",
               "--format", "y=dense"])
    assert rc == 1
    assert "x" in capsys.readouterr().err


def test_unsorted_merge_diagnostic(capsys):
    rc = main(["compile", "--expr", "forall(i) a(i) = b(i) * c(i)",
               "--format", "a=dense", "--format", "b=blist_unsorted",
               "--format", "c=blist_unsorted"])
    assert rc == 1
    assert "merge requires ordered" in capsys.readouterr().err


def test_run_tiny_sample(tmp_path, capsys):
    mtx = tmp_path / "a.mtx"
    mtx.write_text("%%MatrixMarket matrix coordinate real general\n"
                   "2 2 3\n1 1 1.0\n1 2 2.0\n2 2 3.0\n")
    x = tmp_path / "x.tns"
    x.write_text("1 1.0\n2 1.0\n")
    out = tmp_path / "y.tns"
    rc = main(["run"] + SPMV + ["--input", f"A={mtx}", "--input", f"x={x}",
                                "--output", str(out)])
    assert rc == 0
    assert out.read_text() == "1 3.0\n2 3.0\n"


def test_check_pass_and_inv_zero(tmp_path, capsys):
    rc = main(["check", "--expr",
               "forall(i) forall(j) y(i) += A(i,j)*x(j)*inv(d(j))",
               "--format", "A=dense,ctree", "--format", "x=dense",
               "--format", "d=dense", "--format", "y=dense",
               "--input", "A=random:30x30:0.1", "--input", "x=random:30",
               "--input", "d=random:30", "--seed", "11"])
    assert rc == 0
    assert "PASS (exact)" in capsys.readouterr().out

    d = tmp_path / "d.tns"
    d.write_text("1 0.0\n2 1.0\n")  # an explicit zero degree
    x = tmp_path / "x.tns"
    x.write_text("1 1.0\n2 1.0\n")
    a = tmp_path / "a.mtx"
    a.write_text("%%MatrixMarket matrix coordinate real general\n"
                 "2 2 2\n1 1 1.0\n2 2 1.0\n")
    rc = main(["check", "--expr",
               "forall(i) forall(j) y(i) += A(i,j)*x(j)*inv(d(j))",
               "--format", "A=dense,bst", "--format", "x=dense",
               "--format", "d=dense", "--format", "y=dense",
               "--input", f"A={a}", "--input", f"x={x}", "--input", f"d={d}"])
    assert rc == 1
    assert "inv of zero" in capsys.readouterr().err


def test_emit_c_compiles_statement(tmp_path):
    out = tmp_path / "k.c"
    rc = main(["emit-c"] + SPMV + ["--output", str(out)])
    assert rc == 0
    text = out.read_text()
    assert "void compute(" in text and "map_A" in text


def test_compile_determinism(tmp_path):
    a, b = tmp_path / "m1.json", tmp_path / "m2.json"
    assert main(["compile"] + SPMV + ["--seed", "5", "--output", str(a)]) == 0
    assert main(["compile"] + SPMV + ["--seed", "5", "--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c1, c2 = tmp_path / "k1.c", tmp_path / "k2.c"
    assert main(["emit-c"] + SPMV + ["--seed", "5", "--output", str(c1)]) == 0
    assert main(["emit-c"] + SPMV + ["--seed", "5", "--output", str(c2)]) == 0
    assert c1.read_bytes() == c2.read_bytes()


def test_corrupted_module_reports_location(reg, fmt):
    from dynten import bind_formats, parse_notation
    spec = parse_notation("forall(i) forall(j) y(i) += A(i,j)*x(j)")
    binds = {"A": fmt("A", "dense", "bst"), "x": fmt("x", "dense"),
             "y": fmt("y", "dense")}
    bound = bind_formats(spec, binds, registry=reg)
    m = gen_kernel(bound, reg)
    # test hook: corrupt the entry to index far outside the output
    compute = m.func("compute")
    compute.body.insert(0, ir.Set(ir.Idx(ir.Var("y_vals"), ir.Cst(10 ** 9)),
                                  ir.Cst(0.0)))
    a = from_dense(np.eye(3), binds["A"], reg)
    x = from_dense(np.ones(3), binds["x"], reg)
    with pytest.raises(InterpreterError, match="compute"):
        interpret(m, {"A": a, "x": x}, reg)


def test_custom_schema_file(tmp_path, capsys):
    nsl = tmp_path / "pair.nsl"
    nsl.write_text("def pair {\n  e : elem nonempty\n  f : elem\n"
                   "  n : pair\n  seq = e, f, n\n}\n"
                   "def pair_head {\n  h : pair\n}\n")
    rc = main(["compile", "--expr", "forall(i) y(i) += b(i)",
               "--format", "b=pair", "--format", "y=dense",
               "--schema", str(nsl)])
    assert rc == 0
