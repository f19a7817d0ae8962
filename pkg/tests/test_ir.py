import pytest

from dynten import ir
from dynten.ir import (
    Bin, Cst, Decl, Fld, Func, Idx, If, Module, Null, Param, Push, Record,
    Ref, Ret, Set, Var, Yield, check_module, from_json, render_c, to_json,
)


def tiny_module():
    bst = Record("bst", [("ec", "int32"), ("ev", "float64"),
                         ("r", Ref("bst")), ("l", Ref("bst"))])
    f = Func("compute", [Param("n", Ref("bst")),
                         Param("out", ("arrref", "float64"))], None, [
        If(Bin("!=", Var("n"), Null()), [
            Set(Idx(Var("out"), Fld(Var("n"), "ec")), Fld(Var("n"), "ev")),
        ]),
    ])
    return Module([bst], [f])


def test_check_module_ok():
    assert check_module(tiny_module()) == []


def test_check_module_stray_yield():
    m = tiny_module()
    m.funcs[0].body.append(Yield(Cst(0), Cst(0.0)))
    assert any("unlowered yield" in p for p in check_module(m))


def test_check_module_unbalanced_push():
    m = tiny_module()
    m.frames["it"] = [("st", "uint8"), ("n", Ref("bst"))]
    m.funcs[0].params.append(Param("s", ("stack", "it")))
    m.funcs[0].body += [Push(Var("s"), [Cst(0), Null()]),
                        Push(Var("s"), [Cst(0), Null()])]
    assert any("never popped" in p for p in check_module(m))


def test_check_module_undeclared():
    m = tiny_module()
    m.funcs[0].body.append(Set(Var("ghost"), Cst(1)))
    assert any("undeclared variable ghost" in p for p in check_module(m))
    m2 = tiny_module()
    m2.funcs[0].body.append(ir.Call("nosuch", []))
    assert any("undeclared function" in p for p in check_module(m2))
    m3 = tiny_module()
    m3.funcs[0].body.append(ir.Goto("nowhere"))
    assert any("unknown label" in p for p in check_module(m3))


def test_render_deterministic():
    a = render_c(tiny_module())
    b = render_c(tiny_module())
    assert a == b
    assert "struct bst { int32_t ec; double ev; bst* r; bst* l; };" in a
    assert "void compute(bst* n, double* out)" in a


def test_render_empty_module():
    m = Module([], [Func("compute", [], None, [Ret()])])
    text = render_c(m)
    assert "#include <stdint.h>" in text
    assert "void compute(void)" in text


def test_json_roundtrip():
    m = tiny_module()
    m2 = from_json(to_json(m))
    assert render_c(m2) == render_c(m)
    assert to_json(m2) == to_json(m)


def test_format_module_readable():
    text = ir.format_module(tiny_module())
    assert "record bst" in text and "func compute" in text


def test_c_operator_precedence():
    f = Func("compute", [Param("a", "int32"), Param("b", "int32"),
                         Param("c", "int32")], "int32", [
        Ret(Bin("*", Bin("+", Var("a"), Var("b")), Var("c"))),
    ])
    text = render_c(Module([], [f]))
    assert "return (a + b) * c;" in text


def test_c_int_division():
    f = Func("compute", [Param("a", "int32")], "int32", [
        Ret(Bin("//", Var("a"), Cst(2))),
    ])
    assert "return a / 2;" in render_c(Module([], [f]))


def test_strip_annotations_helper():
    body = [ir.Task([Set(Var("x"), Cst(1))], fanout=True)]
    f = Func("compute", [], None, [Decl("x", "int32", Cst(0))] + body)
    m = Module([], [f])
    stripped = ir.strip_annotations(m)
    flat = list(ir.walk_stmts(stripped.funcs[0].body))
    assert not any(isinstance(s, ir.Task) for s in flat)
    assert any(isinstance(s, Set) for s in flat)
