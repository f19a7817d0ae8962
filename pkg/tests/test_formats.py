import pytest

from dynten import (
    AssemblyImpl, FormatError, Registry, define_format, load_stock_schema,
)
from dynten.ir import Fld, Set, Var, Null


def test_csr_composition(reg):
    f = define_format("B", ["dense", "compressed"], reg)
    assert [lv.kind for lv in f.levels] == ["dense", "compressed"]
    assert all(lv.ordered for lv in f.levels)
    assert f.levels[0].full and not f.levels[1].full


def test_dense_vector(reg):
    f = define_format("x", ["dense"], reg)
    assert f.order == 1 and f.levels[0].kind == "dense"


def test_adjacency_composition(reg):
    f = define_format("A", ["bst", "ctree"], reg)
    assert f.levels[0].family == "bst" and f.levels[0].root == "bst_root"
    assert f.levels[1].family == "ctree" and f.levels[1].root == "prefix"
    assert all(lv.ordered for lv in f.levels)


def test_unsorted_level_flag(reg):
    f = define_format("u", ["dense", "blist_unsorted"], reg)
    assert not f.levels[1].ordered


def test_unknown_family(reg):
    with pytest.raises(FormatError, match="unknown schema family"):
        define_format("X", ["dense", "nosuch"], reg)


def test_static_after_dynamic_rejected(reg):
    with pytest.raises(FormatError, match="cannot follow a dynamic"):
        define_format("X", ["bst", "dense"], reg)


def test_stock_registrations(reg):
    assert reg.lookup_assembly("blist", "append") is not None
    assert reg.lookup_assembly("rbtree", "build") is not None
    assert reg.lookup_assembly("rbtree", "append") is None
    assert reg.lookup_assembly("ctree", "build") is None
    assert reg.lookup_assembly("ctree", "append") is None
    assert reg.lookup_assembly("bst", "append") is not None
    assert reg.lookup_assembly("bst", "build") is not None
    assert reg.lookup_assembly("vblist", "build") is not None
    assert reg.lookup_assembly("list", "append") is not None


def test_duplicate_registration():
    r = Registry()
    r.add_schema(load_stock_schema("list"), "list")
    impl = AssemblyImpl("list", "append",
                        state=[("node", ("ref", "list"))],
                        first=[Set(Fld(Var("ret"), "h"), Null())],
                        rest=[Set(Fld(Var("st"), "node"), Null())])
    r.register_assembly(impl)
    with pytest.raises(FormatError, match="duplicate assembly registration"):
        r.register_assembly(impl)


def test_impl_field_check():
    r = Registry()
    r.add_schema(load_stock_schema("list"), "list")
    bad = AssemblyImpl("list", "append",
                       state=[("node", ("ref", "list"))],
                       first=[Set(Fld(Var("ret"), "bogus"), Null())],
                       rest=[Set(Fld(Var("st"), "node"), Null())])
    with pytest.raises(FormatError, match="undeclared field 'bogus'"):
        r.register_assembly(bad)


def test_blist_capacity_from_schema(reg):
    # the stock append checks the schema capacity (3), not a literal 4
    impl = reg.lookup_assembly("blist", "append")
    caps = [s for s in _walk_csts(impl.rest)]
    assert 3 in caps and 4 not in caps


def _walk_csts(stmts):
    from dynten.ir import walk_stmts, walk_exprs, Cst
    for s in walk_stmts(stmts):
        for e in walk_exprs(s):
            if isinstance(e, Cst) and isinstance(e.value, int):
                yield e.value
