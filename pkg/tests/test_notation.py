import pytest

from dynten import NotationError, bind_formats, parse_notation


def test_parse_pagerank():
    s = parse_notation("forall(i) forall(j) y(i) += A(i,j) * x(j) * inv(d(j))")
    assert s.foralls == ["i", "j"]
    assert s.mode == "accumulate"
    assert s.lhs.tensor == "y" and s.lhs.indices == ("i",)
    assert s.reduction_vars == ["j"]
    assert set(s.tensors) == {"y", "A", "x", "d"}


def test_parse_copy():
    s = parse_notation("forall(i) a(i) = b(i)")
    assert s.mode == "assign" and s.reduction_vars == []


def test_parse_addition():
    s = parse_notation("forall(i) forall(j) C(i,j) = A(i,j) + B(i,j)")
    assert s.mode == "assign"
    assert s.lhs.indices == ("i", "j")


@pytest.mark.parametrize("text,msg", [
    ("forall(i) y(i) += A(i,k)", "unbound index variable"),
    ("forall(i) forall(j) y(i) += A(i,j) + A(i)", "arities"),
    ("forall(i) forall(j) y(i) = A(i,j)", "reduction variables"),
    ("forall(i) a(i) = a(i) + 1", "may not be read"),
    ("forall(i) a(i,i) = b(i)", "repeats an index"),
    ("a(i) = b(i)", "at least one forall"),
])
def test_parse_errors(text, msg):
    with pytest.raises(NotationError, match=msg):
        parse_notation(text)


def strategies(b):
    return [(p.var, p.strategy, p.merge_kind) for p in b.plans]


def test_strategy_table(reg, fmt):
    spmv = parse_notation("forall(i) forall(j) y(i) += A(i,j) * x(j)")
    b = bind_formats(spmv, {"A": fmt("A", "dense", "blist"),
                            "x": fmt("x", "dense"), "y": fmt("y", "dense")},
                     registry=reg)
    assert strategies(b) == [("i", "dense", None), ("j", "map", None)]

    add = parse_notation("forall(i) forall(j) C(i,j) = A(i,j) + B(i,j)")
    b = bind_formats(add, {"A": fmt("A", "dense", "bst"),
                           "B": fmt("B", "dense", "compressed"),
                           "C": fmt("C", "dense", "compressed")},
                     registry=reg)
    assert strategies(b) == [("i", "dense", None), ("j", "merge", "union")]

    mul = parse_notation("forall(i) forall(j) C(i,j) = A(i,j) * B(i,j)")
    b = bind_formats(mul, {"A": fmt("A", "dense", "bst"),
                           "B": fmt("B", "dense", "bst"),
                           "C": fmt("C", "dense", "dense")},
                     registry=reg)
    assert strategies(b) == [("i", "dense", None),
                             ("j", "merge", "intersection")]

    alldense = bind_formats(mul, {"A": fmt("A", "dense", "dense"),
                                  "B": fmt("B", "dense", "dense"),
                                  "C": fmt("C", "dense", "dense")},
                            registry=reg)
    assert strategies(alldense) == [("i", "dense", None), ("j", "dense", None)]


def test_binding_checks(reg, fmt):
    s = parse_notation("forall(i) forall(j) y(i) += A(i,j) * x(j)")
    with pytest.raises(NotationError, match="missing format binding.*x"):
        bind_formats(s, {"A": fmt("A", "dense", "bst"),
                         "y": fmt("y", "dense")}, registry=reg)
    with pytest.raises(NotationError, match="arity mismatch"):
        bind_formats(s, {"A": fmt("A", "dense"), "x": fmt("x", "dense"),
                         "y": fmt("y", "dense")}, registry=reg)


def test_merge_requires_ordered(reg, fmt):
    s = parse_notation("forall(i) a(i) = b(i) * c(i)")
    with pytest.raises(NotationError, match="merge requires ordered"):
        bind_formats(s, {"b": fmt("b", "blist_unsorted"),
                         "c": fmt("c", "blist_unsorted"),
                         "a": fmt("a", "dense")}, registry=reg)


def test_unsorted_feeding_ordered_output(reg, fmt):
    s = parse_notation("forall(i) a(i) = b(i)")
    with pytest.raises(NotationError, match="ordered|unsorted"):
        bind_formats(s, {"b": fmt("b", "blist_unsorted"),
                         "a": fmt("a", "compressed")}, registry=reg)


def test_unsorted_map_permitted(reg, fmt):
    s = parse_notation("forall(i) forall(j) y(i) += A(i,j) * x(j)")
    b = bind_formats(s, {"A": fmt("A", "dense", "blist_unsorted"),
                         "x": fmt("x", "dense"), "y": fmt("y", "dense")},
                     registry=reg)
    assert b.plans[1].strategy == "map"


def test_inv_requires_dense(reg, fmt):
    s = parse_notation("forall(i) a(i) = b(i) * inv(d(i))")
    with pytest.raises(NotationError, match="inv.*dense"):
        bind_formats(s, {"b": fmt("b", "bst"), "d": fmt("d", "bst"),
                         "a": fmt("a", "dense")}, registry=reg)


def test_nary_merge_rejected(reg, fmt):
    s = parse_notation("forall(i) a(i) = b(i) + c(i) + e(i)")
    with pytest.raises(NotationError, match="at most 2-way"):
        bind_formats(s, {"b": fmt("b", "bst"), "c": fmt("c", "bst"),
                         "e": fmt("e", "bst"), "a": fmt("a", "dense")},
                     registry=reg)


def test_dense_term_in_sparse_sum_rejected(reg, fmt):
    s = parse_notation("forall(i) a(i) = b(i) + x(i)")
    with pytest.raises(NotationError, match="no sparse operand"):
        bind_formats(s, {"b": fmt("b", "bst"), "x": fmt("x", "dense"),
                         "a": fmt("a", "dense")}, registry=reg)


def test_assemble_resolution(reg, fmt):
    copy = parse_notation("forall(i) a(i) = b(i)")
    b = bind_formats(copy, {"b": fmt("b", "bst"), "a": fmt("a", "bst")},
                     registry=reg)
    assert b.assemble == "map" and b.copy_of == "b"
    b = bind_formats(copy, {"b": fmt("b", "bst"), "a": fmt("a", "blist")},
                     registry=reg)
    assert b.assemble == "append"
    b = bind_formats(copy, {"b": fmt("b", "bst"), "a": fmt("a", "rbtree")},
                     registry=reg)
    assert b.assemble == "build"
    with pytest.raises(NotationError, match="no way to assemble"):
        bind_formats(copy, {"b": fmt("b", "bst"), "a": fmt("a", "ctree")},
                     registry=reg)
    with pytest.raises(NotationError, match="no append implementation"):
        bind_formats(copy, {"b": fmt("b", "bst"), "a": fmt("a", "rbtree")},
                     assemble="append", registry=reg)


def test_transposed_access_rejected(reg, fmt):
    s = parse_notation("forall(i) forall(j) C(i,j) = A(j,i)")
    with pytest.raises(NotationError, match="order"):
        bind_formats(s, {"A": fmt("A", "dense", "dense"),
                         "C": fmt("C", "dense", "dense")}, registry=reg)
