import pytest
from hypothesis import given, strategies as st

from dynten import (
    SchemaError, parse_schema, validate, print_schema, family_sorted,
    load_stock_schema, STOCK_FAMILIES,
)

LIST_SRC = """
def list {
  e : elem nonempty
  n : list
  seq = {e}, n
}

def list_head {
  h : list
}
"""


def test_parse_list():
    s = parse_schema(LIST_SRC, "list")
    assert [n.name for n in s.nodes] == ["list", "list_head"]
    node = s.node("list")
    e = node.field_named("e")
    assert e.kind == "elem" and e.nonempty and not e.is_array
    n = node.field_named("n")
    assert n.kind == "child" and n.target == "list"
    assert [tuple(x.names) for x in node.seq] == [("e",), ("n",)]


def test_parse_btree_supertype():
    s = validate(load_stock_schema("btree"))
    assert s.supertypes == ["btree"]
    internal = s.node("btree_internal")
    assert internal.supertype == "btree"
    assert internal.field_named("c").target == "btree"
    assert internal.field_named("B").bounds == (1, 3)
    assert [tuple(x.names) for x in internal.seq] == [("c", "e"), ("cl",)]
    assert s.node("btree_leaf").supertype == "btree"


def test_empty_input():
    with pytest.raises(SchemaError, match="no node definitions"):
        parse_schema("")


def test_comments_and_whitespace():
    s = parse_schema("# a comment\ndef a {\n  e : elem  # trailing\n}\n")
    assert s.node("a").field_named("e").kind == "elem"


@pytest.mark.parametrize("src,msg", [
    ("def a { e : elem }\ndef a { e : elem }", "duplicate definition"),
    ("def a { }", "empty node body"),
    ("def a { e : elem\n seq = l, e, r }", "references 'l'"),
    ("def a { e : elem[B] }", "not a size field"),
    ("def a { B : size in [3, 1]\n e : elem[B] }", "lo <= hi"),
    ("def a { e : elem\n n : missing }", "unresolved child type"),
    ("def a { p : parent nonempty }", "expected end of line"),
    ("def a { e : elem\n B : size nonempty }", "expected end of line"),
    ("def a { e : elem[0] }", "positive"),
    ("def supertype s\ndef a { e : elem }", "no subtypes"),
])
def test_diagnostics(src, msg):
    with pytest.raises(SchemaError, match=msg):
        validate(parse_schema(src))


def test_unreachable_node():
    src = "def a { e : elem }\ndef b { e : elem\n c : b }"
    # b references itself, so it is never a root candidate and is unreachable
    with pytest.raises(SchemaError, match="unreachable"):
        validate(parse_schema(src))


def test_parent_owner_ambiguous():
    src = ("def a { x : c }\n"
           "def b { x : c }\n"
           "def c { e : elem\n p : parent }\n"
           "def root { x : a\n y : b }")
    with pytest.raises(SchemaError, match="ambiguous"):
        validate(parse_schema(src))


def test_parent_owner_self():
    s = validate(load_stock_schema("rbtree"))
    assert s.node("rbtree").parent_owner == "rbtree"


def test_roundtrip_fixpoint_all_stock():
    for family in STOCK_FAMILIES:
        src = print_schema(load_stock_schema(family))
        once = print_schema(parse_schema(src, family))
        twice = print_schema(parse_schema(once, family))
        assert once == twice == src


EXPECTED_FACTS = {
    # family -> node -> (single_tail, is_sorted)
    "list": {"list": (True, True), "list_head": (False, True)},
    "blist": {"blist": (True, True), "blist_head": (False, True)},
    "blist_holes": {"blist": (True, True), "blist_head": (False, True)},
    "blist_fixed": {"blist": (True, True), "blist_head": (False, True)},
    "blist_unsorted": {"blist": (True, False), "blist_head": (False, True)},
    "vblist": {"vblist": (True, True), "vblist_head": (False, True)},
    "ttree": {"ttree": (False, True), "ttree_root": (False, True)},
    "rbtree": {"rbtree": (False, True), "rbtree_root": (False, True)},
    "ctree": {"ctree": (False, True), "prefix": (False, True)},
    "btree": {"btree_internal": (False, True), "btree_leaf": (False, True),
              "btree_root": (False, True)},
    "bst": {"bst": (False, True), "bst_root": (False, True)},
}

EXPECTED_ROOTS = {
    "list": ["list_head"], "blist": ["blist_head"],
    "blist_holes": ["blist_head"], "blist_fixed": ["blist_head"],
    "blist_unsorted": ["blist_head"], "vblist": ["vblist_head"],
    "ttree": ["ttree_root"], "rbtree": ["rbtree_root"],
    "ctree": ["prefix"], "btree": ["btree_root"], "bst": ["bst_root"],
}


def test_stock_derived_facts():
    for family in STOCK_FAMILIES:
        s = load_stock_schema(family)
        facts = {n.name: (n.single_tail, n.is_sorted) for n in s.nodes}
        assert facts == EXPECTED_FACTS[family], family
        assert s.root_candidates == EXPECTED_ROOTS[family], family


def test_family_sortedness():
    for family in STOCK_FAMILIES:
        s = load_stock_schema(family)
        expect = family != "blist_unsorted"
        assert family_sorted(s, s.root_candidates[0]) is expect, family


NAMES = st.text(alphabet="abcxyz", min_size=1, max_size=4)


@given(names=st.lists(NAMES, min_size=1, max_size=4, unique=True),
       bound=st.integers(0, 9))
def test_roundtrip_generated_chain_schemas(names, bound):
    # chains of elem fields plus a size-bounded array: printing then
    # reparsing is a fixpoint
    fields = "\n".join(f"  {n} : elem" for n in names)
    src = (f"def node {{\n{fields}\n  a : elem[B]\n"
           f"  B : size in [0, {bound + 1}]\n}}\n")
    s = parse_schema(src)
    assert print_schema(parse_schema(print_schema(s))) == print_schema(s)
