from dynten import gen_node_decls, load_stock_schema
from dynten.ir import Ref


def members(recs, name):
    return next(r for r in recs if r.name == name).members


def test_bst_record():
    recs = gen_node_decls(load_stock_schema("bst"))
    assert members(recs, "bst") == [
        ("ec", "int32"), ("ev", "float64"), ("r", Ref("bst")), ("l", Ref("bst"))]
    assert members(recs, "bst_root") == [("r", Ref("bst"))]


def test_blist_record_capacity_rule():
    # capacity equals the in-clause upper bound, 3
    recs = gen_node_decls(load_stock_schema("blist"))
    assert members(recs, "blist") == [
        ("ec", ("arr", "int32", 3)), ("ev", ("arr", "float64", 3)),
        ("n", Ref("blist")), ("B", "int32")]


def test_btree_records():
    recs = gen_node_decls(load_stock_schema("btree"))
    sup = next(r for r in recs if r.name == "btree")
    assert sup.members == [("tp", ("tag", ("btree_internal", "btree_leaf")))]
    internal = next(r for r in recs if r.name == "btree_internal")
    assert internal.supertype == "btree"
    assert internal.members == [
        ("ec", ("arr", "int32", 3)), ("ev", ("arr", "float64", 3)),
        ("c", ("arr", Ref("btree"), 3)), ("cl", Ref("btree")), ("B", "int32")]
    leaf = next(r for r in recs if r.name == "btree_leaf")
    assert leaf.supertype == "btree"
    assert members(recs, "btree_root") == [("r", Ref("btree"))]


def test_unbounded_arrays_are_references():
    recs = gen_node_decls(load_stock_schema("vblist"))
    assert members(recs, "vblist")[0] == ("ec", ("arrref", "int32"))
    recs = gen_node_decls(load_stock_schema("ctree"))
    m = dict(members(recs, "ctree"))
    assert m["tc"] == ("arrref", "int32") and m["hv"] == "float64"


def test_rbtree_metadata_and_parent():
    recs = gen_node_decls(load_stock_schema("rbtree"))
    m = dict(members(recs, "rbtree"))
    assert m["p"] == Ref("rbtree") and m["c"] == "bool"


def test_handle_payload_records():
    recs = gen_node_decls(load_stock_schema("bst"), payload="prefix")
    m = dict(members(recs, "bst__prefix"))
    assert m["ev"] == Ref("prefix")
    assert m["r"] == Ref("bst__prefix")
