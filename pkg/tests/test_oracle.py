import numpy as np
import pytest

from dynten import parse_notation
from dynten.oracle import OracleError, oracle_eval


def test_spmv_hand_checkable():
    s = parse_notation("forall(i) forall(j) y(i) += A(i,j) * x(j)")
    y = oracle_eval(s, {"A": [[1.0, 2.0], [0.0, 3.0]], "x": [1.0, 1.0]})
    assert y.tolist() == [3.0, 3.0]


def test_additive_inverse():
    s = parse_notation("forall(i) forall(j) C(i,j) = A(i,j) + B(i,j)")
    a = np.arange(12.0).reshape(3, 4)
    out = oracle_eval(s, {"A": a, "B": -a})
    assert np.array_equal(out, np.zeros((3, 4)))


def test_pagerank_with_unit_degrees_is_spmv(rng):
    pr = parse_notation("forall(i) forall(j) y(i) += A(i,j) * x(j) * inv(d(j))")
    sp = parse_notation("forall(i) forall(j) y(i) += A(i,j) * x(j)")
    a = rng.random((6, 6))
    x = rng.random(6)
    out_pr = oracle_eval(pr, {"A": a, "x": x, "d": np.ones(6)})
    out_sp = oracle_eval(sp, {"A": a, "x": x})
    assert np.array_equal(out_pr, out_sp)


def test_linearity(rng):
    s = parse_notation("forall(i) forall(j) y(i) += A(i,j) * x(j)")
    a = rng.random((5, 5))
    x = rng.random(5)
    assert np.array_equal(oracle_eval(s, {"A": 2.0 * a, "x": x}),
                          2.0 * oracle_eval(s, {"A": a, "x": x}))


def test_inverse_of_zero():
    s = parse_notation("forall(i) y(i) = x(i) * inv(d(i))")
    with pytest.raises(OracleError, match="inv of zero"):
        oracle_eval(s, {"x": [1.0], "d": [0.0]})


def test_extent_mismatch():
    s = parse_notation("forall(i) forall(j) C(i,j) = A(i,j) + B(i,j)")
    with pytest.raises(OracleError, match="extent mismatch"):
        oracle_eval(s, {"A": np.ones((2, 3)), "B": np.ones((2, 4))})


def test_missing_operand():
    s = parse_notation("forall(i) a(i) = b(i)")
    with pytest.raises(OracleError, match="missing operand"):
        oracle_eval(s, {})


def test_subtraction_and_constants():
    s = parse_notation("forall(i) a(i) = 2 * b(i) - c(i)")
    out = oracle_eval(s, {"b": [1.0, 2.0], "c": [1.0, 1.0]})
    assert out.tolist() == [1.0, 3.0]
