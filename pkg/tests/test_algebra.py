from fractions import Fraction

import pytest
import sympy
from hypothesis import given, strategies as st

from lagvae.algebra import (DimensionError, RationalMatrix, as_fraction, hstack, member_of,
                            nullspace, rank, rref, subspace_intersect, subspace_sum)

small = st.fractions(min_value=-4, max_value=4, max_denominator=5)


@st.composite
def matrices(draw, max_rows=6, max_cols=6, rows=None):
    r = rows if rows is not None else draw(st.integers(1, max_rows))
    c = draw(st.integers(1, max_cols))
    # sparse-ish entries give rank-deficient cases often
    entry = st.one_of(st.just(Fraction(0)), small)
    return RationalMatrix.from_rows([[draw(entry) for _ in range(c)] for _ in range(r)])


def to_sympy(m):
    return sympy.Matrix(m.rows, m.cols, lambda i, j: sympy.Rational(m[i, j].numerator,
                                                                    m[i, j].denominator))


@given(matrices())
def test_rank_matches_sympy(m):
    assert rank(m) == to_sympy(m).rank()


@given(matrices())
def test_rref_matches_sympy(m):
    rows, pivots = rref(m)
    ref, ref_piv = to_sympy(m).rref()
    assert list(pivots) == list(ref_piv)
    for i, row in enumerate(rows):
        assert [sympy.Rational(x.numerator, x.denominator) for x in row] == list(ref.row(i))


@given(matrices())
def test_nullspace_is_kernel_with_right_dimension(m):
    n = nullspace(m)
    assert n.cols == m.cols - rank(m)
    if n.cols:
        assert all(x == 0 for row in (m @ n).to_rows() for x in row)
        assert rank(n) == n.cols


@given(matrices(rows=5), matrices(rows=5))
def test_intersection_dimension_formula(a, b):
    inter = subspace_intersect(a, b)
    assert inter.cols == rank(a) + rank(b) - rank(hstack(a, b))
    for col in inter.columns():
        assert member_of(col, a) is not None
        assert member_of(col, b) is not None


@given(matrices(rows=4), st.lists(small, min_size=6, max_size=6))
def test_member_of_solves_exactly(a, coeffs):
    coeffs = coeffs[: a.cols]
    v = a.matvec(coeffs)
    sol = member_of(v, a)
    assert sol is not None
    assert a.matvec(sol) == v


def test_member_of_rejects_outside_vector():
    a = RationalMatrix.from_columns([[1, 0, 0], [0, 1, 0]])
    assert member_of([0, 0, 1], a) is None


def test_subspace_sum_spans_both():
    a = RationalMatrix.from_columns([[1, 0, 0]])
    b = RationalMatrix.from_columns([[1, 0, 0], [0, 1, 0]])
    assert rank(subspace_sum(a, b)) == 2


def test_shape_errors():
    a = RationalMatrix.from_rows([[1, 2], [3, 4]])
    with pytest.raises(DimensionError):
        a @ RationalMatrix.from_rows([[1, 2, 3]])
    with pytest.raises(DimensionError):
        hstack(a, RationalMatrix.from_rows([[1]]))
    with pytest.raises(DimensionError):
        a.matvec([1, 2, 3])


def test_as_fraction_refuses_floats():
    assert as_fraction(3) == Fraction(3)
    assert as_fraction("1/3") == Fraction(1, 3)
    with pytest.raises(TypeError):
        as_fraction(0.5)
    with pytest.raises(TypeError):
        as_fraction(True)


def test_matrix_is_immutable_and_hashable():
    a = RationalMatrix.identity(3)
    with pytest.raises(AttributeError):
        a.rows = 4
    assert hash(a) == hash(RationalMatrix.identity(3))
    assert a.T == a
