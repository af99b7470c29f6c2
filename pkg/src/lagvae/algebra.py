"""Exact rational linear algebra for small dense matrices.

Every routine works on :class:`fractions.Fraction` entries, so rank,
nullspace, subspace intersection and membership are exact. Matrices here
are at most a few dozen columns wide; nothing is tuned for size.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

__all__ = [
    "DimensionError",
    "RationalMatrix",
    "as_fraction",
    "hstack",
    "rank",
    "nullspace",
    "rref",
    "subspace_intersect",
    "subspace_sum",
    "member_of",
]


class DimensionError(ValueError):
    """Raised when matrix shapes are incompatible."""


def as_fraction(value) -> Fraction:
    """Convert an int, Fraction, or decimal string to an exact Fraction.

    Floats are refused: they almost always carry representation error
    the caller did not intend.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not coefficients")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot convert {type(value).__name__} exactly; pass int, Fraction or str")


class RationalMatrix:
    """Immutable dense matrix of Fractions, stored row-major."""

    __slots__ = ("rows", "cols", "entries")

    def __init__(self, rows: int, cols: int, entries: Iterable = ()):
        entries = tuple(as_fraction(e) for e in entries)
        if rows < 0 or cols < 0:
            raise DimensionError("negative dimension")
        if len(entries) != rows * cols:
            raise DimensionError(f"expected {rows * cols} entries, got {len(entries)}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "entries", entries)

    def __setattr__(self, name, value):
        raise AttributeError("RationalMatrix is immutable")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], cols: int | None = None) -> "RationalMatrix":
        rows = [list(r) for r in rows]
        if cols is None:
            cols = len(rows[0]) if rows else 0
        for r in rows:
            if len(r) != cols:
                raise DimensionError("ragged rows")
        return cls(len(rows), cols, (e for r in rows for e in r))

    @classmethod
    def from_columns(cls, columns: Sequence[Sequence], rows: int | None = None) -> "RationalMatrix":
        columns = [list(c) for c in columns]
        if rows is None:
            if not columns:
                raise DimensionError("row count needed for a matrix with no columns")
            rows = len(columns[0])
        for c in columns:
            if len(c) != rows:
                raise DimensionError("ragged columns")
        return cls(rows, len(columns), (columns[j][i] for i in range(rows) for j in range(len(columns))))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "RationalMatrix":
        return cls(rows, cols, [0] * (rows * cols))

    @classmethod
    def identity(cls, n: int) -> "RationalMatrix":
        return cls(n, n, (1 if i == j else 0 for i in range(n) for j in range(n)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def __getitem__(self, idx):
        i, j = idx
        return self.entries[i * self.cols + j]

    def row(self, i: int) -> tuple[Fraction, ...]:
        return self.entries[i * self.cols:(i + 1) * self.cols]

    def column(self, j: int) -> tuple[Fraction, ...]:
        return tuple(self.entries[i * self.cols + j] for i in range(self.rows))

    def columns(self) -> list[tuple[Fraction, ...]]:
        return [self.column(j) for j in range(self.cols)]

    def to_rows(self) -> list[list[Fraction]]:
        return [list(self.row(i)) for i in range(self.rows)]

    def transpose(self) -> "RationalMatrix":
        return RationalMatrix.from_columns(self.to_rows(), rows=self.cols)

    @property
    def T(self) -> "RationalMatrix":
        return self.transpose()

    def select_columns(self, idx: Sequence[int]) -> "RationalMatrix":
        return RationalMatrix.from_columns([self.column(j) for j in idx], rows=self.rows)

    def matvec(self, v: Sequence) -> tuple[Fraction, ...]:
        if len(v) != self.cols:
            raise DimensionError(f"vector length {len(v)} != {self.cols} columns")
        v = [as_fraction(x) for x in v]
        return tuple(sum((a * b for a, b in zip(self.row(i), v)), Fraction(0)) for i in range(self.rows))

    def __matmul__(self, other):
        if isinstance(other, RationalMatrix):
            if self.cols != other.rows:
                raise DimensionError(f"cannot multiply {self.shape} by {other.shape}")
            cols = [self.matvec(other.column(j)) for j in range(other.cols)]
            return RationalMatrix.from_columns(cols, rows=self.rows)
        return self.matvec(other)

    def __add__(self, other: "RationalMatrix") -> "RationalMatrix":
        if self.shape != other.shape:
            raise DimensionError("shape mismatch")
        return RationalMatrix(self.rows, self.cols, (a + b for a, b in zip(self.entries, other.entries)))

    def __neg__(self) -> "RationalMatrix":
        return RationalMatrix(self.rows, self.cols, (-a for a in self.entries))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RationalMatrix):
            return NotImplemented
        return self.shape == other.shape and self.entries == other.entries

    def __hash__(self) -> int:
        return hash((self.rows, self.cols, self.entries))

    def __repr__(self) -> str:
        return f"RationalMatrix({self.rows}x{self.cols})"

    def to_lists(self, as_str: bool = True) -> list[list]:
        conv = str if as_str else (lambda f: f)
        return [[conv(e) for e in self.row(i)] for i in range(self.rows)]


def hstack(*mats: RationalMatrix) -> RationalMatrix:
    if not mats:
        raise DimensionError("nothing to stack")
    rows = mats[0].rows
    if any(m.rows != rows for m in mats):
        raise DimensionError("row-count mismatch in hstack")
    return RationalMatrix.from_columns([c for m in mats for c in m.columns()], rows=rows)


def _bareiss_rank(m: RationalMatrix) -> int:
    # Fraction-free elimination on a common-denominator integer copy.
    if m.rows == 0 or m.cols == 0:
        return 0
    den = 1
    for e in m.entries:
        den = den * e.denominator // _gcd(den, e.denominator)
    a = [[int(e * den) for e in m.row(i)] for i in range(m.rows)]
    nrows, ncols = m.rows, m.cols
    prev = 1
    r = 0
    for c in range(ncols):
        if r == nrows:
            break
        piv = next((i for i in range(r, nrows) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        for i in range(r + 1, nrows):
            for j in range(c + 1, ncols):
                a[i][j] = (a[r][c] * a[i][j] - a[i][c] * a[r][j]) // prev
            a[i][c] = 0
        prev = a[r][c]
        r += 1
    return r


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return abs(a)


def rank(m: RationalMatrix) -> int:
    """Dimension of the column space, computed by Bareiss elimination."""
    return _bareiss_rank(m)


def rref(m: RationalMatrix) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form with leftmost pivots.

    Returns the reduced rows (zero rows dropped) and the pivot columns.
    """
    a = m.to_rows()
    pivots: list[int] = []
    r = 0
    for c in range(m.cols):
        piv = next((i for i in range(r, m.rows) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = 1 / a[r][c]
        a[r] = [x * inv for x in a[r]]
        for i in range(m.rows):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == m.rows:
            break
    return a[:r], pivots


def nullspace(m: RationalMatrix) -> RationalMatrix:
    """Basis of {v : m v = 0}, one column per free variable."""
    reduced, pivots = rref(m)
    free = [c for c in range(m.cols) if c not in set(pivots)]
    basis = []
    for f in free:
        v = [Fraction(0)] * m.cols
        v[f] = Fraction(1)
        for row, p in zip(reduced, pivots):
            v[p] = -row[f]
        basis.append(v)
    return RationalMatrix.from_columns(basis, rows=m.cols)


def subspace_sum(*mats: RationalMatrix) -> RationalMatrix:
    """Spanning matrix for the sum of column spaces (plain concatenation)."""
    return hstack(*mats)


def subspace_intersect(a: RationalMatrix, b: RationalMatrix) -> RationalMatrix:
    """Basis of col(a) ∩ col(b).

    Solves [a b] (u; v) = 0; the columns a·U then span the intersection.
    Redundant columns are pruned so the result has full column rank.
    """
    if a.rows != b.rows:
        raise DimensionError(f"row-count mismatch: {a.rows} vs {b.rows}")
    ns = nullspace(hstack(a, b))
    if ns.cols == 0:
        return RationalMatrix.zeros(a.rows, 0)
    u = RationalMatrix.from_rows([ns.row(i) for i in range(a.cols)], cols=ns.cols)
    return independent_columns(a @ u)


def independent_columns(m: RationalMatrix) -> RationalMatrix:
    """Keep the pivot columns of m; same column space, full column rank."""
    if m.cols == 0:
        return m
    _, pivots = rref(m)
    return m.select_columns(pivots)


def member_of(v: Sequence, basis: RationalMatrix) -> tuple[Fraction, ...] | None:
    """Exact coefficients c with basis·c = v, or None if v is outside col(basis).

    The solution is canonical: leftmost pivots, free variables set to zero.
    """
    if len(v) != basis.rows:
        raise DimensionError(f"vector length {len(v)} != {basis.rows} rows")
    v = [as_fraction(x) for x in v]
    aug = RationalMatrix.from_columns(basis.columns() + [v], rows=basis.rows)
    reduced, pivots = rref(aug)
    if basis.cols in pivots:
        return None
    coeffs = [Fraction(0)] * basis.cols
    for row, p in zip(reduced, pivots):
        coeffs[p] = row[basis.cols]
    return tuple(coeffs)
