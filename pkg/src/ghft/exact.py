"""Exact Gaussian-rational scalars and small dense matrices over them.

Used wherever identities are asserted with zero tolerance: the gamma-matrix
calculus and the coefficients of the CCR/CAR algebra engine.
"""
from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

__all__ = [
    "GaussianRational",
    "gq",
    "ExactMatrix",
    "to_exact",
]


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot convert {type(value).__name__} to an exact rational")


class GaussianRational:
    """Complex number ``re + i*im`` with rational parts.

    Instances are immutable and hashable; arithmetic with ``int``,
    ``Fraction`` and other Gaussian rationals stays exact.

    Parameters
    ----------
    re, im : int, Fraction, str or float
        Real and imaginary parts. Floats are converted exactly (binary value).

    Examples
    --------
    >>> z = GaussianRational(1, 2)
    >>> z * z.conjugate()
    GaussianRational(5)
    """

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        object.__setattr__(self, "re", _frac(re))
        object.__setattr__(self, "im", _frac(im))

    def __setattr__(self, name, value):
        raise AttributeError("GaussianRational is immutable")

    @classmethod
    def coerce(cls, value) -> "GaussianRational":
        if isinstance(value, GaussianRational):
            return value
        if isinstance(value, complex):
            return cls(Fraction(value.real), Fraction(value.imag))
        return cls(value, 0)

    def conjugate(self) -> "GaussianRational":
        return GaussianRational(self.re, -self.im)

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def __bool__(self):
        return not self.is_zero()

    def __add__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except TypeError:
            return NotImplemented
        return GaussianRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __sub__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except TypeError:
            return NotImplemented
        return GaussianRational(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return GaussianRational.coerce(other) - self

    def __mul__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except TypeError:
            return NotImplemented
        return GaussianRational(self.re * o.re - self.im * o.im,
                                self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = GaussianRational.coerce(other)
        den = o.re * o.re + o.im * o.im
        if den == 0:
            raise ZeroDivisionError("division by exact zero")
        num = self * o.conjugate()
        return GaussianRational(num.re / den, num.im / den)

    def __rtruediv__(self, other):
        return GaussianRational.coerce(other) / self

    def __eq__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except TypeError:
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        if self.im == 0:
            return hash(self.re)
        return hash((self.re, self.im))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        if self.im == 0:
            return f"GaussianRational({self.re})"
        return f"GaussianRational({self.re}, {self.im})"

    def __str__(self):
        if self.im == 0:
            return str(self.re)
        if self.re == 0:
            return f"{self.im}i"
        sign = "+" if self.im > 0 else "-"
        return f"({self.re}{sign}{abs(self.im)}i)"


def gq(re=0, im=0) -> GaussianRational:
    """Shorthand constructor for :class:`GaussianRational`."""
    return GaussianRational(re, im)


def to_exact(value) -> GaussianRational:
    """Convert ``int``, ``Fraction``, ``complex`` or Gaussian rational exactly."""
    return GaussianRational.coerce(value)


class ExactMatrix:
    """Dense matrix with Gaussian-rational entries.

    Only the handful of operations needed by the Clifford checks are provided:
    products, sums, scalar multiples, transpose, conjugation, inverse and
    leading principal minors.
    """

    __slots__ = ("rows",)

    def __init__(self, rows: Iterable[Iterable]):
        data = tuple(tuple(to_exact(v) for v in row) for row in rows)
        if not data or any(len(r) != len(data[0]) for r in data):
            raise ValueError("ragged or empty matrix")
        object.__setattr__(self, "rows", data)

    def __setattr__(self, name, value):
        raise AttributeError("ExactMatrix is immutable")

    @classmethod
    def identity(cls, n: int) -> "ExactMatrix":
        return cls([[1 if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def zeros(cls, n: int, m: int | None = None) -> "ExactMatrix":
        return cls([[0] * (n if m is None else m) for _ in range(n)])

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.rows[0])

    def __getitem__(self, idx):
        i, j = idx
        return self.rows[i][j]

    def __matmul__(self, other: "ExactMatrix") -> "ExactMatrix":
        n, k = self.shape
        k2, m = other.shape
        if k != k2:
            raise ValueError("shape mismatch")
        cols = list(zip(*other.rows))
        out = []
        for row in self.rows:
            out.append([sum((a * b for a, b in zip(row, col) if a and b),
                            GaussianRational()) for col in cols])
        return ExactMatrix(out)

    def __add__(self, other: "ExactMatrix") -> "ExactMatrix":
        return ExactMatrix([[a + b for a, b in zip(r, s)]
                            for r, s in zip(self.rows, other.rows)])

    def __sub__(self, other: "ExactMatrix") -> "ExactMatrix":
        return ExactMatrix([[a - b for a, b in zip(r, s)]
                            for r, s in zip(self.rows, other.rows)])

    def __neg__(self):
        return ExactMatrix([[-a for a in r] for r in self.rows])

    def scale(self, c) -> "ExactMatrix":
        c = to_exact(c)
        return ExactMatrix([[c * a for a in r] for r in self.rows])

    def transpose(self) -> "ExactMatrix":
        return ExactMatrix(list(zip(*self.rows)))

    def conj(self) -> "ExactMatrix":
        return ExactMatrix([[a.conjugate() for a in r] for r in self.rows])

    def dagger(self) -> "ExactMatrix":
        return self.conj().transpose()

    def __eq__(self, other):
        if not isinstance(other, ExactMatrix):
            return NotImplemented
        return self.rows == other.rows

    def __hash__(self):
        return hash(self.rows)

    def is_zero(self) -> bool:
        return all(a.is_zero() for r in self.rows for a in r)

    def apply(self, vec: Sequence) -> tuple[GaussianRational, ...]:
        """Matrix times column vector."""
        v = [to_exact(x) for x in vec]
        return tuple(sum((a * b for a, b in zip(r, v)), GaussianRational())
                     for r in self.rows)

    def rapply(self, vec: Sequence) -> tuple[GaussianRational, ...]:
        """Row vector times matrix."""
        v = [to_exact(x) for x in vec]
        cols = zip(*self.rows)
        return tuple(sum((a * b for a, b in zip(v, c)), GaussianRational())
                     for c in cols)

    def determinant(self) -> GaussianRational:
        """Exact determinant by fraction-preserving Gaussian elimination."""
        n, m = self.shape
        if n != m:
            raise ValueError("determinant of a non-square matrix")
        a = [list(r) for r in self.rows]
        det = GaussianRational(1)
        for c in range(n):
            piv = next((r for r in range(c, n) if a[r][c]), None)
            if piv is None:
                return GaussianRational()
            if piv != c:
                a[c], a[piv] = a[piv], a[c]
                det = -det
            det = det * a[c][c]
            for r in range(c + 1, n):
                if a[r][c]:
                    f = a[r][c] / a[c][c]
                    a[r] = [x - f * y for x, y in zip(a[r], a[c])]
        return det

    def leading_minors(self) -> list[GaussianRational]:
        n = self.shape[0]
        return [ExactMatrix([r[:k] for r in self.rows[:k]]).determinant()
                for k in range(1, n + 1)]

    def inverse(self) -> "ExactMatrix":
        n, m = self.shape
        if n != m:
            raise ValueError("inverse of a non-square matrix")
        a = [list(r) + [GaussianRational(1 if i == j else 0) for j in range(n)]
             for i, r in enumerate(self.rows)]
        for c in range(n):
            piv = next((r for r in range(c, n) if a[r][c]), None)
            if piv is None:
                raise ZeroDivisionError("singular matrix")
            a[c], a[piv] = a[piv], a[c]
            p = a[c][c]
            a[c] = [x / p for x in a[c]]
            for r in range(n):
                if r != c and a[r][c]:
                    f = a[r][c]
                    a[r] = [x - f * y for x, y in zip(a[r], a[c])]
        return ExactMatrix([r[n:] for r in a])

    def to_numpy(self):
        import numpy as np
        return np.array([[complex(a) for a in r] for r in self.rows])

    def __repr__(self):
        body = "; ".join(" ".join(str(a) for a in r) for r in self.rows)
        return f"ExactMatrix[{body}]"
