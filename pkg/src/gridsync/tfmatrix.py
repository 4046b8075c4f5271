"""Real-rational scalar and 2x2 transfer functions.

Coefficients are kept as exact rationals of the (binary-exact) float inputs
and every operation cancels the numerator/denominator gcd, so entry degrees
stay at the true McMillan order instead of growing with each operation.
Evaluation uses float coefficient lists derived from the exact ones.
"""
from __future__ import annotations

from fractions import Fraction
from numbers import Real

import numpy as np
from sympy import QQ, Poly, Symbol

_s = Symbol("s")


def _qq(x) -> object:
    fr = Fraction(x) if not isinstance(x, Fraction) else x
    return QQ(fr.numerator, fr.denominator)


def _poly(coeffs_ascending) -> Poly:
    return Poly([_qq(c) for c in reversed(list(coeffs_ascending))], _s, domain=QQ)


class PoleError(ZeroDivisionError):
    """Evaluation hit a pole, or an inverse of a singular matrix was requested."""


def _polyval_ratio(num: np.ndarray, den: np.ndarray, s):
    # ascending coefficients; points with |s| > 1 are evaluated in 1/s so that
    # high powers of a large s never overflow or swamp the low-order terms
    s = np.asarray(s, dtype=complex)
    out = np.empty(s.shape, dtype=complex)
    small = np.abs(s) <= 1.0
    P = np.polynomial.polynomial.polyval
    with np.errstate(divide="ignore", invalid="ignore"):
        if small.any():
            x = s[small]
            d = P(x, den)
            if np.any(d == 0):
                raise PoleError(f"pole at s = {x[d == 0][0]}")
            out[small] = P(x, num) / d
        if (~small).any():
            x = s[~small]
            z = 1.0 / x
            d = P(z, den[::-1])
            if np.any(d == 0):
                raise PoleError(f"pole at s = {x[d == 0][0]}")
            out[~small] = P(z, num[::-1]) / d * x ** (len(num) - len(den))
    return out


class RationalFunction:
    __slots__ = ("num", "den", "_fnum", "_fden")

    def __init__(self, num: Poly, den: Poly, reduce: bool = True):
        if den.is_zero:
            raise PoleError("zero denominator")
        if reduce:
            if num.is_zero:
                den = Poly(1, _s, domain=QQ)
            else:
                g = num.gcd(den)
                if g.degree() > 0:
                    num = num.quo(g)
                    den = den.quo(g)
            lc = den.LC()
            if lc != 1:
                num = num.quo_ground(lc)
                den = den.quo_ground(lc)
        self.num = num
        self.den = den
        self._fnum = None
        self._fden = None

    @classmethod
    def from_coeffs(cls, num, den=(1,)) -> "RationalFunction":
        """Build from ascending coefficient lists ``num``/``den``."""
        return cls(_poly(num), _poly(den))

    @classmethod
    def constant(cls, c) -> "RationalFunction":
        return cls.from_coeffs([c])

    @classmethod
    def s(cls) -> "RationalFunction":
        return cls.from_coeffs([0, 1])

    @staticmethod
    def coerce(x) -> "RationalFunction":
        if isinstance(x, RationalFunction):
            return x
        if isinstance(x, (Real, Fraction)) or np.isscalar(x):
            return RationalFunction.constant(float(x) if not isinstance(x, Fraction) else x)
        raise TypeError(f"cannot use {type(x).__name__} as a rational function")

    # coefficient views -------------------------------------------------
    def coeffs(self) -> tuple[list[float], list[float]]:
        """Ascending float coefficients ``(num, den)``."""
        return list(self._float_num()), list(self._float_den())

    def _float_num(self) -> np.ndarray:
        if self._fnum is None:
            self._fnum = np.array([float(c) for c in reversed(self.num.all_coeffs())])
        return self._fnum

    def _float_den(self) -> np.ndarray:
        if self._fden is None:
            self._fden = np.array([float(c) for c in reversed(self.den.all_coeffs())])
        return self._fden

    @property
    def degree(self) -> tuple[int, int]:
        return (max(self.num.degree(), 0), self.den.degree())

    def is_zero(self) -> bool:
        return self.num.is_zero

    def __call__(self, s):
        r = _polyval_ratio(self._float_num(), self._float_den(), s)
        return complex(r) if np.ndim(s) == 0 else r

    # arithmetic ----------------------------------------------------------
    def __add__(self, other):
        o = RationalFunction.coerce(other)
        if self.den == o.den:
            return RationalFunction(self.num + o.num, self.den)
        return RationalFunction(self.num * o.den + o.num * self.den, self.den * o.den)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self.num, self.den, reduce=False)

    def __sub__(self, other):
        return self + (-RationalFunction.coerce(other))

    def __rsub__(self, other):
        return RationalFunction.coerce(other) - self

    def __mul__(self, other):
        o = RationalFunction.coerce(other)
        return RationalFunction(self.num * o.num, self.den * o.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = RationalFunction.coerce(other)
        if o.is_zero():
            raise PoleError("division by the zero function")
        return RationalFunction(self.num * o.den, self.den * o.num)

    def __rtruediv__(self, other):
        return RationalFunction.coerce(other) / self

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        return RationalFunction(self.num**k, self.den**k, reduce=False)

    def __eq__(self, other):
        if not isinstance(other, RationalFunction):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash((tuple(self.num.all_coeffs()), tuple(self.den.all_coeffs())))

    def __repr__(self):
        return f"RationalFunction(deg {self.degree[0]}/{self.degree[1]})"


class TransferMatrix2:
    """2x2 matrix of real-rational functions of s."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        rows = [[RationalFunction.coerce(x) for x in row] for row in entries]
        if len(rows) != 2 or any(len(r) != 2 for r in rows):
            raise ValueError("TransferMatrix2 needs a 2x2 nested sequence")
        self.entries = rows

    @classmethod
    def identity(cls) -> "TransferMatrix2":
        return cls([[1, 0], [0, 1]])

    @classmethod
    def constant(cls, M) -> "TransferMatrix2":
        M = np.asarray(M, dtype=float)
        return cls([[M[0, 0], M[0, 1]], [M[1, 0], M[1, 1]]])

    @classmethod
    def lift(cls, Gd, Gq) -> "TransferMatrix2":
        """Matrix form of the complex gain ``Gd + j Gq``."""
        Gd = RationalFunction.coerce(Gd)
        Gq = RationalFunction.coerce(Gq)
        return cls([[Gd, -Gq], [Gq, Gd]])

    @classmethod
    def rotation(cls, angle: float) -> "TransferMatrix2":
        c, s = np.cos(angle), np.sin(angle)
        return cls.constant([[c, -s], [s, c]])

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def _binary(self, other, op):
        if isinstance(other, TransferMatrix2):
            return TransferMatrix2([[op(self[i, j], other[i, j]) for j in range(2)] for i in range(2)])
        return TransferMatrix2([[op(self[i, j], other) for j in range(2)] for i in range(2)])

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __neg__(self):
        return TransferMatrix2([[-self[i, j] for j in range(2)] for i in range(2)])

    def __mul__(self, scalar):
        if isinstance(scalar, TransferMatrix2):
            raise TypeError("use @ for matrix products")
        return self._binary(scalar, lambda a, b: a * b)

    __rmul__ = __mul__

    def __matmul__(self, other: "TransferMatrix2") -> "TransferMatrix2":
        return TransferMatrix2(
            [[self[i, 0] * other[0, j] + self[i, 1] * other[1, j] for j in range(2)] for i in range(2)]
        )

    def det(self) -> RationalFunction:
        return self[0, 0] * self[1, 1] - self[0, 1] * self[1, 0]

    def inv(self) -> "TransferMatrix2":
        d = self.det()
        if d.is_zero():
            raise PoleError("singular transfer matrix (determinant is identically zero)")
        return TransferMatrix2([[self[1, 1] / d, -self[0, 1] / d], [-self[1, 0] / d, self[0, 0] / d]])

    def __call__(self, s) -> np.ndarray:
        """Evaluate at a complex point (2x2 array) or an array of points (...x2x2)."""
        s = np.asarray(s, dtype=complex)
        out = np.empty(s.shape + (2, 2), dtype=complex)
        for i in range(2):
            for j in range(2):
                out[..., i, j] = self[i, j](s)
        return out

    def freqresp(self, omega) -> np.ndarray:
        return self(1j * np.asarray(omega, dtype=float))

    def max_degree(self) -> int:
        return max(max(self[i, j].degree) for i in range(2) for j in range(2))

    def to_dict(self) -> dict:
        return {
            f"Y{i + 1}{j + 1}": dict(zip(("num", "den"), self[i, j].coeffs()))
            for i in range(2)
            for j in range(2)
        }

    def __repr__(self):
        return f"TransferMatrix2(max degree {self.max_degree()})"
