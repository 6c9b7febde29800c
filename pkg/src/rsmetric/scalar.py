"""Coefficient ring: rationals tagged with half-integer powers of pi.

An exact ``Scalar`` is a finite sum  sum_m r_m * pi^(m/2)  with rational
``r_m`` and integer ``m``.  A float ``Scalar`` wraps one double.  The two
kinds refuse to combine; use :meth:`Scalar.to_float_scalar` to convert.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational

_EXACT_TYPES = (int, Fraction, Rational)


class MixedScalarError(TypeError):
    """Raised when exact and floating-point scalars are combined implicitly."""


class Scalar:
    __slots__ = ("_terms", "_value")

    def __init__(self, terms=None, value=None):
        if value is not None:
            if terms is not None:
                raise ValueError("give either terms or value")
            self._terms = None
            self._value = float(value)
            return
        clean = {}
        for m, r in (terms or {}).items():
            r = Fraction(r)
            if r != 0:
                clean[int(m)] = r
        self._terms = clean
        self._value = None

    # constructors
    @classmethod
    def exact(cls, r=0, m: int = 0) -> "Scalar":
        return cls({m: r})

    @classmethod
    def from_float(cls, x) -> "Scalar":
        return cls(value=x)

    @classmethod
    def pi_power(cls, m: int) -> "Scalar":
        """pi^(m/2)."""
        return cls({m: 1})

    @classmethod
    def four_pi_power(cls, n: int) -> "Scalar":
        """(4 pi)^(n/2) = 2^n pi^(n/2)."""
        return cls({n: Fraction(2) ** n})

    # inspection
    @property
    def is_exact(self) -> bool:
        return self._terms is not None

    @property
    def terms(self) -> dict:
        if self._terms is None:
            raise MixedScalarError("float scalar has no exact terms")
        return dict(self._terms)

    def is_zero(self) -> bool:
        if self._terms is not None:
            return not self._terms
        return self._value == 0.0

    def rational(self) -> Fraction:
        """The coefficient of pi^0; raises if other powers are present."""
        if self._terms is None:
            raise MixedScalarError("float scalar is not rational")
        if any(m != 0 for m in self._terms):
            raise ValueError(f"{self} is not rational")
        return self._terms.get(0, Fraction(0))

    def __float__(self) -> float:
        if self._terms is None:
            return self._value
        return float(sum(float(r) * math.pi ** (m / 2) for m, r in self._terms.items()))

    def to_float_scalar(self) -> "Scalar":
        return Scalar(value=float(self))

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, Scalar):
            if other.is_exact != self.is_exact:
                raise MixedScalarError("cannot mix exact and float scalars")
            return other
        if isinstance(other, bool):
            other = int(other)
        if isinstance(other, _EXACT_TYPES):
            if self.is_exact:
                return Scalar({0: other})
            return Scalar(value=float(other))
        if isinstance(other, float):
            if self.is_exact:
                raise MixedScalarError("cannot mix an exact scalar with a Python float")
            return Scalar(value=other)
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if not self.is_exact:
            return Scalar(value=self._value + o._value)
        out = dict(self._terms)
        for m, r in o._terms.items():
            out[m] = out.get(m, 0) + r
        return Scalar(out)

    __radd__ = __add__

    def __neg__(self):
        if not self.is_exact:
            return Scalar(value=-self._value)
        return Scalar({m: -r for m, r in self._terms.items()})

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return o + (-self)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if not self.is_exact:
            return Scalar(value=self._value * o._value)
        out = {}
        for m1, r1 in self._terms.items():
            for m2, r2 in o._terms.items():
                out[m1 + m2] = out.get(m1 + m2, 0) + r1 * r2
        return Scalar(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if not self.is_exact:
            return Scalar(value=self._value / o._value)
        if len(o._terms) != 1:
            raise ValueError("exact division only by a single pi-power term")
        (m, r), = o._terms.items()
        return Scalar({k - m: v / r for k, v in self._terms.items()})

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers")
        out = Scalar({0: 1}) if self.is_exact else Scalar(value=1.0)
        for _ in range(k):
            out = out * self
        return out

    # comparison
    def __eq__(self, other):
        try:
            o = self._coerce(other)
        except MixedScalarError:
            return False
        if o is NotImplemented:
            return NotImplemented
        if self.is_exact:
            return self._terms == o._terms
        return self._value == o._value

    def __hash__(self):
        if self.is_exact:
            if set(self._terms) <= {0}:
                return hash(self._terms.get(0, 0))
            return hash(frozenset(self._terms.items()))
        return hash(self._value)

    def __repr__(self):
        if not self.is_exact:
            return f"Scalar({self._value!r})"
        return f"Scalar({self})"

    def __str__(self):
        if not self.is_exact:
            return repr(self._value)
        if not self._terms:
            return "0"
        parts = []
        for m in sorted(self._terms):
            r = self._terms[m]
            rs = str(r)
            if m == 0:
                parts.append(rs)
            elif m % 2 == 0:
                parts.append(f"{rs}·π^{m // 2}")
            else:
                parts.append(f"{rs}·π^{{{m}/2}}")
        return " + ".join(parts)


ZERO = Scalar()
ONE = Scalar({0: 1})


def as_scalar(x, exact: bool = True) -> Scalar:
    """Wrap ``x`` as a Scalar of the requested kind."""
    if isinstance(x, Scalar):
        return x
    if exact:
        if isinstance(x, float):
            raise MixedScalarError("refusing to convert a float to an exact scalar")
        return Scalar({0: x})
    return Scalar(value=float(x))
