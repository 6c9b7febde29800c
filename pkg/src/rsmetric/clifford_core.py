"""Clifford superalgebra C(V,-V), exterior algebra Lambda(V+V), and their traces.

Monomials are stored as a single 2n-bit integer: bit ``i`` (0 <= i < n) is
the generator e_{i+1}, bit ``n + j`` is ê_{j+1}.  The canonical order of a
monomial is increasing bit order, i.e. e_1 < ... < e_n < ê_1 < ... < ê_n.
Relations: e_i^2 = -1, ê_i^2 = +1, distinct generators anticommute.

The Fock representation acts on Lambda V, whose basis e_J is indexed by an
n-bit mask J (wedge in increasing index order):
    c(e_i) = eps(e_i) - iota(e_i),   ĉ(e_i) = eps(e_i) + iota(e_i).
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .scalar import MixedScalarError, Scalar, as_scalar


# ---------------------------------------------------------------------------
# monomial bookkeeping


def popcount(x: int) -> int:
    return bin(x).count("1")


def pack(n: int, e=(), ehat=()) -> int:
    """Pack 0-based index sets into a monomial mask."""
    mask = 0
    for i in e:
        if not 0 <= i < n:
            raise ValueError(f"index {i} out of range for n={n}")
        mask |= 1 << i
    for j in ehat:
        if not 0 <= j < n:
            raise ValueError(f"index {j} out of range for n={n}")
        mask |= 1 << (n + j)
    return mask


def split(n: int, mask: int) -> tuple[int, int]:
    """(maskE, maskEhat) of a packed monomial."""
    low = (1 << n) - 1
    return mask & low, (mask >> n) & low


def _reorder_parity(a: int, b: int) -> int:
    """Parity of transpositions needed to sort the concatenation a.b."""
    parity = 0
    while b:
        low = b & -b
        parity ^= popcount(a & ~((low << 1) - 1)) & 1
        b ^= low
    return parity


@lru_cache(maxsize=None)
def clifford_monomial_product(n: int, a: int, b: int) -> tuple[int, int]:
    """Return (sign, mask) with  mono(a) * mono(b) = sign * mono(mask)."""
    sign = -1 if _reorder_parity(a, b) else 1
    common = a & b
    # e_i^2 = -1 for the first n bits, ê_i^2 = +1 for the rest
    if popcount(common & ((1 << n) - 1)) & 1:
        sign = -sign
    return sign, a ^ b


@lru_cache(maxsize=None)
def wedge_monomial_product(a: int, b: int) -> tuple[int, int]:
    if a & b:
        return 0, 0
    return (-1 if _reorder_parity(a, b) else 1), a | b


def monomial_label(n: int, mask: int) -> str:
    me, mh = split(n, mask)
    es = [f"e{i + 1}" for i in range(n) if me >> i & 1]
    hs = [f"ê{i + 1}" for i in range(n) if mh >> i & 1]
    return " ".join(es + hs) if (es or hs) else "1"


# ---------------------------------------------------------------------------
# elements


def _coerce_coeff(c):
    if isinstance(c, Scalar):
        return c
    if isinstance(c, (float, np.floating)):
        return Scalar.from_float(float(c))
    if isinstance(c, (np.integer,)):
        c = int(c)
    return as_scalar(c)


class _GradedElement:
    """Sparse map from packed monomial masks to Scalars (no zeros stored)."""

    __slots__ = ("n", "terms")
    _joiner = " "

    def __init__(self, n: int, terms=None):
        if n < 0:
            raise ValueError("dimension must be non-negative")
        self.n = n
        limit = 1 << (2 * n)
        clean = {}
        for mask, c in (terms or {}).items():
            mask = int(mask)
            if not 0 <= mask < limit:
                raise ValueError(f"monomial mask {mask} out of range for n={n}")
            c = _coerce_coeff(c)
            if not c.is_zero():
                clean[mask] = c
        self.terms = clean

    # constructors
    @classmethod
    def scalar(cls, n: int, c=1):
        return cls(n, {0: c})

    @classmethod
    def monomial(cls, n: int, e=(), ehat=(), c=1):
        return cls(n, {pack(n, e, ehat): c})

    @classmethod
    def generator(cls, n: int, i: int, hat: bool = False):
        return cls.monomial(n, ehat=(i,)) if hat else cls.monomial(n, e=(i,))

    # structure
    def _check(self, other):
        if not isinstance(other, _GradedElement) or type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def _wrap_number(self, other):
        if isinstance(other, (_GradedElement,)):
            return other
        return type(self)(self.n, {0: other})

    def degree(self) -> int:
        """Filtration degree; -1 for the zero element."""
        return max((popcount(m) for m in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def is_exact(self) -> bool:
        return all(c.is_exact for c in self.terms.values())

    def coeff(self, mask: int) -> Scalar:
        return self.terms.get(mask, Scalar() if self.is_exact() or not self.terms else Scalar.from_float(0.0))

    def homogeneous_part(self, k: int):
        return type(self)(self.n, {m: c for m, c in self.terms.items() if popcount(m) == k})

    def even_part(self):
        return type(self)(self.n, {m: c for m, c in self.terms.items() if popcount(m) % 2 == 0})

    def scalar_part(self) -> Scalar:
        return self.terms.get(0, Scalar())

    def map_coeffs(self, f):
        return type(self)(self.n, {m: f(c) for m, c in self.terms.items()})

    def to_float(self):
        return self.map_coeffs(lambda c: c.to_float_scalar())

    def to_dense(self) -> np.ndarray:
        """Float coefficient vector of length 4^n (index = mask)."""
        out = np.zeros(1 << (2 * self.n))
        for m, c in self.terms.items():
            out[m] = float(c)
        return out

    @classmethod
    def from_dense(cls, n: int, vec, tol: float = 0.0):
        vec = np.asarray(vec, dtype=float)
        return cls(n, {int(m): float(vec[m]) for m in np.nonzero(np.abs(vec) > tol)[0]})

    # linear structure
    def __add__(self, other):
        other = self._wrap_number(other)
        self._check(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out[m] + c if m in out else c
        return type(self)(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return type(self)(self.n, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._wrap_number(other))

    def __rsub__(self, other):
        return self._wrap_number(other) + (-self)

    def scale(self, c):
        c = _coerce_coeff(c)
        return type(self)(self.n, {m: c * v for m, v in self.terms.items()})

    def _product(self, other):
        raise NotImplementedError

    def __mul__(self, other):
        if isinstance(other, _GradedElement):
            self._check(other)
            return self._product(other)
        return self.scale(other)

    def __rmul__(self, other):
        if isinstance(other, _GradedElement):
            return NotImplemented
        return self.scale(other)

    def __truediv__(self, other):
        if isinstance(other, _GradedElement):
            raise TypeError("division by an algebra element")
        other = _coerce_coeff(other)
        return type(self)(self.n, {m: v / other for m, v in self.terms.items()})

    def __eq__(self, other):
        if isinstance(other, _GradedElement):
            if type(other) is not type(self) or other.n != self.n:
                return False
            return self.terms == other.terms
        if isinstance(other, (int, float, Fraction, Scalar)):
            return self == self._wrap_number(other)
        return NotImplemented

    def __hash__(self):
        return hash((type(self).__name__, self.n, frozenset(self.terms.items())))

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, {self})"

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for m in sorted(self.terms, key=lambda x: (popcount(x), x)):
            label = monomial_label(self.n, m)
            if self._joiner != " ":
                label = label.replace(" ", self._joiner)
            parts.append(f"({self.terms[m]})·{label}")
        return " + ".join(parts)


class CliffordElement(_GradedElement):
    """Element of C(V,-V) in the canonical monomial basis."""

    __slots__ = ()

    def _product(self, other):
        n = self.n
        out: dict = {}
        for a, ca in self.terms.items():
            for b, cb in other.terms.items():
                s, m = clifford_monomial_product(n, a, b)
                v = ca * cb if s > 0 else -(ca * cb)
                out[m] = out[m] + v if m in out else v
        return CliffordElement(n, out)

    def supercommutator(self, other):
        """Graded commutator [a, b] for elements split by monomial parity."""
        total = CliffordElement(self.n)
        for pa in (0, 1):
            a = CliffordElement(self.n, {m: c for m, c in self.terms.items() if popcount(m) % 2 == pa})
            for pb in (0, 1):
                b = CliffordElement(self.n, {m: c for m, c in other.terms.items() if popcount(m) % 2 == pb})
                sign = -1 if (pa and pb) else 1
                total = total + a * b - (b * a).scale(sign)
        return total


class ExteriorElement(_GradedElement):
    """Element of Lambda(V + V) with the wedge product."""

    __slots__ = ()
    _joiner = "∧"

    def _product(self, other):
        out: dict = {}
        for a, ca in self.terms.items():
            for b, cb in other.terms.items():
                s, m = wedge_monomial_product(a, b)
                if s == 0:
                    continue
                v = ca * cb if s > 0 else -(ca * cb)
                out[m] = out[m] + v if m in out else v
        return ExteriorElement(self.n, out)

    def wedge(self, other):
        return self * other


def wedge(a: ExteriorElement, b: ExteriorElement) -> ExteriorElement:
    if not isinstance(a, ExteriorElement) or not isinstance(b, ExteriorElement):
        raise TypeError("wedge expects ExteriorElements")
    return a * b


def clifford_mul(a: CliffordElement, b: CliffordElement) -> CliffordElement:
    if not isinstance(a, CliffordElement) or not isinstance(b, CliffordElement):
        raise TypeError("clifford_mul expects CliffordElements")
    return a * b


# ---------------------------------------------------------------------------
# symbol map


def symbol(a: CliffordElement) -> ExteriorElement:
    return ExteriorElement(a.n, a.terms)


def symbol_k(a: CliffordElement, k: int) -> ExteriorElement:
    """Degree-k component of the symbol (the highest symbol when k = deg a)."""
    if k < 0 or k > 2 * a.n:
        raise ValueError(f"symbol degree {k} outside [0, {2 * a.n}]")
    return ExteriorElement(a.n, {m: c for m, c in a.terms.items() if popcount(m) == k})


def quantize(alpha: ExteriorElement) -> CliffordElement:
    return CliffordElement(alpha.n, alpha.terms)


def sigma0_projection(a: CliffordElement, k: int, n0: int) -> ExteriorElement:
    """sigma_k followed by dropping every monomial with an index >= n0 (0-based).

    The result lives in Lambda(V_0 + V_0) with dim V_0 = n0.
    """
    n = a.n
    if not 0 <= n0 <= n:
        raise ValueError(f"n0={n0} outside [0, {n}]")
    return restrict_exterior(symbol_k(a, k), n0)


def restrict_exterior(alpha: _GradedElement, n0: int) -> ExteriorElement:
    """Keep monomials in the first n0 indices of each copy, re-packed for dimension n0."""
    n = alpha.n
    keep = (1 << n0) - 1
    out = {}
    for m, c in alpha.terms.items():
        me, mh = split(n, m)
        if me & ~keep or mh & ~keep:
            continue
        out[me | (mh << n0)] = c
    return ExteriorElement(n0, out)


def embed_element(alpha: _GradedElement, n: int, offset: int = 0):
    """Embed an element over dimension k into dimension n, shifting indices by offset."""
    k = alpha.n
    if offset + k > n:
        raise ValueError("embedding does not fit")
    out = {}
    for m, c in alpha.terms.items():
        me, mh = split(k, m)
        out[(me << offset) | ((mh << offset) << n)] = c
    return type(alpha)(n, out)


# ---------------------------------------------------------------------------
# volume element and Berezin trace


def volume_sign(n: int) -> int:
    return -1 if (n * (n + 1) // 2) % 2 else 1


def volume_element(n: int) -> CliffordElement:
    """omega = pi^(n/2) (-1)^(n(n+1)/2) e_1...e_n ê_1...ê_n."""
    return CliffordElement(n, {(1 << (2 * n)) - 1: Scalar.exact(volume_sign(n), n)})


def volume_form(n: int) -> ExteriorElement:
    return symbol(volume_element(n))


def berezin_trace(alpha: ExteriorElement) -> Scalar:
    """Coefficient of the normalized volume element omega in alpha."""
    n = alpha.n
    top = alpha.terms.get((1 << (2 * n)) - 1)
    if top is None:
        return Scalar() if alpha.is_exact() else Scalar.from_float(0.0)
    if top.is_exact:
        return top * Scalar.exact(volume_sign(n), -n)
    return top * (volume_sign(n) * math.pi ** (-n / 2))


# ---------------------------------------------------------------------------
# Fock representation


@lru_cache(maxsize=None)
def _generator_action(n: int, i: int, hat: bool) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(targets, signs) of c(e_i) or ĉ(e_i) on the basis e_J of Lambda V."""
    targets, signs = [], []
    for J in range(1 << n):
        below = popcount(J & ((1 << i) - 1)) & 1
        s = -1 if below else 1
        if J >> i & 1 and not hat:
            s = -s
        targets.append(J ^ (1 << i))
        signs.append(s)
    return tuple(targets), tuple(signs)


@lru_cache(maxsize=None)
def monomial_action(n: int, mask: int) -> tuple[np.ndarray, np.ndarray]:
    """Signed permutation of the Fock image of a canonical monomial.

    Returns (targets, signs): basis vector J is sent to signs[J] * e_{targets[J]}.
    """
    me, mh = split(n, mask)
    # factors in canonical order; the operator applies the rightmost first
    factors = [(i, False) for i in range(n) if me >> i & 1] + [(j, True) for j in range(n) if mh >> j & 1]
    targets = np.arange(1 << n)
    signs = np.ones(1 << n, dtype=np.int64)
    for i, hat in reversed(factors):
        t, s = _generator_action(n, i, hat)
        t = np.asarray(t)
        s = np.asarray(s)
        signs = signs * s[targets]
        targets = t[targets]
    targets.setflags(write=False)
    signs.setflags(write=False)
    return targets, signs


@lru_cache(maxsize=None)
def monomial_matrix(n: int, mask: int) -> np.ndarray:
    t, s = monomial_action(n, mask)
    out = np.zeros((1 << n, 1 << n), dtype=np.int64)
    out[t, np.arange(1 << n)] = s
    out.setflags(write=False)
    return out


def form_degrees(n: int) -> np.ndarray:
    return np.array([popcount(J) for J in range(1 << n)])


def parity_signs(n: int) -> np.ndarray:
    return np.where(form_degrees(n) % 2 == 0, 1, -1)


class FockOperator:
    """Operator on Lambda V, stored exactly as {pi-exponent: rational matrix} or as a float matrix."""

    __slots__ = ("n", "blocks", "matrix")

    def __init__(self, n: int, blocks=None, matrix=None):
        self.n = n
        dim = 1 << n
        if matrix is not None:
            if blocks is not None:
                raise ValueError("give either blocks or matrix")
            self.matrix = np.asarray(matrix, dtype=float)
            self.blocks = None
            if self.matrix.shape != (dim, dim):
                raise ValueError("shape mismatch")
            return
        clean = {}
        for m, blk in (blocks or {}).items():
            blk = np.asarray(blk, dtype=object)
            if blk.shape != (dim, dim):
                raise ValueError("shape mismatch")
            if any(x != 0 for x in blk.flat):
                clean[int(m)] = blk
        self.blocks = clean
        self.matrix = None

    @classmethod
    def identity(cls, n: int) -> "FockOperator":
        return cls(n, {0: _rational_matrix(np.eye(1 << n, dtype=np.int64))})

    @classmethod
    def zero(cls, n: int) -> "FockOperator":
        return cls(n, {})

    @classmethod
    def from_integer_matrix(cls, n: int, mat, scale=1) -> "FockOperator":
        return cls(n, {0: _rational_matrix(mat) * Fraction(scale)})

    @property
    def is_exact(self) -> bool:
        return self.blocks is not None

    def to_float_matrix(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        out = np.zeros((1 << self.n, 1 << self.n))
        for m, blk in self.blocks.items():
            out += blk.astype(float) * math.pi ** (m / 2)
        return out

    def entry(self, row: int, col: int) -> Scalar:
        if self.matrix is not None:
            return Scalar.from_float(self.matrix[row, col])
        return Scalar({m: blk[row, col] for m, blk in self.blocks.items()})

    def _check(self, other):
        if not isinstance(other, FockOperator):
            raise TypeError("expected FockOperator")
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        if other.is_exact != self.is_exact:
            raise MixedScalarError("cannot mix exact and float Fock operators")

    def __add__(self, other):
        self._check(other)
        if not self.is_exact:
            return FockOperator(self.n, matrix=self.matrix + other.matrix)
        out = {m: b.copy() for m, b in self.blocks.items()}
        for m, b in other.blocks.items():
            out[m] = out[m] + b if m in out else b.copy()
        return FockOperator(self.n, out)

    def __neg__(self):
        if not self.is_exact:
            return FockOperator(self.n, matrix=-self.matrix)
        return FockOperator(self.n, {m: -b for m, b in self.blocks.items()})

    def __sub__(self, other):
        return self + (-other)

    def __matmul__(self, other):
        self._check(other)
        if not self.is_exact:
            return FockOperator(self.n, matrix=self.matrix @ other.matrix)
        out = {}
        for m1, b1 in self.blocks.items():
            for m2, b2 in other.blocks.items():
                prod = b1.dot(b2)
                out[m1 + m2] = out[m1 + m2] + prod if (m1 + m2) in out else prod
        return FockOperator(self.n, out)

    def scale(self, c) -> "FockOperator":
        c = _coerce_coeff(c)
        if not self.is_exact:
            return FockOperator(self.n, matrix=self.matrix * float(c))
        if not c.is_exact:
            raise MixedScalarError("cannot scale an exact operator by a float")
        out = {}
        for m1, r in c.terms.items():
            for m2, b in self.blocks.items():
                out[m1 + m2] = out[m1 + m2] + b * r if (m1 + m2) in out else b * r
        return FockOperator(self.n, out)

    def __eq__(self, other):
        if not isinstance(other, FockOperator) or other.n != self.n:
            return NotImplemented
        if self.is_exact != other.is_exact:
            return False
        if not self.is_exact:
            return bool(np.array_equal(self.matrix, other.matrix))
        keys = set(self.blocks) | set(other.blocks)
        zero = _rational_matrix(np.zeros((1 << self.n, 1 << self.n), dtype=np.int64))
        return all(np.array_equal(self.blocks.get(k, zero), other.blocks.get(k, zero)) for k in keys)

    def __hash__(self):
        return id(self)

    def supertrace(self) -> Scalar:
        """Signed trace with sign (-1)^(form degree)."""
        sg = parity_signs(self.n)
        if not self.is_exact:
            return Scalar.from_float(float(np.dot(sg, np.diag(self.matrix))))
        return Scalar({m: sum((int(s) * blk[J, J] for J, s in enumerate(sg)), Fraction(0))
                       for m, blk in self.blocks.items()})

    def trace(self) -> Scalar:
        if not self.is_exact:
            return Scalar.from_float(float(np.trace(self.matrix)))
        return Scalar({m: sum(blk.diagonal(), Fraction(0)) for m, blk in self.blocks.items()})

    def __repr__(self):
        return f"FockOperator(n={self.n}, exact={self.is_exact})"


def _rational_matrix(mat) -> np.ndarray:
    mat = np.asarray(mat)
    out = np.empty(mat.shape, dtype=object)
    for idx, v in np.ndenumerate(mat):
        out[idx] = Fraction(v) if not isinstance(v, Fraction) else v
    return out


def fock_rep(a: CliffordElement) -> FockOperator:
    """Image of a under c (x) ĉ on Lambda V."""
    n = a.n
    dim = 1 << n
    cols = np.arange(dim)
    if a.terms and not a.is_exact():
        if any(c.is_exact for c in a.terms.values()):
            raise MixedScalarError("element mixes exact and float coefficients")
        mat = np.zeros((dim, dim))
        for mask, c in a.terms.items():
            t, s = monomial_action(n, mask)
            mat[t, cols] += s * float(c)
        return FockOperator(n, matrix=mat)
    # integer numerators over a common denominator per pi-exponent
    grouped: dict = {}
    for mask, c in a.terms.items():
        for m, r in c.terms.items():
            grouped.setdefault(m, []).append((mask, r))
    blocks = {}
    for m, items in grouped.items():
        den = math.lcm(*(r.denominator for _, r in items))
        acc = np.zeros((dim, dim), dtype=object)
        acc[:] = 0
        for mask, r in items:
            t, s = monomial_action(n, mask)
            acc[t, cols] += s * (r.numerator * (den // r.denominator))
        blocks[m] = _divide_matrix(acc, den)
    return FockOperator(n, blocks)


def _divide_matrix(acc: np.ndarray, den: int) -> np.ndarray:
    out = np.empty(acc.shape, dtype=object)
    for idx, v in np.ndenumerate(acc):
        out[idx] = Fraction(int(v), den)
    return out


def fock_inverse(op: FockOperator) -> CliffordElement:
    """Clifford element whose Fock image is op (c (x) ĉ is an isomorphism onto End Lambda V)."""
    n = op.n
    dim = 1 << n
    cols = np.arange(dim)
    out = {}
    mat = op.to_float_matrix() if not op.is_exact else None
    for mask in range(1 << (2 * n)):
        t, s = monomial_action(n, mask)
        # coefficient = tr(P_mask^T op) / 2^n
        if mat is not None:
            v = float(np.dot(s, mat[t, cols])) / dim
            if v != 0.0:
                out[mask] = v
        else:
            sc = Scalar({m: sum((int(si) * blk[ti, j] for j, (ti, si) in enumerate(zip(t, s))), Fraction(0)) / dim
                         for m, blk in op.blocks.items()})
            if not sc.is_zero():
                out[mask] = sc
    return CliffordElement(n, out)


def number_operator(n: int) -> FockOperator:
    return FockOperator.from_integer_matrix(n, np.diag(form_degrees(n)))


def parity_operator(n: int) -> FockOperator:
    """(-1)^N."""
    return FockOperator.from_integer_matrix(n, np.diag(parity_signs(n)))


def exterior_power_matrix(g: np.ndarray) -> np.ndarray:
    """Matrix of Lambda g on Lambda V (basis e_J, J ascending), for any square g."""
    g = np.asarray(g)
    n = g.shape[0]
    dim = 1 << n
    idx = [[i for i in range(n) if J >> i & 1] for J in range(dim)]
    dtype = object if g.dtype == object else float
    out = np.zeros((dim, dim), dtype=dtype)
    for J in range(dim):
        for K in range(dim):
            if len(idx[J]) != len(idx[K]):
                continue
            if not idx[J]:
                out[K, J] = 1
                continue
            sub = g[np.ix_(idx[K], idx[J])]
            out[K, J] = _det(sub)
    return out


def _det(m):
    if m.dtype != object:
        return float(np.linalg.det(m))
    k = m.shape[0]
    if k == 1:
        return m[0, 0]
    total = 0
    for j in range(k):
        minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
        total += (-1) ** j * m[0, j] * _det(minor)
    return total


def exterior_power_element(g: np.ndarray) -> CliffordElement:
    """Lambda g as an element of C(V,-V) (float coefficients unless g is an object array)."""
    n = np.asarray(g).shape[0]
    mat = exterior_power_matrix(g)
    if mat.dtype == object:
        return fock_inverse(FockOperator(n, {0: _rational_matrix(mat)}))
    return fock_inverse(FockOperator(n, matrix=mat))


# ---------------------------------------------------------------------------
# supertraces


def supertrace_fock(a: CliffordElement) -> Scalar:
    return fock_rep(a).supertrace()


def supertrace_berezin(a: CliffordElement) -> Scalar:
    t = berezin_trace(symbol(a))
    if t.is_exact:
        return Scalar.four_pi_power(a.n) * t
    return t * (4 * math.pi) ** (a.n / 2)


def supertrace(a: CliffordElement, method: str = "fock") -> Scalar:
    if method == "fock":
        return supertrace_fock(a)
    if method == "berezin":
        return supertrace_berezin(a)
    raise ValueError(f"unknown supertrace method {method!r}")


# ---------------------------------------------------------------------------
# exponentials


def _is_even(alpha: _GradedElement) -> bool:
    return all(popcount(m) % 2 == 0 for m in alpha.terms)


def exterior_exp(alpha: ExteriorElement) -> ExteriorElement:
    """exp in the even (commutative) part of Lambda(V+V); the series terminates."""
    if not _is_even(alpha):
        raise ValueError("exterior_exp needs an even-graded element")
    n = alpha.n
    s0 = alpha.scalar_part()
    nil = ExteriorElement(n, {m: c for m, c in alpha.terms.items() if m})
    exact = alpha.is_exact()
    one = 1 if exact else 1.0
    total = ExteriorElement.scalar(n, one)
    term = ExteriorElement.scalar(n, one)
    k = 0
    while True:
        k += 1
        term = (term * nil) / (k if exact else float(k))
        if term.is_zero():
            break
        total = total + term
    if s0.is_zero():
        return total
    if s0.is_exact:
        raise ValueError("exp of a nonzero exact scalar part is not exact; convert to float")
    return total.scale(math.exp(float(s0)))


def exterior_log(alpha: ExteriorElement) -> ExteriorElement:
    """Formal log of 1 + nilpotent (even) element."""
    if not _is_even(alpha):
        raise ValueError("exterior_log needs an even-graded element")
    s0 = alpha.scalar_part()
    if s0 != (1 if alpha.is_exact() else Scalar.from_float(1.0)):
        raise ValueError("exterior_log needs scalar part 1")
    x = alpha - ExteriorElement.scalar(alpha.n, 1 if alpha.is_exact() else 1.0)
    total = ExteriorElement(alpha.n)
    term = ExteriorElement.scalar(alpha.n, 1 if alpha.is_exact() else 1.0)
    k = 0
    while True:
        k += 1
        term = term * x
        if term.is_zero():
            break
        total = total + term.scale(Fraction((-1) ** (k + 1), k) if alpha.is_exact() else (-1) ** (k + 1) / k)
    return total


def _check_antisymmetric(A) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if A.dtype == object:
        bad = any(A[i, j] != -A[j, i] for i in range(A.shape[0]) for j in range(A.shape[0]))
    else:
        bad = not np.allclose(A, -A.T, atol=1e-14, rtol=0)
    if bad:
        raise ValueError("matrix is not antisymmetric")
    return A


def minus_lambda(A) -> CliffordElement:
    """-lambda A = 1/2 sum_{i<j} A_ij (c_i c_j - ĉ_i ĉ_j), A = sum_{i<j} A_ij E_ij."""
    A = _check_antisymmetric(A)
    n = A.shape[0]
    exact = A.dtype == object or np.issubdtype(A.dtype, np.integer)
    terms = {}
    for i in range(n):
        for j in range(i + 1, n):
            a = A[i, j]
            if a == 0:
                continue
            h = Fraction(a) / 2 if exact else float(a) / 2
            terms[pack(n, e=(i, j))] = h
            terms[pack(n, ehat=(i, j))] = -h
    return CliffordElement(n, terms)


def lambda_exp(A, mode: str = "float", max_terms: int | None = None) -> CliffordElement:
    """exp(-lambda A) in C(V,-V).

    ``mode='float'``: matrix exponential of the Fock image, mapped back.
    ``mode='exact'``: truncated series; raises unless the result is group-like.
    """
    A = _check_antisymmetric(A)
    n = A.shape[0]
    if mode == "float":
        X = fock_rep(minus_lambda(np.asarray(A, dtype=float)))
        return fock_inverse(FockOperator(n, matrix=expm(X.to_float_matrix())))
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    X = minus_lambda(A)
    limit = max_terms if max_terms is not None else 4 * n
    total = CliffordElement.scalar(n, 1)
    term = CliffordElement.scalar(n, 1)
    for k in range(1, limit + 1):
        term = (term * X) / k
        if term.is_zero():
            break
        total = total + term
    inv = CliffordElement.scalar(n, 1)
    term = CliffordElement.scalar(n, 1)
    for k in range(1, limit + 1):
        term = (term * (-X)) / k
        if term.is_zero():
            break
        inv = inv + term
    if total * inv != CliffordElement.scalar(n, 1):
        raise ValueError("exact series did not terminate; use mode='float'")
    return total


# ---------------------------------------------------------------------------
# vectorised tables for float work at small n


class DenseAlgebra:
    """Dense multiplication tables of the wedge or Clifford product for a fixed n.

    Elements are float arrays of shape (4^n,) or (4^n, m, m) for End F-valued
    coefficients.  Intended for n <= 4 (the table has 16^n entries).
    """

    def __init__(self, n: int, kind: str = "wedge"):
        if kind not in ("wedge", "clifford"):
            raise ValueError("kind must be 'wedge' or 'clifford'")
        if n > 5:
            raise ValueError("dense tables are limited to n <= 5")
        from scipy import sparse

        self.n = n
        self.kind = kind
        self.size = size = 1 << (2 * n)
        rows, cols, vals = [], [], []
        for a in range(size):
            for b in range(size):
                if kind == "wedge":
                    s, m = wedge_monomial_product(a, b)
                else:
                    s, m = clifford_monomial_product(n, a, b)
                if s:
                    rows.append(m)
                    cols.append(a * size + b)
                    vals.append(float(s))
        self.table = sparse.csr_matrix((vals, (rows, cols)), shape=(size, size * size))
        cols = np.asarray(cols, dtype=np.int64)
        self._out, self._left, self._right = np.asarray(rows, dtype=np.int64), cols // size, cols % size
        self._sign = np.asarray(vals)
        self.degrees = np.array([popcount(m) for m in range(size)])

    def mul(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim == 1 and y.ndim == 1:
            return self.table @ np.outer(x, y).ravel()
        if x.ndim == 1:
            x = x[:, None, None] * np.eye(y.shape[1])
        if y.ndim == 1:
            y = y[:, None, None] * np.eye(x.shape[1])
        m = x.shape[1]
        terms = np.matmul(x[self._left], y[self._right]) * self._sign[:, None, None]
        out = np.zeros((self.size, m, m))
        np.add.at(out, self._out, terms)
        return out

    def exp_nilpotent(self, x: np.ndarray) -> np.ndarray:
        """exp of an element with zero scalar part in an algebra where it is nilpotent."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            one = np.zeros(self.size)
            one[0] = 1.0
        else:
            one = np.zeros_like(x)
            one[0] = np.eye(x.shape[1])
        total = one.copy()
        term = one.copy()
        for k in range(1, 2 * self.n + 2):
            term = self.mul(term, x) / k
            if not np.any(term):
                break
            total = total + term
        return total

    def element(self, alpha: _GradedElement) -> np.ndarray:
        if alpha.n != self.n:
            raise ValueError("dimension mismatch")
        return alpha.to_dense()

    def berezin(self, x: np.ndarray):
        """Berezin trace (and End F trace for matrix coefficients)."""
        top = np.asarray(x)[self.size - 1]
        if np.ndim(top) == 2:
            top = np.trace(top)
        return float(top) * volume_sign(self.n) * math.pi ** (-self.n / 2)
