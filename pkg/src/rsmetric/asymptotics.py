"""Gaussian moment calculus on so(V) and Clifford-valued small-t limits.

Coordinates on so(V) are A_ij for i < j (lexicographic), so a multi-index has
N = n(n-1)/2 slots.  The heat parameter t is symbolic throughout: every
operation returns exact coefficients of t-powers or the t^0 limit itself.

Two independent routes to the same limits are provided:

* the right-hand side, a Berezin trace of an exterior product
  (``asymp4_rhs``, ``power_series_limit``, ``split_limit``);
* a brute-force oracle that expands Str[phi(A) exp(-lambda A)] in A through
  Fock matrices, then applies the Gaussian limit lemma (``asymp4_lhs_oracle``,
  ``split_limit_oracle``).  It never touches symbols or Berezin traces.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .clifford_core import (
    CliffordElement,
    ExteriorElement,
    berezin_trace,
    clifford_monomial_product,
    exterior_exp,
    fock_rep,
    monomial_matrix,
    pack,
    parity_signs,
    popcount,
    sigma0_projection,
    split,
    supertrace,
    symbol_k,
    wedge_monomial_product,
)
from .scalar import Scalar, as_scalar


class DivergentLimit(ArithmeticError):
    """The t -> 0 limit does not exist: a singular Gaussian moment survives."""


class FiltrationError(ValueError):
    """A Clifford coefficient exceeds its declared filtration bound."""


# ---------------------------------------------------------------------------
# multi-indices


class MultiIndex(tuple):
    """Tuple of non-negative integers."""

    def __new__(cls, values=()):
        values = tuple(int(v) for v in values)
        if any(v < 0 for v in values):
            raise ValueError("multi-index entries must be non-negative")
        return super().__new__(cls, values)

    @property
    def order(self) -> int:
        return sum(self)

    @property
    def is_even(self) -> bool:
        return all(v % 2 == 0 for v in self)

    def half(self) -> "MultiIndex":
        if not self.is_even:
            raise ValueError("half of an odd multi-index")
        return MultiIndex(v // 2 for v in self)

    def factorial(self) -> int:
        return math.prod(math.factorial(v) for v in self)

    def minus_unit(self, v: int):
        if self[v] == 0:
            return None
        return MultiIndex(self[:v] + (self[v] - 1,) + self[v + 1:])


def multi_indices(N: int, k: int):
    """All multi-indices with N slots and order k, lexicographically descending."""
    if N == 0:
        if k == 0:
            yield MultiIndex()
        return
    for first in range(k, -1, -1):
        for rest in multi_indices(N - 1, k - first):
            yield MultiIndex((first,) + rest)


def so_pairs(n: int) -> list[tuple[int, int]]:
    """Index pairs (i, j), i < j, labelling the coordinates A_ij of so(V)."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def so_dim(n: int) -> int:
    return n * (n - 1) // 2


def moment_factor(alpha) -> int:
    """alpha! / (alpha/2)! for an even multi-index."""
    alpha = MultiIndex(alpha)
    return alpha.factorial() // alpha.half().factorial()


# ---------------------------------------------------------------------------
# Gaussian moments


def gaussian_moment(alpha):
    """(4 pi t)^(-N/2) int exp(-|x|^2/4t) x^alpha dx  as  (power of t, coefficient).

    Odd multi-indices give ``(None, 0)``.
    """
    alpha = MultiIndex(alpha)
    if not alpha.is_even:
        return None, Scalar()
    return Fraction(alpha.order, 2), Scalar.exact(moment_factor(alpha))


def gaussian_limit(taylor: dict, i) -> Scalar:
    """lim_{t->0} (4 pi t)^(-N/2) t^(-i) int exp(-|x|^2/4t) phi(x) dx from the Taylor data of phi.

    ``i`` may be a half-integer, in which case no even moment sits at the
    critical order and the limit is 0 (if it exists).
    """
    i = Fraction(i)
    total = None
    for alpha, c in taylor.items():
        alpha = MultiIndex(alpha)
        c = as_scalar(c) if not isinstance(c, float) else Scalar.from_float(c)
        if total is None:
            total = Scalar() if c.is_exact else Scalar.from_float(0.0)
        if not alpha.is_even or c.is_zero():
            continue
        if alpha.order < 2 * i:
            raise DivergentLimit(f"nonzero even coefficient at {tuple(alpha)} below order {2 * i}")
        if alpha.order == 2 * i:
            total = total + c * moment_factor(alpha)
    return total if total is not None else Scalar()


# ---------------------------------------------------------------------------
# the series Q(A) = exp(-lambda A) and P(A) = exp(sigma_2(-lambda A))


def series_denominator(k: int) -> int:
    """Q_alpha and P_alpha are stored as integer numerators over 2^k k!, k = |alpha|."""
    return (1 << k) * math.factorial(k)


@lru_cache(maxsize=None)
def _right_action(n: int, mask: int, kind: str):
    """Signed permutation x -> x * m on coefficient vectors over 4^n masks."""
    size = 1 << (2 * n)
    targets = np.empty(size, dtype=np.int64)
    signs = np.empty(size, dtype=np.int64)
    for a in range(size):
        if kind == "clifford":
            s, b = clifford_monomial_product(n, a, mask)
        else:
            s, b = wedge_monomial_product(a, mask)
        targets[a] = b
        signs[a] = s
    return targets, signs


def _series_numerators(n: int, d: int, kind: str) -> dict:
    """Numerators of the coefficients of exp(sum_v A_v X_v), X_v = (m_v1 - m_v2)/2.

    m_v1 = e_i e_j and m_v2 = ê_i ê_j.  With S_alpha the sum of all ordered
    words with letter counts alpha, the coefficient is S_alpha / |alpha|!, and
    S_alpha = sum_v S_{alpha - 1_v} X_v; the numerator 2^k S_alpha is integral.
    """
    pairs = so_pairs(n)
    N = len(pairs)
    size = 1 << (2 * n)
    acts = []
    for i, j in pairs:
        acts.append((_right_action(n, pack(n, e=(i, j)), kind), _right_action(n, pack(n, ehat=(i, j)), kind)))
    one = np.zeros(size, dtype=np.int64)
    one[0] = 1
    out = {MultiIndex((0,) * N): one}
    for k in range(1, d + 1):
        for alpha in multi_indices(N, k):
            acc = np.zeros(size, dtype=np.int64)
            for v in range(N):
                prev = alpha.minus_unit(v)
                if prev is None:
                    continue
                x = out[prev]
                for sgn, ((t, s)) in zip((1, -1), acts[v]):
                    np.add.at(acc, t, sgn * s * x)
            out[alpha] = acc
    return out


@dataclass(frozen=True)
class SeriesQP:
    """Coefficients Q_alpha of exp(-lambda A) and P_alpha of exp(sigma_2(-lambda A)), |alpha| <= d."""

    n: int
    d: int
    q_num: dict = field(repr=False)
    p_num: dict = field(repr=False)

    def _element(self, cls, num, alpha):
        alpha = MultiIndex(alpha)
        den = series_denominator(alpha.order)
        vec = num[alpha]
        return cls(self.n, {int(m): Fraction(int(vec[m]), den) for m in np.nonzero(vec)[0]})

    def Q(self, alpha) -> CliffordElement:
        return self._element(CliffordElement, self.q_num, alpha)

    def P(self, alpha) -> ExteriorElement:
        return self._element(ExteriorElement, self.p_num, alpha)

    def indices(self):
        return list(self.q_num)

    def check_invariant(self) -> bool:
        """P_alpha = sigma_{2|alpha|} Q_alpha for every stored alpha."""
        deg = np.array([popcount(m) for m in range(1 << (2 * self.n))])
        for alpha, q in self.q_num.items():
            top = np.where(deg == 2 * alpha.order, q, 0)
            if not np.array_equal(top, self.p_num[alpha]):
                return False
        return True


@lru_cache(maxsize=None)
def qp_series(n: int, d: int) -> SeriesQP:
    if d < 0:
        raise ValueError("degree must be non-negative")
    if d > 2 * n:
        raise ValueError(f"degree {d} exceeds the nilpotency bound 2n = {2 * n}")
    return SeriesQP(n, d, _series_numerators(n, d, "clifford"), _series_numerators(n, d, "wedge"))


def moment_identity_check(n: int, d: int | None = None) -> bool:
    """Compare sum_{alpha even} P_alpha alpha!/(alpha/2)! A^alpha with exp(-1/2 sum A_ij^2 e_i e_j ê_i ê_j).

    The right side factorises (the W_ij = e_i e_j ê_i ê_j are even and square
    to zero), so its A^alpha coefficient is prod_{alpha_v = 2} (-1/2 W_v) when
    every alpha_v is 0 or 2, and 0 otherwise.
    """
    d = 2 * n if d is None else d
    series = qp_series(n, d)
    pairs = so_pairs(n)
    N = len(pairs)
    W = [ExteriorElement.monomial(n, e=(i, j), ehat=(i, j)) for i, j in pairs]
    for k in range(0, d + 1, 2):
        for alpha in multi_indices(N, k):
            if not alpha.is_even:
                continue
            lhs = series.P(alpha).scale(moment_factor(alpha))
            if all(a in (0, 2) for a in alpha):
                rhs = ExteriorElement.scalar(n, 1)
                for v, a in enumerate(alpha):
                    if a == 2:
                        rhs = rhs * W[v].scale(Fraction(-1, 2))
            else:
                rhs = ExteriorElement(n)
            if lhs != rhs:
                return False
    return True


@lru_cache(maxsize=None)
def _fock_series(n: int, d: int) -> dict:
    """Integer Fock matrices of the numerators 2^k S_alpha (see _series_numerators)."""
    pairs = so_pairs(n)
    N = len(pairs)
    gens = [monomial_matrix(n, pack(n, e=(i, j))) - monomial_matrix(n, pack(n, ehat=(i, j))) for i, j in pairs]
    out = {MultiIndex((0,) * N): np.eye(1 << n, dtype=np.int64)}
    for k in range(1, d + 1):
        for alpha in multi_indices(N, k):
            acc = np.zeros((1 << n, 1 << n), dtype=np.int64)
            for v in range(N):
                prev = alpha.minus_unit(v)
                if prev is not None:
                    acc += out[prev] @ gens[v]
            out[alpha] = acc
    return out


# ---------------------------------------------------------------------------
# Clifford-valued polynomial maps on so(V)


def _as_matrix(entry, n: int):
    if isinstance(entry, CliffordElement):
        return ((entry,),)
    rows = tuple(tuple(x if isinstance(x, CliffordElement) else CliffordElement.scalar(n, x) for x in row)
                 for row in entry)
    if any(len(r) != len(rows) for r in rows):
        raise ValueError("End F coefficient must be a square matrix")
    return rows


class CliffordPolynomialMap:
    """phi(A) = sum_alpha A^alpha phi_alpha with phi_alpha in C(V,-V) (x) End F.

    ``coeffs`` maps multi-indices (N = n(n-1)/2 slots) to either a
    CliffordElement (rank-one fibre) or a square nested sequence of them.
    """

    def __init__(self, n: int, coeffs: dict, bound: int | None = None):
        self.n = n
        N = so_dim(n)
        self.coeffs = {}
        fiber = None
        for alpha, entry in coeffs.items():
            alpha = MultiIndex(alpha)
            if len(alpha) != N:
                raise ValueError(f"multi-index {tuple(alpha)} needs {N} slots")
            mat = _as_matrix(entry, n)
            if fiber is None:
                fiber = len(mat)
            elif len(mat) != fiber:
                raise ValueError("inconsistent fibre dimension")
            for row in mat:
                for x in row:
                    if x.n != n:
                        raise ValueError("dimension mismatch")
            self.coeffs[alpha] = mat
        self.fiber_dim = fiber or 1
        deg = max((x.degree() for m in self.coeffs.values() for row in m for x in row), default=-1)
        if bound is None:
            bound = max(deg, 0)
        elif deg > bound:
            raise FiltrationError(f"coefficient of filtration degree {deg} exceeds bound {bound}")
        self.bound = bound

    @classmethod
    def constant(cls, a, bound: int | None = None):
        mat = _as_matrix(a, a.n if isinstance(a, CliffordElement) else a[0][0].n)
        n = mat[0][0].n
        return cls(n, {(0,) * so_dim(n): mat}, bound)

    def check_bound(self, bound: int):
        for m in self.coeffs.values():
            for row in m:
                for x in row:
                    if x.degree() > bound:
                        raise FiltrationError(f"coefficient of degree {x.degree()} exceeds {bound}")

    def trace_coeff(self, alpha) -> CliffordElement:
        """sum_k phi_alpha[k][k]; enough for every (Str (x) Tr) of phi times scalar-in-End F factors."""
        mat = self.coeffs.get(MultiIndex(alpha))
        if mat is None:
            return CliffordElement(self.n)
        total = mat[0][0]
        for k in range(1, len(mat)):
            total = total + mat[k][k]
        return total

    def at_zero_trace(self) -> CliffordElement:
        return self.trace_coeff((0,) * so_dim(self.n))

    def left_multiply(self, a: CliffordElement) -> "CliffordPolynomialMap":
        return CliffordPolynomialMap(self.n, {alpha: tuple(tuple(a * x for x in row) for row in m)
                                               for alpha, m in self.coeffs.items()})


# ---------------------------------------------------------------------------
# small-time limit: right-hand side and brute-force oracle


@lru_cache(maxsize=None)
def gaussian_exponential(n: int) -> ExteriorElement:
    """exp(-1/2 sum_{i<j} e_i e_j ê_i ê_j)."""
    arg = ExteriorElement(n)
    for i, j in so_pairs(n):
        arg = arg + ExteriorElement.monomial(n, e=(i, j), ehat=(i, j), c=Fraction(-1, 2))
    return exterior_exp(arg)


def _top_symbol(a: CliffordElement, k: int) -> ExteriorElement:
    if k > 2 * a.n:
        return ExteriorElement(a.n)
    return symbol_k(a, k)


def asymp4_rhs(phi: CliffordPolynomialMap, i) -> Scalar:
    """T(exp(-1/2 sum e_i e_j ê_i ê_j) (sigma_{4i} phi)(0)), trace over End F included."""
    i = int(i)
    phi.check_bound(4 * i)
    s = _top_symbol(phi.at_zero_trace(), 4 * i)
    return berezin_trace(gaussian_exponential(phi.n) * s)


class _SupertracePairing:
    """a |-> Str[a X] for X with integer Fock matrix, with a's Fock data precomputed."""

    def __init__(self, a: CliffordElement):
        op = fock_rep(a)
        par = parity_signs(a.n)
        self.exact = op.is_exact
        if self.exact:
            # integer numerators over one denominator per pi-power
            self.blocks = {}
            for m, blk in op.blocks.items():
                den = math.lcm(*(x.denominator for x in blk.flat))
                num = np.array([[int(x * den) for x in row] for row in blk], dtype=object)
                self.blocks[m] = ((par[:, None] * num).astype(object), den)
        else:
            self.matrix = op.matrix * par[:, None]

    def __call__(self, num: np.ndarray, den: int) -> Scalar:
        numT = num.T.astype(object)
        if self.exact:
            return Scalar({m: Fraction(int(np.sum(w * numT)), d * den) for m, (w, d) in self.blocks.items()})
        return Scalar.from_float(float(np.sum(self.matrix * num.T)) / den)


def lhs_taylor(phi: CliffordPolynomialMap, d: int, even_only: bool = False) -> dict:
    """Taylor coefficients of A -> (Str (x) Tr)[phi(A) exp(-lambda A)] through order d, via Fock matrices."""
    n = phi.n
    N = so_dim(n)
    fock = _fock_series(n, d)
    pairings = {beta: _SupertracePairing(phi.trace_coeff(beta)) for beta in phi.coeffs}
    out = {}
    for k in range(d + 1):
        for gamma in multi_indices(N, k):
            if even_only and not gamma.is_even:
                continue
            total = None
            for beta, pair in pairings.items():
                if any(g < b for g, b in zip(gamma, beta)):
                    continue
                rest = MultiIndex(g - b for g, b in zip(gamma, beta))
                term = pair(fock[rest], series_denominator(rest.order))
                total = term if total is None else total + term
            out[gamma] = total if total is not None else Scalar()
    return out


def asymp4_lhs_oracle(phi: CliffordPolynomialMap, i) -> Scalar:
    """Brute-force t^0 limit of (4 pi t)^(-dim Q/2) t^i int exp(-|A|^2/4t) Str[phi(A) exp(-lambda A)] dA.

    dim Q = n + N; the prefactor splits as (4 pi)^(-n/2) (4 pi t)^(-N/2) t^(-(n/2 - i)),
    so the Gaussian limit lemma is applied with exponent n/2 - i.
    """
    n = phi.n
    i_prime = Fraction(n, 2) - Fraction(i)
    d = max(0, math.floor(2 * i_prime))
    d = min(d, 2 * n)
    # odd moments integrate to zero, so only even coefficients matter
    taylor = lhs_taylor(phi, d, even_only=True)
    lim = gaussian_limit(taylor, i_prime)
    if lim.is_exact:
        return lim * Scalar.four_pi_power(-n)
    return lim * (4 * math.pi) ** (-n / 2)


def power_series_limit(Phi) -> Scalar:
    """sum_i T(exp(-1/2 sum e e ê ê) (sigma_{4i} Phi_i)(0)) for Phi = [Phi_0, Phi_1, ...]."""
    total = None
    for i, phi in enumerate(Phi):
        term = asymp4_rhs(phi, i)
        total = term if total is None else total + term
    return total if total is not None else Scalar()


def power_series_limit_oracle(Phi) -> Scalar:
    total = None
    for i, phi in enumerate(Phi):
        term = asymp4_lhs_oracle(phi, i)
        total = term if total is None else total + term
    return total if total is not None else Scalar()


# ---------------------------------------------------------------------------
# split version over V = V_0 + V_1


def restrict_to_tail(a: CliffordElement, n0: int) -> CliffordElement:
    """Rewrite an element supported on indices >= n0 as an element of C(V_1,-V_1)."""
    n = a.n
    n1 = n - n0
    low = (1 << n0) - 1
    out = {}
    for m, c in a.terms.items():
        me, mh = split(n, m)
        if me & low or mh & low:
            raise ValueError("a_1 must be supported on the V_1 indices")
        out[(me >> n0) | ((mh >> n0) << n1)] = c
    return CliffordElement(n1, out)


def quarter_gaussian_exponential(n0: int) -> ExteriorElement:
    """exp(-1/4 sum_{i,j} e_i e_j ê_i ê_j) over V_0, summing over all ordered pairs."""
    arg = ExteriorElement(n0)
    for i, j in itertools.product(range(n0), repeat=2):
        if i == j:
            continue
        # for i > j, reordering e_i e_j and ê_i ê_j costs two signs, so the
        # canonical monomial enters with coefficient -1/4 either way
        arg = arg + ExteriorElement.monomial(n0, e=(i, j), ehat=(i, j), c=Fraction(-1, 4))
    return exterior_exp(arg)


def split_limit(a1: CliffordElement, Phi, n0: int) -> Scalar:
    """Str_1(a_1) T_0(exp{-1/4 sum_{i,j<=n0} e_i e_j ê_i ê_j} sum_i (sigma^0_{4i} Phi_i)(0))."""
    n = a1.n
    if not 0 <= n0 <= n:
        raise ValueError("n0 out of range")
    str1 = supertrace(restrict_to_tail(a1, n0))
    s = ExteriorElement(n0)
    for i, phi in enumerate(Phi):
        if phi.n != n:
            raise ValueError("dimension mismatch")
        phi.check_bound(4 * i)
        if 4 * i > 2 * n0:
            continue
        s = s + sigma0_projection(phi.at_zero_trace(), 4 * i, n0)
    g = quarter_gaussian_exponential(n0)
    if not (s.is_exact() and str1.is_exact):
        g = g.to_float()
        if s.is_exact():
            s = s.to_float()
        if str1.is_exact:
            str1 = str1.to_float_scalar()
    return str1 * berezin_trace(g * s)


def split_limit_oracle(a1: CliffordElement, Phi, n0: int) -> Scalar:
    """(4 pi)^(n1/2) sum_i LIM (4 pi t)^(-dim Q/2) t^(i + n1/2) int ... Str[a_1 Phi_i(A) exp(-lambda A)] dA."""
    n = a1.n
    n1 = n - n0
    restrict_to_tail(a1, n0)
    total = None
    for i, phi in enumerate(Phi):
        term = asymp4_lhs_oracle(phi.left_multiply(a1), Fraction(i) + Fraction(n1, 2))
        total = term if total is None else total + term
    if total is None:
        return Scalar()
    if total.is_exact:
        return total * Scalar.four_pi_power(n1)
    return total * (4 * math.pi) ** (n1 / 2)


def random_polynomial_map(n: int, i: int, rng, fiber: int | None = None) -> CliffordPolynomialMap:
    """Random exact phi with filtration bound 4i: a constant term plus a few degree-1/2 Taylor terms."""
    from .random_data import random_clifford, random_homogeneous_clifford

    fiber = fiber or rng.choice([1, 2])
    N = so_dim(n)
    top = 4 * i

    def entry():
        x = random_clifford(n, rng, k=5, max_degree=top)
        if top <= 2 * n:
            x = x + random_homogeneous_clifford(n, top, rng, k=4)
        return x

    coeffs = {(0,) * N: [[entry() for _ in range(fiber)] for _ in range(fiber)]}
    for alpha in list(multi_indices(N, 1))[:2] + list(multi_indices(N, 2))[:1]:
        coeffs[alpha] = [[entry() for _ in range(fiber)] for _ in range(fiber)]
    return CliffordPolynomialMap(n, coeffs, bound=top)
