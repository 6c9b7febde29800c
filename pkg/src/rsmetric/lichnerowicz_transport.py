"""Lichnerowicz endomorphisms, the Casimir identity, and highest-symbol transport.

End F-valued algebra elements are dense float arrays of shape (4^n, m, m)
indexed by the packed monomial mask (see ``clifford_core``), wrapped in
:class:`EndElement`.  Conventions:

* ``R[i, j, k, l] = (R(e_i, e_j) e_k, e_l)``;
* ``omega[i]`` is omega(F, h)(e_i), ``domega[i, j]`` is (nabla_{e_i} omega)(e_j);
* omega^2(e_i, e_j) = omega_i omega_j - omega_j omega_i (wedge square of an
  End F-valued 1-form).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .clifford_core import (
    CliffordElement,
    DenseAlgebra,
    ExteriorElement,
    FockOperator,
    clifford_monomial_product,
    fock_rep,
    pack,
    popcount,
)

TOL = 1e-10


# ---------------------------------------------------------------------------
# point data


@dataclass(frozen=True)
class PointGeometry:
    n: int
    R: np.ndarray
    omega: np.ndarray
    domega: np.ndarray
    r: float = 0.0
    gdot: np.ndarray | None = None
    fiber_dim: int = 1

    def __post_init__(self):
        n, m = self.n, self.fiber_dim
        R = np.asarray(self.R, dtype=float)
        om = np.asarray(self.omega, dtype=float)
        dom = np.asarray(self.domega, dtype=float)
        gd = np.zeros((n, n)) if self.gdot is None else np.asarray(self.gdot, dtype=float)
        if R.shape != (n, n, n, n):
            raise ValueError(f"R must have shape {(n,) * 4}")
        if om.shape != (n, m, m) or dom.shape != (n, n, m, m):
            raise ValueError("omega / domega shape mismatch")
        if gd.shape != (n, n):
            raise ValueError("gdot shape mismatch")
        scale = max(1.0, float(np.max(np.abs(R), initial=0.0)))
        checks = {
            "R_ijkl = -R_jikl": R + R.transpose(1, 0, 2, 3),
            "R_ijkl = -R_ijlk": R + R.transpose(0, 1, 3, 2),
            "R_ijkl = R_klij": R - R.transpose(2, 3, 0, 1),
            "first Bianchi identity": R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3),
        }
        for name, resid in checks.items():
            if np.max(np.abs(resid), initial=0.0) > TOL * scale:
                raise ValueError(f"curvature tensor violates {name}")
        if np.max(np.abs(gd - gd.T), initial=0.0) > TOL * max(1.0, np.max(np.abs(gd), initial=0.0)):
            raise ValueError("gdot must be symmetric")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "domega", dom)
        object.__setattr__(self, "gdot", gd)

    @classmethod
    def zero(cls, n: int, fiber_dim: int = 1) -> "PointGeometry":
        m = fiber_dim
        return cls(n, np.zeros((n,) * 4), np.zeros((n, m, m)), np.zeros((n, n, m, m)), 0.0, None, m)

    def omega_squared(self) -> np.ndarray:
        """omega^2(e_i, e_j) as an (n, n, m, m) array."""
        om = self.omega
        prod = np.einsum("iab,jbc->ijac", om, om)
        return prod - prod.transpose(1, 0, 2, 3)

    def rotated(self, O: np.ndarray) -> "PointGeometry":
        """Pull every tensor back along the orthogonal map O (e_a -> sum_i O_ia e_i)."""
        R = np.einsum("ia,jb,kc,ld,abcd->ijkl", O, O, O, O, self.R)
        om = np.einsum("ia,a...->i...", O, self.omega)
        dom = np.einsum("ia,jb,ab...->ij...", O, O, self.domega)
        gd = O @ self.gdot @ O.T
        return PointGeometry(self.n, R, om, dom, self.r, gd, self.fiber_dim)


# ---------------------------------------------------------------------------
# End F-valued algebra elements


@dataclass(frozen=True)
class EndElement:
    """sum_mask monomial (x) coeffs[mask] with coeffs of shape (4^n, m, m)."""

    n: int
    coeffs: np.ndarray
    kind: str = "clifford"

    @property
    def fiber_dim(self) -> int:
        return self.coeffs.shape[1]

    @classmethod
    def from_element(cls, alpha, fiber_dim: int = 1) -> "EndElement":
        kind = "clifford" if isinstance(alpha, CliffordElement) else "exterior"
        vec = alpha.to_dense()
        return cls(alpha.n, vec[:, None, None] * np.eye(fiber_dim), kind)

    def degree(self, tol: float = 0.0) -> int:
        nz = np.nonzero(np.max(np.abs(self.coeffs), axis=(1, 2)) > tol)[0]
        return max((popcount(int(m)) for m in nz), default=-1)

    def homogeneous_part(self, k: int) -> "EndElement":
        keep = np.array([popcount(m) == k for m in range(self.coeffs.shape[0])])
        return EndElement(self.n, self.coeffs * keep[:, None, None], self.kind)

    def symbol_k(self, k: int) -> "EndElement":
        """Degree-k highest symbol, viewed in Lambda(V + V) (x) End F."""
        if not 0 <= k <= 2 * self.n:
            raise ValueError("symbol degree out of range")
        return EndElement(self.n, self.homogeneous_part(k).coeffs, "exterior")

    def trace_element(self):
        """(id (x) Tr): a plain Clifford / exterior element with float coefficients."""
        vec = np.trace(self.coeffs, axis1=1, axis2=2)
        cls = CliffordElement if self.kind == "clifford" else ExteriorElement
        return cls.from_dense(self.n, vec)

    def entries(self):
        """m x m nested list of Clifford / exterior elements."""
        cls = CliffordElement if self.kind == "clifford" else ExteriorElement
        m = self.fiber_dim
        return [[cls.from_dense(self.n, self.coeffs[:, a, b]) for b in range(m)] for a in range(m)]

    def _like(self, other):
        if not isinstance(other, EndElement) or other.n != self.n or other.kind != self.kind:
            raise TypeError("incompatible EndElement")

    def __add__(self, other):
        self._like(other)
        return EndElement(self.n, self.coeffs + other.coeffs, self.kind)

    def __sub__(self, other):
        self._like(other)
        return EndElement(self.n, self.coeffs - other.coeffs, self.kind)

    def __neg__(self):
        return EndElement(self.n, -self.coeffs, self.kind)

    def scale(self, c: float) -> "EndElement":
        return EndElement(self.n, self.coeffs * c, self.kind)

    def max_abs_diff(self, other) -> float:
        self._like(other)
        return float(np.max(np.abs(self.coeffs - other.coeffs)))


@lru_cache(maxsize=None)
def _dense(n: int, kind: str) -> DenseAlgebra:
    return DenseAlgebra(n, kind)


def _word(n: int, gens) -> tuple[int, int]:
    """(sign, mask) of a product of generators; gens are (index, hat) pairs."""
    sign, mask = 1, 0
    for i, hat in gens:
        s, mask = clifford_monomial_product(n, mask, pack(n, ehat=(i,)) if hat else pack(n, e=(i,)))
        sign *= s
    return sign, mask


@lru_cache(maxsize=None)
def _cc_hh_words(n: int):
    """Sign/mask tables for c_i c_j ĉ_k ĉ_l over all i, j, k, l."""
    signs = np.zeros((n,) * 4, dtype=np.int64)
    masks = np.zeros((n,) * 4, dtype=np.int64)
    for idx in np.ndindex(*(n,) * 4):
        i, j, k, l = idx
        signs[idx], masks[idx] = _word(n, [(i, False), (j, False), (k, True), (l, True)])
    return signs, masks


@lru_cache(maxsize=None)
def _pair_words(n: int, hat1: bool, hat2: bool):
    signs = np.zeros((n, n), dtype=np.int64)
    masks = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            signs[i, j], masks[i, j] = _word(n, [(i, hat1), (j, hat2)])
    return signs, masks


def _scatter(n: int, m: int, signs, masks, weights) -> np.ndarray:
    """sum over index tuples of sign * weight (an m x m block or scalar) at mask."""
    out = np.zeros((1 << (2 * n), m, m))
    w = np.asarray(weights, dtype=float)
    if w.ndim == signs.ndim:
        w = w[..., None, None] * np.eye(m)
    contrib = (signs[..., None, None] * w).reshape(-1, m, m)
    np.add.at(out, masks.reshape(-1), contrib)
    return out


# ---------------------------------------------------------------------------
# Casimir


def derivation_matrix(A) -> np.ndarray:
    """Matrix on Lambda V (basis e_J) of the derivation extension of A (object dtype if A is)."""
    A = np.asarray(A)
    n = A.shape[0]
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=A.dtype if A.dtype == object else float)
    if A.dtype == object:
        out[:] = 0
    for J in range(dim):
        members = [j for j in range(n) if J >> j & 1]
        for j in members:
            rest = J & ~(1 << j)
            for i in range(n):
                if A[i, j] == 0 or (rest >> i & 1):
                    continue
                lo, hi = min(i, j), max(i, j)
                between = popcount(rest & ((1 << hi) - 1) & ~((1 << (lo + 1)) - 1))
                sign = -1 if between % 2 else 1
                out[rest | (1 << i), J] += sign * A[i, j]
    return out


def casimir_clifford(n: int) -> CliffordElement:
    """-1/4 sum_{i,j} c_i c_j ĉ_i ĉ_j - n^2/4, exactly."""
    terms: dict = {}
    for i in range(n):
        for j in range(n):
            s, mask = _word(n, [(i, False), (j, False), (i, True), (j, True)])
            terms[mask] = terms.get(mask, 0) + Fraction(-s, 4)
    terms[0] = terms.get(0, 0) - Fraction(n * n, 4)
    return CliffordElement(n, terms)


def casimir_two_ways(n: int) -> tuple[FockOperator, FockOperator]:
    """(sum_{i<j} (lambda E_ij)^2 via the derivation action, Fock image of the Clifford formula)."""
    dim = 1 << n
    total = np.zeros((dim, dim), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n), dtype=np.int64)
            E[i, j], E[j, i] = 1, -1
            D = derivation_matrix(E).astype(np.int64)
            total += D @ D
    return FockOperator.from_integer_matrix(n, total), fock_rep(casimir_clifford(n))


# ---------------------------------------------------------------------------
# Lichnerowicz endomorphisms


def _curvature_term(g: PointGeometry) -> np.ndarray:
    signs, masks = _cc_hh_words(g.n)
    return _scatter(g.n, g.fiber_dim, signs, masks, -g.R / 8)


def lich_E(g: PointGeometry) -> EndElement:
    """E = -1/8 sum R cc ĉĉ - 1/8 sum cc w2 + 1/8 sum ĉĉ w2 - 1/2 sum cĉ {dw + w2/2} + 1/4 sum w_i^2 + r/4."""
    n, m = g.n, g.fiber_dim
    w2 = g.omega_squared()
    out = _curvature_term(g)
    s, k = _pair_words(n, False, False)
    out += _scatter(n, m, s, k, -w2 / 8)
    s, k = _pair_words(n, True, True)
    out += _scatter(n, m, s, k, w2 / 8)
    out += h_odd(g).coeffs
    out[0] += np.einsum("iab,ibc->ac", g.omega, g.omega) / 4 + g.r / 4 * np.eye(m)
    return EndElement(n, out)


def h_odd(g: PointGeometry) -> EndElement:
    """-1/2 sum_{i,j} c_i ĉ_j {(nabla_i omega)(e_j) + 1/2 omega^2(e_i, e_j)}."""
    s, k = _pair_words(g.n, False, True)
    return EndElement(g.n, _scatter(g.n, g.fiber_dim, s, k, -(g.domega + g.omega_squared() / 2) / 2))


def lich_E_lifted(g: PointGeometry) -> EndElement:
    """E~ = E - 1/4 sum_{i,j} c_i c_j ĉ_i ĉ_j - n^2/4."""
    cas = EndElement.from_element(casimir_clifford(g.n).to_float(), g.fiber_dim)
    return lich_E(g) + cas


def split_even_odd(g: PointGeometry) -> tuple[EndElement, EndElement]:
    Et = lich_E_lifted(g)
    odd = h_odd(g)
    return Et - odd, odd


def sigma_symbols_E(g: PointGeometry) -> tuple[EndElement, EndElement]:
    """(sigma_4 E~, sigma_2 of the odd part)."""
    return lich_E_lifted(g).symbol_k(4), h_odd(g).symbol_k(2)


def hodge_C(gdot) -> CliffordElement:
    """C = -1/2 sum_{i,j} gdot_ij c_i ĉ_j; exact for integer / object input."""
    G = np.asarray(gdot)
    n = G.shape[0]
    if G.shape != (n, n) or any(G[i, j] != G[j, i] for i in range(n) for j in range(n)):
        raise ValueError("gdot must be a symmetric square matrix")
    exact = G.dtype == object or np.issubdtype(G.dtype, np.integer)
    s, k = _pair_words(n, False, True)
    terms: dict = {}
    for i in range(n):
        for j in range(n):
            if G[i, j] == 0:
                continue
            c = Fraction(G[i, j]) * Fraction(-1, 2) if exact else -0.5 * float(G[i, j])
            terms[int(k[i, j])] = terms.get(int(k[i, j]), 0) + int(s[i, j]) * c
    return CliffordElement(n, terms)


# ---------------------------------------------------------------------------
# transport


def casimir_symbol(n: int) -> np.ndarray:
    """Dense vector of sum_{i,j} e_i e_j ê_i ê_j in Lambda(V + V)."""
    out = np.zeros(1 << (2 * n))
    for i in range(n):
        for j in range(n):
            if i != j:
                out[pack(n, e=(i, j), ehat=(i, j))] += 1.0
    return out


def curvature_symbol(R: np.ndarray) -> np.ndarray:
    """Dense vector of sum_{ijkl} R_ijkl e_i e_j ê_k ê_l (wedge)."""
    n = R.shape[0]
    out = np.zeros(1 << (2 * n))
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(n):
                for l in range(k + 1, n):
                    # four orderings of (i,j) and (k,l), each with matching signs
                    out[pack(n, e=(i, j), ehat=(k, l))] += 4.0 * R[i, j, k, l]
    return out


def odd_symbol(g: PointGeometry) -> np.ndarray:
    """sum_{i,j} e_i ê_j {(nabla_i omega)(e_j) + 1/2 omega^2(e_i, e_j)} as (4^n, m, m)."""
    n, m = g.n, g.fiber_dim
    out = np.zeros((1 << (2 * n), m, m))
    w = g.domega + g.omega_squared() / 2
    for i in range(n):
        for j in range(n):
            out[pack(n, e=(i,), ehat=(j,))] += w[i, j]
    return out


def transport_exponent(g: PointGeometry) -> np.ndarray:
    """1/8 sum R e e ê ê + 1/4 sum e e ê ê = -sigma_4 E~, as a dense vector."""
    return curvature_symbol(g.R) / 8 + casimir_symbol(g.n) / 4


def transport_closed_form(g: PointGeometry) -> EndElement:
    alg = _dense(g.n, "wedge")
    vec = alg.exp_nilpotent(transport_exponent(g))
    return EndElement(g.n, vec[:, None, None] * np.eye(g.fiber_dim), "exterior")


def transport_sigma_closed_form(g: PointGeometry) -> EndElement:
    alg = _dense(g.n, "wedge")
    F1 = alg.exp_nilpotent(transport_exponent(g))
    return EndElement(g.n, alg.mul(F1, odd_symbol(g) / 2), "exterior")


@dataclass(frozen=True)
class TransportState:
    F: EndElement
    Fsigma: EndElement
    s: float = field(default=1.0)


def transport_ode_solve(g: PointGeometry, A=None, steps: int = 64, homotopy: float = 1.0) -> TransportState:
    """Classical RK4 for dF/ds = -(sigma_4 E~)(sA) F, dF^sig/ds = -(sigma_4 E~)(sA) F^sig - (sigma_2 E~)(sA) F.

    The coefficient tensors at parameter s are pulled back by exp(-s t A)
    (t = ``homotopy``); t = 0 gives the constant-coefficient system.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n, m = g.n, g.fiber_dim
    A = np.zeros((n, n)) if A is None else np.asarray(A, dtype=float)
    if A.shape != (n, n) or not np.allclose(A, -A.T, atol=1e-14):
        raise ValueError("A must be antisymmetric n x n")
    alg = _dense(n, "wedge")
    cas = casimir_symbol(n) / 4

    def coefficients(s):
        gs = g.rotated(expm(-s * homotopy * A)) if homotopy and np.any(A) else g
        return curvature_symbol(gs.R) / 8 + cas, odd_symbol(gs) / 2

    def rhs(s, F, Fs):
        a4, a2 = coefficients(s)
        return alg.mul(a4, F), alg.mul(a4, Fs) + alg.mul(a2, F)

    F = np.zeros((1 << (2 * n), m, m))
    F[0] = np.eye(m)
    Fs = np.zeros_like(F)
    h = 1.0 / steps
    for k in range(steps):
        s = k * h
        k1 = rhs(s, F, Fs)
        k2 = rhs(s + h / 2, F + h / 2 * k1[0], Fs + h / 2 * k1[1])
        k3 = rhs(s + h / 2, F + h / 2 * k2[0], Fs + h / 2 * k2[1])
        k4 = rhs(s + h, F + h * k3[0], Fs + h * k3[1])
        F = F + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        Fs = Fs + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return TransportState(EndElement(n, F, "exterior"), EndElement(n, Fs, "exterior"), 1.0)


def step_halving_ratio(g: PointGeometry, A, steps: int = 8, reference_steps: int = 1024) -> float:
    """error(steps) / error(2 steps) against a fine reference; about 16 for an order-4 method."""
    ref = transport_ode_solve(g, A, reference_steps)
    e1 = transport_ode_solve(g, A, steps)
    e2 = transport_ode_solve(g, A, 2 * steps)
    err1 = max(e1.F.max_abs_diff(ref.F), e1.Fsigma.max_abs_diff(ref.Fsigma))
    err2 = max(e2.F.max_abs_diff(ref.F), e2.Fsigma.max_abs_diff(ref.Fsigma))
    return err1 / err2


def random_point_geometry(n: int, m: int, rng: np.random.Generator, scale: float = 1.0) -> PointGeometry:
    from .random_data import random_curvature_tensor, random_symmetric

    return PointGeometry(
        n,
        random_curvature_tensor(n, rng, scale),
        rng.normal(scale=scale, size=(n, m, m)),
        rng.normal(scale=scale, size=(n, n, m, m)),
        float(rng.normal()),
        random_symmetric(n, rng),
        m,
    )
