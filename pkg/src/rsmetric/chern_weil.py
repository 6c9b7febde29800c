"""Pfaffians, Euler and transgression forms, and the flat-bundle forms omega, theta.

Differential forms on a chart R^{n0} are sparse maps from an n0-bit mask
(dx_{i1} ^ ... ^ dx_{ik}, increasing) to Scalars.  An ``EvenForm`` carries
an optional first-order dual parameter b (b^2 = 0): value + b * bpart.
Only b-linear terms are ever needed, and each surviving term contains at
most one b-factor, so b is treated as a commuting symbol.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .clifford_core import popcount, wedge_monomial_product
from .scalar import Scalar, as_scalar


class Form:
    """Differential form at a point of R^dim with Scalar coefficients."""

    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms=None):
        self.dim = dim
        clean = {}
        for m, c in (terms or {}).items():
            if not 0 <= m < (1 << dim):
                raise ValueError(f"mask {m} out of range for dim {dim}")
            if not isinstance(c, Scalar):
                c = Scalar.from_float(c) if isinstance(c, (float, np.floating)) else as_scalar(c)
            if not c.is_zero():
                clean[m] = c
        self.terms = clean

    @classmethod
    def constant(cls, dim: int, c=1):
        return cls(dim, {0: c})

    @classmethod
    def basis(cls, dim: int, idx, c=1):
        mask = 0
        for i in idx:
            mask |= 1 << i
        sign = 1
        idx = list(idx)
        # sort with sign
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                if idx[a] > idx[b]:
                    sign = -sign
                elif idx[a] == idx[b]:
                    return cls(dim)
        return cls(dim, {mask: c if sign > 0 else -c})

    def degree(self) -> int:
        return max((popcount(m) for m in self.terms), default=-1)

    def is_zero(self):
        return not self.terms

    def top(self):
        """Coefficient of dx_1 ^ ... ^ dx_dim."""
        return self.terms.get((1 << self.dim) - 1, Scalar())

    def __add__(self, other):
        other = _as_form(other, self.dim)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out[m] + c if m in out else c
        return Form(self.dim, out)

    __radd__ = __add__

    def __neg__(self):
        return Form(self.dim, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_as_form(other, self.dim))

    def __rsub__(self, other):
        return _as_form(other, self.dim) + (-self)

    def __mul__(self, other):
        if isinstance(other, Form):
            if other.dim != self.dim:
                raise ValueError("dimension mismatch")
            out: dict = {}
            for a, ca in self.terms.items():
                for b, cb in other.terms.items():
                    s, m = wedge_monomial_product(a, b)
                    if s == 0:
                        continue
                    v = ca * cb if s > 0 else -(ca * cb)
                    out[m] = out[m] + v if m in out else v
            return Form(self.dim, out)
        c = other if isinstance(other, Scalar) else (
            Scalar.from_float(other) if isinstance(other, float) else as_scalar(other))
        return Form(self.dim, {m: v * c for m, v in self.terms.items()})

    def __rmul__(self, other):
        return self * other

    def __eq__(self, other):
        if isinstance(other, Form):
            return self.dim == other.dim and self.terms == other.terms
        if isinstance(other, (int, Fraction, Scalar)):
            return self == _as_form(other, self.dim)
        return NotImplemented

    def __hash__(self):
        return hash((self.dim, frozenset(self.terms.items())))

    def __repr__(self):
        if not self.terms:
            return "Form(0)"
        parts = []
        for m in sorted(self.terms):
            lab = "^".join(f"dx{i + 1}" for i in range(self.dim) if m >> i & 1) or "1"
            parts.append(f"({self.terms[m]}){lab}")
        return "Form(" + " + ".join(parts) + ")"


def _as_form(x, dim):
    if isinstance(x, Form):
        if x.dim != dim:
            raise ValueError("dimension mismatch")
        return x
    return Form(dim, {0: x})


class EvenForm:
    """value + b * bpart with b^2 = 0; ``value`` must be even-graded."""

    __slots__ = ("value", "bpart")

    def __init__(self, value: Form, bpart: Form | None = None):
        if any(popcount(m) % 2 for m in value.terms):
            raise ValueError("EvenForm value must have even degrees only")
        self.value = value
        self.bpart = bpart if bpart is not None else Form(value.dim)

    @property
    def dim(self):
        return self.value.dim

    @classmethod
    def of(cls, dim, c=0):
        return cls(Form(dim, {0: c}))

    def __add__(self, other):
        other = _as_even(other, self.dim)
        return EvenForm(self.value + other.value, self.bpart + other.bpart)

    __radd__ = __add__

    def __neg__(self):
        return EvenForm(-self.value, -self.bpart)

    def __sub__(self, other):
        return self + (-_as_even(other, self.dim))

    def __mul__(self, other):
        if isinstance(other, EvenForm):
            return EvenForm(self.value * other.value, self.value * other.bpart + self.bpart * other.value)
        return EvenForm(self.value * other, self.bpart * other)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, EvenForm):
            return self.value == other.value and self.bpart == other.bpart
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.bpart))

    def __repr__(self):
        return f"EvenForm({self.value!r} + b·{self.bpart!r})"


def _as_even(x, dim):
    if isinstance(x, EvenForm):
        return x
    return EvenForm(_as_form(x, dim))


# ---------------------------------------------------------------------------
# Pfaffian


def check_antisymmetric(M) -> None:
    k = len(M)
    for i in range(k):
        if len(M[i]) != k:
            raise ValueError("matrix is not square")
    for i in range(k):
        if not _is_zero(M[i][i]):
            raise ValueError("nonzero diagonal entry")
        for j in range(i + 1, k):
            if not _is_zero(M[i][j] + M[j][i]):
                raise ValueError(f"entries ({i},{j}) and ({j},{i}) are not opposite")


def _is_zero(x) -> bool:
    if isinstance(x, EvenForm):
        return x.value.is_zero() and x.bpart.is_zero()
    if isinstance(x, (Form, Scalar)):
        return x.is_zero()
    if isinstance(x, float):
        return abs(x) < 1e-13
    return x == 0


def pfaffian(M, one=1):
    """Perfect-matching expansion; works over any commutative ring.

    ``one`` is the multiplicative unit of the entry ring (used for 0x0).
    """
    M = [list(row) for row in M]
    k = len(M)
    check_antisymmetric(M)
    if k % 2:
        return one * 0
    if k == 0:
        return one

    @lru_cache(maxsize=None)
    def rec(idx: tuple):
        if not idx:
            return one
        i0 = idx[0]
        total = None
        for pos in range(1, len(idx)):
            j = idx[pos]
            rest = idx[1:pos] + idx[pos + 1:]
            term = M[i0][j] * rec(rest)
            if pos % 2 == 0:
                term = -term
            total = term if total is None else total + term
        return total

    return rec(tuple(range(k)))


def _inv_two_pi(template):
    """The scalar 1/(2 pi) in the same kind (exact or float) as ``template``."""
    if _is_float_kind(template):
        return 1.0 / (2 * math.pi)
    return Scalar.exact(Fraction(1, 2), -2)


def _is_float_kind(x) -> bool:
    if isinstance(x, EvenForm):
        return any(not c.is_exact for c in list(x.value.terms.values()) + list(x.bpart.terms.values()))
    if isinstance(x, Form):
        return any(not c.is_exact for c in x.terms.values())
    if isinstance(x, Scalar):
        return not x.is_exact
    return isinstance(x, float)


def _first_entry(M):
    for row in M:
        for x in row:
            if not _is_zero(x):
                return x
    return M[0][0] if M and M[0] else 0


def _unit_like(M, dim=None):
    x = _first_entry(M) if len(M) else None
    if isinstance(x, EvenForm):
        return EvenForm(Form(x.dim, {0: 1.0 if _is_float_kind(x) else 1}))
    if isinstance(x, Form):
        return Form(x.dim, {0: 1.0 if _is_float_kind(x) else 1})
    if dim is not None:
        return EvenForm(Form(dim, {0: 1}))
    return 1


def scale_matrix(M, c):
    return [[x * c for x in row] for row in M]


def euler_form(R, dim: int | None = None):
    """Pf[R / 2pi]; zero in odd dimension."""
    one = _unit_like(R, dim)
    k = len(R)
    check_antisymmetric(R)
    if k % 2:
        return one * 0
    if k == 0:
        return one
    c = _inv_two_pi(_first_entry(R))
    return pfaffian(scale_matrix(R, c), one)


def transgression_form(R, Sdot, dim: int | None = None):
    """d/db at b=0 of Pf[(R + b Sdot) / 2pi]; returns a Form."""
    k = len(R)
    check_antisymmetric(R)
    check_antisymmetric(Sdot)
    if len(Sdot) != k:
        raise ValueError("R and Sdot have different sizes")
    entries = [[_lift(R[i][j], Sdot[i][j], dim) for j in range(k)] for i in range(k)]
    d = entries[0][0].dim if k else (dim or 0)
    if k % 2:
        return Form(d)
    if k == 0:
        return Form(d)
    floaty = any(_is_float_kind(x) for row in list(R) + list(Sdot) for x in row)
    c = _inv_two_pi(1.0 if floaty else 1)
    return pfaffian(scale_matrix(entries, c), EvenForm(Form(d, {0: 1.0 if floaty else 1}))).bpart


def _lift(r, s, dim):
    if isinstance(r, EvenForm):
        base = r
    else:
        if dim is None and not isinstance(r, Form) and not isinstance(s, Form):
            raise ValueError("dimension needed for scalar entries")
        d = r.dim if isinstance(r, Form) else (s.dim if isinstance(s, Form) else dim)
        base = EvenForm(_as_form(r, d))
    sf = s if isinstance(s, Form) else _as_form(s, base.dim)
    return EvenForm(base.value, base.bpart + sf)


def curvature_matrix(Rt, dim: int | None = None):
    """Curvature matrix of 2-forms from R_{ijkl} = (R(e_i,e_j)e_k, e_l).

    Entry (k, l) is sum_{i<j} (R(e_i,e_j)e_l, e_k) dx_i ^ dx_j, the matrix of
    the endomorphism R in the orthonormal frame.
    """
    Rt = np.asarray(Rt)
    n0 = Rt.shape[0]
    dim = n0 if dim is None else dim
    exact = Rt.dtype == object or np.issubdtype(Rt.dtype, np.integer)
    out = []
    for k in range(n0):
        row = []
        for l in range(n0):
            terms = {}
            for i in range(n0):
                for j in range(i + 1, n0):
                    v = Rt[i, j, l, k]
                    if v != 0:
                        terms[(1 << i) | (1 << j)] = Fraction(v) if exact else float(v)
            row.append(EvenForm(Form(dim, terms)))
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# flat bundle forms


class BundleMetricPath:
    """Samples of a hermitian metric h on a flat trivialization over a chart grid.

    ``h`` has shape grid + (m, m); ``dh`` has shape (ndir,) + grid + (m, m);
    ``hdot`` (optional) is the epsilon-derivative of a family h(eps).
    """

    def __init__(self, h, dh=None, hdot=None, spacing=None):
        h = np.asarray(h)
        if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
            raise ValueError("h samples must end in square matrices")
        herm = np.conj(np.swapaxes(h, -1, -2))
        if not np.allclose(h, herm, atol=1e-12):
            raise ValueError("h is not hermitian")
        eig = np.linalg.eigvalsh(h.reshape((-1,) + h.shape[-2:]))
        if np.any(eig <= 0):
            raise ValueError("h is not positive definite")
        self.h = h
        self.dh = None if dh is None else np.asarray(dh)
        self.hdot = None if hdot is None else np.asarray(hdot)
        self.spacing = spacing

    @property
    def rank(self) -> int:
        return self.h.shape[-1]

    @property
    def grid_shape(self):
        return self.h.shape[:-2]

    @classmethod
    def periodic(cls, h, spacing, hdot=None):
        """Derivatives by spectral differentiation on a periodic grid."""
        h = np.asarray(h)
        dh = []
        for ax, dx in enumerate(spacing):
            dh.append(spectral_derivative(h, ax, dx))
        return cls(h, np.stack(dh), hdot, spacing)


def spectral_derivative(f, axis: int, dx: float) -> np.ndarray:
    f = np.asarray(f)
    N = f.shape[axis]
    k = np.fft.fftfreq(N, d=dx) * 2 * np.pi
    if N % 2 == 0:
        k[N // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = N
    F = np.fft.fft(f, axis=axis)
    out = np.fft.ifft(1j * k.reshape(shape) * F, axis=axis)
    return out.real if np.isrealobj(f) else out


def omega_flat_frame(path: BundleMetricPath, direction: int | None = None) -> np.ndarray:
    """omega = h^{-1} dh in a flat frame; shape (ndir,) + grid + (m, m) or one direction."""
    if path.dh is None:
        raise ValueError("metric path has no derivative samples")
    hinv = np.linalg.inv(path.h)
    dirs = range(path.dh.shape[0]) if direction is None else [direction]
    out = np.stack([hinv @ path.dh[d] for d in dirs])
    return out if direction is None else out[0]


def variation_V(path: BundleMetricPath) -> np.ndarray:
    """V = h^{-1} hdot."""
    if path.hdot is None:
        raise ValueError("metric path has no epsilon-derivative")
    return np.linalg.solve(path.h, path.hdot)


def theta_one_form(gammaF, omega) -> np.ndarray:
    """theta = Tr[gamma^F omega] per sample (and per direction)."""
    gammaF = np.asarray(gammaF)
    omega = np.asarray(omega)
    m = omega.shape[-1]
    if gammaF.shape != (m, m):
        raise ValueError(f"gamma^F must be {m}x{m}")
    return np.einsum("ij,...ji->...", gammaF, omega)


def exterior_derivative_2d(theta, spacing) -> np.ndarray:
    """d of a 1-form (theta_x, theta_y) on a periodic 2-d grid: d_x theta_y - d_y theta_x."""
    tx, ty = theta[0], theta[1]
    return spectral_derivative(ty, 0, spacing[0]) - spectral_derivative(tx, 1, spacing[1])
