"""Fixed-point data, the det / supertrace cancellation and the local index densities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import chern_weil as cw
from .asymptotics import CliffordPolynomialMap, split_limit
from .clifford_core import (
    CliffordElement,
    ExteriorElement,
    embed_element,
    exterior_exp,
    exterior_power_element,
    exterior_power_matrix,
    pack,
    parity_signs,
    quantize,
)
from .lichnerowicz_transport import PointGeometry, _dense, curvature_symbol


class FixedPointDegeneracy(ValueError):
    """gamma-tilde restricted to the normal space has eigenvalue 1."""


EIG_TOL = 1e-9


def _check_normal_rotation(g1: np.ndarray) -> np.ndarray:
    g1 = np.asarray(g1, dtype=float)
    k = g1.shape[0]
    if g1.shape != (k, k):
        raise ValueError("gammaTilde1 must be square")
    if k and not np.allclose(g1.T @ g1, np.eye(k), atol=1e-10):
        raise ValueError("gammaTilde1 must be orthogonal")
    if k and np.min(np.abs(np.linalg.eigvals(g1) - 1.0)) < EIG_TOL:
        raise FixedPointDegeneracy("gammaTilde1 has eigenvalue 1")
    return g1


@dataclass(frozen=True)
class FixedPointData:
    n0: int
    n1: int
    Rgamma: np.ndarray
    gammaTilde1: np.ndarray
    gammaF: np.ndarray
    V: np.ndarray
    gdot: np.ndarray | None = None
    domega: np.ndarray | None = None
    omega: np.ndarray | None = None

    def __post_init__(self):
        n0, m = self.n0, np.asarray(self.gammaF).shape[0]
        g1 = _check_normal_rotation(np.asarray(self.gammaTilde1).reshape(self.n1, self.n1))
        if self.n1 and np.linalg.det(np.eye(self.n1) - g1) <= 0:
            raise FixedPointDegeneracy("det(1 - gammaTilde1) must be positive")
        object.__setattr__(self, "gammaTilde1", g1)
        omega = np.zeros((n0, m, m)) if self.omega is None else np.asarray(self.omega, dtype=float)
        domega = np.zeros((n0, n0, m, m)) if self.domega is None else np.asarray(self.domega, dtype=float)
        # reuse the curvature / gdot validation
        geo = PointGeometry(n0, np.asarray(self.Rgamma, dtype=float).reshape((n0,) * 4), omega, domega,
                            0.0, self.gdot, m)
        object.__setattr__(self, "Rgamma", geo.R)
        object.__setattr__(self, "gdot", geo.gdot)
        object.__setattr__(self, "domega", geo.domega)
        object.__setattr__(self, "omega", geo.omega)
        for name in ("gammaF", "V"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (m, m):
                raise ValueError(f"{name} must be {m}x{m}")
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.n0 + self.n1

    @property
    def fiber_dim(self) -> int:
        return self.gammaF.shape[0]

    def trace_factor(self) -> complex | float:
        return np.trace(self.gammaF @ self.V)

    def Q1(self) -> np.ndarray:
        """Q_1(0) as a quadratic form on V_1: v -> |(1 - gammaTilde1) v|^2."""
        d = np.eye(self.n1) - self.gammaTilde1
        return d.T @ d


@dataclass(frozen=True)
class DensityValue:
    value: float
    measure: str = "|dx_0|"

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("density is not finite")

    def __float__(self):
        return float(np.real(self.value))


# ---------------------------------------------------------------------------
# det / Str cancellation


def det_cancellation(gammaTilde1) -> tuple[float, float]:
    """(sum_k (-1)^k tr Lambda^k gamma, det(1 - gamma))."""
    g1 = _check_normal_rotation(gammaTilde1)
    k = g1.shape[0]
    lam = exterior_power_matrix(g1)
    str_side = float(np.sum(parity_signs(k)[: 1 << k] * np.diag(lam))) if k else 1.0
    return str_side, float(np.linalg.det(np.eye(k) - g1)) if k else 1.0


# ---------------------------------------------------------------------------
# densities


def _euler_exponential(R: np.ndarray) -> np.ndarray:
    """exp{1/8 sum R_ijkl e_i e_j ê_k ê_l} as a dense vector over n0 = R.shape[0]."""
    n0 = R.shape[0]
    alg = _dense(n0, "wedge")
    return alg.exp_nilpotent(curvature_symbol(R) / 8)


def integrand_I(d: FixedPointData) -> DensityValue:
    """Tr[gamma^F V] T_0(exp{1/8 sum R e e ê ê})."""
    if d.n0 % 2:
        return DensityValue(0.0)
    alg = _dense(d.n0, "wedge")
    return DensityValue(d.trace_factor() * alg.berezin(_euler_exponential(d.Rgamma)))


def _sum_e_ehat(n0: int, coeff: np.ndarray) -> np.ndarray:
    """sum_{i,j} coeff_ij e_i ê_j as a dense vector."""
    out = np.zeros(1 << (2 * n0))
    for i in range(n0):
        for j in range(n0):
            out[pack(n0, e=(i,), ehat=(j,))] += coeff[i, j]
    return out


def integrand_I_sigma(d: FixedPointData) -> DensityValue:
    """-T_0(1/2 sum gdot e ê ^ exp{1/8 sum R e e ê ê} ^ 1/2 sum e ê Tr[gamma^F (nabla omega)])."""
    n0 = d.n0
    if n0 % 2:
        # two 2-form factors already exceed the top degree at n0 = 1; odd n0 > 1 is odd-degree
        return DensityValue(0.0)
    alg = _dense(n0, "wedge")
    tr_dom = np.einsum("ab,ijba->ij", d.gammaF, d.domega)
    left = _sum_e_ehat(n0, d.gdot) / 2
    right = _sum_e_ehat(n0, np.real_if_close(tr_dom)) / 2
    prod = alg.mul(alg.mul(left, _euler_exponential(d.Rgamma)), right)
    return DensityValue(-alg.berezin(prod))


def integrand_I_sigma_with_omega2(d: FixedPointData) -> DensityValue:
    """Same density keeping the 1/2 omega^2 term that the closed form drops (needs d.omega)."""
    n0 = d.n0
    if n0 % 2:
        return DensityValue(0.0)
    alg = _dense(n0, "wedge")
    om = d.omega
    w2 = np.einsum("iab,jbc->ijac", om, om)
    w2 = w2 - w2.transpose(1, 0, 2, 3)
    tr = np.einsum("ab,ijba->ij", d.gammaF, d.domega + w2 / 2)
    prod = alg.mul(alg.mul(_sum_e_ehat(n0, d.gdot) / 2, _euler_exponential(d.Rgamma)), _sum_e_ehat(n0, tr) / 2)
    return DensityValue(-alg.berezin(prod))


# ---------------------------------------------------------------------------
# Hallo path


def _curvature_exterior(R: np.ndarray, n: int) -> ExteriorElement:
    """1/8 sum R_ijkl e_i e_j ê_k ê_l + 1/4 sum_{i != j <= n} e_i e_j ê_i ê_j, sparse over dimension n."""
    n0 = R.shape[0]
    terms: dict = {}
    for i in range(n0):
        for j in range(i + 1, n0):
            for k in range(n0):
                for l in range(k + 1, n0):
                    if R[i, j, k, l]:
                        m = pack(n, e=(i, j), ehat=(k, l))
                        terms[m] = terms.get(m, 0.0) + R[i, j, k, l] / 2
    for i in range(n):
        for j in range(n):
            if i != j:
                m = pack(n, e=(i, j), ehat=(i, j))
                terms[m] = terms.get(m, 0.0) + 0.25
    return ExteriorElement(n, terms)


def hallo_inputs(d: FixedPointData) -> tuple[CliffordElement, list[CliffordPolynomialMap]]:
    """a_1 = Lambda gammaTilde1 on V_1 and the constant maps Phi_i(0) built from the transport symbols."""
    n, n0 = d.n, d.n0
    a1 = embed_element(exterior_power_element(d.gammaTilde1), n, offset=n0) if d.n1 else CliffordElement.scalar(n, 1.0)
    F = exterior_exp(_curvature_exterior(d.Rgamma, n))
    detq = float(np.linalg.det(d.Q1())) if d.n1 else 1.0
    Vg = (d.V @ d.gammaF) * detq ** -0.5
    m = d.fiber_dim
    Phi = []
    for i in range(n // 2 + 1):
        part = quantize(F.homogeneous_part(4 * i))
        entries = [[part * float(np.real(Vg[a, b])) for b in range(m)] for a in range(m)]
        Phi.append(CliffordPolynomialMap.constant(entries, bound=4 * i))
    return a1, Phi


def pipeline_consistency(d: FixedPointData) -> tuple[float, float]:
    """(split-limit value fed with the transport symbols, integrand_I)."""
    a1, Phi = hallo_inputs(d)
    via_hallo = float(split_limit(a1, Phi, d.n0))
    return via_hallo, float(integrand_I(d))


# ---------------------------------------------------------------------------
# right-hand sides of the variation formulas


@dataclass(frozen=True)
class SampleSet:
    """Fixed-point data on a quadrature grid of M^gamma with weights (|dx_0| included)."""

    points: list
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        w = np.ones(len(self.points)) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.points),):
            raise ValueError("one weight per sample")
        object.__setattr__(self, "weights", w)


def rhs_variation_hF(samples: SampleSet) -> float:
    """int_{M^gamma} Tr[gamma^F V] e(TM^gamma); a plain sum for isolated fixed points."""
    total = 0.0
    for p, w in zip(samples.points, samples.weights):
        total += w * float(integrand_I(p))
    return total


def rhs_variation_gTM(theta: np.ndarray, etilde: np.ndarray, weights, dim: int) -> float:
    """-int_{M^gamma} theta ^ e~'(TM^gamma) from sampled components.

    theta[k] and etilde[k] are the dx_k components (shape (dim, nsamples));
    only dim = 2 can carry a nonzero top form.
    """
    if dim != 2:
        return 0.0
    theta = np.asarray(theta)
    etilde = np.asarray(etilde)
    top = theta[0] * etilde[1] - theta[1] * etilde[0]
    return -float(np.sum(np.asarray(weights) * top))


# ---------------------------------------------------------------------------
# flat-torus model for the sigma density


def levi_civita_variation(gdot: np.ndarray, dx) -> np.ndarray:
    """S_ab(e_X) = 1/2 (d_b gdot_{Xa} - d_a gdot_{Xb}) for a flat metric; gdot of shape (2, 2, N, N)."""
    dim = gdot.shape[0]
    dg = np.stack([cw.spectral_derivative(gdot, axis=2 + k, dx=dx[k]) for k in range(dim)])  # dg[c, a, b]
    S = np.zeros((dim, dim, dim) + gdot.shape[2:])
    for a in range(dim):
        for b in range(dim):
            for X in range(dim):
                S[a, b, X] = 0.5 * (dg[b, X, a] - dg[a, X, b])
    return S


def etilde_prime_samples(S: np.ndarray) -> np.ndarray:
    """Components of the transgression 1-form from chern_weil, per grid point (flat metric, R = 0)."""
    dim = S.shape[0]
    grid = S.shape[3:]
    out = np.zeros((dim,) + grid)
    zero = cw.EvenForm.of(dim, 0.0)
    R = [[zero] * dim for _ in range(dim)]
    for idx in np.ndindex(*grid):
        Sm = [[sum((cw.Form.basis(dim, (X,), float(S[(a, b, X) + idx])) for X in range(dim)), cw.Form(dim))
               for b in range(dim)] for a in range(dim)]
        t = cw.transgression_form(R, Sm)
        for X in range(dim):
            out[(X,) + idx] = float(t.terms.get(1 << X, 0.0))
    return out


def torus_sigma_comparison(N: int = 32, seed: int = 0) -> dict:
    """Flat T^2, rank-1 bundle h = exp(f), gamma = id, random periodic gdot.

    Returns the integrated I^sigma density, -int theta ^ e~', and the sup of the
    pointwise difference of the two top-form densities.
    """
    rng = np.random.default_rng(seed)
    L = 2 * np.pi
    dx = (L / N, L / N)
    x = L * np.arange(N) / N
    X, Y = np.meshgrid(x, x, indexing="ij")

    def field_():
        a, b, c, ph = rng.normal(size=4)
        return a * np.sin(X + ph) + b * np.cos(Y - ph) + c * np.sin(X + Y + 2 * ph)

    f = field_()
    gdot = np.empty((2, 2, N, N))
    gdot[0, 0], gdot[1, 1] = field_(), field_()
    gdot[0, 1] = gdot[1, 0] = field_()
    path = cw.BundleMetricPath.periodic(np.exp(f)[..., None, None], dx)
    om = cw.omega_flat_frame(path)  # (2, N, N, 1, 1)
    theta = cw.theta_one_form(np.eye(1), om)
    dom = np.stack([np.stack([cw.spectral_derivative(om[j], axis=k, dx=dx[k]) for j in range(2)]) for k in range(2)])
    S = levi_civita_variation(gdot, dx)
    et = etilde_prime_samples(S)
    w = dx[0] * dx[1]
    dens = np.zeros((N, N))
    for idx in np.ndindex(N, N):
        d = FixedPointData(2, 0, np.zeros((2,) * 4), np.zeros((0, 0)), np.eye(1), np.eye(1),
                           gdot=gdot[(slice(None), slice(None)) + idx],
                           domega=dom[(slice(None), slice(None)) + idx])
        dens[idx] = float(integrand_I_sigma(d))
    rhs_top = -(theta[0] * et[1] - theta[1] * et[0])
    return {
        "int_I_sigma": float(np.sum(dens) * w),
        "minus_int_theta_etilde": rhs_variation_gTM(theta.reshape(2, -1), et.reshape(2, -1), np.full(N * N, w), 2),
        "pointwise_max_diff": float(np.max(np.abs(dens - rhs_top))),
        "scale": float(np.max(np.abs(dens))),
    }


# ---------------------------------------------------------------------------
# random data


def random_fixed_point_data(n0: int, n1: int, rng: np.random.Generator, fiber_dim: int = 1) -> FixedPointData:
    from .random_data import random_curvature_tensor, random_symmetric, rotation_without_fixed_vectors

    m = fiber_dim
    g1 = rotation_without_fixed_vectors(n1, rng) if n1 else np.zeros((0, 0))
    # gamma^F: a unitary (here orthogonal) matrix; V: symmetric
    q, _ = np.linalg.qr(rng.normal(size=(m, m)))
    return FixedPointData(
        n0, n1, random_curvature_tensor(n0, rng) if n0 else np.zeros((0,) * 4), g1, q,
        random_symmetric(m, rng), random_symmetric(n0, rng) if n0 else None,
        rng.normal(size=(n0, n0, m, m)), rng.normal(size=(n0, m, m)),
    )
