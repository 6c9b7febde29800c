import math
import random
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from rsmetric.chern_weil import (
    BundleMetricPath,
    EvenForm,
    Form,
    curvature_matrix,
    euler_form,
    exterior_derivative_2d,
    omega_flat_frame,
    pfaffian,
    theta_one_form,
    transgression_form,
    variation_V,
)
from rsmetric.scalar import Scalar


def rand_skew(k, rng):
    M = [[Fraction(0)] * k for _ in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            v = Fraction(rng.randint(-9, 9), rng.randint(1, 4))
            M[i][j], M[j][i] = v, -v
    return M


def test_pfaffian_small_examples():
    a = Fraction(3, 7)
    assert pfaffian([[0, a], [-a, 0]]) == a
    assert pfaffian([]) == 1
    assert pfaffian([[0, 1, 2], [-1, 0, 3], [-2, -3, 0]]) == 0
    M = rand_skew(4, random.Random(1))
    expect = M[0][1] * M[2][3] - M[0][2] * M[1][3] + M[0][3] * M[1][2]
    assert pfaffian(M) == expect


def test_pfaffian_rejects_non_skew():
    with pytest.raises(ValueError):
        pfaffian([[0, 1], [1, 0]])


@pytest.mark.parametrize("k", [2, 4, 6])
def test_pfaffian_squared_is_det(k):
    rng = random.Random(k)
    for _ in range(5):
        M = rand_skew(k, rng)
        assert pfaffian(M) ** 2 == sympy.Matrix(M).det()


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([2, 4]), st.randoms(use_true_random=False))
def test_pfaffian_congruence(k, rnd):
    M = rand_skew(k, rnd)
    G = sympy.Matrix(k, k, lambda i, j: sympy.Rational(rnd.randint(-3, 3), rnd.randint(1, 3)))
    N = G.T * sympy.Matrix(M) * G
    Nf = [[Fraction(int(sympy.fraction(N[i, j])[0]), int(sympy.fraction(N[i, j])[1])) for j in range(k)]
          for i in range(k)]
    det = G.det()
    assert pfaffian(Nf) == Fraction(int(sympy.fraction(det)[0]), int(sympy.fraction(det)[1])) * pfaffian(M)


def two_form(dim, i, j, c):
    return EvenForm(Form.basis(dim, (i, j), c))


def test_euler_form_zero_and_odd():
    z = EvenForm.of(2)
    R = [[z, z], [z, z]]
    assert euler_form(R).value.is_zero()
    R3 = [[EvenForm.of(3)] * 3 for _ in range(3)]
    assert euler_form(R3).value.is_zero()
    S3 = [[Form(3)] * 3 for _ in range(3)]
    assert transgression_form(R3, S3).is_zero()


def sphere_curvature(r, theta):
    # orthonormal-frame curvature entry K * (area form) with area form r^2 sin(theta) dtheta ^ dphi
    K = 1.0 / r ** 2
    a = two_form(2, 0, 1, K * r ** 2 * math.sin(theta))
    return [[EvenForm.of(2, 0.0), a], [-a, EvenForm.of(2, 0.0)]]


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_gauss_bonnet_sphere(r):
    x, w = np.polynomial.legendre.leggauss(40)
    thetas = 0.5 * math.pi * (x + 1)
    wt = 0.5 * math.pi * w
    total = 0.0
    for th, wi in zip(thetas, wt):
        e = euler_form(sphere_curvature(r, th))
        total += float(e.value.top()) * wi * 2 * math.pi
    assert abs(total - 2.0) < 1e-6


def test_euler_form_exact_scaling():
    R = [[EvenForm.of(2), two_form(2, 0, 1, 3)], [-two_form(2, 0, 1, 3), EvenForm.of(2)]]
    e = euler_form(R)
    assert e.value.top() == Scalar.exact(Fraction(3, 2), -2)


def test_transgression_examples():
    z = EvenForm.of(2)
    R = [[z, z], [z, z]]
    S0 = [[Form(2), Form(2)], [Form(2), Form(2)]]
    assert transgression_form(R, S0).is_zero()
    s = Form.basis(2, (0,), 5)
    S = [[Form(2), s], [-s, Form(2)]]
    t = transgression_form(R, S)
    assert t == s * Scalar.exact(Fraction(1, 2), -2)


def test_transgression_matches_b_expansion_n4():
    rng = random.Random(7)
    R = rand_skew(4, rng)
    S = rand_skew(4, rng)
    b = sympy.Symbol("b")
    M = sympy.Matrix(4, 4, lambda i, j: sympy.Rational(R[i][j].numerator, R[i][j].denominator)
                     + b * sympy.Rational(S[i][j].numerator, S[i][j].denominator))
    pf = M[0, 1] * M[2, 3] - M[0, 2] * M[1, 3] + M[0, 3] * M[1, 2]
    coeff = sympy.expand(pf).coeff(b, 1)
    Rm = [[EvenForm(Form(0, {0: R[i][j]})) for j in range(4)] for i in range(4)]
    Sm = [[Form(0, {0: S[i][j]}) for j in range(4)] for i in range(4)]
    got = transgression_form(Rm, Sm)
    expect = Scalar.exact(Fraction(int(sympy.fraction(coeff)[0]), int(sympy.fraction(coeff)[1])), -4) \
        * Scalar.exact(Fraction(1, 4))
    assert got.top() == expect


def test_transgression_finite_difference_n2():
    rng = random.Random(3)
    R = rand_skew(2, rng)
    S = rand_skew(2, rng)
    Rm = [[EvenForm(Form(0, {0: R[i][j]})) for j in range(2)] for i in range(2)]
    RS = [[EvenForm(Form(0, {0: R[i][j] + S[i][j]})) for j in range(2)] for i in range(2)]
    Sm = [[Form(0, {0: S[i][j]}) for j in range(2)] for i in range(2)]
    fd = euler_form(RS).value.top() - euler_form(Rm).value.top()
    assert transgression_form(Rm, Sm).top() == fd


def test_curvature_matrix_sphere_sign():
    # round sphere: R(e1,e2)e2 = K e1, so R_{1221} = K and R_{1212} = -K
    K = 2.0
    Rt = np.zeros((2, 2, 2, 2))
    Rt[0, 1, 1, 0] = K
    Rt[1, 0, 0, 1] = K
    Rt[0, 1, 0, 1] = -K
    Rt[1, 0, 1, 0] = -K
    e = euler_form(curvature_matrix(Rt))
    assert math.isclose(float(e.value.top()), K / (2 * math.pi))


# --- flat bundle forms --------------------------------------------------------

def grid2(N):
    x = 2 * np.pi * np.arange(N) / N
    return np.meshgrid(x, x, indexing="ij")


def test_omega_constant_metric_vanishes():
    N = 16
    h = np.broadcast_to(np.diag([2.0, 3.0]), (N, N, 2, 2)).copy()
    path = BundleMetricPath.periodic(h, (2 * np.pi / N,) * 2)
    assert np.allclose(omega_flat_frame(path), 0.0, atol=1e-12)


def test_omega_rank_one_is_df():
    N = 32
    X, Y = grid2(N)
    f = np.sin(X) + 0.5 * np.cos(2 * Y) + 0.2 * np.sin(X + Y)
    h = np.exp(f)[..., None, None]
    path = BundleMetricPath.periodic(h, (2 * np.pi / N,) * 2)
    om = omega_flat_frame(path)
    dfx = np.cos(X) + 0.2 * np.cos(X + Y)
    dfy = -np.sin(2 * Y) + 0.2 * np.cos(X + Y)
    assert np.allclose(om[0, ..., 0, 0], dfx, atol=1e-10)
    assert np.allclose(om[1, ..., 0, 0], dfy, atol=1e-10)
    th = theta_one_form(np.eye(1), om)
    assert np.allclose(th[0], dfx, atol=1e-10)


def test_variation_of_scaled_metric_is_identity():
    h = np.array([[2.0, 0.5], [0.5, 1.0]])
    path = BundleMetricPath(h, hdot=h)
    assert np.allclose(variation_V(path), np.eye(2))


def test_theta_zero_omega():
    assert np.all(theta_one_form(np.eye(2), np.zeros((2, 4, 4, 2, 2))) == 0)


def test_theta_closed_rank_two():
    N = 64
    X, Y = grid2(N)
    a = np.sin(X) * np.cos(Y)
    b = 0.3 * np.cos(X + 2 * Y)
    c = 0.4 * np.sin(2 * X - Y)
    h = np.empty((N, N, 2, 2))
    # h = exp(S) for a symmetric S, computed per sample
    for i in range(N):
        for j in range(N):
            S = np.array([[a[i, j], b[i, j]], [b[i, j], c[i, j]]])
            w, U = np.linalg.eigh(S)
            h[i, j] = U @ np.diag(np.exp(w)) @ U.T
    path = BundleMetricPath.periodic(h, (2 * np.pi / N,) * 2)
    th = theta_one_form(np.eye(2), omega_flat_frame(path))
    dth = exterior_derivative_2d(th, (2 * np.pi / N,) * 2)
    assert np.max(np.abs(dth)) < 1e-8


def test_bundle_metric_validation():
    with pytest.raises(ValueError):
        BundleMetricPath(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        BundleMetricPath(np.array([[-1.0]]))
