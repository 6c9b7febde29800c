import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsmetric.asymptotics import split_limit_oracle
from rsmetric.chern_weil import curvature_matrix, euler_form
from rsmetric.local_index import (
    FixedPointData,
    FixedPointDegeneracy,
    SampleSet,
    det_cancellation,
    hallo_inputs,
    integrand_I,
    integrand_I_sigma,
    integrand_I_sigma_with_omega2,
    pipeline_consistency,
    random_fixed_point_data,
    rhs_variation_gTM,
    rhs_variation_hF,
    torus_sigma_comparison,
)
from rsmetric.random_data import rotation_without_fixed_vectors


def surface_R(kappa):
    # R_1212 = kappa
    R = np.zeros((2,) * 4)
    R[0, 1, 0, 1] = R[1, 0, 1, 0] = kappa
    R[0, 1, 1, 0] = R[1, 0, 0, 1] = -kappa
    return R


def point(n0, R=None, V=1.0, gF=1.0, **kw):
    R = np.zeros((n0,) * 4) if R is None else R
    return FixedPointData(n0, 0, R, np.zeros((0, 0)), np.array([[gF]]), np.array([[V]]), **kw)


# --- det cancellation ---------------------------------------------------------

def test_det_cancellation_examples():
    assert det_cancellation(-np.eye(2)) == pytest.approx((4, 4), abs=1e-14)
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert det_cancellation(rot) == pytest.approx((2, 2), abs=1e-14)
    with pytest.raises(FixedPointDegeneracy):
        det_cancellation(np.eye(2))
    with pytest.raises(FixedPointDegeneracy):
        det_cancellation(np.diag([1.0, -1.0]))


@pytest.mark.parametrize("n1", [2, 4])
def test_det_cancellation_random(n1):
    rng = np.random.default_rng(n1)
    for _ in range(100):
        g = rotation_without_fixed_vectors(n1, rng)
        s, d = det_cancellation(g)
        assert abs(s - d) < 1e-12
        assert d > 0


def test_q1_determinant_is_square():
    rng = np.random.default_rng(1)
    d = random_fixed_point_data(2, 4, rng)
    s, det = det_cancellation(d.gammaTilde1)
    assert math.isclose(np.linalg.det(d.Q1()), det ** 2, rel_tol=1e-12)
    v = rng.normal(size=4)
    assert math.isclose(v @ d.Q1() @ v, np.linalg.norm(v - d.gammaTilde1 @ v) ** 2, rel_tol=1e-12)


# --- I(gamma, x) -----------------------------------------------------------------

def test_integrand_zero_dimensional():
    d = FixedPointData(0, 2, np.zeros((0,) * 4), -np.eye(2), np.eye(2), np.diag([2.0, 3.0]))
    assert float(integrand_I(d)) == 5.0


def test_integrand_odd_dimension_vanishes():
    rng = np.random.default_rng(2)
    for n0 in (1, 3):
        d = random_fixed_point_data(n0, 2, rng)
        assert float(integrand_I(d)) == 0.0
        assert float(integrand_I_sigma(d)) == 0.0


@pytest.mark.parametrize("kappa", [-1.0, 0.3, 2.5])
def test_integrand_surface_matches_euler_form(kappa):
    R = surface_R(kappa)
    d = point(2, R, V=1.0)
    euler = float(euler_form(curvature_matrix(R)).value.top())
    assert abs(float(integrand_I(d)) - euler) < 1e-12
    assert math.isclose(float(integrand_I(d)), -kappa / (2 * math.pi))


def test_integrand_four_dim_matches_euler_form():
    from rsmetric.random_data import random_curvature_tensor

    rng = np.random.default_rng(3)
    for _ in range(5):
        R = random_curvature_tensor(4, rng)
        d = point(4, R, V=1.0)
        euler = float(euler_form(curvature_matrix(R)).value.top())
        assert abs(float(integrand_I(d)) - euler) < 1e-10 * max(1, abs(euler))


def test_gauss_bonnet_via_integrand():
    x, w = np.polynomial.legendre.leggauss(40)
    for r in (0.5, 1.0, 2.0):
        th = 0.5 * math.pi * (x + 1)
        wt = 0.5 * math.pi * w * 2 * math.pi * r ** 2 * np.sin(th)
        pts = [point(2, surface_R(-1.0 / r ** 2)) for _ in th]
        assert abs(rhs_variation_hF(SampleSet(pts, wt)) - 2.0) < 1e-6


# --- I^sigma -----------------------------------------------------------------------

def test_integrand_sigma_vanishing_cases():
    rng = np.random.default_rng(4)
    d = random_fixed_point_data(2, 2, rng)
    z = FixedPointData(2, 2, d.Rgamma, d.gammaTilde1, d.gammaF, d.V, gdot=None, domega=d.domega)
    assert float(integrand_I_sigma(z)) == 0.0
    z = FixedPointData(2, 2, d.Rgamma, d.gammaTilde1, d.gammaF, d.V, gdot=d.gdot, domega=None)
    assert float(integrand_I_sigma(z)) == 0.0


def test_integrand_sigma_n0_one_is_zero():
    d = point(1, gdot=np.array([[2.0]]), domega=np.array([[[[3.0]]]]))
    assert float(integrand_I_sigma(d)) == 0.0


def test_integrand_sigma_flat_two_dim_by_hand():
    # R = 0: -T_0(1/4 sum gdot_ij D_kl e_i ê_j e_k ê_l) with T_0(e1 e2 ê1 ê2) = -1/pi
    G = np.array([[1.0, 0.5], [0.5, -2.0]])
    D = np.array([[0.3, -1.0], [0.7, 2.0]])
    d = point(2, gdot=G, domega=D[:, :, None, None])
    by_hand = (1 / (4 * math.pi)) * (-G[0, 0] * D[1, 1] + G[0, 1] * D[1, 0] + G[1, 0] * D[0, 1] - G[1, 1] * D[0, 0])
    assert math.isclose(float(integrand_I_sigma(d)), by_hand, rel_tol=1e-12)


def test_omega_squared_term_drops_under_trace_for_abelian_data():
    rng = np.random.default_rng(5)
    d = random_fixed_point_data(2, 2, rng, fiber_dim=1)
    assert math.isclose(float(integrand_I_sigma_with_omega2(d)), float(integrand_I_sigma(d)), rel_tol=1e-12)


def test_sigma_density_integrates_to_theta_transgression():
    out = torus_sigma_comparison(N=16, seed=2)
    assert abs(out["int_I_sigma"] - out["minus_int_theta_etilde"]) < 1e-10 * max(1, abs(out["int_I_sigma"]))
    # not pointwise: the two densities differ by an exact form
    assert out["pointwise_max_diff"] > 1e-3


# --- right-hand sides ------------------------------------------------------------------

def test_rhs_two_points():
    fdot = {"p": 0.7, "q": -0.2}
    pts = [FixedPointData(0, 2, np.zeros((0,) * 4), -np.eye(2), np.eye(1), np.array([[v]])) for v in fdot.values()]
    assert math.isclose(rhs_variation_hF(SampleSet(pts)), 0.5)
    assert rhs_variation_hF(SampleSet([])) == 0.0


def test_rhs_gTM_low_dimensions():
    assert rhs_variation_gTM(np.ones((1, 4)), np.ones((1, 4)), np.ones(4), 1) == 0.0
    assert rhs_variation_gTM(np.zeros((0, 2)), np.zeros((0, 2)), np.ones(2), 0) == 0.0
    assert rhs_variation_gTM(np.zeros((2, 3)), np.ones((2, 3)), np.ones(3), 2) == 0.0


# --- Hallo pipeline ------------------------------------------------------------------------

@pytest.mark.parametrize("dims", [(2, 2), (4, 2), (2, 4)])
def test_pipeline_consistency(dims):
    rng = np.random.default_rng(sum(dims) * 7 + dims[0])
    for _ in range(20):
        d = random_fixed_point_data(*dims, rng, fiber_dim=int(rng.integers(1, 3)))
        a, b = pipeline_consistency(d)
        assert abs(a - b) < 1e-10 * max(1.0, abs(b))


def test_pipeline_identity_reduces_to_power_series():
    rng = np.random.default_rng(9)
    d = random_fixed_point_data(4, 0, rng)
    a, b = pipeline_consistency(d)
    assert abs(a - b) < 1e-12


def test_pipeline_against_fock_oracle():
    # the Hallo side through the independent Fock / Gaussian-limit oracle, float data
    rng = np.random.default_rng(11)
    d = random_fixed_point_data(2, 2, rng)
    a1, Phi = hallo_inputs(d)
    assert abs(float(split_limit_oracle(a1, Phi, 2)) - float(integrand_I(d))) < 1e-10


def test_fixed_point_data_validation():
    with pytest.raises(FixedPointDegeneracy):
        FixedPointData(0, 2, np.zeros((0,) * 4), np.eye(2), np.eye(1), np.eye(1))
    with pytest.raises(ValueError):
        FixedPointData(0, 2, np.zeros((0,) * 4), 2 * np.eye(2), np.eye(1), np.eye(1))
    with pytest.raises(ValueError):
        FixedPointData(2, 0, np.ones((2,) * 4), np.zeros((0, 0)), np.eye(1), np.eye(1))
    with pytest.raises(ValueError):
        FixedPointData(0, 0, np.zeros((0,) * 4), np.zeros((0, 0)), np.eye(2), np.eye(1))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, math.pi), st.floats(0.3, math.pi))
def test_det_cancellation_block_angles(a, b):
    def rot(t):
        return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])

    g = np.zeros((4, 4))
    g[:2, :2], g[2:, 2:] = rot(a), rot(b)
    s, d = det_cancellation(g)
    assert abs(s - (2 - 2 * math.cos(a)) * (2 - 2 * math.cos(b))) < 1e-12
    assert abs(s - d) < 1e-12
