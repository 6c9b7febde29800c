from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsmetric.clifford_core import (
    CliffordElement,
    DenseAlgebra,
    fock_rep,
    pack,
    supertrace,
)
from rsmetric.lichnerowicz_transport import (
    PointGeometry,
    casimir_clifford,
    casimir_two_ways,
    derivation_matrix,
    h_odd,
    hodge_C,
    lich_E,
    lich_E_lifted,
    odd_symbol,
    random_point_geometry,
    sigma_symbols_E,
    split_even_odd,
    step_halving_ratio,
    transport_closed_form,
    transport_exponent,
    transport_ode_solve,
    transport_sigma_closed_form,
)
from rsmetric.random_data import random_curvature_tensor, random_skew


def random_geometry(n, m, rng, scale=1.0):
    return random_point_geometry(n, m, rng, scale)


# --- Casimir ----------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_casimir_identity_exact(n):
    left, right = casimir_two_ways(n)
    assert left.is_exact and right.is_exact
    assert left == right


def test_casimir_n2_diagonal():
    left, _ = casimir_two_ways(2)
    assert np.array_equal(left.to_float_matrix(), np.diag([0, -1, -1, 0]))


def test_derivation_matrix_exponentiates_to_exterior_power():
    from scipy.linalg import expm

    from rsmetric.clifford_core import exterior_power_matrix

    rng = np.random.default_rng(4)
    A = random_skew(3, rng)
    assert np.allclose(expm(derivation_matrix(A)), exterior_power_matrix(expm(A)), atol=1e-12)


def test_casimir_is_lifted_minus_plain():
    rng = np.random.default_rng(0)
    for n in (2, 3):
        g = random_geometry(n, 1, rng)
        diff = (lich_E_lifted(g) - lich_E(g)).coeffs[:, 0, 0]
        cas = casimir_clifford(n)
        assert np.allclose(diff, cas.to_dense(), atol=1e-14)
        fock = fock_rep(CliffordElement.from_dense(n, diff)).to_float_matrix()
        assert np.allclose(fock, casimir_two_ways(n)[0].to_float_matrix(), atol=1e-13)


# --- E and its symbols --------------------------------------------------------

def test_flat_rank_one_E_is_quarter_square():
    a = np.array([0.5, -1.25, 2.0])
    g = PointGeometry(3, np.zeros((3,) * 4), a.reshape(3, 1, 1), np.zeros((3, 3, 1, 1)))
    E = lich_E(g)
    assert E.degree(1e-15) == 0
    assert np.isclose(E.coeffs[0, 0, 0], np.sum(a ** 2) / 4)


def test_scalar_curvature_term():
    g = PointGeometry.zero(2)
    g = PointGeometry(2, g.R, g.omega, g.domega, r=3.0)
    assert np.isclose(lich_E(g).coeffs[0, 0, 0], 0.75)


def test_filtration_degrees():
    rng = np.random.default_rng(1)
    for n in (2, 3, 4):
        g = random_geometry(n, 2, rng)
        assert lich_E(g).degree(1e-14) == 4
        assert lich_E_lifted(g).degree(1e-14) <= 4
        assert h_odd(g).degree(1e-14) == 2
        ev, od = split_even_odd(g)
        assert (ev + od).max_abs_diff(lich_E_lifted(g)) < 1e-14


def test_sigma4_formula():
    rng = np.random.default_rng(2)
    n = 3
    g = random_geometry(n, 2, rng)
    s4, s2 = sigma_symbols_E(g)
    expect = np.zeros(1 << (2 * n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    if i == j or k == l:
                        continue
                    # e_i e_j ê_k ê_l in canonical order
                    sgn = (1 if i < j else -1) * (1 if k < l else -1)
                    expect[pack(n, e=(i, j), ehat=(k, l))] += -g.R[i, j, k, l] / 8 * sgn
            if i != j:
                # e_i e_j ê_i ê_j: both pairs carry the same ordering sign
                expect[pack(n, e=(i, j), ehat=(i, j))] += -0.25
    for a in range(2):
        assert np.allclose(s4.coeffs[:, a, a], expect, atol=1e-14)
    assert np.allclose(s4.coeffs[:, 0, 1], 0)
    assert np.allclose(s4.coeffs[:, 0, 0], -transport_exponent(g), atol=1e-14)
    assert np.allclose(s2.coeffs, -odd_symbol(g) / 2, atol=1e-14)


def test_sigma2_rank_one_flat_vanishes():
    g = PointGeometry(2, np.zeros((2,) * 4), np.ones((2, 1, 1)), np.zeros((2, 2, 1, 1)))
    assert not np.any(sigma_symbols_E(g)[1].coeffs)


def test_end_element_entries_roundtrip():
    rng = np.random.default_rng(3)
    g = random_geometry(2, 2, rng)
    E = lich_E(g)
    ent = E.entries()
    assert np.allclose(ent[1][0].to_dense(), E.coeffs[:, 1, 0])
    assert np.allclose(E.trace_element().to_dense(), E.coeffs[:, 0, 0] + E.coeffs[:, 1, 1])
    with pytest.raises(ValueError):
        E.symbol_k(5)


# --- validation ---------------------------------------------------------------

def test_geometry_rejects_bad_curvature():
    R = np.zeros((2,) * 4)
    R[0, 1, 0, 1] = 1.0
    with pytest.raises(ValueError):
        PointGeometry(2, R, np.zeros((2, 1, 1)), np.zeros((2, 2, 1, 1)))
    R = np.zeros((3,) * 4)
    R[0, 1, 0, 2] = R[1, 0, 2, 0] = 1.0
    R[1, 0, 0, 2] = R[0, 1, 2, 0] = -1.0
    R[0, 2, 0, 1] = R[2, 0, 1, 0] = 1.0
    R[2, 0, 0, 1] = R[0, 2, 1, 0] = -1.0
    PointGeometry(3, R, np.zeros((3, 1, 1)), np.zeros((3, 3, 1, 1)))
    R2 = R.copy()
    R2[1, 2, 0, 0] = 5.0
    with pytest.raises(ValueError):
        PointGeometry(3, R2, np.zeros((3, 1, 1)), np.zeros((3, 3, 1, 1)))


def test_geometry_rejects_asymmetric_gdot():
    with pytest.raises(ValueError):
        PointGeometry(2, np.zeros((2,) * 4), np.zeros((2, 1, 1)), np.zeros((2, 2, 1, 1)),
                      gdot=np.array([[0.0, 1.0], [0.0, 0.0]]))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_random_curvature_tensor_is_valid(n):
    rng = np.random.default_rng(n)
    PointGeometry(n, random_curvature_tensor(n, rng), np.zeros((n, 1, 1)), np.zeros((n, n, 1, 1)))


# --- Hodge term ----------------------------------------------------------------

def test_hodge_C_example():
    C = hodge_C(np.eye(2, dtype=np.int64))
    expect = (CliffordElement.generator(2, 0) * CliffordElement.generator(2, 0, hat=True)
              + CliffordElement.generator(2, 1) * CliffordElement.generator(2, 1, hat=True)) * Fraction(-1, 2)
    assert C == expect
    assert C.is_exact


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4), st.randoms(use_true_random=False))
def test_hodge_C_supertraceless(n, rnd):
    G = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            G[i, j] = G[j, i] = Fraction(rnd.randint(-5, 5), rnd.randint(1, 3))
    assert supertrace(hodge_C(G)) == 0


def test_hodge_C_rejects_asymmetric():
    with pytest.raises(ValueError):
        hodge_C(np.array([[0, 1], [2, 0]]))


# --- transport ------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 4])
def test_transport_matches_closed_form(n):
    rng = np.random.default_rng(10 + n)
    for _ in range(20):
        g = random_geometry(n, int(rng.integers(1, 3)), rng)
        st_ = transport_ode_solve(g, None, steps=4)
        assert st_.F.max_abs_diff(transport_closed_form(g)) < 1e-10
        assert st_.Fsigma.max_abs_diff(transport_sigma_closed_form(g)) < 1e-10


def test_transport_closed_form_flat_bundle():
    n = 2
    g = PointGeometry.zero(n)
    F = transport_closed_form(g).coeffs[:, 0, 0]
    # exp(1/4 sum e e ê ê) = 1 + 1/2 e1 e2 ê1 ê2
    expect = np.zeros(16)
    expect[0] = 1
    expect[pack(2, e=(0, 1), ehat=(0, 1))] = 0.5
    assert np.allclose(F, expect)
    assert not np.any(transport_sigma_closed_form(g).coeffs)


def test_transport_invariant_geometry_ignores_rotation():
    # with R = 0 and nabla omega = 0 the coefficients are O(n)-invariant
    rng = np.random.default_rng(5)
    n = 2
    g = PointGeometry(n, np.zeros((n,) * 4), np.zeros((n, 1, 1)), np.zeros((n, n, 1, 1)))
    A = random_skew(n, rng)
    st_ = transport_ode_solve(g, A, steps=8)
    assert st_.F.max_abs_diff(transport_closed_form(g)) < 1e-12


def test_transport_homotopy_limit():
    # n = 3: in dimension 2 the curvature term is rotation invariant
    rng = np.random.default_rng(6)
    g = random_geometry(3, 2, rng)
    A = random_skew(3, rng)
    base = transport_ode_solve(g, A, steps=16, homotopy=0.0)
    assert base.F.max_abs_diff(transport_closed_form(g)) < 1e-10
    errs = [transport_ode_solve(g, A, steps=16, homotopy=t).F.max_abs_diff(base.F) for t in (1e-1, 1e-2, 1e-3)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2 * errs[0] * 1.5


def test_transport_rotated_solution_differs():
    rng = np.random.default_rng(7)
    g = random_geometry(3, 1, rng)
    A = random_skew(3, rng)
    assert transport_ode_solve(g, A, steps=16).F.max_abs_diff(transport_closed_form(g)) > 1e-3


@pytest.mark.slow
@pytest.mark.parametrize("n", [2, 4])
def test_transport_rk4_order(n):
    rng = np.random.default_rng(20 + n)
    g = random_geometry(n, 2, rng)
    # keep the rotation frequencies moderate so step 1/16 is in the asymptotic regime
    A = random_skew(n, rng, scale=0.3)
    ratio = step_halving_ratio(g, A, steps=16, reference_steps=256)
    assert 12 <= ratio <= 20


def test_transport_validates_input():
    g = PointGeometry.zero(2)
    with pytest.raises(ValueError):
        transport_ode_solve(g, np.eye(2))
    with pytest.raises(ValueError):
        transport_ode_solve(g, None, steps=0)


def test_dense_mul_matches_sparse_elements():
    rng = np.random.default_rng(9)
    alg = DenseAlgebra(2, "clifford")
    x = rng.normal(size=(16, 2, 2))
    y = rng.normal(size=(16, 2, 2))
    got = alg.mul(x, y)
    ent = lambda z, a, b: CliffordElement.from_dense(2, z[:, a, b])
    for a in range(2):
        for b in range(2):
            expect = ent(x, a, 0) * ent(y, 0, b) + ent(x, a, 1) * ent(y, 1, b)
            assert np.allclose(got[:, a, b], expect.to_dense())
