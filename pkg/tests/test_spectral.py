import math

import numpy as np
import pytest
import scipy.sparse as sp

from rsmetric.spectral import (
    CircleModel,
    ConstantKernelViolation,
    DiscreteComplex,
    IllConditioned,
    InvarianceError,
    TorusModel,
    anomaly_experiment,
    build_complex,
    equivariant_log_metric,
    gram_blocks,
    harmonic_supertrace,
    heat_supertrace,
    holonomy_circle,
    insertion_exact,
    laplacian_variation_check,
    lim_window,
    log_rs_metric,
    log_torsion,
    prop_var_finite_check,
    random_graded_family,
    richardson,
    theta_prime_sector,
    theta_prime_zero,
    torus_model_build,
    zeta_theta,
)
from rsmetric.spectral import _harmonic_basis

f0 = lambda x: 0.3 * np.cos(x) + 0.2 * np.cos(2 * x)
v0 = lambda x: 1.0 + 0.5 * np.cos(x) + 0.3 * np.cos(3 * x)
g0 = lambda x: 1 + 0.2 * np.cos(x)
w0 = lambda x: 0.5 * np.cos(x) + 0.2 * np.cos(2 * x)


def h_family(N, iso="reflection"):
    return lambda e: CircleModel.from_functions(N, g=g0, h=lambda x: np.exp(f0(x) + e * v0(x)), isometry=iso)


def g_family(N, iso="reflection"):
    return lambda e: CircleModel.from_functions(N, g=lambda x: g0(x) * np.exp(e * w0(x)), h=lambda x: np.exp(f0(x)),
                                                isometry=iso)


def two_cell(lam):
    # C^0 = C^1 = R, d = sqrt(lam), unit masses: Delta_0 = Delta_1 = lam
    one = np.ones((1, 1, 1))
    return DiscreteComplex([np.array([[math.sqrt(lam)]])], [one, one], [np.eye(1), np.eye(1)])


# --- build_complex ----------------------------------------------------------------------

def test_trivial_model_kernels():
    dc = build_complex(CircleModel.from_functions(32))
    assert dc.kernel_dims() == [1, 1]
    m2 = CircleModel.from_functions(32, h=lambda x: np.stack([np.eye(2)] * len(x)))
    assert build_complex(m2).kernel_dims() == [2, 2]


def test_holonomy_kills_kernel():
    assert build_complex(holonomy_circle(24, 1.3)).kernel_dims() == [0, 0]
    U = np.diag([1.0, np.exp(0.7j)])
    m = CircleModel.from_functions(24, h=lambda x: np.stack([np.eye(2)] * len(x)), U=U)
    assert build_complex(m).kernel_dims() == [1, 1]


@pytest.mark.parametrize("iso,shift", [("identity", 0), ("reflection", 0), ("rotation", 6), ("rotation", 12)])
def test_complex_invariants(iso, shift):
    U = np.array([[-1.0]]) if iso == "reflection" else np.array([[np.exp(0.4j)]]) if iso == "rotation" else None
    h = (lambda x: np.exp(0.2 * np.cos(8 * x))) if iso == "rotation" else (lambda x: np.exp(f0(x)))
    g = (lambda x: 1 + 0.1 * np.cos(8 * x)) if iso == "rotation" else g0
    dc = build_complex(CircleModel.from_functions(48, g=g, h=h, U=U, isometry=iso, shift=shift))
    res = dc.check()
    for q in (0, 1):
        assert res[f"commute_{q}"] < 1e-12
        assert res[f"psd_{q}"] > -1e-10
    # rank-nullity on the circle: chi = 0
    k = dc.kernel_dims()
    assert k[0] - k[1] == 0


def test_adjoint_and_harmonic_decomposition():
    rng = np.random.default_rng(0)
    dc = build_complex(CircleModel.from_functions(40, g=g0, h=lambda x: np.exp(f0(x))))
    u, w = rng.normal(size=40), rng.normal(size=40)
    lhs = (dc.d[0] @ u) @ (dc.M(1) @ w)
    rhs = u @ (dc.M(0) @ (dc.dstar(0) @ w))
    assert abs(lhs - rhs) < 1e-12 * abs(lhs)
    for q in (0, 1):
        H = _harmonic_basis(dc, q)
        L = dc.laplacian(q)
        assert np.max(np.abs(L @ H)) < 1e-10 * max(1.0, abs(L).max())


def test_invariance_errors():
    with pytest.raises(InvarianceError):
        CircleModel.from_functions(32, h=lambda x: np.exp(np.sin(x)), isometry="reflection")
    with pytest.raises(InvarianceError):
        CircleModel.from_functions(31, isometry="reflection")
    with pytest.raises(InvarianceError):
        holonomy_circle(32, 1.0).__class__.from_functions(32, U=np.array([[1j]]), isometry="reflection")
    with pytest.raises(ValueError):
        CircleModel.from_functions(32, g=lambda x: np.cos(x))
    with pytest.raises(ValueError):
        CircleModel.from_functions(32, U=np.array([[2.0]]))
    with pytest.raises(InvarianceError):
        TorusModel.from_function(8, lambda x, y: np.exp(np.sin(x)), isometry="minus_id")


# --- zeta / theta -------------------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.5, 2.0, 7.0])
def test_single_eigenvalue_theta(lam):
    dc = two_cell(lam)
    for s in (-0.5, 0.0, 0.5, 1.0):
        assert abs(zeta_theta(dc, 1, s) + lam ** (-s)) < 1e-14
    assert abs(theta_prime_zero(dc) - math.log(lam)) < 1e-14
    assert abs(log_torsion(dc) + 0.5 * math.log(lam)) < 1e-14


def test_zeta_is_direct_eigenvalue_sum():
    dc = build_complex(CircleModel.from_functions(64, g=g0, h=lambda x: np.exp(f0(x)), isometry="reflection"))
    lam, W = np.linalg.eigh(dc.S(1).toarray())
    g = dc.gamma_tilde(1).toarray()
    tr = np.einsum("ij,ij->j", W, g @ W)
    nz = lam > 1e-10 * lam.max()
    for s in (-0.5, 0.0, 0.5):
        direct = -np.sum(tr[nz] * lam[nz] ** (-s))
        assert abs(zeta_theta(dc, 1, s) - direct) < 1e-12 * max(1.0, abs(direct))
    ds = 1e-5
    num = (zeta_theta(dc, 1, ds) - zeta_theta(dc, 1, -ds)) / (2 * ds)
    assert abs(num - theta_prime_zero(dc)) < 1e-8 * max(1.0, abs(num))


def test_matched_spectra_cancel():
    # Delta_0 and Delta_1 share the spectrum; only degree 1 carries the weight N
    dc = build_complex(CircleModel.from_functions(16))
    lam0, lam1 = dc.spectrum(0)[0], dc.spectrum(1)[0]
    assert np.allclose(lam0, lam1)
    assert abs(zeta_theta(dc, 1, 0.0) + (16 - 1)) < 1e-10


def test_ill_conditioned():
    one = np.ones((2, 1, 1))
    d = np.diag([1.0, 1e-5])  # eigenvalue 1e-10: between the kernel and gap thresholds
    dc = DiscreteComplex([d], [one, one], [np.eye(2), np.eye(2)])
    with pytest.raises(IllConditioned):
        theta_prime_zero(dc)


def test_sector_mode_matches_dense():
    m = CircleModel.from_functions(48, g=g0, h=lambda x: np.exp(f0(x)), isometry="reflection")
    dc = build_complex(m)
    assert abs(theta_prime_sector(dc) - theta_prime_zero(dc)) < 1e-9 * abs(theta_prime_zero(dc))
    t = torus_model_build(TorusModel.from_function(8, lambda x, y: np.exp(0.3 * np.cos(x + y)), "minus_id"))
    assert abs(theta_prime_sector(t) - theta_prime_zero(t)) < 1e-9 * abs(theta_prime_zero(t))


# --- equivariant L^2 metric --------------------------------------------------------------------

def test_log_metric_trivial_and_scaling():
    dc = build_complex(CircleModel.from_functions(32))
    assert abs(equivariant_log_metric(dc)) < 1e-12
    c = 0.7
    scaled = build_complex(CircleModel.from_functions(32, h=lambda x: np.exp(c) * np.ones_like(x)))
    for q in (0, 1):
        a = np.linalg.slogdet(gram_blocks(dc)[q][0])[1]
        b = np.linalg.slogdet(gram_blocks(scaled)[q][0])[1]
        assert abs(b - a - c) < 1e-12
    assert abs(equivariant_log_metric(scaled)) < 1e-12


def test_log_metric_identity_element_is_non_equivariant():
    refl = build_complex(CircleModel.from_functions(32, g=g0, h=lambda x: np.exp(f0(x)), isometry="reflection"))
    plain = build_complex(CircleModel.from_functions(32, g=g0, h=lambda x: np.exp(f0(x))))
    assert abs(equivariant_log_metric(refl, power=2) - equivariant_log_metric(plain)) < 1e-12
    assert abs(equivariant_log_metric(refl, power=1) - equivariant_log_metric(plain)) > 1e-3


def test_rotation_characters():
    m = CircleModel.from_functions(24, h=lambda x: np.exp(0.3 * np.cos(4 * x)), isometry="rotation", shift=6)
    dc = build_complex(m)
    assert dc.order == 4
    blocks = gram_blocks(dc)
    # constants and the invariant 1-form both sit in the trivial character
    assert list(blocks[0]) == [0] and list(blocks[1]) == [0]
    assert abs(equivariant_log_metric(dc, 1) - equivariant_log_metric(dc, 0)) < 1e-12


# --- Delta-dot identities -------------------------------------------------------------------------

def test_laplacian_variation_constant_family():
    out = laplacian_variation_check(lambda e: CircleModel.from_functions(32, g=g0))
    assert out["laplacian_residual"] == 0.0
    assert out["metric_fd"] == 0.0


@pytest.mark.parametrize("iso", ["identity", "reflection"])
@pytest.mark.parametrize("case", ["gTM", "hF"])
def test_laplacian_variation(case, iso):
    fam = g_family(256, iso) if case == "gTM" else h_family(256, iso)
    out = laplacian_variation_check(fam, case)
    assert out["laplacian_residual"] < 1e-6
    assert out["metric_residual"] < 1e-6


def test_laplacian_variation_case_mismatch():
    with pytest.raises(ValueError):
        laplacian_variation_check(g_family(32), "hF")


# --- heat supertrace ----------------------------------------------------------------------------

def test_heat_supertrace_limits():
    refl = build_complex(CircleModel.from_functions(64, g=g0, h=lambda x: np.exp(f0(x)), isometry="reflection"))
    plain = build_complex(CircleModel.from_functions(64, g=g0, h=lambda x: np.exp(f0(x))))
    ts = np.array([1e-3, 0.1, 1.0, 50.0])
    # McKean-Singer: t-independent, equal to the Lefschetz number
    assert np.allclose(heat_supertrace(refl, None, 1, ts), 2.0, atol=1e-10)
    assert np.allclose(heat_supertrace(plain, None, 1, ts), 0.0, atol=1e-10)
    X = [1.5 * sp.identity(64), 1.5 * sp.identity(64)]
    assert np.allclose(heat_supertrace(refl, X, 1, ts), 3.0, atol=1e-10)
    assert np.all(np.isfinite(heat_supertrace(refl, None, 1, np.geomspace(1e-4, 10, 20))))
    with pytest.raises(ValueError):
        heat_supertrace(refl, None, 1, 0.0)


def test_lim_matches_harmonic_plus_variation():
    # variation formula in the h-case: d/de log||.||^2 = LIM Tr{(-1)^N V gamma e^{-t Delta}}
    fam = h_family(512)
    X = insertion_exact(fam)
    dc = build_complex(fam(0.0))
    lim = lim_window(dc, X)
    assert abs(lim - 2.0) < 2e-3
    # the large-t limit is the harmonic part alone
    assert abs(heat_supertrace(dc, X, 1, 1e4) - harmonic_supertrace(dc, X)) < 1e-8


# --- variation identity in finite dimensions --------------------------------------------------------------------

def test_prop_var_constant_family():
    A = np.diag([0.0, 1.0, 2.0])
    out = prop_var_finite_check(lambda e: ([A, A], [np.eye(3), np.eye(3)]))
    assert out["fd"] == 0.0 and out["formula"] == 0.0


def test_prop_var_diagonal_family():
    lam = np.array([1.0, 2.0, 0.5, 3.0])
    mu = np.array([0.3, -0.7, 1.1, 0.2])
    deg = [0, 1, 1, 2]

    def fam(e):
        d = lam + e * mu
        mats = [np.diag(d[[i for i in range(4) if deg[i] == q]]) for q in range(3)]
        return mats, [np.eye(len(m)) for m in mats]

    out = prop_var_finite_check(fam)
    closed = -sum((-1) ** deg[i] * deg[i] * mu[i] / lam[i] for i in range(4))
    assert abs(out["formula"] - closed) < 1e-10
    assert abs(out["fd"] - closed) < 1e-8


def test_prop_var_random_families():
    rng = np.random.default_rng(42)
    for _ in range(20):
        dims = tuple(int(x) for x in rng.integers(2, 6, size=3))
        kernel = tuple(int(rng.integers(0, 2)) for _ in dims)
        out = prop_var_finite_check(random_graded_family(rng, dims, kernel))
        assert sum(dims) <= 16
        assert out["residual"] < 1e-6


def test_prop_var_kernel_jump():
    def fam(e):
        return [np.diag([e, 1.0]), np.diag([1.0, 2.0])], [np.eye(2), np.eye(2)]

    with pytest.raises(ConstantKernelViolation):
        prop_var_finite_check(fam)


# --- anomaly experiments ----------------------------------------------------------------------------------

def test_reflection_h_family_small_grid():
    r = anomaly_experiment(h_family(256), "hF", with_lim=True)
    assert abs(r.rhs - (v0(0.0) + v0(math.pi))) < 1e-6
    assert r.rel_error < 2e-2
    assert abs(r.lim - r.rhs) < 2e-2
    assert math.isclose(r.log_rs, r.log_l2 + 2 * r.log_tau, rel_tol=1e-12, abs_tol=1e-12)


def test_reflection_h_family_exact_mode_is_discrete_identity():
    r = anomaly_experiment(h_family(128), "hF", mode="exact")
    assert r.rel_error < 1e-6


@pytest.mark.parametrize("fam,case", [(h_family(256, "identity"), "hF"), (g_family(256, "identity"), "gTM"),
                                      (g_family(256, "reflection"), "gTM")])
def test_vanishing_cases_small_grid(fam, case):
    r = anomaly_experiment(fam, case)
    assert r.rhs == 0.0
    assert abs(r.lhs) < 3e-2


def test_constant_kernel_violation():
    # holonomy e^{i 1e4 eps}: trivial at eps = 0, generic at eps = +-1e-4
    fam = lambda e: holonomy_circle(32, 1e4 * e)
    with pytest.raises(ConstantKernelViolation):
        anomaly_experiment(fam, "hF", mode="exact")
    with pytest.raises(ValueError):
        anomaly_experiment(h_family(32), "bogus")


def test_torus_small():
    f = lambda x, y: 0.3 * np.cos(x) + 0.2 * np.cos(x + y)
    v = lambda x, y: 0.5 + 0.4 * np.cos(y) + 0.3 * np.cos(x - y)
    fam = lambda e: TorusModel.from_function(16, lambda x, y: np.exp(f(x, y) + e * v(x, y)), "minus_id")
    r = anomaly_experiment(fam, "hF", mode="sector")
    four = sum(v(x, y) for x in (0, math.pi) for y in (0, math.pi))
    assert abs(r.rhs - four) < 1e-6
    assert r.rel_error < 5e-2
    fam = lambda e: TorusModel.from_function(16, lambda x, y: np.exp(f(x, y) + e * v(x, y)))
    r = anomaly_experiment(fam, "hF", mode="sector")
    assert r.rhs == 0.0 and abs(r.lhs) < 1e-6
    dc = torus_model_build(fam(0.0))
    assert [_harmonic_basis(dc, q).shape[1] for q in range(3)] == [1, 2, 1]


# --- convergence ----------------------------------------------------------------------------------------------

def test_richardson():
    vals = [1 + 1 / n ** 2 for n in (4, 8, 16)]
    assert np.allclose(richardson(vals), [1.0, 1.0])


def test_holonomy_torsion_near_continuum():
    # not a spec requirement: log tau -> -log|2 sin(phi/2)| for the flat unitary circle;
    # the window bias is phi-independent and decays roughly like 1/N (2e-3 at N = 512)
    errs = []
    for phi in (1.0, 2.5):
        dc = build_complex(holonomy_circle(512, phi))
        errs.append(log_torsion(dc, mode="window") + math.log(abs(2 * math.sin(phi / 2))))
    assert max(map(abs, errs)) < 5e-3
    assert abs(errs[0] - errs[1]) < 1e-6


def test_log_rs_metric_modes():
    dc = build_complex(CircleModel.from_functions(32))
    with pytest.raises(ValueError):
        log_rs_metric(dc, mode="bogus")
    with pytest.raises(ValueError):
        log_rs_metric(dc, mode="window")
