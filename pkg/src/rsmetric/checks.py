"""Seeded verification checks shared by the CLI suites and the acceptance tests.

Every check returns a CheckResult with a measured error and the tolerance it
is compared against; exact checks count mismatches against tolerance 0.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np


@dataclass
class CheckResult:
    check_id: str
    passed: bool
    error: float
    tolerance: float
    runtime_ms: float
    detail: str = ""


def _timed(fn: Callable, *args, **kw):
    t = time.perf_counter()
    out = fn(*args, **kw)
    return out, 1000 * (time.perf_counter() - t)


def _result(cid, error, tol, ms, detail="", extra_ok=True) -> CheckResult:
    error = float(error)
    return CheckResult(cid, bool(error <= tol and extra_ok), error, float(tol), ms, detail)


# ---------------------------------------------------------------------------
# algebra


def supertrace_duality(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .clifford_core import CliffordElement, supertrace
    from .random_data import random_clifford

    def run():
        rng = random.Random(seed)
        bad = count = 0
        for n in (1, 2, 3, 4):
            elems = [CliffordElement(n, {m: 1}) for m in range(1 << (2 * n))]
            elems += [random_clifford(n, rng, k=rng.randint(1, 12)) for _ in range(200)]
            for a in elems:
                count += 1
                bad += supertrace(a, "fock") != supertrace(a, "berezin")
        return bad, count

    (bad, count), ms = _timed(run)
    return _result("supertrace_duality", bad, 0, ms, f"{count} elements, n<=4, runtime bound 5s",
                   ms < 5000)


def superspur(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .clifford_core import CliffordElement, supertrace, volume_element
    from .scalar import Scalar

    def run():
        bad = 0
        for n in (1, 2, 3, 4):
            top = (1 << (2 * n)) - 1
            bad += sum(supertrace(CliffordElement(n, {m: 1})) != 0 for m in range(top))
            bad += supertrace(volume_element(n)) != Scalar.four_pi_power(n)
        return bad

    bad, ms = _timed(run)
    return _result("superspur", bad, 0, ms, "Str = 0 below degree 2n, Str(omega) = (4 pi)^{n/2}")


def clifford_associativity(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .random_data import random_clifford

    def run():
        rng = random.Random(seed)
        bad = 0
        for n in (1, 2, 3, 4):
            for _ in range(10):
                a, b, c = (random_clifford(n, rng, k=6) for _ in range(3))
                bad += (a * b) * c != a * (b * c)
        return bad

    bad, ms = _timed(run)
    return _result("clifford_associativity", bad, 0, ms, "40 random exact triples")


# ---------------------------------------------------------------------------
# chern-weil


def euler_density_exact(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .chern_weil import curvature_matrix, euler_form
    from .scalar import Scalar

    def run():
        bad = 0
        for k in (Fraction(-1), Fraction(3, 7), Fraction(5, 2)):
            R = np.zeros((2,) * 4, dtype=object)
            R[...] = Fraction(0)
            R[0, 1, 0, 1] = R[1, 0, 1, 0] = k
            R[0, 1, 1, 0] = R[1, 0, 0, 1] = -k
            bad += euler_form(curvature_matrix(R)).value.top() != Scalar.exact(-k / 2, -2)
        return bad

    bad, ms = _timed(run)
    return _result("euler_density_exact", bad, 0, ms, "R_1212 = k gives e = -k/(2 pi)")


def transgression_example(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .chern_weil import EvenForm, Form, transgression_form

    def run():
        rng = np.random.default_rng(seed)
        err = 0.0
        for _ in range(5):
            s12 = float(rng.normal())
            z = EvenForm.of(2, 0.0)
            s = Form.basis(2, (0, 1), s12)
            t = transgression_form([[z, z], [z, z]], [[Form(2), s], [-s, Form(2)]])
            err = max(err, abs(float(t.top()) - s12 / (2 * math.pi)))
        return err

    err, ms = _timed(run)
    return _result("transgression_example", err, 1e-14 * scale, ms, "R = 0: e~' = Sdot_12 / 2 pi")


def omega_and_theta(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .chern_weil import BundleMetricPath, exterior_derivative_2d, omega_flat_frame, theta_one_form

    def run():
        # N = 32 aliases exp(f) at the 1e-8 level in d theta
        N = 48
        x = 2 * np.pi * np.arange(N) / N
        X, Y = np.meshgrid(x, x, indexing="ij")
        f = np.sin(X) + 0.5 * np.cos(2 * Y) + 0.2 * np.sin(X + Y)
        path = BundleMetricPath.periodic(np.exp(f)[..., None, None], (2 * np.pi / N,) * 2)
        om = omega_flat_frame(path)
        dfx = np.cos(X) + 0.2 * np.cos(X + Y)
        dfy = -np.sin(2 * Y) + 0.2 * np.cos(X + Y)
        e1 = max(np.max(np.abs(om[0, ..., 0, 0] - dfx)), np.max(np.abs(om[1, ..., 0, 0] - dfy)))
        th = theta_one_form(np.eye(1), om)
        e2 = np.max(np.abs(exterior_derivative_2d(th, (2 * np.pi / N,) * 2)))
        return max(e1, e2)

    err, ms = _timed(run)
    return _result("omega_theta_flat_frame", err, 1e-10 * scale, ms, "omega = df for h = e^f, d theta = 0")


def gauss_bonnet_euler_form(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .chern_weil import EvenForm, Form, euler_form

    def run():
        x, w = np.polynomial.legendre.leggauss(40)
        err = 0.0
        for r in (0.5, 1.0, 2.0):
            total = 0.0
            for xi, wi in zip(x, w):
                th = 0.5 * math.pi * (xi + 1)
                a = EvenForm(Form.basis(2, (0, 1), math.sin(th)))
                z = EvenForm.of(2, 0.0)
                total += float(euler_form([[z, a], [-a, z]]).value.top()) * 0.5 * math.pi * wi * 2 * math.pi
            err = max(err, abs(total - 2.0))
        return err

    err, ms = _timed(run)
    return _result("gauss_bonnet_euler_form", err, 1e-6 * scale, ms, "radius 0.5, 1, 2 spheres")


# ---------------------------------------------------------------------------
# asymptotics


def gaussian_moments(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from scipy.integrate import quad

    from .asymptotics import gaussian_moment, multi_indices

    def one_dim(a, t):
        val, _ = quad(lambda x: math.exp(-x * x / (4 * t)) * x ** a, -np.inf, np.inf, epsabs=0, epsrel=1e-12)
        return val / math.sqrt(4 * math.pi * t)

    def run():
        err, odd_bad = 0.0, 0
        for N in (1, 2, 3):
            for t in (0.1, 1.0):
                for k in range(7):
                    for alpha in multi_indices(N, k):
                        p, c = gaussian_moment(alpha)
                        q = math.prod(one_dim(a, t) for a in alpha)
                        if any(a % 2 for a in alpha):
                            odd_bad += not (p is None and c.is_zero())
                        else:
                            err = max(err, abs(q - float(c) * t ** p) / abs(float(c) * t ** p))
        return err, odd_bad

    (err, odd_bad), ms = _timed(run)
    return _result("gaussian_moments", err, 1e-6 * scale, ms, f"odd-alpha non-zeros: {odd_bad}", odd_bad == 0)


def p_series_identity(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .asymptotics import moment_identity_check

    bad, times = 0, {}
    for n in (2, 3, 4):
        ok, ms = _timed(moment_identity_check, n, 2 * n)
        bad += not ok
        times[n] = ms
    total = sum(times.values())
    return _result("p_series_identity", bad, 0, total, "n = 2, 3, 4, runtime bound 30s at n = 4",
                   times[4] < 30000)


def asymp4_two_sided(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .asymptotics import asymp4_lhs_oracle, asymp4_rhs, random_polynomial_map

    def run():
        bad = count = 0
        for n in (2, 3, 4):
            for i in range(n // 2 + 1):
                rng = random.Random(seed * 1000 + 10 * n + i)
                for _ in range(50):
                    phi = random_polynomial_map(n, i, rng)
                    bad += asymp4_lhs_oracle(phi, i) != asymp4_rhs(phi, i)
                    count += 1
        return bad, count

    (bad, count), ms = _timed(run)
    return _result("asymp4_two_sided", bad, 0, ms, f"{count} random phi, exact")


# ---------------------------------------------------------------------------
# transport


def casimir_identity(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .lichnerowicz_transport import casimir_two_ways

    def run():
        return sum(a != b for a, b in (casimir_two_ways(n) for n in (1, 2, 3, 4)))

    bad, ms = _timed(run)
    return _result("casimir_identity", bad, 0, ms, "exact 2^n x 2^n, n <= 4")


def transport_closed_forms(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .lichnerowicz_transport import (random_point_geometry, transport_closed_form, transport_ode_solve,
                                         transport_sigma_closed_form)

    def run():
        err = 0.0
        for n in (2, 4):
            rng = np.random.default_rng(seed * 100 + n)
            for _ in range(20):
                g = random_point_geometry(n, int(rng.integers(1, 3)), rng)
                st = transport_ode_solve(g, None, steps=4)
                err = max(err, st.F.max_abs_diff(transport_closed_form(g)),
                          st.Fsigma.max_abs_diff(transport_sigma_closed_form(g)))
        return err

    err, ms = _timed(run)
    return _result("transport_closed_forms", err, 1e-10 * scale, ms, "20 geometries, n = 2, 4, A = 0")


def transport_rk4_order(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .lichnerowicz_transport import random_point_geometry, step_halving_ratio
    from .random_data import random_skew

    def run():
        ratios = []
        for n in (2, 4):
            rng = np.random.default_rng(seed * 100 + 20 + n)
            g = random_point_geometry(n, 2, rng)
            ratios.append(step_halving_ratio(g, random_skew(n, rng, scale=0.3), steps=16, reference_steps=256))
        return ratios

    ratios, ms = _timed(run)
    # distance outside [12, 20]
    err = max(max(12 - r, r - 20, 0.0) for r in ratios)
    return _result("transport_rk4_order", err, 0.0, ms, "step-halving ratios " + ", ".join(f"{r:.2f}" for r in ratios))


# ---------------------------------------------------------------------------
# local index


def pipeline(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .local_index import pipeline_consistency, random_fixed_point_data

    def run():
        err = 0.0
        for dims in ((2, 2), (4, 2), (2, 4)):
            rng = np.random.default_rng(seed * 100 + 7 * sum(dims) + dims[0])
            for _ in range(20):
                d = random_fixed_point_data(*dims, rng, fiber_dim=int(rng.integers(1, 3)))
                a, b = pipeline_consistency(d)
                err = max(err, abs(a - b) / max(1.0, abs(b)))
        return err

    err, ms = _timed(run)
    return _result("pipeline_consistency", err, 1e-10 * scale, ms, "(2,2), (4,2), (2,4), 20 draws each")


def det_cancellation_random(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .local_index import det_cancellation
    from .random_data import rotation_without_fixed_vectors

    def run():
        err = 0.0
        for n1 in (2, 4):
            rng = np.random.default_rng(seed * 100 + n1)
            for _ in range(100):
                s, d = det_cancellation(rotation_without_fixed_vectors(n1, rng))
                err = max(err, abs(s - d))
        return err

    err, ms = _timed(run)
    return _result("det_cancellation", err, 1e-12 * scale, ms, "100 random rotations, n1 = 2, 4")


def _surface_R(kappa):
    R = np.zeros((2,) * 4)
    R[0, 1, 0, 1] = R[1, 0, 1, 0] = kappa
    R[0, 1, 1, 0] = R[1, 0, 0, 1] = -kappa
    return R


def euler_density_agreement(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .chern_weil import curvature_matrix, euler_form
    from .local_index import FixedPointData, integrand_I

    def run():
        rng = np.random.default_rng(seed)
        err = 0.0
        for kappa in rng.normal(scale=2.0, size=20):
            R = _surface_R(kappa)
            d = FixedPointData(2, 0, R, np.zeros((0, 0)), np.eye(1), np.eye(1))
            err = max(err, abs(float(integrand_I(d)) - float(euler_form(curvature_matrix(R)).value.top())))
        return err

    err, ms = _timed(run)
    return _result("euler_density_agreement", err, 1e-8 * scale, ms, "20 synthetic surface curvatures")


def gauss_bonnet_integrand(seed: int = 0, scale: float = 1.0) -> CheckResult:
    from .local_index import FixedPointData, SampleSet, rhs_variation_hF

    def run():
        x, w = np.polynomial.legendre.leggauss(40)
        err = 0.0
        for r in (0.5, 1.0, 2.0):
            th = 0.5 * math.pi * (x + 1)
            wt = 0.5 * math.pi * w * 2 * math.pi * r ** 2 * np.sin(th)
            pts = [FixedPointData(2, 0, _surface_R(-1.0 / r ** 2), np.zeros((0, 0)), np.eye(1), np.eye(1))
                   for _ in th]
            err = max(err, abs(rhs_variation_hF(SampleSet(pts, wt)) - 2.0))
        return err

    err, ms = _timed(run)
    return _result("gauss_bonnet_integrand", err, 1e-6 * scale, ms, "int e = 2 on spheres r = 0.5, 1, 2")


# ---------------------------------------------------------------------------
# spectral


SPECTRAL_DEFAULTS = {
    "N_variation": 256,
    "N_reflection": 2048,
    "N_vanishing": 1024,
    "N_torus": 64,
    "N_convergence": [256, 512, 1024],
    "holonomy": 1.0,
    "step": 1e-4,
}


def _f0(x):
    return 0.3 * np.cos(x) + 0.2 * np.cos(2 * x)


def _v0(x):
    return 1.0 + 0.5 * np.cos(x) + 0.3 * np.cos(3 * x)


def _g0(x):
    return 1 + 0.2 * np.cos(x)


def _w0(x):
    return 0.5 * np.cos(x) + 0.2 * np.cos(2 * x)


def circle_h_family(N: int, iso: str = "reflection"):
    from .spectral import CircleModel

    return lambda e: CircleModel.from_functions(N, g=_g0, h=lambda x: np.exp(_f0(x) + e * _v0(x)), isometry=iso)


def circle_g_family(N: int, iso: str = "reflection"):
    from .spectral import CircleModel

    return lambda e: CircleModel.from_functions(N, g=lambda x: _g0(x) * np.exp(e * _w0(x)),
                                                h=lambda x: np.exp(_f0(x)), isometry=iso)


def torus_h_family(N: int, iso: str = "minus_id"):
    from .spectral import TorusModel

    f = lambda x, y: 0.3 * np.cos(x) + 0.2 * np.cos(x + y) + 0.1 * np.sin(x) * np.sin(2 * y)
    v = lambda x, y: 0.5 + 0.4 * np.cos(y) + 0.3 * np.cos(x - y)
    return lambda e: TorusModel.from_function(N, lambda x, y: np.exp(f(x, y) + e * v(x, y)), iso)


def laplacian_variation(seed: int = 0, scale: float = 1.0, cfg: dict | None = None) -> CheckResult:
    from .spectral import laplacian_variation_check

    cfg = {**SPECTRAL_DEFAULTS, **(cfg or {})}
    N = cfg["N_variation"]

    def run():
        res = []
        for iso in ("identity", "reflection"):
            for case, fam in (("gTM", circle_g_family(N, iso)), ("hF", circle_h_family(N, iso))):
                out = laplacian_variation_check(fam, case, cfg["step"])
                res.append(max(out["laplacian_residual"], out["metric_residual"]))
        return max(res)

    err, ms = _timed(run)
    return _result("laplacian_variation", err, 1e-6 * scale, ms, f"C and V cases, N = {N}, step {cfg['step']}")


def prop_var(seed: int = 0, scale: float = 1.0, cfg: dict | None = None) -> CheckResult:
    from .spectral import prop_var_finite_check, random_graded_family

    def run():
        rng = np.random.default_rng(seed)
        err = 0.0
        for _ in range(20):
            dims = tuple(int(x) for x in rng.integers(2, 6, size=3))
            kernel = tuple(int(rng.integers(0, 2)) for _ in dims)
            err = max(err, prop_var_finite_check(random_graded_family(rng, dims, kernel))["residual"])
        return err

    err, ms = _timed(run)
    return _result("prop_var_finite", err, 1e-6 * scale, ms, "20 random graded families, dim <= 15")


def anomaly_reflection_circle(seed: int = 0, scale: float = 1.0, cfg: dict | None = None) -> CheckResult:
    from .spectral import anomaly_experiment

    cfg = {**SPECTRAL_DEFAULTS, **(cfg or {})}
    N = cfg["N_reflection"]
    r, ms = _timed(anomaly_experiment, circle_h_family(N), "hF", 1, cfg["step"], "window")
    return _result("anomaly_reflection_circle", r.rel_error, 2e-2 * scale, ms,
                   f"N = {N}, LHS {r.lhs:.6f}, RHS {r.rhs:.6f}, runtime bound 60s",
                   ms < 60000 and abs(r.rhs) > 0.1)


def anomaly_torus(seed: int = 0, scale: float = 1.0, cfg: dict | None = None) -> CheckResult:
    from .spectral import anomaly_experiment

    cfg = {**SPECTRAL_DEFAULTS, **(cfg or {})}
    N = cfg["N_torus"]
    r, ms = _timed(anomaly_experiment, torus_h_family(N), "hF", 1, cfg["step"], "sector")
    return _result("anomaly_torus_minus_id", r.rel_error, 5e-2 * scale, ms,
                   f"{N}x{N}, LHS {r.lhs:.6f}, RHS {r.rhs:.6f}")


def anomaly_vanishing(seed: int = 0, scale: float = 1.0, cfg: dict | None = None) -> CheckResult:
    from .spectral import anomaly_experiment

    cfg = {**SPECTRAL_DEFAULTS, **(cfg or {})}
    N = cfg["N_vanishing"]

    def run():
        cases = {"id/g": (circle_g_family(N, "identity"), "gTM"), "id/h": (circle_h_family(N, "identity"), "hF"),
                 "refl/g": (circle_g_family(N, "reflection"), "gTM")}
        return {k: anomaly_experiment(fam, case, 1, cfg["step"], "window") for k, (fam, case) in cases.items()}

    reps, ms = _timed(run)
    err = max(abs(r.lhs - r.rhs) for r in reps.values())
    rhs_ok = all(r.rhs == 0.0 for r in reps.values())
    return _result("anomaly_vanishing", err, 5e-3 * scale, ms,
                   f"N = {N}, |LHS|: " + ", ".join(f"{k} {abs(r.lhs):.1e}" for k, r in reps.items()), rhs_ok)


def holonomy_convergence(seed: int = 0, scale: float = 1.0, cfg: dict | None = None) -> CheckResult:
    from .spectral import build_complex, holonomy_circle, log_torsion, richardson

    cfg = {**SPECTRAL_DEFAULTS, **(cfg or {})}
    Ns = list(cfg["N_convergence"])

    def run():
        vals = [log_torsion(build_complex(holonomy_circle(N, cfg["holonomy"])), mode="window") for N in Ns]
        return vals, richardson(vals)

    (vals, ext), ms = _timed(run)
    drift = abs(ext[-1] - ext[-2]) if len(ext) > 1 else float("inf")
    return _result("holonomy_convergence", drift, 1e-3 * scale, ms,
                   "log tau " + ", ".join(f"{v:.6f}" for v in vals) + "; extrapolated " +
                   ", ".join(f"{v:.6f}" for v in ext))


# ---------------------------------------------------------------------------
# registries


SUITES: dict[str, list[Callable]] = {
    "algebra": [supertrace_duality, superspur, clifford_associativity],
    "chernweil": [euler_density_exact, transgression_example, omega_and_theta, gauss_bonnet_euler_form],
    "asymptotics": [gaussian_moments, p_series_identity, asymp4_two_sided],
    "transport": [casimir_identity, transport_closed_forms, transport_rk4_order],
    "localindex": [pipeline, det_cancellation_random, euler_density_agreement, gauss_bonnet_integrand],
    "spectral": [laplacian_variation, prop_var, anomaly_reflection_circle, anomaly_torus, anomaly_vanishing,
                 holonomy_convergence],
}

SPECTRAL_CHECKS = set(SUITES["spectral"])

ACCEPTANCE: dict[int, list[Callable]] = {
    1: [supertrace_duality],
    2: [superspur],
    3: [casimir_identity],
    4: [gaussian_moments],
    5: [p_series_identity],
    6: [asymp4_two_sided],
    7: [transport_closed_forms, transport_rk4_order],
    8: [pipeline, det_cancellation_random],
    9: [euler_density_agreement, gauss_bonnet_integrand],
    10: [laplacian_variation],
    11: [prop_var],
    12: [anomaly_reflection_circle, anomaly_torus],
    13: [anomaly_vanishing],
    14: [holonomy_convergence],
}


def run_check(fn: Callable, seed: int, scale: float = 1.0, cfg: dict | None = None) -> CheckResult:
    if fn in SPECTRAL_CHECKS:
        return fn(seed, scale, cfg)
    return fn(seed, scale)
