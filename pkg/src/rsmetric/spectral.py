"""Discrete de Rham complexes on S^1 and T^2, equivariant torsion and the anomaly experiments.

Cochains: q-forms live on q-cells; d is the (holonomy-twisted) difference
quotient and the inner products are diagonal (block-diagonal for rank > 1)
mass matrices built from g and h at cell centres, so d* = M^{-1} d^H M holds
exactly.  Everything spectral is computed from the symmetrized Laplacians
S_q = M_q^{1/2} Delta_q M_q^{-1/2}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import exp1

KERNEL_REL = 1e-10
GAP_REL = 1e-8
EULER_GAMMA = 0.5772156649015329


class IllConditioned(ArithmeticError):
    """A non-kernel eigenvalue sits too close to the kernel threshold."""


class ConstantKernelViolation(ValueError):
    """dim ker changes along a family."""


class InvarianceError(ValueError):
    """Model data are not invariant under the chosen isometry."""


# ---------------------------------------------------------------------------
# block-diagonal mass matrices


def _blocks(a, m: int) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 1:
        return a[:, None, None] * np.eye(m)
    return a


def _block_diag(blocks: np.ndarray) -> sp.csr_matrix:
    n, m, _ = blocks.shape
    if m == 1:
        return sp.diags(blocks[:, 0, 0]).tocsr()
    return sp.block_diag(list(blocks), format="csr")


def _block_sqrt(blocks: np.ndarray, power: float) -> np.ndarray:
    w, v = np.linalg.eigh(blocks)
    if np.min(w) <= 0:
        raise ValueError("mass matrix is not positive definite")
    return np.einsum("kij,kj,klj->kil", v, w ** power, v.conj())


def _is_complex(*arrs) -> bool:
    return any(np.iscomplexobj(a) for a in arrs)


# ---------------------------------------------------------------------------
# generic complex


@dataclass
class DiscreteComplex:
    """Cochain complex with d[q]: C^{n_q} -> C^{n_{q+1}}, mass blocks and a group generator."""

    d: list
    mass: list
    gamma: list
    rank: int = 1
    order: int = 1
    mesh: float = 1.0
    dim: int = 1

    def __post_init__(self):
        self.d = [sp.csr_matrix(x) for x in self.d]
        self.gamma = [sp.csr_matrix(x) for x in self.gamma]
        for q, x in enumerate(self.d):
            if x.shape != (self.size(q + 1), self.size(q)):
                raise ValueError("d and mass shapes disagree")
        for q in range(len(self.d) - 1):
            if abs(self.d[q + 1] @ self.d[q]).max() > 1e-9 * max(1.0, abs(self.d[q]).max() ** 2):
                raise ValueError("d o d != 0")

    # basic pieces
    def size(self, q: int) -> int:
        return self.mass[q].shape[0] * self.rank

    @property
    def top(self) -> int:
        return len(self.mass) - 1

    def M(self, q: int) -> sp.csr_matrix:
        return _block_diag(self.mass[q])

    @cached_property
    def _Mhalf(self):
        return [(_block_diag(_block_sqrt(b, 0.5)), _block_diag(_block_sqrt(b, -0.5))) for b in self.mass]

    def dtilde(self, q: int) -> sp.csr_matrix:
        """M_{q+1}^{1/2} d_q M_q^{-1/2}."""
        return (self._Mhalf[q + 1][0] @ self.d[q] @ self._Mhalf[q][1]).tocsr()

    def sym(self, op, q: int):
        """M^{1/2} op M^{-1/2} for an operator on q-cochains."""
        return self._Mhalf[q][0] @ sp.csr_matrix(op) @ self._Mhalf[q][1]

    def dstar(self, q: int):
        """Adjoint of d_q: M_q^{-1} d_q^H M_{q+1}."""
        Minv = _block_diag(np.linalg.inv(self.mass[q]))
        return Minv @ self.d[q].conj().T @ self.M(q + 1)

    def laplacian(self, q: int):
        out = sp.csr_matrix((self.size(q), self.size(q)), dtype=self.d[0].dtype)
        if q > 0:
            out = out + self.d[q - 1] @ self.dstar(q - 1)
        if q < self.top:
            out = out + self.dstar(q) @ self.d[q]
        return out.tocsr()

    def S(self, q: int) -> sp.csr_matrix:
        out = sp.csr_matrix((self.size(q), self.size(q)), dtype=self.d[0].dtype)
        if q > 0:
            D = self.dtilde(q - 1)
            out = out + D @ D.conj().T
        if q < self.top:
            D = self.dtilde(q)
            out = out + D.conj().T @ D
        return out.tocsr()

    def gamma_tilde(self, q: int, power: int = 1):
        g = self.sym(self.gamma[q], q)
        out = sp.identity(self.size(q), dtype=g.dtype, format="csr")
        for _ in range(power % self.order if self.order else power):
            out = g @ out
        return out.tocsr()

    # spectra (dense, per degree, cached)
    @cached_property
    def _spectra(self) -> dict:
        return {}

    def spectrum(self, q: int):
        if q not in self._spectra:
            self._spectra[q] = np.linalg.eigh(self.S(q).toarray())
        return self._spectra[q]

    def kernel_threshold(self, q: int) -> float:
        lam, _ = self.spectrum(q)
        return KERNEL_REL * max(float(np.max(np.abs(lam))) if lam.size else 0.0, 1.0)

    def split_spectrum(self, q: int):
        """Boolean mask of kernel eigenvalues (below 1e-10 x the largest one)."""
        lam, _ = self.spectrum(q)
        thr = self.kernel_threshold(q)
        bad = (lam >= thr) & (lam < GAP_REL * thr / KERNEL_REL)
        if np.any(bad):
            raise IllConditioned(f"eigenvalue {lam[bad][0]:.3e} near the kernel threshold in degree {q}")
        return lam < thr

    def kernel_dims(self) -> list[int]:
        return [int(np.sum(self.split_spectrum(q))) for q in range(self.top + 1)]

    def mode_weights(self, q: int, op=None, power: int = 1) -> np.ndarray:
        """diag(W^H op~ gamma~ W): per-eigenvector weights of Tr[op gamma f(Delta_q)]."""
        lam, W = self.spectrum(q)
        g = self.gamma_tilde(q, power)
        A = g if op is None else self.sym(op, q) @ g
        return np.real_if_close(np.einsum("ij,ij->j", W.conj(), A @ W))

    # invariants
    def check(self, tol: float = 1e-12) -> dict:
        res = {}
        for q in range(self.top + 1):
            S = self.S(q)
            g = self.gamma_tilde(q)
            scale = max(1.0, abs(S).max())
            res[f"commute_{q}"] = abs(g @ S - S @ g).max() / scale if S.nnz else 0.0
            res[f"psd_{q}"] = float(np.min(self.spectrum(q)[0])) / scale
        return res


# ---------------------------------------------------------------------------
# circle


@dataclass
class CircleModel:
    N: int
    g_nodes: np.ndarray
    g_edges: np.ndarray
    h_nodes: np.ndarray
    h_edges: np.ndarray
    U: np.ndarray = None
    isometry: str = "identity"
    shift: int = 0
    gammaF: np.ndarray = None

    def __post_init__(self):
        N = self.N
        self.h_nodes = np.asarray(self.h_nodes)
        m = 1 if self.h_nodes.ndim == 1 else self.h_nodes.shape[-1]
        self.h_nodes = _blocks(self.h_nodes, m)
        self.h_edges = _blocks(np.asarray(self.h_edges), m)
        self.g_nodes = np.asarray(self.g_nodes, dtype=float)
        self.g_edges = np.asarray(self.g_edges, dtype=float)
        self.U = np.eye(m) if self.U is None else np.asarray(self.U).reshape(m, m)
        self.gammaF = np.eye(m) if self.gammaF is None else np.asarray(self.gammaF).reshape(m, m)
        if self.g_nodes.shape != (N,) or self.g_edges.shape != (N,):
            raise ValueError("g samples must have length N")
        if self.h_nodes.shape != (N, m, m) or self.h_edges.shape != (N, m, m):
            raise ValueError("h samples must have shape (N, m, m)")
        if np.min(self.g_nodes) <= 0 or np.min(self.g_edges) <= 0:
            raise ValueError("g must be positive")
        for h in (self.h_nodes, self.h_edges):
            if not np.allclose(h, np.conj(np.swapaxes(h, 1, 2))) or np.min(np.linalg.eigvalsh(h)) <= 0:
                raise ValueError("h must be hermitian positive definite")
        if not np.allclose(self.U.conj().T @ self.U, np.eye(m), atol=1e-12):
            raise ValueError("holonomy must be unitary")
        if self.isometry not in ("identity", "rotation", "reflection"):
            raise ValueError("isometry must be identity, rotation or reflection")
        if self.isometry == "reflection":
            if N % 2:
                raise InvarianceError("reflection needs even N so both fixed points are nodes")
            if not np.allclose(self.U @ self.U, np.eye(m)):
                raise InvarianceError("reflection needs an involutive holonomy")
        self._check_invariance()

    @property
    def rank(self) -> int:
        return self.h_nodes.shape[-1]

    @property
    def mesh(self) -> float:
        return 2 * np.pi / self.N

    @classmethod
    def from_functions(cls, N: int, g: Callable | None = None, h: Callable | None = None, **kw) -> "CircleModel":
        nodes = 2 * np.pi * np.arange(N) / N
        edges = nodes + np.pi / N
        gf = g or (lambda x: np.ones_like(x))
        hf = h or (lambda x: np.ones_like(x))
        return cls(N, gf(nodes), gf(edges), hf(nodes), hf(edges), **kw)

    def node_perm(self):
        N, j = self.N, self.shift
        k = np.arange(N)
        if self.isometry == "identity":
            return k, np.zeros(N, dtype=bool)
        if self.isometry == "rotation":
            src = k - j
            return src % N, src < 0
        src = -k
        return src % N, src < 0

    def edge_perm(self):
        N, j = self.N, self.shift
        k = np.arange(N)
        if self.isometry == "identity":
            return k, np.zeros(N, dtype=bool), 1.0
        if self.isometry == "rotation":
            src = k - j
            return src % N, src < 0, 1.0
        src = -k - 1
        return src % N, src < 0, -1.0

    def group_order(self) -> int:
        if self.isometry == "identity":
            return 1
        if self.isometry == "reflection":
            return 2
        return self.N // math.gcd(self.N, self.shift % self.N) if self.shift % self.N else 1

    def _check_invariance(self):
        src, _ = self.node_perm()
        esrc, _, _ = self.edge_perm()
        ok = (np.allclose(self.g_nodes[src], self.g_nodes) and np.allclose(self.g_edges[esrc], self.g_edges))
        gF = self.gammaF
        conj = lambda h: np.einsum("ba,kbc,cd->kad", gF.conj(), h, gF)
        ok = ok and np.allclose(conj(self.h_nodes[src]), self.h_nodes) and np.allclose(conj(self.h_edges[esrc]), self.h_edges)
        if not ok:
            raise InvarianceError(f"g or h is not invariant under the {self.isometry}")


def _action_matrix(src, wrapped, sign, gF, U, N, m):
    rows, cols, vals = [], [], []
    Uinv = np.linalg.inv(U)
    for k in range(N):
        blk = sign * (gF @ Uinv if wrapped[k] else gF)
        for a in range(m):
            for b in range(m):
                if blk[a, b] != 0:
                    rows.append(k * m + a)
                    cols.append(src[k] * m + b)
                    vals.append(blk[a, b])
    return sp.csr_matrix((vals, (rows, cols)), shape=(N * m, N * m))


def build_complex(model: CircleModel) -> DiscreteComplex:
    N, m, dt = model.N, model.rank, model.mesh
    cplx = _is_complex(model.U, model.h_nodes, model.gammaF)
    I = sp.identity(m, dtype=complex if cplx else float)
    shift = sp.lil_matrix((N, N), dtype=complex if cplx else float)
    for k in range(N - 1):
        shift[k, k + 1] = 1.0
    d0 = sp.kron(shift.tocsr(), I) - sp.identity(N * m)
    d0 = d0.tolil()
    d0[(N - 1) * m:N * m, 0:m] = model.U
    d0 = d0.tocsr() / dt
    M0 = model.h_nodes * (np.sqrt(model.g_nodes) * dt)[:, None, None]
    M1 = model.h_edges * (dt / np.sqrt(model.g_edges))[:, None, None]
    src, wr = model.node_perm()
    g0 = _action_matrix(src, wr, 1.0, model.gammaF, model.U, N, m)
    esrc, ewr, sgn = model.edge_perm()
    g1 = _action_matrix(esrc, ewr, sgn, model.gammaF, model.U, N, m)
    dc = DiscreteComplex([d0], [M0, M1], [g0, g1], rank=m, order=model.group_order(), mesh=dt, dim=1)
    res = max(abs(g1 @ d0 - d0 @ g0).max(), 0.0)
    if res > 1e-9 / dt:
        raise InvarianceError("the isometry does not commute with d (holonomy / seam mismatch)")
    return dc


# ---------------------------------------------------------------------------
# torus (flat, rank 1)


@dataclass
class TorusModel:
    N: int
    h_nodes: np.ndarray
    h_xedges: np.ndarray
    h_yedges: np.ndarray
    h_faces: np.ndarray
    isometry: str = "identity"

    def __post_init__(self):
        for name in ("h_nodes", "h_xedges", "h_yedges", "h_faces"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (self.N, self.N) or np.min(a) <= 0:
                raise ValueError(f"{name} must be a positive N x N array")
            setattr(self, name, a)
        if self.isometry not in ("identity", "minus_id"):
            raise ValueError("torus isometry must be identity or minus_id")
        if self.N % 2:
            raise InvarianceError("need even N for fixed points on nodes")
        if self.isometry == "minus_id":
            r = lambda a, sx, sy: np.roll(np.roll(a[::-1, ::-1], 1 + sx, 0), 1 + sy, 1)
            ok = (np.allclose(r(self.h_nodes, 0, 0), self.h_nodes) and np.allclose(r(self.h_xedges, -1, 0), self.h_xedges)
                  and np.allclose(r(self.h_yedges, 0, -1), self.h_yedges) and np.allclose(r(self.h_faces, -1, -1), self.h_faces))
            if not ok:
                raise InvarianceError("h is not invariant under -id")

    @property
    def mesh(self) -> float:
        return 2 * np.pi / self.N

    @classmethod
    def from_function(cls, N: int, h: Callable, isometry: str = "identity") -> "TorusModel":
        x = 2 * np.pi * np.arange(N) / N
        c = x + np.pi / N
        P = lambda a, b: np.meshgrid(a, b, indexing="ij")
        return cls(N, h(*P(x, x)), h(*P(c, x)), h(*P(x, c)), h(*P(c, c)), isometry)


def torus_model_build(model: TorusModel) -> DiscreteComplex:
    N, dt = model.N, model.mesh
    S = sp.diags([np.ones(N - 1), np.ones(1)], [1, -(N - 1)], shape=(N, N)) - sp.identity(N)
    I = sp.identity(N)
    Dx = sp.kron(S, I) / dt  # index (i, j) -> i * N + j, x along i
    Dy = sp.kron(I, S) / dt
    d0 = sp.vstack([Dx, Dy]).tocsr()
    d1 = sp.hstack([-Dy, Dx]).tocsr()  # (Dx w_y - Dy w_x)
    area = dt * dt
    mass = [
        (model.h_nodes.ravel() * area)[:, None, None],
        (np.concatenate([model.h_xedges.ravel(), model.h_yedges.ravel()]) * area)[:, None, None],
        (model.h_faces.ravel() * area)[:, None, None],
    ]
    if model.isometry == "identity":
        gam = [sp.identity(N * N), sp.identity(2 * N * N), sp.identity(N * N)]
        order = 1
    else:
        idx = np.arange(N)

        def perm(sx, sy, sign):
            src_i = (-idx - sx) % N
            src_j = (-idx - sy) % N
            rows = (idx[:, None] * N + idx[None, :]).ravel()
            cols = (src_i[:, None] * N + src_j[None, :]).ravel()
            return sp.csr_matrix((np.full(N * N, sign, dtype=float), (rows, cols)), shape=(N * N, N * N))

        gam = [perm(0, 0, 1.0), sp.block_diag([perm(1, 0, -1.0), perm(0, 1, -1.0)], format="csr"), perm(1, 1, 1.0)]
        order = 2
    dc = DiscreteComplex([d0, d1], mass, gam, rank=1, order=order, mesh=dt, dim=2)
    for q in range(2):
        if abs(gam[q + 1] @ dc.d[q] - dc.d[q] @ gam[q]).max() > 1e-9 / dt:
            raise InvarianceError("-id does not commute with d")
    return dc


# ---------------------------------------------------------------------------
# zeta / theta


def zeta_theta(dc: DiscreteComplex, power: int, s: float) -> float:
    """theta(gamma, s) = sum_q (-1)^q q Tr[gamma_q Delta_q^{-s}] on the non-kernel part."""
    total = 0.0
    for q in range(1, dc.top + 1):
        lam, _ = dc.spectrum(q)
        ker = dc.split_spectrum(q)
        w = dc.mode_weights(q, power=power)
        total += (-1) ** q * q * np.sum(w[~ker] * lam[~ker] ** (-s))
    return float(np.real(total))


def theta_prime_zero(dc: DiscreteComplex, power: int = 1) -> float:
    """-sum_q (-1)^q q Tr[gamma_q log Delta_q] on the non-kernel part."""
    total = 0.0
    for q in range(1, dc.top + 1):
        lam, _ = dc.spectrum(q)
        ker = dc.split_spectrum(q)
        w = dc.mode_weights(q, power=power)
        total -= (-1) ** q * q * np.sum(w[~ker] * np.log(lam[~ker]))
    return float(np.real(total))


def log_torsion(dc: DiscreteComplex, power: int = 1, mode: str = "exact") -> float:
    tp = theta_prime_zero(dc, power) if mode == "exact" else theta_prime_renormalized(dc, power)
    return -0.5 * tp


# ---------------------------------------------------------------------------
# heat traces and the small-t window


def heat_supertrace(dc: DiscreteComplex, X=None, power: int = 1, t=1.0, weight: str = "plain"):
    """sum_q (-1)^q Tr[X_q gamma_q exp(-t Delta_q)] (weight='number' inserts q, and drops the kernel)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    total = np.zeros_like(t)
    for q in range(dc.top + 1):
        lam, _ = dc.spectrum(q)
        op = None if X is None else X[q]
        w = dc.mode_weights(q, op, power)
        c = (-1) ** q
        if weight == "number":
            ker = dc.split_spectrum(q)
            w = np.where(ker, 0.0, w)
            c *= q
        total += c * np.real(np.exp(-np.outer(t, lam)) @ w)
    return total if total.size > 1 else float(total[0])


def default_window(dc: DiscreteComplex, n_points: int = 48) -> np.ndarray:
    """t in [20 mesh^2, 0.05]; refuses grids too coarse for a two-scale window."""
    lo = 20 * dc.mesh ** 2
    if lo > 0.025:
        raise ValueError(f"grid too coarse for the small-t window (20 mesh^2 = {lo:.3g})")
    return np.geomspace(lo, 0.05, n_points)


def _fit_powers(dim: int, lattice: bool = True) -> tuple[list, list]:
    cont = [(k - dim) / 2 for k in range(0, 6)]
    lat = [-dim / 2 - 1, -dim / 2 - 2] if lattice else []
    return cont, lat


def fit_small_t(ts: np.ndarray, f: np.ndarray, dim: int) -> dict:
    """Least-squares fit of f on the window by t^alpha terms; returns {alpha: coefficient}."""
    cont, lat = _fit_powers(dim)
    powers = lat + cont
    A = np.stack([ts ** a for a in powers], axis=1)
    scale = np.max(np.abs(A), axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, f, rcond=None)
    return {a: c / s for a, c, s in zip(powers, coef, scale)}


def lim_window(dc: DiscreteComplex, X=None, power: int = 1, ts=None) -> float:
    """Emulated LIM_{t->0}: t^0 coefficient of the window fit of the heat supertrace."""
    ts = default_window(dc) if ts is None else ts
    f = heat_supertrace(dc, X, power, ts)
    return float(fit_small_t(ts, f, dc.dim)[0.0])


def theta_prime_renormalized(dc: DiscreteComplex, power: int = 1, ts=None) -> float:
    """theta'(0) with the small-t part of the Mellin integral replaced by the continuum-type fit.

    Large t (t > t0): sum over modes of w E_1(t0 lambda).  Small t: the fitted
    terms a t^alpha (alpha a continuum power) integrate to a t0^alpha / alpha,
    and a t^0 to a (log t0 + gamma_E).  The lattice term is fitted but dropped.
    """
    ts = default_window(dc) if ts is None else ts
    t0 = float(ts[-1])
    f = heat_supertrace(dc, None, power, ts, weight="number")
    # theta uses -(...)^N N: heat_supertrace already carries (-1)^q q
    coef = fit_small_t(ts, f, dc.dim)
    cont, _ = _fit_powers(dc.dim)
    small = 0.0
    for a in cont:
        small += coef[a] * (math.log(t0) + EULER_GAMMA) if a == 0 else coef[a] * t0 ** a / a
    large = 0.0
    for q in range(1, dc.top + 1):
        lam, _ = dc.spectrum(q)
        ker = dc.split_spectrum(q)
        w = dc.mode_weights(q, power=power)
        large += (-1) ** q * q * np.sum(np.real(w[~ker]) * exp1(t0 * lam[~ker]))
    return float(small + large)


# ---------------------------------------------------------------------------
# cohomology, Gram matrices and the equivariant L^2 metric


def _combinatorial_harmonic(dc: DiscreteComplex, q: int) -> np.ndarray:
    """Metric-independent representatives of H^q: kernel of the unweighted combinatorial Laplacian."""
    cache = dc.__dict__.setdefault("_harmonic_cache", {})
    if q not in cache:
        cache[q] = _combinatorial_harmonic_uncached(dc, q)
    return cache[q]


def _combinatorial_harmonic_uncached(dc: DiscreteComplex, q: int) -> np.ndarray:
    n = dc.size(q)
    L = sp.csr_matrix((n, n), dtype=dc.d[0].dtype)
    if q > 0:
        L = L + dc.d[q - 1] @ dc.d[q - 1].conj().T
    if q < dc.top:
        L = L + dc.d[q].conj().T @ dc.d[q]
    L = L * dc.mesh ** 2
    if n <= 400:
        w, v = np.linalg.eigh(L.toarray())
        return v[:, w < 1e-9]
    k = 8
    while True:
        w, v = spla.eigsh(L.tocsc(), k=k, sigma=-1e-3, which="LM")
        if np.sum(w < 1e-9) < k:
            return v[:, w < 1e-9]
        k *= 2


def _character_basis(dc: DiscreteComplex, q: int, reps: np.ndarray) -> dict:
    """Split the cohomology representatives into isotypic pieces of the cyclic group <gamma>."""
    k = dc.order
    if reps.shape[1] == 0:
        return {}
    out = {}
    # Euclidean projector onto the representative space (identifies classes)
    Q, _ = np.linalg.qr(reps)
    g = dc.gamma[q]
    powers = [Q]
    for _ in range(1, k):
        powers.append(g @ powers[-1])
    for a in range(k):
        P = sum(np.exp(-2j * np.pi * a * b / k) * powers[b] for b in range(k)) / k
        P = Q @ (Q.conj().T @ P)
        u, s, _ = np.linalg.svd(P, full_matrices=False)
        r = int(np.sum(s > 1e-8))
        if r:
            B = u[:, :r]
            out[a] = B if np.iscomplexobj(reps) or k > 2 else np.real_if_close(B)
    return out


def _pivots(K: np.ndarray) -> np.ndarray:
    """Rows I with K[I, :] invertible (column-pivoted QR of K^H)."""
    _, _, piv = sla.qr(K.conj().T, pivoting=True, mode="economic")
    return piv[: K.shape[1]]


def _harmonic_basis(dc: DiscreteComplex, q: int) -> np.ndarray:
    cache = dc.__dict__.setdefault("_harmonic_basis_cache", {})
    if q not in cache:
        cache[q] = _harmonic_part(dc, q, _combinatorial_harmonic(dc, q))
    return cache[q]


def _harmonic_part(dc: DiscreteComplex, q: int, B: np.ndarray) -> np.ndarray:
    """M-orthogonal projection of closed cochains onto (im d_{q-1})^perp: the harmonic representatives.

    b - d u with u coexact, i.e. Delta_{q-1} u = d* b; solved in symmetric form
    after deleting the rows/columns of a pivot set of ker Delta_{q-1}.
    """
    if q == 0 or B.shape[1] == 0:
        return B
    Mh, Mih = dc._Mhalf[q - 1]
    K = Mh @ _harmonic_basis(dc, q - 1)
    S = dc.S(q - 1)
    rhs = Mih @ (dc.d[q - 1].conj().T @ (dc.M(q) @ B))
    keep = np.ones(S.shape[0], dtype=bool)
    if K.shape[1]:
        keep[_pivots(np.linalg.qr(K)[0])] = False
    x = np.zeros(rhs.shape, dtype=np.result_type(S.dtype, rhs.dtype))
    lu = spla.splu(S[keep][:, keep].tocsc())
    r = np.asarray(rhs[keep])
    if np.iscomplexobj(r) and not np.iscomplexobj(S.data):
        x[keep] = lu.solve(np.ascontiguousarray(r.real)) + 1j * lu.solve(np.ascontiguousarray(r.imag))
    else:
        x[keep] = lu.solve(np.asarray(r, dtype=x.dtype))
    return B - dc.d[q - 1] @ (Mih @ x)


def gram_blocks(dc: DiscreteComplex) -> list[dict]:
    """Per degree q and character index a: Gram matrix of the harmonic representatives."""
    out = []
    for q in range(dc.top + 1):
        reps = _combinatorial_harmonic(dc, q)
        blocks = {}
        for a, B in _character_basis(dc, q, reps).items():
            H = _harmonic_part(dc, q, B)
            blocks[a] = H.conj().T @ (dc.M(q) @ H)
        out.append(blocks)
    return out


def equivariant_log_metric(dc: DiscreteComplex, power: int = 1) -> float:
    """sum_q (-1)^q sum_W log det Gram_q(W) chi_W(gamma^power) for the cyclic group <gamma>."""
    k = dc.order
    total = 0.0
    for q, blocks in enumerate(gram_blocks(dc)):
        for a, G in blocks.items():
            chi = np.exp(2j * np.pi * a * power / k)
            total += (-1) ** q * np.real(np.linalg.slogdet(G)[1] * chi)
    return float(total)


def log_rs_metric(dc: DiscreteComplex, power: int = 1, mode: str = "exact") -> float:
    """log ||.||^2(gamma) = log |.|^2(gamma) + 2 log tau(gamma)."""
    if mode == "sector":
        tp = theta_prime_sector(dc)
    elif mode == "exact":
        tp = theta_prime_zero(dc, power)
    elif mode == "window":
        tp = theta_prime_renormalized(dc, power)
    else:
        raise ValueError("mode must be exact, window or sector")
    return equivariant_log_metric(dc, power) - tp


# ---------------------------------------------------------------------------
# sparse sector log-determinants (involutions, large grids)


def _sector_bases(g: sp.csr_matrix) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Orthonormal bases of the +1 / -1 eigenspaces of a signed-permutation involution."""
    g = g.tocsc()
    n = g.shape[0]
    plus, minus = [], []
    seen = np.zeros(n, dtype=bool)
    for j in range(n):
        if seen[j]:
            continue
        col = g[:, j]
        i = int(col.indices[0])
        s = float(np.real(col.data[0]))
        seen[j] = seen[i] = True
        if i == j:
            (plus if s > 0 else minus).append({j: 1.0})
        else:
            r = 1 / math.sqrt(2)
            # g e_j = s e_i, so e_j + s e_i is +1, e_j - s e_i is -1
            plus.append({j: r, i: s * r})
            minus.append({j: r, i: -s * r})

    def mat(vecs):
        rows, cols, vals = [], [], []
        for c, v in enumerate(vecs):
            for r_, x in v.items():
                rows.append(r_)
                cols.append(c)
                vals.append(x)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, len(vecs)))

    return mat(plus), mat(minus)


def _logdet_prime(S: sp.csr_matrix, K: np.ndarray) -> float:
    """log det' of a PSD matrix with orthonormal kernel basis K, via a principal minor."""
    n = S.shape[0]
    keep = np.ones(n, dtype=bool)
    corr = 0.0
    if K.shape[1]:
        I = _pivots(K)
        keep[I] = False
        corr = 2 * np.linalg.slogdet(K[I, :])[1]
    lu = spla.splu(S[keep][:, keep].tocsc())
    return float(np.sum(np.log(np.abs(lu.U.diagonal()))) - corr)


def theta_prime_sector(dc: DiscreteComplex) -> float:
    """theta'(0) for gamma = id or an involution, without dense eigensolves."""
    total = 0.0
    for q in range(1, dc.top + 1):
        S = dc.S(q)
        H = _harmonic_basis(dc, q)
        Kfull = dc._Mhalf[q][0] @ H if H.shape[1] else H
        if dc.order == 1:
            sectors = [(sp.identity(S.shape[0], format="csr"), 1.0)]
        elif dc.order == 2:
            Bp, Bm = _sector_bases(dc.gamma_tilde(q))
            sectors = [(Bp, 1.0), (Bm, -1.0)]
        else:
            raise ValueError("sector mode supports only involutions")
        tr_log = 0.0
        for B, chi in sectors:
            Ss = (B.T @ S @ B).tocsr()
            K = np.asarray(B.T @ Kfull) if Kfull.shape[1] else np.zeros((B.shape[1], 0))
            if K.shape[1]:
                u, s, _ = np.linalg.svd(K, full_matrices=False)
                K = u[:, s > 1e-8]
            tr_log += chi * _logdet_prime(Ss, K)
        total -= (-1) ** q * q * tr_log
    return float(total)


# ---------------------------------------------------------------------------
# variation identities


def _graded(dc: DiscreteComplex):
    sizes = [dc.size(q) for q in range(dc.top + 1)]
    off = np.concatenate([[0], np.cumsum(sizes)])
    n = int(off[-1])
    D = sp.lil_matrix((n, n), dtype=dc.d[0].dtype)
    for q, d in enumerate(dc.d):
        D[off[q + 1]:off[q + 2], off[q]:off[q + 1]] = d
    M = sp.block_diag([dc.M(q) for q in range(dc.top + 1)], format="csr")
    return D.tocsr(), M, off


def insertion(dcm: DiscreteComplex, dcp: DiscreteComplex, step: float) -> list:
    """X_q = M_q^{-1} dM_q/deps by central differences (C in the metric case, V in the bundle case)."""
    out = []
    for q in range(dcm.top + 1):
        Minv = np.linalg.inv(0.5 * (dcm.mass[q] + dcp.mass[q]))
        dM = (dcp.mass[q] - dcm.mass[q]) / (2 * step)
        out.append(_block_diag(Minv @ dM))
    return out


def insertion_exact(family: Callable, eps: float = 0.0, step: float = 1e-4, build=None) -> list:
    build = build or build_complex
    return insertion(build(family(eps - step)), build(family(eps + step)), step)


def laplacian_variation_check(family: Callable, case: str | None = None, step: float = 1e-4, build=None) -> dict:
    """Finite-difference Delta-dot against -X d*d + d* X d - d X d* + d d* X, and the Gram-derivative identity.

    X = M^{-1} dM/deps is C for a metric family and V for a bundle-metric family.
    """
    build = build or build_complex
    models = [family(-step), family(0.0), family(step)]
    if case is not None and isinstance(models[0], CircleModel):
        fixed = ("h_nodes", "h_edges") if case == "gTM" else ("g_nodes", "g_edges") if case == "hF" else None
        if fixed is None:
            raise ValueError("case must be gTM or hF")
        if any(not np.allclose(getattr(models[0], a), getattr(models[2], a)) for a in fixed):
            raise ValueError(f"a {case} family must keep {fixed[0][0]} fixed")
    dm, d0, dp = (build(m) for m in models)
    Dm, Mm, _ = _graded(dm)
    D0, M0, off = _graded(d0)
    Dp, Mp, _ = _graded(dp)

    def lap(D, M):
        Minv = sp.diags(1.0 / M.diagonal()) if d0.rank == 1 else sp.csr_matrix(np.linalg.inv(M.toarray()))
        Ds = Minv @ D.conj().T @ M
        return (D @ Ds + Ds @ D).toarray()

    fd = (lap(Dp, Mp) - lap(Dm, Mm)) / (2 * step)
    X = sp.block_diag(insertion(dm, dp, step), format="csr").toarray()
    Minv = np.linalg.inv(M0.toarray())
    D = D0.toarray()
    Ds = Minv @ D.conj().T @ M0.toarray()
    formula = -X @ Ds @ D + Ds @ X @ D - D @ X @ Ds + D @ Ds @ X
    scale = max(np.max(np.abs(fd)), 1e-300)
    res = float(np.max(np.abs(fd - formula)) / scale)
    # d/deps log|.|^2 (gamma) against Tr{(-1)^N X gamma P_0}
    lm = equivariant_log_metric(dm)
    lp = equivariant_log_metric(dp)
    fd_metric = (lp - lm) / (2 * step)
    Xq = insertion(dm, dp, step)
    tr = harmonic_supertrace(d0, Xq)
    return {"laplacian_residual": res, "metric_fd": fd_metric, "metric_trace": tr,
            "metric_residual": abs(fd_metric - tr) / max(1.0, abs(tr)), "fd_norm": float(scale)}


def harmonic_supertrace(dc: DiscreteComplex, X: list, power: int = 1) -> float:
    """Tr{(-1)^N X gamma P_0} with P_0 the M-orthogonal harmonic projection."""
    total = 0.0
    for q in range(dc.top + 1):
        H = _harmonic_basis(dc, q)
        if H.shape[1] == 0:
            continue
        M = dc.M(q)
        G = H.conj().T @ (M @ H)
        # P_0 = H G^{-1} H^H M ; Tr[X gamma P_0] = Tr[G^{-1} H^H M X gamma H]
        g = dc.gamma[q]
        for _ in range(power - 1):
            g = dc.gamma[q] @ g
        A = H.conj().T @ (M @ (X[q] @ (g @ H)))
        total += (-1) ** q * np.real(np.trace(np.linalg.solve(G, A)))
    return float(total)


def random_graded_family(rng: np.random.Generator, dims=(4, 6, 4), kernel=(1, 0, 1), involution: bool = True):
    """eps -> (H_q(eps), gamma_q): PSD blocks with a fixed kernel, commuting with an involution gamma."""
    blocks = []
    for n, k in zip(dims, kernel):
        n_plus = n // 2 if involution else n
        parts = []
        for npart, sign in ((n_plus, 1.0), (n - n_plus, -1.0)):
            if npart == 0:
                continue
            kk = min(k, npart) if sign > 0 else 0
            Q, _ = np.linalg.qr(rng.normal(size=(npart, npart)))
            lam = np.concatenate([np.zeros(kk), rng.uniform(0.5, 3.0, npart - kk)])
            B = rng.normal(size=(npart - kk, npart - kk))
            parts.append((Q, lam, B + B.T, kk, sign))
        blocks.append(parts)

    def family(eps):
        mats, gams = [], []
        for parts in blocks:
            hs, gs = [], []
            for Q, lam, B, kk, sign in parts:
                D = np.diag(lam)
                D[kk:, kk:] += eps * B
                hs.append(Q @ D @ Q.T)
                gs.append(sign * np.eye(len(lam)))
            mats.append(sla.block_diag(*hs))
            gams.append(sla.block_diag(*gs))
        return mats, gams

    return family


def _kernel_mask(A: np.ndarray):
    w, v = np.linalg.eigh(A)
    return w, v, w < KERNEL_REL * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)


def prop_var_finite_check(family: Callable, step: float = 1e-5) -> dict:
    """d/deps of -sum (-1)^q q Tr[gamma log H_q] against -sum (-1)^q q Tr[gamma Hdot H^{-1} (1 - P_0)]."""

    def theta_prime(eps):
        total = 0.0
        for q, (A, g) in enumerate(zip(*family(eps))):
            w, v, ker = _kernel_mask(A)
            total -= (-1) ** q * q * np.sum(np.log(w[~ker]) * np.einsum("ij,ij->j", v, g @ v)[~ker])
        return total

    kd = [[int(np.sum(_kernel_mask(A)[2])) for A in family(e)[0]] for e in (-step, 0.0, step)]
    if kd[0] != kd[1] or kd[1] != kd[2]:
        raise ConstantKernelViolation(f"kernel dimension changes along the family: {kd}")
    fd = (theta_prime(step) - theta_prime(-step)) / (2 * step)
    formula = 0.0
    mats, gams = family(0.0)
    plus, minus = family(step)[0], family(-step)[0]
    for q, (A, g) in enumerate(zip(mats, gams)):
        Hdot = (plus[q] - minus[q]) / (2 * step)
        w, v, ker = _kernel_mask(A)
        Hinv = (v[:, ~ker] / w[~ker]) @ v[:, ~ker].T
        formula -= (-1) ** q * q * np.trace(g @ Hdot @ Hinv)
    return {"fd": float(fd), "formula": float(formula), "residual": float(abs(fd - formula) / max(1.0, abs(formula)))}


# ---------------------------------------------------------------------------
# anomaly experiments


@dataclass
class TorsionReport:
    gamma: str
    case: str
    N: int
    mode: str
    step: float
    log_tau: float
    log_l2: float
    log_rs: float
    lhs: float
    rhs: float
    lim: float | None = None
    abs_error: float = field(init=False)
    rel_error: float = field(init=False)

    def __post_init__(self):
        self.abs_error = abs(self.lhs - self.rhs)
        self.rel_error = self.abs_error / abs(self.rhs) if self.rhs else float("inf")

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("gamma", "case", "N", "mode", "step", "log_tau", "log_l2",
                                             "log_rs", "lhs", "rhs", "lim", "abs_error", "rel_error")}
        return {k: float(v) if isinstance(v, (float, np.floating)) else v for k, v in out.items()}


def _rhs_circle(model: CircleModel, vdot_nodes: np.ndarray | None, case: str) -> float:
    from .local_index import FixedPointData, SampleSet, rhs_variation_gTM, rhs_variation_hF

    if case == "gTM":
        # fixed sets are points or the whole circle: theta ^ e~' has no top-degree part
        dim = 0 if model.isometry == "reflection" else 1
        return rhs_variation_gTM(np.zeros((dim, 0)), np.zeros((dim, 0)), np.zeros(0), dim)
    m = model.rank
    if model.isometry == "reflection":
        pts = []
        for k in (0, model.N // 2):
            pts.append(FixedPointData(0, 0, np.zeros((0,) * 4), np.zeros((0, 0)),
                                      model.gammaF, vdot_nodes[k]))
        return rhs_variation_hF(SampleSet(pts))
    if model.isometry == "identity":
        # M^gamma = S^1, odd-dimensional: the Euler density vanishes pointwise
        pts = [FixedPointData(1, 0, np.zeros((1,) * 4), np.zeros((0, 0)), np.eye(m), vdot_nodes[k])
               for k in range(model.N)]
        return rhs_variation_hF(SampleSet(pts, np.full(model.N, model.mesh)))
    # rotations: no fixed points unless the power is trivial, and then as for the identity
    return 0.0


def anomaly_experiment(family: Callable, case: str, power: int = 1, step: float = 1e-4, mode: str = "window",
                       with_lim: bool = False) -> TorsionReport:
    """Central difference of log ||.||^2(gamma) along the family against the local index RHS."""
    if case not in ("gTM", "hF"):
        raise ValueError("case must be gTM or hF")
    models = [family(-step), family(0.0), family(step)]
    is_torus = isinstance(models[0], TorusModel)
    build = torus_model_build if is_torus else build_complex
    dcs = [build(m) for m in models]
    kd = [_kernel_dims_cheap(dc) for dc in dcs]
    if kd[0] != kd[1] or kd[1] != kd[2]:
        raise ConstantKernelViolation(f"kernel dimensions vary along the family: {kd}")
    vals = [log_rs_metric(dc, power, mode) for dc in dcs]
    lhs = (vals[2] - vals[0]) / (2 * step)
    mid = dcs[1]
    model = models[1]
    if is_torus:
        rhs = _rhs_torus(models[0], models[2], step)
        gamma_label = model.isometry
    else:
        vdot = None
        if case == "hF":
            vdot = np.linalg.solve(model.h_nodes, (models[2].h_nodes - models[0].h_nodes) / (2 * step))
        rhs = _rhs_circle(model, vdot, case)
        gamma_label = model.isometry if power == 1 else f"{model.isometry}^{power}"
    lim = None
    if with_lim and not is_torus:
        lim = lim_window(mid, insertion(dcs[0], dcs[2], step), power)
    tp = theta_prime_sector(mid) if mode == "sector" else (
        theta_prime_zero(mid, power) if mode == "exact" else theta_prime_renormalized(mid, power))
    return TorsionReport(gamma_label, case, models[1].N, mode, step, -0.5 * tp,
                         equivariant_log_metric(mid, power), vals[1], lhs, rhs, lim)


def _kernel_dims_cheap(dc: DiscreteComplex) -> list[int]:
    return [_combinatorial_harmonic(dc, q).shape[1] for q in range(dc.top + 1)]


def _rhs_torus(mm: TorusModel, mp: TorusModel, step: float) -> float:
    from .local_index import FixedPointData, SampleSet, rhs_variation_hF

    vdot = (np.log(mp.h_nodes) - np.log(mm.h_nodes)) / (2 * step)
    if mm.isometry == "identity":
        return 0.0  # flat torus: e(TT^2) = 0
    N = mm.N
    pts = [FixedPointData(0, 2, np.zeros((0,) * 4), -np.eye(2), np.eye(1), np.array([[vdot[i, j]]]))
           for i in (0, N // 2) for j in (0, N // 2)]
    return rhs_variation_hF(SampleSet(pts))


# ---------------------------------------------------------------------------
# convergence


def richardson(values, ratio: float = 2.0, order: float = 2.0) -> list[float]:
    """Extrapolations (r^p v_{k+1} - v_k) / (r^p - 1) for consecutive refinements."""
    f = ratio ** order
    return [(f * b - a) / (f - 1) for a, b in zip(values[:-1], values[1:])]


def holonomy_circle(N: int, phi: float, g: Callable | None = None, h: Callable | None = None) -> CircleModel:
    return CircleModel.from_functions(N, g, h, U=np.array([[np.exp(1j * phi)]]))


def convergence_table(make: Callable, Ns, quantity: Callable) -> dict:
    vals = [quantity(build_complex(make(N))) for N in Ns]
    ext = richardson(vals)
    return {"N": list(Ns), "value": vals, "extrapolation": ext,
            "drift": abs(ext[-1] - ext[-2]) if len(ext) > 1 else float("nan")}
