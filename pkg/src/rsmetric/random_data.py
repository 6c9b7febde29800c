"""Seeded random inputs shared by the test-suite and the CLI suites."""

from __future__ import annotations

import random
from fractions import Fraction

import numpy as np

from .clifford_core import CliffordElement, popcount


def random_rational(rng: random.Random, num: int = 6, den: int = 4) -> Fraction:
    return Fraction(rng.randint(-num, num), rng.randint(1, den))


def random_clifford(n: int, rng: random.Random, k: int | None = None, max_degree: int | None = None,
                    den: int = 4) -> CliffordElement:
    """Exact element with k random monomials (all monomials if k is None) of degree <= max_degree."""
    pool = [m for m in range(1 << (2 * n)) if max_degree is None or popcount(m) <= max_degree]
    masks = pool if k is None else rng.sample(pool, min(k, len(pool)))
    return CliffordElement(n, {m: random_rational(rng, den=den) for m in masks})


def random_homogeneous_clifford(n: int, degree: int, rng: random.Random, k: int = 6) -> CliffordElement:
    pool = [m for m in range(1 << (2 * n)) if popcount(m) == degree]
    masks = rng.sample(pool, min(k, len(pool)))
    return CliffordElement(n, {m: random_rational(rng) for m in masks})


def random_skew(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(scale=scale, size=(n, n))
    return a - a.T


def random_symmetric(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(scale=scale, size=(n, n))
    return a + a.T


def random_curvature_tensor(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Algebraic curvature tensor: antisymmetric pairs, pair symmetry, first Bianchi.

    Built as a sum of Kulkarni-Nomizu products h (.) k of symmetric matrices,
    which satisfy every symmetry of a Riemann tensor.
    """
    R = np.zeros((n, n, n, n))
    for _ in range(3):
        h = random_symmetric(n, rng, scale)
        k = random_symmetric(n, rng, scale)
        R += (np.einsum("il,jk->ijkl", h, k) + np.einsum("jk,il->ijkl", h, k)
              - np.einsum("ik,jl->ijkl", h, k) - np.einsum("jl,ik->ijkl", h, k))
    R = R / 3
    # remove roundoff from the pair antisymmetries (diagonal blocks become exact zeros)
    R = (R - R.transpose(1, 0, 2, 3)) / 2
    return (R - R.transpose(0, 1, 3, 2)) / 2


def rotation_without_fixed_vectors(n1: int, rng: np.random.Generator, min_angle: float = 0.3) -> np.ndarray:
    """Orthogonal n1 x n1 matrix (n1 even) with rotation angles in [min_angle, pi], conjugated randomly."""
    if n1 % 2:
        raise ValueError("need an even dimension")
    blocks = np.zeros((n1, n1))
    for b in range(n1 // 2):
        th = rng.uniform(min_angle, np.pi)
        c, s = np.cos(th), np.sin(th)
        blocks[2 * b:2 * b + 2, 2 * b:2 * b + 2] = [[c, -s], [s, c]]
    q, r = np.linalg.qr(rng.normal(size=(n1, n1)))
    q = q * np.sign(np.diag(r))
    return q @ blocks @ q.T
