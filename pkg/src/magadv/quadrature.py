"""Quadrature rules on reference simplices (segment, triangle, tetrahedron).

Rules are conical (Duffy) products of Gauss-Legendre and Gauss-Jacobi lines,
so any exactness degree up to the supported maximum is available without
hard-coded point tables.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 12


@dataclass(frozen=True)
class QuadratureRule:
    """Points (reference coordinates) and weights with a stated exactness."""

    dim: int
    points: np.ndarray  # (n, dim)
    weights: np.ndarray  # (n,)
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)


def _gauss_legendre_01(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _gauss_jacobi_01(n, alpha):
    # nodes/weights for int_0^1 p(t) (1-t)^alpha dt
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


def segment_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1], exact for polynomials up to `degree`."""
    n = max(1, (degree + 2) // 2)
    x, w = _gauss_legendre_01(n)
    return QuadratureRule(1, x[:, None], w, 2 * n - 1)


def simplex_rule(dim: int, degree: int) -> QuadratureRule:
    """Rule on the unit reference simplex, exact for total degree <= `degree`.

    dim=2: triangle (0,0)-(1,0)-(0,1); dim=3: tetrahedron with the analogous
    unit vertices. Raises for degree > MAX_DEGREE or unsupported dim.
    """
    if degree > MAX_DEGREE:
        raise ValueError(f"quadrature degree {degree} exceeds supported maximum {MAX_DEGREE}")
    if degree < 0:
        raise ValueError("quadrature degree must be nonnegative")
    n = max(1, (degree + 2) // 2)
    if dim == 2:
        xi, wi = _gauss_legendre_01(n)
        eta, we = _gauss_jacobi_01(n, 1.0)
        x = np.outer(1.0 - eta, xi)  # (n_eta, n_xi)
        y = np.broadcast_to(eta[:, None], x.shape)
        w = np.outer(we, wi)
        pts = np.stack([x.ravel(), y.ravel()], axis=1)
        return QuadratureRule(2, pts, w.ravel(), 2 * n - 1)
    if dim == 3:
        xi, wi = _gauss_legendre_01(n)
        eta, we = _gauss_jacobi_01(n, 1.0)
        zeta, wz = _gauss_jacobi_01(n, 2.0)
        one_z = 1.0 - zeta
        one_e = 1.0 - eta
        x = one_e[None, :, None] * one_z[:, None, None] * xi[None, None, :]
        y = (eta[None, :, None] * one_z[:, None, None]) * np.ones_like(xi)[None, None, :]
        z = zeta[:, None, None] * np.ones((1, n, n))
        w = wz[:, None, None] * we[None, :, None] * wi[None, None, :]
        pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
        return QuadratureRule(3, pts, w.ravel(), 2 * n - 1)
    raise ValueError(f"unsupported simplex dimension {dim}")


def facet_rule(dim: int, degree: int) -> QuadratureRule:
    """Rule on the reference facet of a dim-simplex (segment for 2D, triangle
    for 3D), with weights normalized to sum to 1 so physical weights are
    `w * |F|`."""
    if dim == 2:
        return segment_rule(degree)
    if dim == 3:
        rule = simplex_rule(2, degree)
        return QuadratureRule(2, rule.points, rule.weights * 2.0, rule.degree)
    raise ValueError(f"unsupported dimension {dim}")


def facet_barycentric(rule: QuadratureRule) -> np.ndarray:
    """Barycentric coordinates (n, dim+1) of a facet rule's points."""
    p = rule.points
    lam0 = 1.0 - p.sum(axis=1)
    return np.concatenate([lam0[:, None], p], axis=1)


def reference_volume(dim: int) -> float:
    return {1: 1.0, 2: 0.5, 3: 1.0 / 6.0}[dim]
