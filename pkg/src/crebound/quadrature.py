"""Gauss rules on segments and triangles."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_segment(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on s in [-1/2, 1/2] (weights sum to 1)."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * x, 0.5 * w


@lru_cache(maxsize=None)
def gauss_triangle(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed (Duffy) Gauss rule exact for polynomials of total ``degree``.

    Returns barycentric points of shape (nq, 3) and weights summing to 1, so
    ``area * sum(w * f(points))`` integrates over a physical triangle.
    """
    n = max(1, int(np.ceil((degree + 2) / 2)))
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    uu, vv = np.meshgrid(u, u, indexing="ij")
    ww = np.outer(wu, wu) * (1.0 - uu)
    xi = uu.ravel()
    eta = (vv * (1.0 - uu)).ravel()
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    # reference triangle has area 1/2
    weights = 2.0 * ww.ravel()
    return bary, weights


def map_triangle_points(corners: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Physical quadrature points, shape (nt, nq, 2), for corners (nt, 3, 2)."""
    return np.einsum("qk,tkd->tqd", bary, corners)
