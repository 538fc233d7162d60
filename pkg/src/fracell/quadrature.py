"""Quadrature rules on the reference triangle and on edges.

Triangle rules return barycentric points ``(nq, 3)`` and weights summing to 1
(multiply by the cell area).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

# Symmetric 6-point rule, exact for degree 4.
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322


def _sym21(a, w):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)], [w] * 3


@lru_cache(maxsize=None)
def triangle_rule(degree: int = 4):
    if degree <= 1:
        pts = np.array([[1 / 3, 1 / 3, 1 / 3]])
        wts = np.array([1.0])
    elif degree == 2:
        pts = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
        wts = np.full(3, 1 / 3)
    elif degree <= 4:
        p1, w1 = _sym21(_A1, _W1)
        p2, w2 = _sym21(_A2, _W2)
        pts = np.array(p1 + p2)
        wts = np.array(w1 + w2)
    else:
        pts, wts = _collapsed_gauss(degree)
    pts = np.ascontiguousarray(pts)
    wts = wts / wts.sum()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def _collapsed_gauss(degree):
    # Duffy-collapsed tensor rule: Gauss-Jacobi(1,0) in the collapsed direction.
    n = degree // 2 + 1
    xg, wg = np.polynomial.legendre.leggauss(n)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xg + 1.0)
    r = 0.5 * (xj + 1.0)
    R, S = np.meshgrid(r, s, indexing="ij")
    W = np.outer(wj, wg)
    l1 = R
    l2 = (1.0 - R) * S
    l0 = 1.0 - l1 - l2
    pts = np.stack([l0.ravel(), l1.ravel(), l2.ravel()], axis=1)
    return pts, W.ravel()


@lru_cache(maxsize=None)
def edge_rule(npoints: int = 3):
    """Gauss-Legendre points on [0, 1] with weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w
