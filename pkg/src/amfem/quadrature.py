"""Quadrature rules on triangles (barycentric) and edges (unit interval)."""
from __future__ import annotations

import numpy as np

__all__ = ["tri_rule", "edge_rule", "tri_points", "DEFAULT_DEGREE"]

DEFAULT_DEGREE = 4

_S15 = np.sqrt(15.0)


def _orbit3(a):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


# barycentric points and weights; weights sum to 1, scale by the area
_RULES = {
    1: (np.array([(1 / 3, 1 / 3, 1 / 3)]), np.array([1.0])),
    2: (np.array(_orbit3(0.5)), np.full(3, 1 / 3)),
    4: (np.array(_orbit3(0.445948490915965) + _orbit3(0.091576213509771)),
        np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)),
    5: (np.array([(1 / 3, 1 / 3, 1 / 3)]
                 + _orbit3((6.0 - _S15) / 21.0)
                 + _orbit3((6.0 + _S15) / 21.0)),
        np.array([9.0 / 40.0]
                 + [(155.0 - _S15) / 1200.0] * 3
                 + [(155.0 + _S15) / 1200.0] * 3)),
}


def tri_rule(degree=DEFAULT_DEGREE):
    """Smallest available rule exact to at least the requested degree."""
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]
    raise ValueError("no triangle rule of degree %d available" % degree)


def edge_rule():
    """Two-point Gauss rule on [0, 1]; exact to degree 3."""
    g = 0.5 / np.sqrt(3.0)
    return np.array([0.5 - g, 0.5 + g]), np.array([0.5, 0.5])


def tri_points(coords, bary):
    """Physical quadrature points, shape (nt, nq, 2), from vertex coordinates
    (nt, 3, 2) and barycentric points (nq, 3)."""
    return np.einsum("qi,tix->tqx", bary, coords)
