"""Gauss rules and reference shape functions on the biunit square.

Cells are bilinear images of [-1,1]^2.  Velocity components use the
9-node biquadratic basis, pressure the 4-node bilinear basis; the
bilinear basis doubles as the geometry map.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss

# Local node order shared with DofLayout.cell_dofs: four corners counter
# clockwise, then the midpoint of edge (k, k+1), then the cell center.
Q2_NODES = np.array(
    [
        [-1.0, -1.0],
        [1.0, -1.0],
        [1.0, 1.0],
        [-1.0, 1.0],
        [0.0, -1.0],
        [1.0, 0.0],
        [0.0, 1.0],
        [-1.0, 0.0],
        [0.0, 0.0],
    ]
)
Q1_NODES = Q2_NODES[:4]


def gauss_1d(npts: int):
    """Gauss-Legendre rule on [-1, 1]."""
    x, w = leggauss(npts)
    return x, w


def gauss_2d(npts: int):
    """Tensor Gauss rule on [-1,1]^2, returned as ((Q,2) points, (Q,) weights)."""
    x, w = leggauss(npts)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return pts, W.ravel()


def _lag1(t):
    # quadratic Lagrange values on nodes {-1, 0, 1}, shape (3, len(t))
    t = np.asarray(t, dtype=float)
    return np.stack([0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)])


def _dlag1(t):
    t = np.asarray(t, dtype=float)
    return np.stack([t - 0.5, -2.0 * t, t + 0.5])


_IDX = {-1.0: 0, 0.0: 1, 1.0: 2}


def q2_shape(points):
    """Biquadratic basis values, shape (9, Q) for (Q,2) evaluation points."""
    points = np.asarray(points, dtype=float)
    lx, ly = _lag1(points[:, 0]), _lag1(points[:, 1])
    out = np.empty((9, points.shape[0]))
    for a, (xa, ya) in enumerate(Q2_NODES):
        out[a] = lx[_IDX[xa]] * ly[_IDX[ya]]
    return out


def q2_grad(points):
    """Biquadratic reference gradients, shape (9, 2, Q)."""
    points = np.asarray(points, dtype=float)
    lx, ly = _lag1(points[:, 0]), _lag1(points[:, 1])
    dlx, dly = _dlag1(points[:, 0]), _dlag1(points[:, 1])
    out = np.empty((9, 2, points.shape[0]))
    for a, (xa, ya) in enumerate(Q2_NODES):
        i, j = _IDX[xa], _IDX[ya]
        out[a, 0] = dlx[i] * ly[j]
        out[a, 1] = lx[i] * dly[j]
    return out


def q1_shape(points):
    """Bilinear basis values, shape (4, Q)."""
    points = np.asarray(points, dtype=float)
    x, y = points[:, 0], points[:, 1]
    return 0.25 * np.stack(
        [(1 - x) * (1 - y), (1 + x) * (1 - y), (1 + x) * (1 + y), (1 - x) * (1 + y)]
    )


def q1_grad(points):
    """Bilinear reference gradients, shape (4, 2, Q)."""
    points = np.asarray(points, dtype=float)
    x, y = points[:, 0], points[:, 1]
    out = np.empty((4, 2, points.shape[0]))
    out[0, 0], out[0, 1] = -0.25 * (1 - y), -0.25 * (1 - x)
    out[1, 0], out[1, 1] = 0.25 * (1 - y), -0.25 * (1 + x)
    out[2, 0], out[2, 1] = 0.25 * (1 + y), 0.25 * (1 + x)
    out[3, 0], out[3, 1] = -0.25 * (1 + y), 0.25 * (1 - x)
    return out


def quad_shape_1d(t):
    """Quadratic trace basis ordered (end0, mid, end1) on [-1,1], shape (3, Q)."""
    return _lag1(t)


def quad_dshape_1d(t):
    return _dlag1(t)
