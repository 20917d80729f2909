"""Hot element-level kernels with numba and pure-numpy implementations.

Every kernel exists twice: ``*_numba`` (compiled with ``@njit`` when numba
is importable) and ``*_numpy`` (vectorized reference).  The module-level
dispatch names pick the compiled path unless the environment variable
``STOKESREC_PURE_NUMPY`` is set to a non-empty value or numba is missing.
Both paths produce identical results up to floating point associativity;
``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly by the import
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


PURE_NUMPY = bool(os.environ.get("STOKESREC_PURE_NUMPY", ""))


# ---------------------------------------------------------------------------
# geometry: bilinear map per cell at a fixed set of reference points


def cell_geometry_numpy(xy, n1, dn1):
    """Jacobian data of the bilinear map on every cell.

    Parameters
    ----------
    xy : (C, 4, 2) float
        Vertex coordinates per cell, counter clockwise.
    n1 : (4, Q) float
        Bilinear shape values at the reference points.
    dn1 : (4, 2, Q) float
        Bilinear reference gradients at the same points.

    Returns
    -------
    xq : (C, Q, 2) mapped points
    detjw : (C, Q) Jacobian determinants (weights not yet applied)
    invjt : (C, Q, 2, 2) inverse transposed Jacobians
    """
    xq = np.einsum("cvi,vq->cqi", xy, n1)
    jac = np.einsum("cvi,vdq->cqid", xy, dn1)  # d x_i / d xi_d
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1]
    inv[..., 0, 1] = -jac[..., 1, 0]
    inv[..., 1, 0] = -jac[..., 0, 1]
    inv[..., 1, 1] = jac[..., 0, 0]
    invjt = inv / det[..., None, None]
    return xq, det, invjt


@njit(cache=True)
def cell_geometry_numba(xy, n1, dn1):
    C = xy.shape[0]
    Q = n1.shape[1]
    xq = np.zeros((C, Q, 2))
    det = np.zeros((C, Q))
    invjt = np.zeros((C, Q, 2, 2))
    for c in range(C):
        for q in range(Q):
            j00 = 0.0
            j01 = 0.0
            j10 = 0.0
            j11 = 0.0
            for v in range(4):
                x, y = xy[c, v, 0], xy[c, v, 1]
                xq[c, q, 0] += x * n1[v, q]
                xq[c, q, 1] += y * n1[v, q]
                j00 += x * dn1[v, 0, q]
                j01 += x * dn1[v, 1, q]
                j10 += y * dn1[v, 0, q]
                j11 += y * dn1[v, 1, q]
            d = j00 * j11 - j01 * j10
            det[c, q] = d
            invjt[c, q, 0, 0] = j11 / d
            invjt[c, q, 0, 1] = -j10 / d
            invjt[c, q, 1, 0] = -j01 / d
            invjt[c, q, 1, 1] = j00 / d
    return xq, det, invjt


# ---------------------------------------------------------------------------
# element matrices: viscous stiffness (18x18) and divergence coupling (4x18)
# k entry for trial (comp j, node b) against test (comp i, node a):
#   delta_ij grad(phi_a).grad(phi_b) + d_j phi_a * d_i phi_b
# b entry: -phi1_a * d_j phi_b


def cell_system_numpy(detjw, invjt, dn2, n1, wq):
    C, Q = detjw.shape
    g = np.einsum("cqid,adq->caiq", invjt, dn2)  # physical gradients (C, 9, 2, Q)
    w = detjw * wq
    lap = np.einsum("caiq,cbiq,cq->cab", g, g, w)
    cross = np.einsum("cajq,cbiq,cq->cabij", g, g, w)  # [...,i,j] = d_j phi_a d_i phi_b
    ke = np.empty((C, 18, 18))
    for i in range(2):
        for j in range(2):
            blk = cross[:, :, :, i, j].copy()
            if i == j:
                blk += lap
            ke[:, i * 9 : (i + 1) * 9, j * 9 : (j + 1) * 9] = blk
    gb = np.einsum("aq,cbjq,cq->cajb", n1, g, w)
    be = np.empty((C, 4, 18))
    be[:, :, :9] = -gb[:, :, 0, :]
    be[:, :, 9:] = -gb[:, :, 1, :]
    return ke, be


@njit(cache=True)
def cell_system_numba(detjw, invjt, dn2, n1, wq):
    C, Q = detjw.shape
    ke = np.zeros((C, 18, 18))
    be = np.zeros((C, 4, 18))
    g = np.zeros((9, 2))
    for c in range(C):
        for q in range(Q):
            w = detjw[c, q] * wq[q]
            for a in range(9):
                g[a, 0] = invjt[c, q, 0, 0] * dn2[a, 0, q] + invjt[c, q, 0, 1] * dn2[a, 1, q]
                g[a, 1] = invjt[c, q, 1, 0] * dn2[a, 0, q] + invjt[c, q, 1, 1] * dn2[a, 1, q]
            for a in range(9):
                for b in range(9):
                    lap = (g[a, 0] * g[b, 0] + g[a, 1] * g[b, 1]) * w
                    for i in range(2):
                        for j in range(2):
                            val = g[a, j] * g[b, i] * w
                            if i == j:
                                val += lap
                            ke[c, i * 9 + a, j * 9 + b] += val
            for a in range(4):
                for b in range(9):
                    be[c, a, b] -= n1[a, q] * g[b, 0] * w
                    be[c, a, 9 + b] -= n1[a, q] * g[b, 1] * w
    return ke, be


# ---------------------------------------------------------------------------
# field evaluation at the reference points of every cell


def q2_values_numpy(coeffs, n2):
    """coeffs (C, 9) -> values (C, Q)."""
    return coeffs @ n2


@njit(cache=True)
def q2_values_numba(coeffs, n2):
    C = coeffs.shape[0]
    Q = n2.shape[1]
    out = np.zeros((C, Q))
    for c in range(C):
        for q in range(Q):
            s = 0.0
            for a in range(9):
                s += coeffs[c, a] * n2[a, q]
            out[c, q] = s
    return out


def q2_gradients_numpy(coeffs, invjt, dn2):
    """coeffs (C, 9) -> physical gradients (C, Q, 2)."""
    gref = np.einsum("ca,adq->cdq", coeffs, dn2)
    return np.einsum("cqid,cdq->cqi", invjt, gref)


@njit(cache=True)
def q2_gradients_numba(coeffs, invjt, dn2):
    C = coeffs.shape[0]
    Q = dn2.shape[2]
    out = np.zeros((C, Q, 2))
    for c in range(C):
        for q in range(Q):
            g0 = 0.0
            g1 = 0.0
            for a in range(9):
                g0 += coeffs[c, a] * dn2[a, 0, q]
                g1 += coeffs[c, a] * dn2[a, 1, q]
            out[c, q, 0] = invjt[c, q, 0, 0] * g0 + invjt[c, q, 0, 1] * g1
            out[c, q, 1] = invjt[c, q, 1, 0] * g0 + invjt[c, q, 1, 1] * g1
    return out


def node_loads_numpy(weights, n2):
    """Per-cell load vectors: weights (C, Q) -> (C, 9) of sum_q w * phi_a."""
    return weights @ n2.T


@njit(cache=True)
def node_loads_numba(weights, n2):
    C, Q = weights.shape
    out = np.zeros((C, 9))
    for c in range(C):
        for a in range(9):
            s = 0.0
            for q in range(Q):
                s += weights[c, q] * n2[a, q]
            out[c, a] = s
    return out


if HAS_NUMBA and not PURE_NUMPY:
    cell_geometry = cell_geometry_numba
    cell_system = cell_system_numba
    q2_values = q2_values_numba
    q2_gradients = q2_gradients_numba
    node_loads = node_loads_numba
else:
    cell_geometry = cell_geometry_numpy
    cell_system = cell_system_numpy
    q2_values = q2_values_numpy
    q2_gradients = q2_gradients_numpy
    node_loads = node_loads_numpy
