"""Assembly of the Stokes operators and of measurement functionals.

Velocity uses the component-stacked biquadratic space of a
:class:`~stokesrec.femspace.DofLayout` (entry ``c * T + i``), pressure the
bilinear vertex space.  ``K`` is the viscous form ``2 int eps(u):eps(v)``,
``B`` the coupling ``-int q div(u)``.  Blocks named ``*0`` act on the
interior velocity block, ``*b`` on the unknown-boundary block.  ``M`` and
``L`` are scalar mass and stiffness of the quadratic trace space on the
unknown boundary, measured in arc length, with junction nodes pinned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels as kern
from . import quadrature as quad
from .femspace import DofLayout, TraceMesh, trace_mesh
from .mesh import MeshError


@dataclass
class CellGeometry:
    """Mapped quadrature data of every cell for one tensor Gauss rule."""

    npts: int
    wq: np.ndarray  # (Q,)
    n1: np.ndarray  # (4, Q)
    dn1: np.ndarray  # (4, 2, Q)
    n2: np.ndarray  # (9, Q)
    dn2: np.ndarray  # (9, 2, Q)
    xq: np.ndarray  # (C, Q, 2)
    det: np.ndarray  # (C, Q)
    invjt: np.ndarray  # (C, Q, 2, 2)
    detw: np.ndarray  # (C, Q) det * wq


def cell_geometry_data(layout: DofLayout, npts: int) -> CellGeometry:
    pts, wq = quad.gauss_2d(npts)
    n1 = quad.q1_shape(pts)
    dn1 = quad.q1_grad(pts)
    xy = layout.mesh.vertices[layout.mesh.cells]
    xq, det, invjt = kern.cell_geometry(xy, n1, dn1)
    if det.min() <= 0.0:
        raise MeshError("degenerate cell Jacobian")
    return CellGeometry(
        npts=npts,
        wq=wq,
        n1=n1,
        dn1=dn1,
        n2=quad.q2_shape(pts),
        dn2=quad.q2_grad(pts),
        xq=xq,
        det=det,
        invjt=invjt,
        detw=det * wq,
    )


def _accumulate(rows, cols, vals, shape) -> sp.csr_matrix:
    a = np.broadcast_arrays(rows, cols, vals)
    m = sp.coo_matrix((a[2].ravel(), (a[0].ravel(), a[1].ravel())), shape=shape)
    return m.tocsr()


def edge_ref_points(local_edge: int, t: np.ndarray) -> np.ndarray:
    """Reference coordinates of edge points, t in [-1, 1] along the cell's edge."""
    r0 = quad.Q1_NODES[local_edge]
    r1 = quad.Q1_NODES[(local_edge + 1) % 4]
    t = np.asarray(t, dtype=float)
    return 0.5 * (1.0 - t)[:, None] * r0 + 0.5 * (1.0 + t)[:, None] * r1


@dataclass
class OperatorBundle:
    layout: DofLayout
    trace: TraceMesh | None
    K_full: sp.csr_matrix  # (2T, 2T)
    B_full: sp.csr_matrix  # (Ntilde, 2T)
    K0: sp.csr_matrix  # (dN, dN)
    Kb: sp.csr_matrix  # (dN, dN_b)
    B0: sp.csr_matrix  # (Ntilde, dN)
    Bb: sp.csr_matrix  # (Ntilde, dN_b)
    D: np.ndarray  # (dN_b,) column sums of Bb
    M: sp.csr_matrix  # (N_b, N_b) trace mass
    L: sp.csr_matrix  # (N_b, N_b) trace stiffness
    mp: np.ndarray  # (Ntilde,) pressure node integrals
    area: float
    _geom: dict = field(default_factory=dict, repr=False)

    def geometry(self, npts: int) -> CellGeometry:
        if npts not in self._geom:
            self._geom[npts] = cell_geometry_data(self.layout, npts)
        return self._geom[npts]

    def mean_pressure(self, p: np.ndarray) -> float:
        return float(self.mp @ p) / self.area

    def zero_constrained(self, F0: np.ndarray) -> np.ndarray:
        """Zero the known-boundary entries of an interior-block vector."""
        out = F0.copy()
        out[~self.layout.free_mask] = 0.0
        return out


def assemble_bundle(layout: DofLayout, trace: TraceMesh | None = None) -> OperatorBundle:
    geom = cell_geometry_data(layout, 3)
    ke, be = kern.cell_system(geom.det, geom.invjt, geom.dn2, geom.n1, geom.wq)

    T = layout.T
    C = layout.mesh.num_cells
    vd = np.hstack([layout.cell_dofs, layout.cell_dofs + T])  # (C, 18)
    K_full = _accumulate(vd[:, :, None], vd[:, None, :], ke, (2 * T, 2 * T))
    pd = layout.mesh.cells.astype(np.int64)  # (C, 4)
    B_full = _accumulate(pd[:, :, None], vd[:, None, :], be, (layout.Ntilde, 2 * T))

    mpe = geom.detw @ geom.n1.T  # (C, 4)
    mp = np.zeros(layout.Ntilde)
    np.add.at(mp, pd.ravel(), mpe.ravel())
    area = float(mp.sum())

    I = layout.interior_idx
    Bi = layout.boundary_idx
    K0 = K_full[I][:, I].tocsr()
    Kb = K_full[I][:, Bi].tocsr()
    B0 = B_full[:, I].tocsr()
    Bb = B_full[:, Bi].tocsr()
    D = np.asarray(Bb.sum(axis=0)).ravel()

    if layout.N_b > 0:
        if trace is None:
            trace = trace_mesh(layout)
        M, L = _assemble_trace(trace)
    else:
        M = sp.csr_matrix((0, 0))
        L = sp.csr_matrix((0, 0))

    return OperatorBundle(
        layout=layout,
        trace=trace,
        K_full=K_full,
        B_full=B_full,
        K0=K0,
        Kb=Kb,
        B0=B0,
        Bb=Bb,
        D=D,
        M=M,
        L=L,
        mp=mp,
        area=area,
        _geom={3: geom},
    )


def _assemble_trace(trace: TraceMesh):
    t, w = quad.gauss_1d(3)
    phi = quad.quad_shape_1d(t)  # (3, Q)
    dphi = quad.quad_dshape_1d(t)  # (3, Q)
    me_unit = np.einsum("aq,bq,q->ab", phi, phi, w)
    le_unit = np.einsum("aq,bq,q->ab", dphi, dphi, w)

    N_b = trace.layout.N_b
    rows, cols, mvals, lvals = [], [], [], []
    for s in range(trace.segments.shape[0]):
        jac = trace.lengths[s] / 2.0
        idx = trace.segments[s]
        keep = idx >= 0
        r = np.broadcast_to(idx[keep, None], (keep.sum(), keep.sum()))
        c = np.broadcast_to(idx[None, keep], r.shape)
        rows.append(r.ravel())
        cols.append(c.ravel())
        mvals.append((me_unit[np.ix_(keep, keep)] * jac).ravel())
        lvals.append((le_unit[np.ix_(keep, keep)] / jac).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    M = sp.coo_matrix((np.concatenate(mvals), (rows, cols)), shape=(N_b, N_b)).tocsr()
    L = sp.coo_matrix((np.concatenate(lvals), (rows, cols)), shape=(N_b, N_b)).tocsr()
    return M, L


def assemble_body_load(bundle: OperatorBundle, f, npts: int = 3) -> np.ndarray:
    """Load vector of a body force over the full stacked velocity space.

    ``f(x, y)`` must return an array of shape (2,) + broadcast shape.
    """
    geom = bundle.geometry(npts)
    fx = np.asarray(f(geom.xq[..., 0], geom.xq[..., 1]))
    T = bundle.layout.T
    out = np.zeros(2 * T)
    for c in range(2):
        loads = kern.node_loads(np.ascontiguousarray(fx[c]) * geom.detw, geom.n2)
        np.add.at(out, bundle.layout.cell_dofs.ravel() + c * T, loads.ravel())
    return out


def gaussian_weight(xq: np.ndarray, cx: float, cy: float, r: float) -> np.ndarray:
    d2 = (xq[..., 0] - cx) ** 2 + (xq[..., 1] - cy) ** 2
    return np.exp(-d2 / (2.0 * r * r)) / np.sqrt(2.0 * np.pi * r * r)


GAUSS_FUNCTIONAL_NPTS = 5  # fixed so duality pairings match measurement values


def functional_vectors(bundle: OperatorBundle, fn):
    """Riesz data (F0, Fb, G, lam) of one measurement functional.

    ``F0`` tests the interior velocity block (known-boundary entries
    zeroed), ``Fb`` the unknown-boundary block, ``G`` the pressure space;
    ``lam`` is the functional applied to the constant field (0, 1).
    """
    layout = bundle.layout
    F0 = np.zeros(2 * layout.N)
    Fb = np.zeros(2 * layout.N_b)
    G = np.zeros(layout.Ntilde)
    lam = 0.0

    if fn.kind == "gaussian":
        geom = bundle.geometry(GAUSS_FUNCTIONAL_NPTS)
        weights = gaussian_weight(geom.xq, fn.cx, fn.cy, fn.r) * geom.detw
        comp = fn.component - 1
        if comp < layout.d:
            loads = kern.node_loads(weights, geom.n2)
            full = np.zeros(2 * layout.T)
            np.add.at(full, layout.cell_dofs.ravel() + comp * layout.T, loads.ravel())
            F0 = bundle.zero_constrained(full[layout.interior_idx])
            Fb = full[layout.boundary_idx]
        else:
            loads = weights @ geom.n1.T
            np.add.at(G, layout.mesh.cells.ravel(), loads.ravel())
            lam = float(G.sum())
    elif fn.kind == "trace":
        ML = bundle.M + bundle.L
        g = np.asarray(fn.g, dtype=float)
        if g.shape != (2, layout.N_b):
            raise ValueError(f"trace data must have shape (2, {layout.N_b})")
        Fb = np.concatenate([ML @ g[0], ML @ g[1]])
        G = (fn.mu / bundle.area) * bundle.mp
        lam = float(fn.mu)
    else:
        raise ValueError(f"unknown functional kind {fn.kind!r}")

    return F0, Fb, G, lam
