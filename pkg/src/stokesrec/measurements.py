"""Measurement functionals and their application to velocity-pressure pairs.

Two kinds are supported.  ``gaussian`` integrates one solution component
against a normalized Gaussian window

    w(x) = exp(-|x - z|^2 / (2 r^2)) / sqrt(2 pi r^2),

``component`` 1..d selecting velocity, d+1 pressure.  ``trace`` pairs the
unknown-boundary velocity trace with given coefficients in H^1 arc-length
metric and adds ``mu`` times the domain mean of the pressure; it exists
so that functionals whose representers are known in closed form (rigid
motions, constants) can be measured exactly.

Applying a functional to an analytic field and to its discrete
counterpart uses one fixed quadrature rule per kind, the same rule the
assembly of the functional vectors uses, so duality identities hold to
rounding.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import quadrature as quad
from ._kernels import q2_values
from .assembly import GAUSS_FUNCTIONAL_NPTS, OperatorBundle, gaussian_weight

PRESSURE_COMPONENT = 3


@dataclass(eq=False)
class Functional:
    kind: str
    component: int = 0
    cx: float = 0.0
    cy: float = 0.0
    r: float = 0.1
    g: np.ndarray | None = None  # (2, N_b) trace coefficients
    mu: float = 0.0


@dataclass(eq=False)
class MeasurementSet:
    functionals: list[Functional]
    values: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.functionals)

    @property
    def m_u(self) -> int:
        """Number of velocity measurement points (two functionals each)."""
        return sum(1 for f in self.functionals
                   if f.kind == "gaussian" and f.component == 1)

    @property
    def m_p(self) -> int:
        return sum(1 for f in self.functionals
                   if f.kind == "gaussian" and f.component == PRESSURE_COMPONENT)


def grid_centers(m: int, exclude_disk=None) -> np.ndarray:
    """Uniform interior grid with m = l*l nominal points, x varying fastest.

    Points strictly inside ``exclude_disk = (cx, cy, radius)`` are
    dropped, so the actual count can be lower than requested.
    """
    if m == 0:
        return np.zeros((0, 2))
    l = math.isqrt(m)
    if l * l != m:
        raise ValueError(f"measurement count {m} is not a perfect square")
    ticks = np.arange(1, l + 1) / (l + 1.0)
    xs, ys = np.meshgrid(ticks, ticks, indexing="xy")
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    if exclude_disk is not None:
        cx, cy, rad = exclude_disk
        keep = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2 >= rad * rad
        pts = pts[keep]
    return pts


def gaussian_set(m_u: int, m_p: int, r: float = 0.1,
                 exclude_disk=None) -> MeasurementSet:
    """Grid Gaussians: both velocity components per point, then pressure."""
    fns = []
    for cx, cy in grid_centers(m_u, exclude_disk):
        fns.append(Functional("gaussian", 1, cx, cy, r))
        fns.append(Functional("gaussian", 2, cx, cy, r))
    for cx, cy in grid_centers(m_p, exclude_disk):
        fns.append(Functional("gaussian", PRESSURE_COMPONENT, cx, cy, r))
    return MeasurementSet(fns)


def _trace_quadrature(bundle: OperatorBundle):
    t, w = quad.gauss_1d(3)
    phi = quad.quad_shape_1d(t)
    dphi = quad.quad_dshape_1d(t)
    tr = bundle.trace
    xq = (0.5 * (1.0 - t)[None, :, None] * tr.endpoints[:, None, 0]
          + 0.5 * (1.0 + t)[None, :, None] * tr.endpoints[:, None, 1])  # (S, Q, 2)
    tangent = (tr.endpoints[:, 1] - tr.endpoints[:, 0]) / tr.lengths[:, None]
    return t, w, phi, dphi, xq, tangent


def _trace_coeffs(bundle: OperatorBundle, g: np.ndarray) -> np.ndarray:
    """Gather per-segment nodal values (S, 3, 2); pinned nodes read as 0."""
    seg = bundle.trace.segments
    out = np.zeros((seg.shape[0], 3, 2))
    valid = seg >= 0
    out[valid] = g.T[seg[valid]]
    return out


def apply_trace_analytic(bundle: OperatorBundle, fn: Functional, exact) -> float:
    t, w, phi, dphi, xq, tangent = _trace_quadrature(bundle)
    tr = bundle.trace
    gn = _trace_coeffs(bundle, np.asarray(fn.g, dtype=float))  # (S, 3, 2)
    gq = np.einsum("sac,aq->sqc", gn, phi)
    dgq = np.einsum("sac,aq->sqc", gn, dphi) * (2.0 / tr.lengths)[:, None, None]
    u = np.asarray(exact.u(xq[..., 0], xq[..., 1]))  # (2, S, Q)
    gu = np.asarray(exact.grad_u(xq[..., 0], xq[..., 1]))  # (2, 2, S, Q)
    du = np.einsum("ijsq,sj->isq", gu, tangent)
    integrand = (np.einsum("sqc,csq->sq", gq, u)
                 + np.einsum("sqc,csq->sq", dgq, du))
    val = float(np.einsum("sq,q,s->", integrand, w, tr.lengths / 2.0))
    if fn.mu:
        geom = bundle.geometry(GAUSS_FUNCTIONAL_NPTS)
        p = np.asarray(exact.p(geom.xq[..., 0], geom.xq[..., 1]))
        val += fn.mu * float((geom.detw * p).sum()) / bundle.area
    return val


def apply_to_analytic(bundle: OperatorBundle, mset, exact) -> np.ndarray:
    """Measurement values of an analytic velocity-pressure pair."""
    fns = mset.functionals if isinstance(mset, MeasurementSet) else mset
    geom = bundle.geometry(GAUSS_FUNCTIONAL_NPTS)
    u = p = None
    out = np.empty(len(fns))
    for i, fn in enumerate(fns):
        if fn.kind == "gaussian":
            wq = gaussian_weight(geom.xq, fn.cx, fn.cy, fn.r) * geom.detw
            if fn.component <= 2:
                if u is None:
                    u = np.asarray(exact.u(geom.xq[..., 0], geom.xq[..., 1]))
                out[i] = float((wq * u[fn.component - 1]).sum())
            else:
                if p is None:
                    p = np.asarray(exact.p(geom.xq[..., 0], geom.xq[..., 1]))
                out[i] = float((wq * p).sum())
        elif fn.kind == "trace":
            out[i] = apply_trace_analytic(bundle, fn, exact)
        else:
            raise ValueError(f"unknown functional kind {fn.kind!r}")
    return out


def apply_to_discrete(bundle: OperatorBundle, mset, u_coeffs: np.ndarray,
                      p_coeffs: np.ndarray) -> np.ndarray:
    """Measurement values of a discrete field given by raw coefficients.

    ``u_coeffs`` has length 2T over the stacked velocity space (no
    boundary-condition zeroing is applied), ``p_coeffs`` length Ntilde.
    """
    fns = mset.functionals if isinstance(mset, MeasurementSet) else mset
    layout = bundle.layout
    geom = bundle.geometry(GAUSS_FUNCTIONAL_NPTS)
    uq = None
    out = np.empty(len(fns))
    for i, fn in enumerate(fns):
        if fn.kind == "gaussian":
            wq = gaussian_weight(geom.xq, fn.cx, fn.cy, fn.r) * geom.detw
            if fn.component <= 2:
                if uq is None:
                    uq = [q2_values(np.ascontiguousarray(
                        u_coeffs[layout.cell_dofs + c * layout.T]), geom.n2)
                        for c in range(2)]
                out[i] = float((wq * uq[fn.component - 1]).sum())
            else:
                pq = p_coeffs[layout.mesh.cells] @ geom.n1  # (C, Q)
                out[i] = float((wq * pq).sum())
        elif fn.kind == "trace":
            ML = bundle.M + bundle.L
            vb = u_coeffs[layout.boundary_idx].reshape(2, layout.N_b)
            g = np.asarray(fn.g, dtype=float)
            out[i] = float(g[0] @ (ML @ vb[0]) + g[1] @ (ML @ vb[1]))
            if fn.mu:
                out[i] += fn.mu * bundle.mean_pressure(p_coeffs)
        else:
            raise ValueError(f"unknown functional kind {fn.kind!r}")
    return out


def save_csv(path, mset: MeasurementSet) -> None:
    if mset.values is None or len(mset.values) != len(mset):
        raise ValueError("measurement set has no values to save")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "component", "cx", "cy", "r", "value"])
        for fn, val in zip(mset.functionals, mset.values):
            if fn.kind != "gaussian":
                raise ValueError("only gaussian functionals have a CSV form")
            w.writerow([fn.kind, fn.component, repr(float(fn.cx)),
                        repr(float(fn.cy)), repr(float(fn.r)),
                        repr(float(val))])


def load_csv(path) -> MeasurementSet:
    fns, vals = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["kind", "component", "cx", "cy", "r", "value"]
        if reader.fieldnames != expected:
            raise ValueError(f"bad measurement header {reader.fieldnames},"
                             f" expected {expected}")
        for row in reader:
            if row["kind"] != "gaussian":
                raise ValueError(f"unknown functional kind {row['kind']!r}")
            fns.append(Functional("gaussian", int(row["component"]),
                                  float(row["cx"]), float(row["cy"]),
                                  float(row["r"])))
            vals.append(float(row["value"]))
    return MeasurementSet(fns, np.array(vals))
