"""Recovery of velocity-pressure pairs from finitely many measurements.

The recovered field is ``background + sum_j alpha_j (w_j, r_j)`` where
the background absorbs the known data (body force, known boundary
values), the ``(w_j, r_j)`` are Riesz representers of the measurement
functionals in the homogeneous constrained space, and ``alpha`` solves
the Gram system against the background-shifted measurement values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .assembly import OperatorBundle, assemble_body_load, functional_vectors
from .linalg import Factorization, GramReport, pinv_solve, schur_pressure_solve
from .measurements import MeasurementSet, apply_to_analytic, apply_to_discrete
from .quadrature import gauss_1d, q1_grad, q1_shape, q2_grad, q2_shape
from .riesz import RieszContext, RieszRepresenter
from .assembly import edge_ref_points
from .exact import ExactSolution
from .mesh import _cell_edge_map, _edge_key


@dataclass
class DiscreteField:
    """Coefficients of one velocity-pressure pair on a layout."""

    layout: object
    u: np.ndarray  # (2T,) component-stacked velocity
    p: np.ndarray  # (Ntilde,) vertex pressure


def interpolate(layout, exact: ExactSolution) -> DiscreteField:
    x, y = layout.node_xy[:, 0], layout.node_xy[:, 1]
    u = np.asarray(exact.u(x, y)).reshape(-1)
    vx, vy = layout.mesh.vertices[:, 0], layout.mesh.vertices[:, 1]
    p = np.asarray(exact.p(vx, vy))
    return DiscreteField(layout, u, p)


def solve_stokes_bvp(bundle: OperatorBundle, *, body=None, dirichlet=None,
                     natural_boundary: bool = False, tol: float = 1e-10,
                     maxiter: int = 10000):
    """Stokes boundary value solve on the bundle's layout.

    Dirichlet values are imposed on the known-boundary dofs and, unless
    ``natural_boundary``, on the unknown-boundary block as well; with
    ``natural_boundary`` that block keeps the do-nothing condition and
    the pressure level is fixed afterwards by removing the mass-weighted
    mean (otherwise the mean-free constraint is part of the solve).
    """
    layout = bundle.layout
    T = layout.T
    fixed_one = layout.constrained.copy()
    if not natural_boundary:
        fixed_one[layout.N:] = True
    elif layout.N_b == 0:
        raise ValueError("natural boundary requested but none is unknown")
    fixed = np.concatenate([fixed_one, fixed_one])

    u0 = np.zeros(2 * T)
    if dirichlet is not None:
        x, y = layout.node_xy[:, 0], layout.node_xy[:, 1]
        vals = np.asarray(dirichlet(x, y)).reshape(-1)
        u0[fixed] = vals[fixed]

    F = assemble_body_load(bundle, body) if body is not None else np.zeros(2 * T)
    rhs_v = F - bundle.K_full @ u0
    rhs_p = -(bundle.B_full @ u0)
    K_fact = Factorization(bundle.K_full, free=~fixed)
    sol = schur_pressure_solve(K_fact, bundle.B_full, rhs_v, rhs_p,
                               mp=bundle.mp, area=bundle.area, tol=tol,
                               maxiter=maxiter,
                               mean_free=not natural_boundary)
    if not sol.cg.converged:
        raise RuntimeError("boundary value Schur CG did not converge")
    p = sol.p
    if natural_boundary:
        p = p - bundle.mean_pressure(p)
    return DiscreteField(layout, u0 + sol.v, p), sol.cg


def solve_background(bundle: OperatorBundle, exact: ExactSolution,
                     partial: bool = False, tol: float = 1e-10):
    """Particular solution absorbing the known problem data.

    Full-recovery problems know only the body force: homogeneous
    Dirichlet everywhere.  Partial-knowledge problems also know the
    boundary values on the known part: those are imposed while the
    unknown part keeps the natural condition.
    """
    fld, _ = solve_stokes_bvp(bundle, body=exact.f,
                              dirichlet=exact.u if partial else None,
                              natural_boundary=partial, tol=tol)
    return fld


def _functional_key(fn):
    if fn.kind == "gaussian":
        return ("gaussian", fn.component, round(fn.cx, 12), round(fn.cy, 12),
                round(fn.r, 12))
    return ("trace", id(fn))


class RepresenterFactory:
    """Caches functional vectors, stage 1 multipliers and representers.

    Stage 1 is independent of the smoothness order s, so sweeping s
    reuses the multiplier solves; repeated functionals across measurement
    sets reuse everything.  ``RECOVER_THREADS`` caps worker threads for
    the per-functional solves (default 1, sequential).
    """

    def __init__(self, bundle: OperatorBundle, k: float = 0.4,
                 tol_multiplier: float = 1e-9, tol_lift: float = 1e-12,
                 maxiter: int = 5000):
        self.bundle = bundle
        self.k = k
        self.tol_multiplier = tol_multiplier
        self.tol_lift = tol_lift
        self.maxiter = maxiter
        self.threads = max(1, int(os.environ.get("RECOVER_THREADS", "1")))
        self._contexts: dict[float, RieszContext] = {}
        self._vectors: dict = {}
        self._multipliers: dict = {}
        self._representers: dict = {}

    def context(self, s: float) -> RieszContext:
        if s not in self._contexts:
            shared = (next(iter(self._contexts.values())).K_fact
                      if self._contexts else None)
            self._contexts[s] = RieszContext(
                self.bundle, s, k=self.k,
                tol_multiplier=self.tol_multiplier,
                tol_lift=self.tol_lift, maxiter=self.maxiter, K_fact=shared)
        return self._contexts[s]

    def vectors(self, fn):
        key = _functional_key(fn)
        if key not in self._vectors:
            self._vectors[key] = functional_vectors(self.bundle, fn)
        return self._vectors[key]

    def _one(self, ctx, fn) -> RieszRepresenter:
        key = _functional_key(fn)
        F0, Fb, G, lam = self.vectors(fn)
        if key not in self._multipliers:
            self._multipliers[key] = ctx.multipliers(F0, G)
        return ctx.representer(F0, Fb, G, lam,
                               multipliers=self._multipliers[key])

    def representers(self, functionals, s: float) -> list[RieszRepresenter]:
        ctx = self.context(s)
        ctx.v_flux  # build the shared flux direction up front
        missing = [fn for fn in functionals
                   if (s, _functional_key(fn)) not in self._representers]
        if self.threads > 1 and len(missing) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                results = list(pool.map(lambda f: self._one(ctx, f), missing))
        else:
            results = [self._one(ctx, fn) for fn in missing]
        for fn, rep in zip(missing, results):
            self._representers[(s, _functional_key(fn))] = rep
        return [self._representers[(s, _functional_key(fn))]
                for fn in functionals]


def gram_matrix(vectors, reprs) -> np.ndarray:
    """Gram entries g_ij = lambda_i(representer_j) by duality pairing."""
    F0s = np.stack([v[0] for v in vectors])
    Fbs = np.stack([v[1] for v in vectors])
    Gs = np.stack([v[2] for v in vectors])
    lams = np.array([v[3] for v in vectors])
    W0s = np.stack([r.W0 for r in reprs])
    Wbs = np.stack([r.Wb for r in reprs])
    R0s = np.stack([r.R0 for r in reprs])
    rlams = np.array([r.lam for r in reprs])
    return (F0s @ W0s.T + Fbs @ Wbs.T + Gs @ R0s.T
            + np.outer(lams, rlams))


def reconstruct(bundle: OperatorBundle, background: DiscreteField,
                reprs, alpha) -> DiscreteField:
    layout = bundle.layout
    u = background.u.copy()
    p = background.p.copy()
    for a, r in zip(alpha, reprs):
        u[layout.interior_idx] += a * r.W0
        u[layout.boundary_idx] += a * r.Wb
        p += a * r.R0
        p += a * r.lam
    return DiscreteField(layout, u, p)


@dataclass
class RecoveryResult:
    field: DiscreteField
    alpha: np.ndarray
    report: GramReport
    measured: np.ndarray
    shifted: np.ndarray
    gram: np.ndarray = field(repr=False, default=None)
    errors: dict | None = None
    qoi: dict | None = None
    background: DiscreteField | None = None


def recover(bundle: OperatorBundle, mset: MeasurementSet,
            exact: ExactSolution, *, s: float = 1.0, k: float = 0.4,
            mode: str = "jacobi_threshold", eps: float = 1e-10,
            partial: bool = False, factory: RepresenterFactory | None = None,
            background: DiscreteField | None = None, bg_tol: float = 1e-10,
            compute_errors: bool = True, qoi_marker=None) -> RecoveryResult:
    """Run the full measurement-to-field pipeline for one configuration."""
    if factory is None:
        factory = RepresenterFactory(bundle)
    if background is None:
        background = solve_background(bundle, exact, partial=partial,
                                      tol=bg_tol)
    measured = (mset.values if mset.values is not None
                else apply_to_analytic(bundle, mset, exact))
    shifted = measured - apply_to_discrete(bundle, mset, background.u,
                                           background.p)
    fns = mset.functionals
    if fns:
        reprs = factory.representers(fns, s)
        vectors = [factory.vectors(fn) for fn in fns]
        gram = gram_matrix(vectors, reprs)
        alpha, report = pinv_solve(gram, shifted, mode=mode, eps=eps)
        fld = reconstruct(bundle, background, reprs, alpha)
    else:
        gram = np.zeros((0, 0))
        alpha = np.zeros(0)
        report = GramReport(mode=mode, eps=eps, size=0, rank=0,
                            cond_G=0.0, cond_GP=None)
        fld = DiscreteField(bundle.layout, background.u.copy(),
                            background.p.copy())
    errors = recovery_errors(bundle, fld, exact) if compute_errors else None
    qoi = drag_lift(bundle, fld, qoi_marker) if qoi_marker is not None else None
    return RecoveryResult(field=fld, alpha=alpha, report=report,
                          measured=measured, shifted=shifted, gram=gram,
                          errors=errors, qoi=qoi, background=background)


ERROR_NPTS = 4


def _field_mismatch(bundle: OperatorBundle, fld: DiscreteField | None,
                    exact: ExactSolution, npts: int = ERROR_NPTS):
    """Squared H^1 velocity and L^2 pressure mismatch (field minus exact)."""
    layout = bundle.layout
    geom = bundle.geometry(npts)
    ue = np.asarray(exact.u(geom.xq[..., 0], geom.xq[..., 1]))
    ge = np.asarray(exact.grad_u(geom.xq[..., 0], geom.xq[..., 1]))
    pe = np.asarray(exact.p(geom.xq[..., 0], geom.xq[..., 1]))
    err_u2 = 0.0
    for c in range(2):
        if fld is not None:
            coeffs = np.ascontiguousarray(
                fld.u[layout.cell_dofs + c * layout.T])
            vals = kern.q2_values(coeffs, geom.n2)
            grads = kern.q2_gradients(coeffs, geom.invjt, geom.dn2)
        else:
            vals = 0.0
            grads = np.zeros(geom.xq.shape[:2] + (2,))
        err_u2 += float((geom.detw * (vals - ue[c]) ** 2).sum())
        for j in range(2):
            err_u2 += float((geom.detw * (grads[..., j] - ge[c, j]) ** 2).sum())
    pq = fld.p[layout.mesh.cells] @ geom.n1 if fld is not None else 0.0
    err_p2 = float((geom.detw * (pq - pe) ** 2).sum())
    return err_u2, err_p2


def recovery_errors(bundle: OperatorBundle, fld: DiscreteField,
                    exact: ExactSolution) -> dict:
    """Absolute H^1 velocity error, L^2 pressure error and their root sum."""
    err_u2, err_p2 = _field_mismatch(bundle, fld, exact)
    return {"err_u": np.sqrt(err_u2), "err_p": np.sqrt(err_p2),
            "err": np.sqrt(err_u2 + err_p2)}


def exact_norms(bundle: OperatorBundle, exact: ExactSolution) -> dict:
    """H^1 norm of the exact velocity and L^2 norm of the exact pressure."""
    u2, p2 = _field_mismatch(bundle, None, exact)
    return {"norm_u": np.sqrt(u2), "norm_p": np.sqrt(p2)}


def drag_lift(bundle: OperatorBundle, fld: DiscreteField, marker) -> dict:
    """Negative traction resultant -oint (2 eps(u) n - p n) ds on a marker.

    The normal follows the stored boundary orientation (domain on the
    left), so on interior obstacles it points out of the fluid.
    """
    layout = bundle.layout
    mesh = layout.mesh
    if isinstance(marker, str):
        ids = [k for k, v in mesh.markers.items() if v == marker]
        if not ids:
            raise ValueError(f"no boundary marker named {marker!r}")
        marker = ids[0]
    owners = _cell_edge_map(mesh)
    t, w = gauss_1d(3)
    force = np.zeros(2)
    for v0, v1, m in mesh.boundary_edges:
        if int(m) != marker:
            continue
        key = _edge_key(int(v0), int(v1))
        c, kloc = owners[key][0]
        if int(mesh.cells[c, kloc]) == int(v0):
            ref = edge_ref_points(kloc, t)
        else:
            ref = edge_ref_points(kloc, -t)
        n1 = q1_shape(ref)
        dn1 = np.ascontiguousarray(q1_grad(ref))
        xy = mesh.vertices[mesh.cells[c]][None]
        _, det, invjt = kern.cell_geometry(xy, n1, dn1)
        n2 = q2_shape(ref)
        dn2 = q2_grad(ref)
        grads = np.stack([
            kern.q2_gradients(np.ascontiguousarray(
                fld.u[layout.cell_dofs[c:c + 1] + cc * layout.T]),
                invjt, dn2)[0]
            for cc in range(2)])  # (2, Q, 2): [i, q, j] = d u_i / d x_j
        pq = fld.p[mesh.cells[c]] @ n1  # (Q,)
        p0, p1 = mesh.vertices[int(v0)], mesh.vertices[int(v1)]
        tang = p1 - p0
        length = float(np.hypot(*tang))
        nrm = np.array([tang[1], -tang[0]]) / length
        eps2 = grads + np.transpose(grads, (2, 1, 0))  # 2 eps, (i, q, j)
        trac = np.einsum("iqj,j->iq", eps2, nrm) - pq[None, :] * nrm[:, None]
        force += (trac * w).sum(axis=1) * (length / 2.0)
    return {"c_D": -force[0], "c_L": -force[1]}
