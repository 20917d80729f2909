"""Riesz representers of measurement functionals in the constrained space.

The representer (w, r) of a functional with data (F0, Fb, G, lam) is the
velocity-pressure pair that reproduces the functional under the inner
product  <(v, q), (w, r)> = <v_b, w_b>_{H^s(Gamma_u)} + mean(q) mean(r)
subject to the homogeneous Stokes equations.  Splitting the pressure as
r = R0 + lam with mass-mean-free R0, the remaining unknowns solve a
saddle system that decouples into three stages:

1. multipliers (Pi, P):    K0 Pi + B0^T P = F0,  B0 Pi = G  (projected),
2. boundary trace Wb:      A_s Wb = Fb - Kb^T Pi - Bb^T P - gamma D
                           with gamma fixed by the flux condition
                           D^T Wb = 0,
3. interior lift (W0, R0): K0 W0 + B0^T R0 = -Kb Wb,
                           B0 W0 = -Bb Wb  (projected).

Both pressure solves run projected conjugate gradients on the Schur
complement, whose kernel is the constant pressure; right hand sides are
made consistent in the mass-vector direction and solutions normalized to
zero mass-weighted mean.  Stage 1 does not depend on s, so its results
are reusable across smoothness orders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import OperatorBundle
from .linalg import Factorization, FractionalInverse, schur_pressure_solve


@dataclass
class RieszRepresenter:
    W0: np.ndarray  # (2N,) interior velocity, zeros at known-boundary dofs
    Wb: np.ndarray  # (2N_b,) unknown-boundary velocity trace
    R0: np.ndarray  # (Ntilde,) mass-mean-free pressure part
    lam: float  # pressure mean part
    Pi: np.ndarray  # (2N,) velocity multiplier
    P: np.ndarray  # (Ntilde,) pressure multiplier
    gamma: float
    iterations: tuple[int, int]  # CG counts of stages 1 and 3

    @property
    def pressure(self) -> np.ndarray:
        return self.R0 + self.lam


class RieszContext:
    """Shared factorizations for representer solves on one bundle.

    ``tol_multiplier`` controls the stage 1 Schur CG, ``tol_lift`` the
    stage 3 one.  The viscous factorization and the fractional trace
    inverse (including its sinc node factorizations) are cached, so the
    marginal cost of an extra functional is a few triangular solves per
    CG iteration.
    """

    def __init__(self, bundle: OperatorBundle, s: float, k: float = 0.4,
                 tol_multiplier: float = 1e-9, tol_lift: float = 1e-12,
                 maxiter: int = 5000, K_fact: Factorization | None = None):
        if bundle.layout.N_b == 0:
            raise ValueError("representers need an unknown boundary part")
        self.bundle = bundle
        self.s = float(s)
        self.k = float(k)
        self.tol_multiplier = tol_multiplier
        self.tol_lift = tol_lift
        self.maxiter = maxiter
        if K_fact is None:
            K_fact = Factorization(bundle.K0, free=bundle.layout.free_mask)
        self.K_fact = K_fact
        self.frac = FractionalInverse(bundle.M, bundle.L, s, k)
        self._v: np.ndarray | None = None
        self._dtv: float | None = None

    def apply_trace_inverse(self, rhs: np.ndarray) -> np.ndarray:
        """Componentwise A_s^{-1} on a stacked (2 N_b,) trace load."""
        N_b = self.bundle.layout.N_b
        cols = np.ascontiguousarray(rhs.reshape(2, N_b).T)
        out = self.frac.apply(cols)
        return out.T.reshape(-1)

    @property
    def v_flux(self) -> np.ndarray:
        """Cached A_s^{-1} D, the flux correction direction."""
        if self._v is None:
            self._v = self.apply_trace_inverse(self.bundle.D)
            self._dtv = float(self.bundle.D @ self._v)
        return self._v

    def multipliers(self, F0: np.ndarray, G: np.ndarray):
        sol = schur_pressure_solve(
            self.K_fact, self.bundle.B0, F0, G,
            mp=self.bundle.mp, area=self.bundle.area,
            tol=self.tol_multiplier, maxiter=self.maxiter)
        if not sol.cg.converged:
            raise RuntimeError("stage 1 Schur CG did not converge")
        return sol.v, sol.p, sol.cg.iterations

    def boundary_trace(self, Fb: np.ndarray, Pi: np.ndarray, P: np.ndarray):
        rhs = Fb - self.bundle.Kb.T @ Pi - self.bundle.Bb.T @ P
        u = self.apply_trace_inverse(rhs)
        v = self.v_flux
        gamma = float(self.bundle.D @ u) / self._dtv
        return u - gamma * v, gamma

    def lift(self, Wb: np.ndarray):
        sol = schur_pressure_solve(
            self.K_fact, self.bundle.B0,
            -(self.bundle.Kb @ Wb), -(self.bundle.Bb @ Wb),
            mp=self.bundle.mp, area=self.bundle.area,
            tol=self.tol_lift, maxiter=self.maxiter)
        if not sol.cg.converged:
            raise RuntimeError("stage 3 Schur CG did not converge")
        return sol.v, sol.p, sol.cg.iterations

    def representer(self, F0, Fb, G, lam, multipliers=None) -> RieszRepresenter:
        if multipliers is None:
            Pi, P, it1 = self.multipliers(F0, G)
        else:
            Pi, P, it1 = multipliers
        Wb, gamma = self.boundary_trace(Fb, Pi, P)
        W0, R0, it3 = self.lift(Wb)
        return RieszRepresenter(W0=W0, Wb=Wb, R0=R0, lam=float(lam),
                                Pi=Pi, P=P, gamma=gamma,
                                iterations=(it1, it3))


MONOLITHIC_SIZE_LIMIT = 5000


def monolithic_representer(bundle: OperatorBundle, F0, Fb, G, lam,
                           s: float = 1.0) -> RieszRepresenter:
    """Dense one-shot solve of the full representer saddle system.

    Independent cross-check for the staged solver: assembles every block
    of the optimality system including the three scalar constraints and
    solves it with a dense LU.  Restricted to s = 1 (where the trace norm
    matrix is M + L) and to meshes small enough for dense algebra.
    """
    if abs(s - 1.0) > 1e-14:
        raise ValueError("dense cross-check only supports s = 1")
    layout = bundle.layout
    free = np.where(layout.free_mask)[0]
    nf = free.size
    nb = 2 * layout.N_b
    np_ = layout.Ntilde
    n = 2 * nf + nb + 2 * np_ + 3
    if n > MONOLITHIC_SIZE_LIMIT:
        raise ValueError(f"dense system of size {n} exceeds"
                         f" {MONOLITHIC_SIZE_LIMIT}")

    K00 = bundle.K0[free][:, free].toarray()
    K0b = bundle.Kb[free].toarray()
    B0f = bundle.B0[:, free].toarray()
    Bb = bundle.Bb.toarray()
    ML = (bundle.M + bundle.L).toarray()
    A1 = np.kron(np.eye(2), ML)
    D = bundle.D
    mp = bundle.mp

    # unknown order: W0_f, Wb, R0, Pi_f, P, gamma, c_R, c_P
    ofs = np.cumsum([0, nf, nb, np_, nf, np_, 1, 1, 1])
    A = np.zeros((n, n))
    b = np.zeros(n)

    def put(r, c, blk):
        A[ofs[r]:ofs[r + 1], ofs[c]:ofs[c + 1]] = blk

    put(3, 3, K00); put(3, 4, B0f.T)
    b[ofs[3]:ofs[4]] = F0[free]
    put(1, 1, A1); put(1, 3, K0b.T); put(1, 4, Bb.T)
    put(1, 5, D[:, None])
    b[ofs[1]:ofs[2]] = Fb
    put(4, 3, B0f); put(4, 7, mp[:, None])
    b[ofs[4]:ofs[5]] = G
    put(0, 0, K00); put(0, 1, K0b); put(0, 2, B0f.T)
    put(2, 0, B0f); put(2, 1, Bb); put(2, 6, mp[:, None])
    A[ofs[5], ofs[1]:ofs[2]] = D
    A[ofs[6], ofs[4]:ofs[5]] = mp
    A[ofs[7], ofs[2]:ofs[3]] = mp

    x = np.linalg.solve(A, b)
    resid = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
    if resid > 1e-10:
        raise RuntimeError(f"dense representer residual {resid:.2e}")

    def scatter(vals):
        out = np.zeros(2 * layout.N)
        out[free] = vals
        return out

    return RieszRepresenter(
        W0=scatter(x[ofs[0]:ofs[1]]),
        Wb=x[ofs[1]:ofs[2]],
        R0=x[ofs[2]:ofs[3]],
        lam=float(lam),
        Pi=scatter(x[ofs[3]:ofs[4]]),
        P=x[ofs[4]:ofs[5]],
        gamma=float(x[ofs[5]]),
        iterations=(0, 0),
    )
