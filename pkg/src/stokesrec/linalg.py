"""Sparse solvers: constrained factorizations, projected CG, Schur solves,
fractional trace norms via sinc quadrature, and regularized Gram inversion.

The trace norm of order ``s`` is induced by ``A_s = M V (I + diag(mu))^s
V^T M`` where ``L V = M V diag(mu)`` and ``V^T M V = I``.  Its inverse is
applied as ``A_s^{-1} = Q^{-t} [M (M+L)^{-1}]^m`` with ``s = m + t``,
``t`` in ``(0, 1)``, and ``Q^{-t}`` the sinc quadrature

    Q^{-t} b = (k sin(pi t) / pi) * sum_l exp((1-t) y_l)
               ((exp(y_l) + 1) M + L)^{-1} b,   y_l = k l,

with ``l`` ranging over ``-ceil(pi^2 / (2(1-t)k^2)) .. ceil(pi^2 / (2t k^2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu


class Factorization:
    """LU factorization of a sparse matrix, optionally on a free-dof subset.

    Solutions are scattered back to full size with zeros at fixed dofs;
    fixed rows of the right hand side are ignored.
    """

    def __init__(self, A: sp.spmatrix, free: np.ndarray | None = None):
        self.n = A.shape[0]
        self.free = free
        if free is not None:
            A = A.tocsr()[free][:, free]
        self._lu = splu(A.tocsc())

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.free is None:
            return self._lu.solve(b)
        out = np.zeros(b.shape if b.ndim == 1 else (self.n, b.shape[1]))
        out[self.free] = self._lu.solve(b[self.free])
        return out


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual_norms: list[float] = field(repr=False, default_factory=list)


def cg_solve(apply_op, rhs, tol: float = 1e-9, maxiter: int = 2000,
             project=None, callback=None) -> CGResult:
    """Conjugate gradients from x0 = 0 with relative residual stopping.

    ``project`` removes a known null space component from the right hand
    side and from every operator application, keeping iterates in the
    orthogonal complement despite roundoff.
    """
    r = np.array(rhs, dtype=float)
    if project is not None:
        r = project(r)
    x = np.zeros_like(r)
    norm0 = float(np.linalg.norm(r))
    history = [norm0]
    if norm0 == 0.0:
        return CGResult(x, 0, True, history)
    p = r.copy()
    rs = norm0 * norm0
    for it in range(1, maxiter + 1):
        Ap = apply_op(p)
        if project is not None:
            Ap = project(Ap)
        alpha = rs / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        history.append(math.sqrt(rs_new))
        if callback is not None:
            callback(x)
        if history[-1] <= tol * norm0:
            return CGResult(x, it, True, history)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return CGResult(x, maxiter, False, history)


@dataclass
class SchurSolution:
    p: np.ndarray
    v: np.ndarray
    cg: CGResult


def schur_pressure_solve(K_fact: Factorization, B: sp.spmatrix, rhs_v, rhs_p,
                         *, mp: np.ndarray, area: float, tol: float = 1e-9,
                         maxiter: int = 5000, mean_free: bool = True) -> SchurSolution:
    """Solve K v + B^T p = rhs_v, B v (+ c mp) = rhs_p by pressure CG.

    With ``mean_free`` the pressure is sought in the mean-free subspace:
    the Schur complement is singular with kernel span{1}, the right hand
    side is corrected by the mp direction to make the system consistent,
    CG runs under the l2 projector onto 1^perp, and the solution is
    shifted to zero mass-weighted mean afterwards.  Without it the Schur
    complement is taken as is (positive definite when the velocity space
    has a natural boundary part).
    """
    Bt = B.T.tocsr()

    def apply_s(z):
        return B @ K_fact.solve(Bt @ z)

    g = B @ K_fact.solve(rhs_v) - rhs_p
    project = None
    if mean_free:
        g = g - (g.sum() / area) * mp
        n = g.size

        def project(z):
            return z - (z.sum() / n)

    cg = cg_solve(apply_s, g, tol=tol, maxiter=maxiter, project=project)
    p = cg.x
    if mean_free:
        p = p - (mp @ p) / area
    v = K_fact.solve(rhs_v - Bt @ p)
    return SchurSolution(p=p, v=v, cg=cg)


def sinc_node_counts(t: float, k: float) -> tuple[int, int]:
    neg = math.ceil(math.pi ** 2 / (2.0 * (1.0 - t) * k * k))
    pos = math.ceil(math.pi ** 2 / (2.0 * t * k * k))
    return neg, pos


class FractionalInverse:
    """Action of A_s^{-1} on trace load vectors, 0 < s < 2.

    Integer powers use the (M + L) factorization with mass interleaving;
    the fractional remainder uses sinc quadrature with step ``k``.  Node
    factorizations are built lazily and cached, so repeated applications
    (and matrix right hand sides) amortize the setup.
    """

    def __init__(self, M: sp.spmatrix, L: sp.spmatrix, s: float, k: float = 0.4):
        if not 0.0 < s < 2.0:
            raise ValueError(f"order s={s} outside (0, 2)")
        self.M = M.tocsr()
        self.L = L.tocsr()
        self.s = float(s)
        self.k = float(k)
        self.m = int(math.floor(s + 1e-12))
        self.t = self.s - self.m
        if self.t < 1e-12:
            self.t = 0.0
        self._ml_fact: Factorization | None = None
        self._node_facts: dict[int, Factorization] = {}
        if self.t > 0.0:
            neg, pos = sinc_node_counts(self.t, self.k)
            self.nodes = self.k * np.arange(-neg, pos + 1)
        else:
            self.nodes = np.zeros(0)

    @property
    def num_nodes(self) -> int:
        return self.nodes.size

    def _ml_solve(self, b):
        if self._ml_fact is None:
            self._ml_fact = Factorization(self.M + self.L)
        return self._ml_fact.solve(b)

    def _node_solve(self, l: int, b):
        if l not in self._node_facts:
            y = self.nodes[l]
            self._node_facts[l] = Factorization((math.exp(y) + 1.0) * self.M + self.L)
        return self._node_facts[l].solve(b)

    def _sinc(self, b):
        acc = np.zeros_like(b, dtype=float)
        for l, y in enumerate(self.nodes):
            acc += math.exp((1.0 - self.t) * y) * self._node_solve(l, b)
        return (self.k * math.sin(math.pi * self.t) / math.pi) * acc

    def apply(self, b: np.ndarray) -> np.ndarray:
        x = np.asarray(b, dtype=float)
        for i in range(self.m):
            x = self._ml_solve(x)
            if i < self.m - 1 or self.t > 0.0:
                x = self.M @ x
        if self.t > 0.0:
            x = self._sinc(x)
        return x


def condition_number(A: np.ndarray) -> float:
    sv = np.linalg.svd(np.asarray(A), compute_uv=False)
    if sv[-1] == 0.0:
        return float("inf")
    return float(sv[0] / sv[-1])


@dataclass
class GramReport:
    mode: str
    eps: float
    size: int
    rank: int
    cond_G: float
    cond_GP: float | None


def pinv_solve(G: np.ndarray, w: np.ndarray, mode: str = "plain",
               eps: float = 1e-10) -> tuple[np.ndarray, GramReport]:
    """Least squares solve of the (symmetric, often ill conditioned) Gram
    system by truncated SVD, optionally after Jacobi scaling.

    Modes: ``plain`` decomposes G directly, ``jacobi`` scales by
    diag(G)^{-1/2} first, ``jacobi_threshold`` additionally zeroes scaled
    singular values below ``eps`` times the largest.  ``plain`` and
    ``jacobi`` truncate only at machine precision.  Reported condition
    numbers are measured before truncation.
    """
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    cond_G = condition_number(G)
    cond_GP = None
    if mode == "plain":
        target, scale, cutoff = G, None, 1e-14
    elif mode in ("jacobi", "jacobi_threshold"):
        d = np.sqrt(np.diag(G))
        if np.any(d <= 0):
            raise ValueError("Gram diagonal must be positive for Jacobi scaling")
        scale = 1.0 / d
        target = G * scale[:, None] * scale[None, :]
        cond_GP = condition_number(target)
        cutoff = eps if mode == "jacobi_threshold" else 1e-14
    else:
        raise ValueError(f"unknown Gram solve mode {mode!r}")

    U, sv, Vt = np.linalg.svd(target)
    keep = sv > cutoff * sv[0]
    rank = int(keep.sum())
    inv = np.zeros_like(sv)
    inv[keep] = 1.0 / sv[keep]
    rhs = w if scale is None else w * scale
    x = Vt.T @ (inv * (U.T @ rhs))
    if scale is not None:
        x = x * scale
    return x, GramReport(mode=mode, eps=eps, size=n, rank=rank,
                         cond_G=cond_G, cond_GP=cond_GP)
