import numpy as np
import pytest
import scipy.sparse as sp
from scipy.special import erf

from stokesrec.assembly import (
    assemble_body_load,
    assemble_bundle,
    cell_geometry_data,
    functional_vectors,
    gaussian_weight,
)
from stokesrec.femspace import build_layout
from stokesrec.measurements import Functional
from stokesrec.mesh import Mesh, MeshError, generate_unit_square


def gaussian_mass(cx, cy, r):
    """Closed form of the window integral over the unit square."""

    def seg(c):
        return np.sqrt(np.pi / 2) * r * (erf((1 - c) / (np.sqrt(2) * r)) + erf(c / (np.sqrt(2) * r)))

    return seg(cx) * seg(cy) / np.sqrt(2 * np.pi * r * r)


def interp_velocity(layout, f):
    """Nodal interpolant of a vector field onto the stacked velocity space."""
    vals = np.asarray(f(layout.node_xy[:, 0], layout.node_xy[:, 1]))
    return np.concatenate([vals[0], vals[1]])


def test_area_and_pressure_weights(square2_bundle):
    b = square2_bundle
    assert b.area == pytest.approx(1.0, abs=1e-14)
    assert b.mp.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(b.mp > 0)
    # mean of an affine pressure is exact under the vertex-weight rule
    p = 3.0 * b.layout.mesh.vertices[:, 0] - 1.0
    assert b.mean_pressure(p) == pytest.approx(0.5, abs=1e-13)


def test_trace_mass_and_stiffness(square2_bundle):
    b = square2_bundle
    ones = np.ones(b.layout.N_b)
    # constants: full mass is the perimeter, stiffness annihilates them
    assert ones @ (b.M @ ones) == pytest.approx(4.0, abs=1e-13)
    assert np.abs(b.L @ ones).max() < 1e-13
    for A in (b.M, b.L):
        assert np.abs(A - A.T).max() < 1e-14
    # the bump x(1-x) on the bottom edge lies in the quadratic trace space,
    # vanishes at both corners, and has closed-form mass and energy
    x = b.layout.node_xy[b.layout.N :, 0]
    y = b.layout.node_xy[b.layout.N :, 1]
    g = np.where(y == 0.0, x * (1.0 - x), 0.0)
    assert g @ (b.L @ g) == pytest.approx(1.0 / 3.0, abs=1e-13)
    assert g @ (b.M @ g) == pytest.approx(1.0 / 30.0, abs=1e-13)


def test_viscous_form_annihilates_rigid_motions(square2_bundle):
    b = square2_bundle
    for fld in (
        lambda x, y: (np.ones_like(x), np.zeros_like(y)),
        lambda x, y: (np.zeros_like(x), np.ones_like(y)),
        lambda x, y: (-y, x),
    ):
        u = interp_velocity(b.layout, fld)
        assert np.abs(b.K_full @ u).max() < 1e-12
        assert np.abs(b.B_full @ u).max() < 1e-13  # rigid motions are divergence free


def test_divergence_form_integrates_linear_field(square2_bundle):
    b = square2_bundle
    u = interp_velocity(b.layout, lambda x, y: (x, y))  # div = 2
    ones = np.ones(b.layout.Ntilde)
    assert ones @ (b.B_full @ u) == pytest.approx(-2.0 * b.area, abs=1e-13)


def test_viscous_energy_of_shear_flow(square2_bundle):
    # u = (y, 0): 2 int eps:eps = int (du1/dy)^2 * 2 * (1/2 ... ) = 1
    b = square2_bundle
    u = interp_velocity(b.layout, lambda x, y: (y, np.zeros_like(x)))
    # eps = [[0, .5], [.5, 0]], 2 eps:eps = 1 over the unit square
    assert u @ (b.K_full @ u) == pytest.approx(1.0, abs=1e-12)


def test_block_splitting_consistent(square2_bundle):
    b = square2_bundle
    lay = b.layout
    I, Bi = lay.interior_idx, lay.boundary_idx
    assert np.abs(b.K0 - b.K_full[I][:, I]).max() < 1e-15
    assert np.abs(b.Bb - b.B_full[:, Bi]).max() < 1e-15
    D = np.asarray(b.Bb.sum(axis=0)).ravel()
    assert np.allclose(b.D, D, atol=1e-15)
    # D is the pairing of the boundary block with the constant pressure
    u = interp_velocity(lay, lambda x, y: (x - 0.5, y - 0.5))
    ub = u[Bi]
    u0 = u[I]
    total = np.ones(lay.Ntilde) @ (b.B_full @ u)
    assert b.D @ ub + np.ones(lay.Ntilde) @ (b.B0 @ u0) == pytest.approx(total, abs=1e-13)


def test_body_load_integrates_constants(square2_bundle):
    b = square2_bundle
    F = assemble_body_load(b, lambda x, y: (np.ones_like(x), 2.0 * np.ones_like(x)))
    T = b.layout.T
    assert F[:T].sum() == pytest.approx(b.area, abs=1e-13)
    assert F[T:].sum() == pytest.approx(2.0 * b.area, abs=1e-13)


def test_body_load_pairs_with_interpolant(square2_bundle):
    # int f . u for polynomial f and quadratic u is exact under the 3x3 rule
    b = square2_bundle
    F = assemble_body_load(b, lambda x, y: (x * y, np.zeros_like(x)))
    u = interp_velocity(b.layout, lambda x, y: (x**2, np.zeros_like(x)))
    # int_0^1 int_0^1 x^3 y dx dy = 1/8
    assert F @ u == pytest.approx(1.0 / 8.0, abs=1e-13)


def test_gaussian_weight_peak_and_decay():
    xq = np.array([[0.3, 0.4], [0.9, 0.9]])
    w = gaussian_weight(xq, 0.3, 0.4, 0.1)
    assert w[0] == pytest.approx(1.0 / np.sqrt(2 * np.pi * 0.01), rel=1e-14)
    assert w[1] < w[0] * 1e-8


def test_pressure_functional_mass():
    layout = build_layout(generate_unit_square(3))
    bundle = assemble_bundle(layout)
    fn = Functional(kind="gaussian", component=3, cx=0.5, cy=0.5, r=0.1)
    F0, Fb, G, lam = functional_vectors(bundle, fn)
    assert not F0.any() and not Fb.any()
    assert lam == pytest.approx(G.sum(), abs=1e-15)
    assert lam == pytest.approx(0.25066254005160843, rel=1e-7)
    assert lam == pytest.approx(gaussian_mass(0.5, 0.5, 0.1), rel=1e-7)


def test_velocity_functional_mass_and_split():
    layout = build_layout(generate_unit_square(3))
    bundle = assemble_bundle(layout)
    fn = Functional(kind="gaussian", component=1, cx=0.25, cy=0.75, r=0.1)
    F0, Fb, G, lam = functional_vectors(bundle, fn)
    assert lam == 0.0 and not G.any()
    total = F0.sum() + Fb.sum()  # functional applied to u = (1, 0)
    assert total == pytest.approx(gaussian_mass(0.25, 0.75, 0.1), rel=1e-7)
    # component 2 loads only the second block
    fn2 = Functional(kind="gaussian", component=2, cx=0.25, cy=0.75, r=0.1)
    F0b, Fbb, _, _ = functional_vectors(bundle, fn2)
    N, N_b = layout.N, layout.N_b
    assert not F0b[:N].any() and not Fbb[:N_b].any()
    assert np.allclose(F0b[N:], F0[:N], atol=1e-15)


def test_trace_functional_vectors(square2_bundle):
    b = square2_bundle
    N_b = b.layout.N_b
    g = np.vstack([np.ones(N_b), np.zeros(N_b)])
    fn = Functional(kind="trace", g=g, mu=2.0)
    F0, Fb, G, lam = functional_vectors(b, fn)
    assert not F0.any()
    # (M + L) 1 = M 1: row sums of the trace mass
    assert np.allclose(Fb[:N_b], np.asarray(b.M.sum(axis=1)).ravel(), atol=1e-13)
    assert not Fb[N_b:].any()
    assert lam == 2.0
    assert G.sum() == pytest.approx(2.0, abs=1e-13)
    with pytest.raises(ValueError, match="shape"):
        functional_vectors(b, Functional(kind="trace", g=np.ones((2, 3)), mu=0.0))
    with pytest.raises(ValueError, match="kind"):
        functional_vectors(b, Functional(kind="point"))


def test_degenerate_cell_rejected():
    # nonconvex chevron passes the signed-area check but folds the bilinear map
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.1, 0.1], [0.0, 1.0]])
    cells = np.array([[0, 1, 2, 3]])
    edges = np.array([[0, 1, 0], [1, 2, 0], [2, 3, 0], [3, 0, 0]])
    mesh = Mesh(verts, cells, edges, {0: "boundary"})
    layout = build_layout(mesh)
    with pytest.raises(MeshError, match="Jacobian"):
        cell_geometry_data(layout, 3)


def test_geometry_cache_reuses_objects(square2_bundle):
    g1 = square2_bundle.geometry(4)
    g2 = square2_bundle.geometry(4)
    assert g1 is g2
    assert g1.detw.shape == (16, 16)
