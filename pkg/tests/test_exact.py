import numpy as np
import pytest
from scipy.integrate import dblquad

from stokesrec.exact import get_case, rigid_motion, taylor_vortex


def fd_grad(f, x, y, h=1e-6):
    return np.stack(
        [
            (np.asarray(f(x + h, y)) - np.asarray(f(x - h, y))) / (2 * h),
            (np.asarray(f(x, y + h)) - np.asarray(f(x, y - h))) / (2 * h),
        ],
        axis=-1,
    )


def fd_laplacian(f, x, y, h=1e-4):
    c = np.asarray(f(x, y))
    return (
        np.asarray(f(x + h, y))
        + np.asarray(f(x - h, y))
        + np.asarray(f(x, y + h))
        + np.asarray(f(x, y - h))
        - 4 * c
    ) / (h * h)


@pytest.fixture(params=["exponential", "taylor"])
def case(request):
    return get_case(request.param)


def test_gradient_consistent_with_finite_differences(case):
    rng = np.random.default_rng(5)
    x, y = rng.uniform(0.1, 0.9, size=(2, 40))
    g = case.grad_u(x, y)
    fd = fd_grad(case.u, x, y)  # [..., j] stacking: fd[i, pt, j]
    for i in range(2):
        for j in range(2):
            assert np.allclose(g[i, j], fd[i, :, j], atol=1e-7)


def test_velocity_is_divergence_free(case):
    rng = np.random.default_rng(6)
    x, y = rng.uniform(0.05, 0.95, size=(2, 50))
    g = case.grad_u(x, y)
    assert np.allclose(g[0, 0] + g[1, 1], 0.0, atol=1e-12)


def test_momentum_balance(case):
    # f = -lap(u) + grad(p), checked by second order differences
    rng = np.random.default_rng(9)
    x, y = rng.uniform(0.1, 0.9, size=(2, 25))
    lap = fd_laplacian(case.u, x, y)
    gp = fd_grad(case.p, x, y)  # (pts, 2)
    f = case.f(x, y)
    for i in range(2):
        assert np.allclose(f[i], -lap[i] + gp[:, i], atol=1e-5)


def test_taylor_pressure_statistics():
    case = taylor_vortex()
    # mean over the unit square vanishes, and the square mean is 1
    val, _ = dblquad(lambda y, x: case.p(x, y), 0, 1, 0, 1, epsabs=1e-12)
    assert abs(val) < 1e-10
    sq, _ = dblquad(lambda y, x: case.p(x, y) ** 2, 0, 1, 0, 1, epsabs=1e-12)
    assert sq == pytest.approx(1.0, abs=1e-10)


def test_rigid_motion_fields():
    case = rigid_motion(a=0.4, b=-0.3, c=1.3, p_const=2.5)
    x, y = np.array([0.2, 0.8]), np.array([0.7, 0.1])
    u = case.u(x, y)
    assert np.allclose(u[0], 0.4 - 1.3 * y, atol=1e-15)
    assert np.allclose(u[1], -0.3 + 1.3 * x, atol=1e-15)
    assert np.allclose(case.p(x, y), 2.5, atol=1e-15)
    g = case.grad_u(x, y)
    assert np.allclose(g + np.transpose(g, (1, 0, 2)), 0.0, atol=1e-15)
    assert np.allclose(case.f(x, y), 0.0, atol=1e-15)


def test_get_case_rejects_unknown_name():
    with pytest.raises(ValueError, match="unknown exact solution"):
        get_case("poiseuille")
