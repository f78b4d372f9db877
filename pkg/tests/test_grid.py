import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from envar import tensor_core as tc
from envar.errors import GridMismatch
from envar.grid import GridSpec, TestFunction, random_smooth_field


@pytest.fixture(params=[16, 32])
def grid(request):
    return GridSpec(request.param, L=2.0)


def test_rejects_bad_sizes():
    with pytest.raises(ValueError):
        GridSpec(0)
    with pytest.raises(ValueError):
        GridSpec(8, L=-1.0)


def test_spectral_derivative_of_trig(grid):
    X, Y = grid.coords
    k = 2 * np.pi / grid.L
    f = np.sin(2 * k * X) * np.cos(k * Y)
    g = grid.grad(f)
    np.testing.assert_allclose(g[..., 0], 2 * k * np.cos(2 * k * X) * np.cos(k * Y), atol=1e-11)
    np.testing.assert_allclose(g[..., 1], -k * np.sin(2 * k * X) * np.sin(k * Y), atol=1e-11)
    np.testing.assert_allclose(grid.laplacian(f), -5 * k * k * f, atol=1e-10)


def test_integration_by_parts_all_grid_functions(grid, rng):
    # the Nyquist symbol is zeroed, so d/dx is skew for arbitrary samples
    f = rng.normal(size=(grid.n, grid.n))
    g = rng.normal(size=(grid.n, grid.n))
    lhs = grid.inner(grid.partial(f, 0), g)
    rhs = -grid.inner(f, grid.partial(g, 0))
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_leray_projection(grid, rng):
    v = rng.normal(size=(grid.n, grid.n, 2))
    P = grid.leray_project(v)
    assert np.max(np.abs(grid.div(P))) < 1e-10
    np.testing.assert_allclose(grid.leray_project(P), P, atol=1e-12)
    # orthogonality: (v - Pv) is orthogonal to Pv
    assert grid.inner(v - P, P) == pytest.approx(0.0, abs=1e-10)
    # gradients are annihilated
    phi = grid.dealias(rng.normal(size=(grid.n, grid.n)))
    assert np.max(np.abs(grid.leray_project(grid.grad(phi)))) < 1e-10


def test_velocity_space_is_band_limited(grid, rng):
    v = grid.project_velocity(rng.normal(size=(grid.n, grid.n, 2)))
    V = grid.fft(v)
    assert np.max(np.abs(V[~grid.velocity_mask])) < 1e-10


def test_helmholtz_inverts(grid, rng):
    u = grid.dealias(rng.normal(size=(grid.n, grid.n)))
    rhs = 2.0 * u - 0.3 * grid.laplacian(u)
    np.testing.assert_allclose(grid.solve_helmholtz(rhs, 2.0, 0.3), u, atol=1e-11)


def test_integrate_constant(grid):
    assert grid.integrate(np.ones((grid.n, grid.n))) == pytest.approx(grid.L ** 2)


def test_grid_mismatch(grid):
    with pytest.raises(GridMismatch):
        grid.grad(np.zeros((grid.n + 1, grid.n)))


def test_sobolev_constant_bounds_estimate():
    g = GridSpec(32)
    assert g.sobolev_constant >= g.sobolev_constant_estimate(iters=50)
    # oracle: direct lattice sum of 1/|k|^2 over the resolved band
    modes = [(a, b) for a in range(-10, 11) for b in range(-10, 11) if (a, b) != (0, 0)]
    s = sum(1.0 / (4 * np.pi ** 2 * (a * a + b * b)) for a, b in modes)
    assert g.sobolev_constant == pytest.approx(np.sqrt(s), rel=1e-12)


@pytest.mark.parametrize("kind", ["scalar", "vector", "sym", "spd", "matrix"])
def test_random_field_grid_independent(kind):
    coarse = random_smooth_field(GridSpec(16), 5, 3, kind)
    fine = random_smooth_field(GridSpec(64), 5, 3, kind)
    np.testing.assert_allclose(fine[::4, ::4], coarse, atol=1e-13)


@given(st.integers(0, 10_000))
def test_random_spd_floor(seed):
    C = random_smooth_field(GridSpec(16), seed, 3, "spd", amplitude=2.0)
    assert np.min(tc.min_eigenvalue(C)) >= 0.1


def test_random_field_rejects_unresolved_band():
    with pytest.raises(ValueError):
        random_smooth_field(GridSpec(8), 0, 3)
    with pytest.raises(ValueError):
        random_smooth_field(GridSpec(16), 0, 2, kind="tensor3")


def test_test_function_time_dependence():
    z = np.ones((4, 4, 2))
    s = np.ones((4, 4, 2, 2))
    tf = TestFunction(z, s, coeff=lambda t: 2 * t, dcoeff=lambda t: 2.0)
    assert tf.is_time_dependent
    assert tf.c(1.5) == 3.0 and tf.dc(1.5) == 2.0
    np.testing.assert_array_equal(tf.at(0.5).phi, z)
    assert tf.scaled(-1.0).c(1.0) == 2.0
    assert not TestFunction(z, s).is_time_dependent
