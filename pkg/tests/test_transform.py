"""Flattening-map geometry and field-transform tests."""

import numpy as np
import pytest

from cns.grid import ScalarField, SlabGrid, SurfaceField, VectorField, dx_array, dz_array
from cns.transform import (SingularMapError, compose_with_theta,
                           geometry_coeffs, inverse_log_transform,
                           jacobian_bounds, log_transform, velocity_from_flat,
                           velocity_to_flat)


@pytest.fixture(scope="module")
def grid():
    return SlabGrid(N1=16, N2=8, Nz=17)


def zero_surf(grid):
    return SurfaceField(grid, np.zeros((grid.N1, grid.N2)))


def cos_surf(grid, amp):
    x1 = grid.x1[:, None] * np.ones((1, grid.N2))
    return SurfaceField(grid, amp * np.cos(2 * np.pi * x1 / grid.L1))


def random_vec(grid, seed):
    rng = np.random.default_rng(seed)
    return VectorField.from_arrays(grid, *(rng.standard_normal(grid.shape) for _ in range(3)))


def test_flat_geometry(grid):
    g = geometry_coeffs(zero_surf(grid), zero_surf(grid), grid)
    assert np.max(np.abs(g.alpha.values)) == 0.0
    assert np.max(np.abs(g.beta.values)) == 0.0
    assert np.max(np.abs(g.J.values - 1.0)) <= 1e-14
    assert jacobian_bounds(g) == (pytest.approx(1.0), pytest.approx(1.0))
    assert np.max(np.abs(g.xi["xi33"].values - 1.0)) <= 1e-14


def test_constant_lift(grid):
    eps = 0.125
    eta = SurfaceField(grid, np.full((grid.N1, grid.N2), eps))
    g = geometry_coeffs(eta, zero_surf(grid), grid)
    assert np.max(np.abs(g.alpha.values)) <= 1e-13
    assert np.max(np.abs(g.J.values - (1 + eps / grid.b))) <= 1e-12
    jmin, jmax = jacobian_bounds(g)
    assert jmin == pytest.approx(1 + eps / grid.b, rel=1e-12)
    assert jmax == pytest.approx(1 + eps / grid.b, rel=1e-12)


def test_jacobian_inverse_and_window(grid):
    g = geometry_coeffs(cos_surf(grid, 0.05), zero_surf(grid), grid)
    assert np.max(np.abs(g.J.values * g.Jinv.values - 1.0)) <= 1e-12
    jmin, jmax = jacobian_bounds(g)
    assert 0.5 < jmin <= jmax < 1.5


def test_singular_map_rejected(grid):
    with pytest.raises(SingularMapError):
        geometry_coeffs(cos_surf(grid, 2.0 * grid.b), zero_surf(grid), grid)


def test_velocity_round_trip(grid):
    g = geometry_coeffs(cos_surf(grid, 0.1), zero_surf(grid), grid)
    v = random_vec(grid, seed=0)
    back = velocity_to_flat(velocity_from_flat(v, g), g)
    for orig, rt in zip(v.arrays(), back.arrays()):
        assert np.max(np.abs(orig - rt)) <= 1e-12 * max(1.0, np.max(np.abs(orig)))


def test_velocity_constant_jacobian(grid):
    eta = SurfaceField(grid, np.full((grid.N1, grid.N2), grid.b))
    g = geometry_coeffs(eta, zero_surf(grid), grid)  # J = 2, alpha = beta = 0
    v = VectorField.from_arrays(grid, np.ones(grid.shape),
                                np.zeros(grid.shape), np.zeros(grid.shape))
    u = velocity_from_flat(v, g)
    assert np.max(np.abs(u.v1.values - 0.5)) <= 1e-12
    assert np.max(np.abs(u.v3.values)) <= 1e-12


def test_log_transform_round_trip(grid):
    rng = np.random.default_rng(1)
    c = ScalarField(grid, 0.5 + rng.uniform(0, 2, grid.shape))
    h = log_transform(c, c_hat=1.7)
    back = inverse_log_transform(h, c_hat=1.7)
    assert np.max(np.abs(back.values - c.values)) <= 1e-12 * np.max(c.values)
    chat_field = ScalarField(grid, np.full(grid.shape, 3.0))
    assert np.max(np.abs(log_transform(chat_field, 3.0).values)) <= 1e-14
    with pytest.raises(ValueError):
        log_transform(ScalarField(grid, np.zeros(grid.shape)), 1.0)


def test_compose_with_theta(grid):
    eta = cos_surf(grid, 0.1)
    f = compose_with_theta(lambda a, b, Y, t: Y, eta, grid, 0.0)
    # Must equal etabar + y(1 + etabar/b) built from the cosh closed form.
    kap = 2 * np.pi / grid.L1
    x1 = grid.x1[:, None, None]
    y = grid.y[None, None, :]
    etabar = 0.1 * np.cos(kap * x1) * np.cosh(kap * (y + grid.b)) / np.cosh(kap * grid.b)
    expect = (etabar + y * (1 + etabar / grid.b)) * np.ones(grid.shape)
    assert np.max(np.abs(f.values - expect)) <= 1e-12

    const = compose_with_theta(lambda a, b, Y, t: 4.0, eta, grid, 0.0)
    assert np.max(np.abs(const.values - 4.0)) <= 1e-14

    flat = compose_with_theta(lambda a, b, Y, t: Y, zero_surf(grid), grid, 0.0)
    assert np.max(np.abs(flat.values - y * np.ones(grid.shape))) <= 1e-14


def test_divergence_preservation():
    """Analytic div-free moving-domain velocity -> flat div residual is O(h^2)."""
    res = []
    for nz in (17, 33):
        g = SlabGrid(N1=16, N2=4, Nz=nz)
        eta = cos_surf(g, 0.1)
        zero_t = SurfaceField(g, np.zeros((g.N1, g.N2)))
        geo = geometry_coeffs(eta, zero_t, g)
        # Moving-domain stream velocity u = (dY psi, 0, -dx1 psi),
        # psi = sin(x1) * Y**2 -> divergence-free analytically.
        x1 = g.x1[:, None, None]
        from cns.transform import theta3_array
        Y = theta3_array(eta.values, g)
        u = VectorField.from_arrays(
            g,
            np.sin(x1) * 2 * Y * np.ones(g.shape),
            np.zeros(g.shape),
            -np.cos(x1) * Y**2 * np.ones(g.shape),
        )
        v = velocity_to_flat(u, geo)
        div = (dx_array(v.v1.values, g, 1) + dx_array(v.v2.values, g, 2)
               + dz_array(v.v3.values, g, 1))
        res.append(np.max(np.abs(div)))
    assert 3.0 <= res[0] / res[1] <= 5.5


def test_kinematic_consistency(grid):
    """On Gamma: eta_t = v3  <=>  eta_t = u3 - u1 d1 eta - u2 d2 eta."""
    eta = cos_surf(grid, 0.07)
    geo = geometry_coeffs(eta, zero_surf(grid), grid)
    v = random_vec(grid, seed=9)
    u = velocity_from_flat(v, geo)
    d1e = dx_array(eta.values, grid, 1)
    d2e = dx_array(eta.values, grid, 2)
    lhs = v.v3.values[:, :, -1]
    rhs = (u.v3.values[:, :, -1] - u.v1.values[:, :, -1] * d1e
           - u.v2.values[:, :, -1] * d2e)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))
