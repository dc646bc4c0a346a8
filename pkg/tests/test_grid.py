"""Grid, derivative, quadrature and norm tests."""

import numpy as np
import pytest

from cns.grid import (ScalarField, SlabGrid, SurfaceField, d_horizontal,
                      d_vertical, dx_array, dz_array, integrate_volume,
                      sobolev_norm, surface_fractional_norm)


@pytest.fixture(scope="module")
def grid():
    return SlabGrid(N1=16, N2=8, Nz=17, L1=2 * np.pi, L2=2 * np.pi, b=1.0)


def mesh(grid):
    return np.meshgrid(grid.x1, grid.x2, grid.y, indexing="ij")


def band_limited(grid, seed, kmax=3):
    """Random real field with horizontal modes |n| <= kmax and smooth in y."""
    rng = np.random.default_rng(seed)
    x1, x2, y = mesh(grid)
    f = np.zeros(grid.shape)
    for _ in range(6):
        n1 = rng.integers(-kmax, kmax + 1)
        n2 = rng.integers(-kmax, kmax + 1)
        ph = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.2, 1.0)
        prof = np.polyval(rng.uniform(-1, 1, 4), y)
        f += amp * np.cos(2 * np.pi * (n1 * x1 / grid.L1 + n2 * x2 / grid.L2) + ph) * prof
    return f


def test_grid_validation():
    with pytest.raises(ValueError):
        SlabGrid(N1=3, N2=8, Nz=9)
    with pytest.raises(ValueError):
        SlabGrid(N1=8, N2=8, Nz=2)
    with pytest.raises(ValueError):
        SlabGrid(N1=8, N2=8, Nz=9, b=-1.0)


def test_vertical_node_layout(grid):
    assert grid.y[0] == pytest.approx(-grid.b)
    assert grid.y[-1] == pytest.approx(0.0)
    assert np.allclose(np.diff(grid.y), grid.b / (grid.Nz - 1))


def test_horizontal_derivative_single_mode(grid):
    x1, _, _ = mesh(grid)
    f = ScalarField(grid, np.sin(2 * np.pi * x1 / grid.L1))
    df = d_horizontal(f, axis=1, order=1)
    expect = (2 * np.pi / grid.L1) * np.cos(2 * np.pi * x1 / grid.L1)
    assert np.max(np.abs(df.values - expect)) <= 1e-12


def test_horizontal_derivative_constant(grid):
    f = ScalarField(grid, np.ones(grid.shape))
    for axis in (1, 2):
        for order in (1, 2):
            assert np.max(np.abs(d_horizontal(f, axis, order).values)) <= 1e-13


def test_horizontal_derivative_vs_fd_oracle(grid):
    f = band_limited(grid, seed=0)
    df = dx_array(f, grid, 1, 1)
    h = grid.L1 / grid.N1
    fd = (np.roll(f, -1, 0) - np.roll(f, 1, 0)) * (2 / 3) / h \
        - (np.roll(f, -2, 0) - np.roll(f, 2, 0)) / (12 * h)
    scale = np.max(np.abs(df))
    assert np.max(np.abs(df - fd)) <= 5e-2 * scale  # 4th-order FD truncation


def test_vertical_derivative_exact_on_polynomials(grid):
    _, _, y = mesh(grid)
    f = ScalarField(grid, y.copy())
    assert np.max(np.abs(d_vertical(f, 1).values - 1.0)) <= 1e-11
    f2 = ScalarField(grid, y**2)
    assert np.max(np.abs(d_vertical(f2, 2).values - 2.0)) <= 1e-9


def test_vertical_derivative_convergence():
    errs = []
    for nz in (17, 33, 65):
        g = SlabGrid(N1=4, N2=4, Nz=nz)
        y = g.y[None, None, :] * np.ones((4, 4, 1))
        f = np.cos(np.pi * y / g.b)
        df = dz_array(f, g, 1)
        exact = -(np.pi / g.b) * np.sin(np.pi * y / g.b)
        errs.append(np.max(np.abs(df - exact)))
    r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
    assert 3.0 < r1 < 5.5 and 3.0 < r2 < 5.5


def test_sobolev_norm_trivia(grid):
    z = ScalarField(grid, np.zeros(grid.shape))
    assert sobolev_norm(z, 2) == 0.0
    one = ScalarField(grid, np.ones(grid.shape))
    vol = np.sqrt(grid.L1 * grid.L2 * grid.b)
    for m in range(4):
        assert sobolev_norm(one, m) == pytest.approx(vol, rel=1e-12)


def test_sobolev_norm_closed_form(grid):
    x1, _, _ = mesh(grid)
    f = ScalarField(grid, np.sin(2 * np.pi * x1 / grid.L1))
    kap = 2 * np.pi / grid.L1
    expect = np.sqrt(grid.L1 * grid.L2 * grid.b / 2 * (1 + kap**2))
    assert sobolev_norm(f, 1) == pytest.approx(expect, abs=1e-10)


def test_sobolev_norm_monotone(grid):
    f = ScalarField(grid, band_limited(grid, seed=1))
    norms = [sobolev_norm(f, m) for m in range(4)]
    assert all(norms[i] <= norms[i + 1] + 1e-12 for i in range(3))


def test_parseval(grid):
    f = band_limited(grid, seed=2)
    phys = integrate_volume(f * f, grid)
    fhat = np.fft.fft2(f, axes=(0, 1)) / (grid.N1 * grid.N2)
    four = np.sum((np.abs(fhat) ** 2) @ grid.wz) * grid.L1 * grid.L2
    assert phys == pytest.approx(four, rel=1e-10)


def test_mixed_derivatives_commute(grid):
    f = band_limited(grid, seed=3)
    a = dz_array(dx_array(f, grid, 1, 1), grid, 1)
    b = dx_array(dz_array(f, grid, 1), grid, 1, 1)
    assert np.max(np.abs(a - b)) <= 1e-8 * max(1.0, np.max(np.abs(a)))


def test_surface_norm_trivia(grid):
    z = SurfaceField(grid, np.zeros((grid.N1, grid.N2)))
    assert surface_fractional_norm(z, 0.5) == 0.0
    one = SurfaceField(grid, np.ones((grid.N1, grid.N2)))
    for s in (-0.5, 0.0, 1.5, 3.0):
        assert surface_fractional_norm(one, s) == pytest.approx(
            np.sqrt(grid.L1 * grid.L2), rel=1e-12)


def test_surface_norm_single_mode(grid):
    x1 = grid.x1[:, None] * np.ones((1, grid.N2))
    eta = SurfaceField(grid, np.cos(2 * np.pi * x1 / grid.L1))
    kap = 2 * np.pi / grid.L1
    expect = np.sqrt(grid.L1 * grid.L2 / 2 * np.sqrt(1 + kap**2))
    assert surface_fractional_norm(eta, 0.5) == pytest.approx(expect, rel=1e-12)


def test_nonfinite_rejected(grid):
    vals = np.zeros(grid.shape)
    vals[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        ScalarField(grid, vals)
