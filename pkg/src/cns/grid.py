"""Equilibrium slab discretization, discrete derivatives, quadrature, norms.

The slab is Omega = [0,L1) x [0,L2) x [-b, 0], periodic horizontally, with the
bottom wall S_B at y = -b (vertical index 0) and the free-surface reference
plane Gamma at y = 0 (vertical index Nz-1).  Scalar samples are stored as
arrays of shape (N1, N2, Nz), C-order, so the vertical index runs fastest.

Horizontal derivatives are Fourier-spectral (exact on resolved modes);
vertical derivatives use second-order centered stencils with one-sided
second-order closures at the two walls.  Volume quadrature is the exact
horizontal mean times a vertical trapezoid rule.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite values")


@dataclass
class SlabGrid:
    """Discretization of the slab and the time axis.

    N1, N2 : horizontal node counts (even, >= 4)
    Nz     : vertical node count (>= 3)
    L1, L2 : horizontal periods
    b      : slab depth (bottom wall at y = -b)
    Nt, dt : number of time steps and step size (T = Nt*dt)
    """

    N1: int
    N2: int
    Nz: int
    L1: float = 2.0 * np.pi
    L2: float = 2.0 * np.pi
    b: float = 1.0
    Nt: int = 0
    dt: float = 1e-3

    def __post_init__(self):
        if self.N1 < 4 or self.N1 % 2 or self.N2 < 4 or self.N2 % 2:
            raise ValueError("N1, N2 must be even and >= 4")
        if self.Nz < 3:
            raise ValueError("Nz must be >= 3")
        if self.b <= 0 or self.L1 <= 0 or self.L2 <= 0:
            raise ValueError("L1, L2, b must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.Nt < 0:
            raise ValueError("Nt must be nonnegative")
        self.dz = self.b / (self.Nz - 1)
        self.y = -self.b + self.dz * np.arange(self.Nz)
        self.x1 = self.L1 / self.N1 * np.arange(self.N1)
        self.x2 = self.L2 / self.N2 * np.arange(self.N2)
        # Angular wavenumbers along each periodic axis.
        self.k1 = 2.0 * np.pi * np.fft.fftfreq(self.N1, d=self.L1 / self.N1)
        self.k2 = 2.0 * np.pi * np.fft.fftfreq(self.N2, d=self.L2 / self.N2)
        self.kmag = np.sqrt(self.k1[:, None] ** 2 + self.k2[None, :] ** 2)
        self.ksq = self.k1[:, None] ** 2 + self.k2[None, :] ** 2
        self._build_vertical_stencils()
        # Vertical trapezoid weights and the horizontal cell area.
        self.wz = np.full(self.Nz, self.dz)
        self.wz[0] = self.wz[-1] = 0.5 * self.dz
        self.cell_area = self.L1 * self.L2 / (self.N1 * self.N2)

    def _build_vertical_stencils(self):
        n, dz = self.Nz, self.dz
        D1 = np.zeros((n, n))
        for k in range(1, n - 1):
            D1[k, k - 1] = -0.5 / dz
            D1[k, k + 1] = 0.5 / dz
        D1[0, 0:3] = np.array([-1.5, 2.0, -0.5]) / dz
        D1[-1, -3:] = np.array([0.5, -2.0, 1.5]) / dz
        D2 = np.zeros((n, n))
        for k in range(1, n - 1):
            D2[k, k - 1] = 1.0 / dz**2
            D2[k, k] = -2.0 / dz**2
            D2[k, k + 1] = 1.0 / dz**2
        if n >= 4:
            D2[0, 0:4] = np.array([2.0, -5.0, 4.0, -1.0]) / dz**2
            D2[-1, -4:] = np.array([-1.0, 4.0, -5.0, 2.0]) / dz**2
        else:
            D2[0, 0:3] = np.array([1.0, -2.0, 1.0]) / dz**2
            D2[-1, -3:] = np.array([1.0, -2.0, 1.0]) / dz**2
        self.D1 = D1
        self.D2 = D2
        self.D3 = D1 @ D2
        self.D4 = D2 @ D2

    @property
    def T(self) -> float:
        return self.Nt * self.dt

    @property
    def shape(self):
        return (self.N1, self.N2, self.Nz)

    def compatible(self, other: "SlabGrid") -> bool:
        return (self.N1, self.N2, self.Nz, self.L1, self.L2, self.b) == (
            other.N1, other.N2, other.Nz, other.L1, other.L2, other.b)


@dataclass
class ScalarField:
    """Scalar samples on the slab, shape (N1, N2, Nz)."""

    grid: SlabGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"scalar field shape {self.values.shape} != grid {self.grid.shape}")
        _check_finite(self.values, "scalar field")


@dataclass
class VectorField:
    """Three scalar components sharing one grid."""

    v1: ScalarField
    v2: ScalarField
    v3: ScalarField

    def __post_init__(self):
        g = self.v1.grid
        if self.v2.grid is not g and not g.compatible(self.v2.grid):
            raise ValueError("vector components on different grids")
        if self.v3.grid is not g and not g.compatible(self.v3.grid):
            raise ValueError("vector components on different grids")

    @property
    def grid(self) -> SlabGrid:
        return self.v1.grid

    @classmethod
    def from_arrays(cls, grid: SlabGrid, a1, a2, a3) -> "VectorField":
        return cls(ScalarField(grid, a1), ScalarField(grid, a2), ScalarField(grid, a3))

    def arrays(self):
        return self.v1.values, self.v2.values, self.v3.values


@dataclass
class SurfaceField:
    """Samples on the top surface Gamma, shape (N1, N2)."""

    grid: SlabGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.N1, self.grid.N2):
            raise ValueError("surface field shape mismatch")
        _check_finite(self.values, "surface field")


# ---------------------------------------------------------------------------
# Array-level kernels.  These operate on raw ndarrays for reuse in hot loops;
# the public field-typed operations below are thin wrappers.
# ---------------------------------------------------------------------------

def _mult(grid: SlabGrid, axis: int, order: int) -> np.ndarray:
    """Spectral multiplier (i*k)^order along horizontal axis 1 or 2.

    The Nyquist mode is zeroed for odd orders (its derivative is not
    representable on the real grid).
    """
    k = grid.k1 if axis == 1 else grid.k2
    m = (1j * k) ** order
    if order % 2:
        n = len(k)
        m = m.copy()
        m[n // 2] = 0.0
    return m


def dx_array(vals: np.ndarray, grid: SlabGrid, axis: int, order: int = 1) -> np.ndarray:
    """Spectral horizontal derivative of samples along axis 1 or 2."""
    ax = 0 if axis == 1 else 1
    m = _mult(grid, axis, order)
    n = len(m)
    shape = [1] * vals.ndim
    if np.iscomplexobj(vals):
        shape[ax] = n
        fhat = np.fft.fft(vals, axis=ax)
        return np.fft.ifft(fhat * m.reshape(shape), axis=ax)
    # real fields: transform only the nonredundant half-spectrum
    m = m[:n // 2 + 1]
    shape[ax] = len(m)
    fhat = np.fft.rfft(vals, axis=ax)
    return np.fft.irfft(fhat * m.reshape(shape), n=n, axis=ax)


def dz_array(vals: np.ndarray, grid: SlabGrid, order: int = 1) -> np.ndarray:
    """Vertical finite-difference derivative along the last axis."""
    D = {1: grid.D1, 2: grid.D2, 3: grid.D3, 4: grid.D4}[order]
    return vals @ D.T


def integrate_volume(vals: np.ndarray, grid: SlabGrid) -> float:
    """Trapezoid-in-y times exact-mean-in-x quadrature of a sample array."""
    return float(np.sum(vals @ grid.wz) * grid.cell_area)


def integrate_surface(vals: np.ndarray, grid: SlabGrid) -> float:
    return float(np.sum(vals) * grid.cell_area)


def l2_volume(vals: np.ndarray, grid: SlabGrid) -> float:
    return np.sqrt(max(integrate_volume(vals * vals, grid), 0.0))


def sobolev_norm_array(vals: np.ndarray, grid: SlabGrid, m: int) -> float:
    """Discrete H^m(Omega) norm: L2 of all mixed derivatives up to order m."""
    if not 0 <= m <= 4:
        raise ValueError("sobolev order must be in 0..4")
    total = 0.0
    fhat = np.fft.fft2(vals, axes=(0, 1))
    for a, b2 in itertools.product(range(m + 1), repeat=2):
        if a + b2 > m:
            continue
        mult = (_mult(grid, 1, a)[:, None, None] if a else 1.0)
        if b2:
            mult = mult * _mult(grid, 2, b2)[None, :, None]
        g = np.fft.ifft2(fhat * mult, axes=(0, 1)).real if (a or b2) else vals
        for c in range(0, m - a - b2 + 1):
            d = dz_array(g, grid, c) if c else g
            total += integrate_volume(d * d, grid)
    return float(np.sqrt(total))


def surface_fractional_norm_array(vals: np.ndarray, grid: SlabGrid, s: float) -> float:
    """Fourier-multiplier H^s(Gamma) norm: sum (1+|k|^2)^s |eta_k|^2 L1 L2."""
    eta_hat = np.fft.fft2(vals) / (grid.N1 * grid.N2)
    weight = (1.0 + grid.ksq) ** s
    return float(np.sqrt(np.sum(weight * np.abs(eta_hat) ** 2) * grid.L1 * grid.L2))


def surface_gradient_arrays(vals: np.ndarray, grid: SlabGrid):
    """(d1 eta, d2 eta) of a surface sample array, spectral."""
    return dx_array(vals, grid, 1), dx_array(vals, grid, 2)


def top(vals: np.ndarray) -> np.ndarray:
    """Trace on Gamma (top row) of a volume sample array."""
    return vals[..., -1]


def bottom(vals: np.ndarray) -> np.ndarray:
    """Trace on S_B (bottom row) of a volume sample array."""
    return vals[..., 0]


# ---------------------------------------------------------------------------
# Field-typed public operations.
# ---------------------------------------------------------------------------

def d_horizontal(f, axis: int, order: int = 1):
    """Spectral derivative along periodic axis 1 or 2 of a scalar or surface field."""
    if axis not in (1, 2) or order not in (1, 2):
        raise ValueError("axis must be 1|2 and order 1|2")
    _check_finite(f.values, "input field")
    if isinstance(f, SurfaceField):
        return SurfaceField(f.grid, dx_array(f.values, f.grid, axis, order))
    return ScalarField(f.grid, dx_array(f.values, f.grid, axis, order))


def d_vertical(f: ScalarField, order: int = 1) -> ScalarField:
    """Vertical finite-difference derivative of a scalar field."""
    if order not in (1, 2):
        raise ValueError("order must be 1|2")
    if f.grid.Nz < 3 or (order == 2 and f.grid.Nz < 4):
        raise ValueError("grid too coarse for requested vertical derivative")
    return ScalarField(f.grid, dz_array(f.values, f.grid, order))


def sobolev_norm(f: ScalarField, m: int) -> float:
    return sobolev_norm_array(f.values, f.grid, m)


def surface_fractional_norm(eta: SurfaceField, s: float) -> float:
    if not -0.5 - 1e-12 <= s <= 3.0 + 1e-12:
        raise ValueError("s must lie in [-1/2, 3]")
    return surface_fractional_norm_array(eta.values, eta.grid, s)
