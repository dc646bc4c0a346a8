"""Flattening map between the equilibrium slab and the moving domain.

The map theta(x1,x2,y,t) = (x1, x2, etabar + y(1 + etabar/b)) carries the slab
onto the moving fluid domain, where etabar is the harmonic extension of the
surface height.  This module builds the induced geometry coefficients

    alpha = (1 + y/b) d1 etabar,   beta = (1 + y/b) d2 etabar,
    J     = 1 + etabar/b + (d_y etabar)(1 + y/b),

the inverse-Jacobian entries, the velocity push/pull that preserves the
divergence-free condition, and the logarithmic oxygen change of variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cns.grid import (ScalarField, SlabGrid, SurfaceField, VectorField,
                      dx_array)
from cns.harmonic import HarmonicExtension, extend, extend_array


class SingularMapError(RuntimeError):
    """The flattening map degenerated (J <= 0 or outside the trusted window)."""


@dataclass
class GeometryCoeffs:
    """Geometry of the flattening map at one time level."""

    alpha: ScalarField
    beta: ScalarField
    J: ScalarField
    Jinv: ScalarField
    xi: dict            # the five nontrivial inverse-Jacobian entries
    etabar: HarmonicExtension
    etabar_t: ScalarField
    detabar_t_dy: ScalarField

    @property
    def grid(self) -> SlabGrid:
        return self.alpha.grid


def geometry_arrays(eta_vals: np.ndarray, eta_t_vals: np.ndarray, grid: SlabGrid) -> dict:
    """Raw-array geometry bundle used by the hot loops.

    Returns alpha, beta, J, Ji (=1/J), etabar, detabar_dy, etabar_t,
    detabar_t_dy as plain ndarrays.
    """
    etabar, detabar = extend_array(eta_vals, grid)
    etabar_t, detabar_t = extend_array(eta_t_vals, grid)
    lift = 1.0 + grid.y[None, None, :] / grid.b
    alpha = lift * dx_array(etabar, grid, 1)
    beta = lift * dx_array(etabar, grid, 2)
    J = 1.0 + etabar / grid.b + detabar * lift
    if np.min(J) <= 0.0:
        raise SingularMapError(f"Jacobian nonpositive: min J = {np.min(J):.3e}")
    return {
        "alpha": alpha, "beta": beta, "J": J, "Ji": 1.0 / J,
        "etabar": etabar, "detabar_dy": detabar,
        "etabar_t": etabar_t, "detabar_t_dy": detabar_t,
        "lift": lift,
    }


def geometry_coeffs(eta: SurfaceField, eta_t: SurfaceField, grid: SlabGrid) -> GeometryCoeffs:
    """Geometry coefficients of the flattening generated by (eta, eta_t)."""
    g = geometry_arrays(eta.values, eta_t.values, grid)
    ext = extend(eta)
    Ji = g["Ji"]
    xi = {
        "xi31": ScalarField(grid, -Ji * g["alpha"]),
        "xi32": ScalarField(grid, -Ji * g["beta"]),
        "xi33": ScalarField(grid, Ji.copy()),
        "xi11": ScalarField(grid, np.ones(grid.shape)),
        "xi22": ScalarField(grid, np.ones(grid.shape)),
    }
    return GeometryCoeffs(
        alpha=ScalarField(grid, g["alpha"]),
        beta=ScalarField(grid, g["beta"]),
        J=ScalarField(grid, g["J"]),
        Jinv=ScalarField(grid, Ji),
        xi=xi,
        etabar=ext,
        etabar_t=ScalarField(grid, g["etabar_t"]),
        detabar_t_dy=ScalarField(grid, g["detabar_t_dy"]),
    )


def jacobian_bounds(g: GeometryCoeffs):
    return float(np.min(g.J.values)), float(np.max(g.J.values))


def velocity_from_flat(v: VectorField, g: GeometryCoeffs) -> VectorField:
    """Flat velocity -> samples of the moving-domain velocity on the slab grid."""
    Ji = g.Jinv.values
    a, b2 = g.alpha.values, g.beta.values
    v1, v2, v3 = v.arrays()
    u1 = Ji * v1
    u2 = Ji * v2
    u3 = Ji * a * v1 + Ji * b2 * v2 + v3
    return VectorField.from_arrays(v.grid, u1, u2, u3)


def velocity_to_flat(u_comp: VectorField, g: GeometryCoeffs) -> VectorField:
    """Inverse of velocity_from_flat (preserves the divergence-free condition)."""
    J = g.J.values
    a, b2 = g.alpha.values, g.beta.values
    u1, u2, u3 = u_comp.arrays()
    v1 = J * u1
    v2 = J * u2
    v3 = u3 - a * u1 - b2 * u2
    return VectorField.from_arrays(u_comp.grid, v1, v2, v3)


def log_transform(c: ScalarField, c_hat: float) -> ScalarField:
    """Oxygen to log variable: h = -ln c + ln c_hat (requires c > 0)."""
    if c_hat <= 0:
        raise ValueError("c_hat must be positive")
    if np.min(c.values) <= 0:
        raise ValueError("log transform requires strictly positive oxygen values")
    return ScalarField(c.grid, np.log(c_hat) - np.log(c.values))


def inverse_log_transform(h: ScalarField, c_hat: float) -> ScalarField:
    """Log variable back to oxygen: c = c_hat * exp(-h) > 0 always."""
    if c_hat <= 0:
        raise ValueError("c_hat must be positive")
    return ScalarField(h.grid, c_hat * np.exp(-h.values))


def theta3_array(eta_vals: np.ndarray, grid: SlabGrid) -> np.ndarray:
    """Vertical component of the flattening map at the grid nodes."""
    etabar, _ = extend_array(eta_vals, grid)
    return etabar + grid.y[None, None, :] * (1.0 + etabar / grid.b)


def compose_with_theta(f, eta: SurfaceField, grid: SlabGrid, t: float) -> ScalarField:
    """Sample f(theta(x1,x2,y,t), t) on the slab grid.

    f is an analytic callback f(x1, x2, Y, t) on the moving domain.
    """
    th3 = theta3_array(eta.values, grid)
    x1 = grid.x1[:, None, None]
    x2 = grid.x2[None, :, None]
    return ScalarField(grid, np.asarray(f(x1, x2, th3, t), dtype=float)
                       + np.zeros(grid.shape))
