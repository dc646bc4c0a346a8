"""Linear sub-solvers on the flat slab.

Two implicit-in-time solvers (backward Euler) plus two elliptic kernels:

* coupled parabolic pair for the cell density / log-oxygen variables (w, h)
  with cross-diffusion coefficient a, flux boundary coupling on Gamma and
  wall conditions on S_B;
* free-surface Stokes evolution for (v, q, eta) with implicit
  gravity-capillary surface coupling;
* stationary Stokes system with the same boundary rows;
* projection onto discretely divergence-free fields (vanishing vertical
  trace at the bottom wall), and the symmetric-gradient quadratic form.

Every linear solve is a dense per-horizontal-mode system in the vertical
index, prefactored once per (grid, step) configuration, applied batched, and
polished with one iterative-refinement pass.

Trajectories are ndarrays with the time level on axis 0: volume fields have
shape (Nt+1, N1, N2, Nz) and surface fields (Nt+1, N1, N2).
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from cns.grid import (ScalarField, SlabGrid, SurfaceField, VectorField,
                      _mult, dx_array, dz_array, integrate_volume)


_log = logging.getLogger(__name__)


class SolverConvergenceError(RuntimeError):
    """Inner block iteration failed to reach tolerance."""


# ---------------------------------------------------------------------------
# Batched mode-system helpers.
# ---------------------------------------------------------------------------

_CACHE_LIMIT = 4
_OPERATOR_CACHE: OrderedDict = OrderedDict()


def _cached(key, builder):
    if key in _OPERATOR_CACHE:
        _OPERATOR_CACHE.move_to_end(key)
        return _OPERATOR_CACHE[key]
    value = builder()
    _OPERATOR_CACHE[key] = value
    while len(_OPERATOR_CACHE) > _CACHE_LIMIT:
        _OPERATOR_CACHE.popitem(last=False)
    return value


def _grid_key(grid: SlabGrid):
    return (grid.N1, grid.N2, grid.Nz, grid.L1, grid.L2, grid.b)


def _apply(A, x):
    """Batched matrix-vector product over the trailing pair of axes."""
    return np.matmul(A, x[..., None])[..., 0]


def _solve_refined(M, Minv, rhs):
    """Batched solve with one iterative-refinement pass."""
    x = _apply(Minv, rhs)
    r = rhs - _apply(M, x)
    return x + _apply(Minv, r)


def _solve(ops, mkey, rhs, refine):
    if refine:
        return _solve_refined(ops[mkey], ops[mkey + "_inv"], rhs)
    return _apply(ops[mkey + "_inv"], rhs)


def _fft2(vals):
    return np.fft.fft2(vals, axes=(0, 1))


def _ifft2(vals):
    return np.fft.ifft2(vals, axes=(0, 1)).real


def _rfft2(vals):
    """Half-spectrum transform used by the per-mode solvers.

    Real fields have Hermitian spectra, so the steppers only solve the
    N2//2 + 1 nonredundant modes along the second axis; the inverse
    transform restores the full real field.
    """
    return np.fft.rfft2(vals, axes=(0, 1))


def _irfft2(vals, grid):
    return np.fft.irfft2(vals, s=(grid.N1, grid.N2), axes=(0, 1))


def _nc(grid):
    return grid.N2 // 2 + 1


# ---------------------------------------------------------------------------
# Coupled parabolic pair.
# ---------------------------------------------------------------------------

def _helmholtz_operators(grid: SlabGrid, dt: float):
    """Per-mode (1/dt + |k|^2)I - D2 with the two boundary-row variants."""

    def build():
        n = grid.Nz
        nc = _nc(grid)
        base = np.zeros((grid.N1, nc, n, n))
        rows = np.arange(1, n - 1)
        base[:, :, rows, :] = -grid.D2[rows, :]
        base[:, :, rows, rows] += 1.0 / dt + grid.ksq[:, :nc, None]
        Mw = base.copy()       # w: Dirichlet bottom, Neumann top
        Mw[:, :, 0, :] = 0.0
        Mw[:, :, 0, 0] = 1.0
        Mw[:, :, -1, :] = grid.D1[-1, :]
        Mh = base               # h: Neumann bottom, Dirichlet top
        Mh[:, :, 0, :] = grid.D1[0, :]
        Mh[:, :, -1, :] = 0.0
        Mh[:, :, -1, -1] = 1.0
        return {"Mw": Mw, "Mw_inv": np.linalg.inv(Mw),
                "Mh": Mh, "Mh_inv": np.linalg.inv(Mh)}

    return _cached(("parabolic", _grid_key(grid), dt), build)


class ParabolicStepper:
    """One backward-Euler step of the coupled (w, h) system.

    (1/dt)w - Lap w - div(a grad h) = w_prev/dt + f4
    (1/dt)h - Lap h - w            = h_prev/dt + f5
    d3 w + a d3 h = g4, h = 0 on Gamma;  w = 0, d3 h = 0 on S_B.

    The horizontally varying cross-diffusion couples modes, so each step runs
    a block Gauss-Seidel iteration (w-solve with h lagged, then h-solve) to
    tolerance 1e-10 within at most 200 sweeps.
    """

    def __init__(self, grid: SlabGrid, dt: float,
                 tol: float = 1e-10, max_sweeps: int = 200,
                 refine: bool = True):
        self.grid = grid
        self.dt = dt
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.refine = refine
        self.ops = _helmholtz_operators(grid, dt)
        self.last_sweeps = 0

    def _chemo(self, da, h):
        g = self.grid
        a, d1a, d2a, d3a = da
        lap_h = (dx_array(h, g, 1, 2) + dx_array(h, g, 2, 2)
                 + dz_array(h, g, 2))
        return (a * lap_h + d1a * dx_array(h, g, 1)
                + d2a * dx_array(h, g, 2) + d3a * dz_array(h, g, 1))

    def step(self, w_prev, h_prev, a, f4, f5, g4, warm=None):
        """Advance one level; warm optionally supplies an initial (w, h)
        guess for the inner iteration (e.g. the same level of the previous
        outer iterate)."""
        g = self.grid
        ops = self.ops
        R4 = w_prev / self.dt + f4
        R5 = h_prev / self.dt
        if f5 is not None:
            R5 = R5 + f5
        if warm is None:
            w = w_prev.copy()
            h = h_prev.copy()
        else:
            w, h = warm
        scale = (np.max(np.abs(w_prev)) + np.max(np.abs(h_prev))
                 + np.max(np.abs(g4)) + 1.0)
        coupled = bool(np.any(a))
        a_d3 = a[:, :, -1]
        if coupled:
            da = (a, dx_array(a, g, 1), dx_array(a, g, 2),
                  dz_array(a, g, 1))
        change = np.inf
        nc = _nc(g)
        for sweep in range(1, self.max_sweeps + 1):
            rhs_w = R4 + self._chemo(da, h) if coupled else R4
            bw = np.zeros((g.N1, nc, g.Nz), dtype=complex)
            bw[:, :, 1:-1] = _rfft2(rhs_w)[:, :, 1:-1]
            if coupled:
                bw[:, :, -1] = _rfft2(g4 - a_d3 * dz_array(h, g, 1)[:, :, -1])
            else:
                bw[:, :, -1] = _rfft2(g4)
            w_new = _irfft2(_solve(ops, "Mw", bw, self.refine), g)

            rhs_h = _rfft2(R5 + w_new)
            bh = np.zeros((g.N1, nc, g.Nz), dtype=complex)
            bh[:, :, 1:-1] = rhs_h[:, :, 1:-1]
            h_new = _irfft2(_solve(ops, "Mh", bh, self.refine), g)

            change = max(np.max(np.abs(w_new - w)), np.max(np.abs(h_new - h)))
            w, h = w_new, h_new
            if not coupled or change <= self.tol * scale:
                self.last_sweeps = sweep
                return w, h
        raise SolverConvergenceError(
            f"parabolic inner iteration: change {change:.3e} after "
            f"{self.max_sweeps} sweeps (tolerance {self.tol:.1e}, "
            f"contraction estimate {change / (scale + 1e-300):.3e})")


@dataclass
class ParabolicProblem:
    """Data bundle for the coupled parabolic pair over [0, Nt*dt]."""

    grid: SlabGrid
    w0: np.ndarray
    h0: np.ndarray
    a: Optional[np.ndarray] = None       # (Nt+1, N1, N2, Nz) or None (zero)
    f4: Optional[np.ndarray] = None
    f5: Optional[np.ndarray] = None
    g4: Optional[np.ndarray] = None      # (Nt+1, N1, N2) or None

    def compatibility_residual(self) -> dict:
        g = self.grid
        a0 = self.a[0] if self.a is not None else np.zeros(g.shape)
        g40 = self.g4[0] if self.g4 is not None else np.zeros((g.N1, g.N2))
        flux = (dz_array(self.w0, g, 1)[:, :, -1]
                + a0[:, :, -1] * dz_array(self.h0, g, 1)[:, :, -1] - g40)
        return {
            "flux_gamma": float(np.max(np.abs(flux))),
            "h_gamma": float(np.max(np.abs(self.h0[:, :, -1]))),
            "w_bottom": float(np.max(np.abs(self.w0[:, :, 0]))),
            "h_bottom_neumann": float(
                np.max(np.abs(dz_array(self.h0, g, 1)[:, :, 0]))),
        }


def solve_parabolic_pair(p: ParabolicProblem):
    """March the pair over the grid's time axis; returns (w, h) trajectories."""
    g = p.grid
    nt = g.Nt
    stepper = ParabolicStepper(g, g.dt)
    zeros3 = np.zeros(g.shape)
    zeros2 = np.zeros((g.N1, g.N2))
    w = np.empty((nt + 1,) + g.shape)
    h = np.empty((nt + 1,) + g.shape)
    w[0], h[0] = p.w0, p.h0
    _log.info("parabolic compatibility residual: %s",
              p.compatibility_residual())
    for n in range(nt):
        a = p.a[n + 1] if p.a is not None else zeros3
        f4 = p.f4[n + 1] if p.f4 is not None else zeros3
        f5 = p.f5[n + 1] if p.f5 is not None else None
        g4 = p.g4[n + 1] if p.g4 is not None else zeros2
        w[n + 1], h[n + 1] = stepper.step(w[n], h[n], a, f4, f5, g4)
    return w, h


# ---------------------------------------------------------------------------
# Free-surface Stokes evolution.
# ---------------------------------------------------------------------------

def _staggered_matrices(grid: SlabGrid):
    """Vertical staggering helpers: pressure lives at the Nz-1 cell midpoints.

    Returns (Dm, Tq): Dm maps midpoint values to the compact two-point
    vertical derivative at nodes (rows 0 and Nz-1 unused), Tq interpolates
    midpoint values to nodes with cubic (degree-3-exact) stencils.
    """
    n = grid.Nz
    m = n - 1
    if m < 4:
        raise ValueError("staggered pressure needs Nz >= 5")
    dz = grid.dz
    Dm = np.zeros((n, m))
    rows = np.arange(1, n - 1)
    Dm[rows, rows - 1] = -1.0 / dz
    Dm[rows, rows] = 1.0 / dz
    Tq = np.zeros((n, m))
    Tq[0, 0:4] = np.array([35.0, -35.0, 21.0, -5.0]) / 16.0
    Tq[1, 0:4] = np.array([5.0, 15.0, -5.0, 1.0]) / 16.0
    for j in range(2, n - 2):
        Tq[j, j - 2:j + 2] = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0
    Tq[n - 2, m - 4:m] = np.array([1.0, -5.0, 15.0, 5.0]) / 16.0
    Tq[n - 1, m - 4:m] = np.array([-5.0, 21.0, -35.0, 35.0]) / 16.0
    return Dm, Tq


def _stokes_operator(grid: SlabGrid, dt: Optional[float],
                     gamma: float, sigma: float):
    """Per-mode coupled (v1, v2, v3, q) system of size 4*Nz - 1.

    Velocities live at the Nz vertical nodes, the pressure at the Nz-1 cell
    midpoints (vertical staggering removes the checkerboard pressure mode of
    a fully collocated grid, restoring second-order convergence).  The
    continuity rows enforce the midpoint divergence; that operator is the
    solver's native discrete divergence (see divergence()).

    dt=None builds the stationary operator (no time term, no implicit
    surface coupling; the normal-stress row reads q - 2 d3 v3 = g3).
    """

    def build():
        n = grid.Nz
        m = n - 1
        N1, N2 = grid.N1, _nc(grid)
        m1 = _mult(grid, 1, 1)[:, None]          # ik1 (Nyquist zeroed)
        m2 = _mult(grid, 2, 1)[None, :N2]
        ksq = grid.ksq[:, :N2]
        inv_dt = 0.0 if dt is None else 1.0 / dt
        Dm, Tq = _staggered_matrices(grid)
        qoff = 3 * n
        M = np.zeros((N1, N2, 4 * n - 1, 4 * n - 1), dtype=complex)
        rows = np.arange(1, n - 1)
        mid = np.arange(m)
        for c, mom in ((0, m1), (n, m2), (2 * n, None)):
            # bottom Dirichlet
            M[:, :, c, c] = 1.0
            # interior momentum
            M[:, :, c + rows[:, None], c + np.arange(n)[None, :]] = \
                -grid.D2[rows, :]
            M[:, :, c + rows, c + rows] += inv_dt + ksq[:, :, None]
            if mom is not None:
                # horizontal pressure gradient: ik * (midpoints -> node)
                M[:, :, c + rows[:, None], qoff + mid[None, :]] = \
                    mom[:, :, None, None] * Tq[rows, :]
            else:
                # vertical pressure gradient: compact midpoint difference
                M[:, :, 2 * n + rows[:, None], qoff + mid[None, :]] \
                    += Dm[rows, :]
        # top tangential stress rows
        M[:, :, n - 1, 0:n] = grid.D1[-1, :]
        M[:, :, n - 1, 3 * n - 1] = m1 * np.ones((N1, N2))
        M[:, :, 2 * n - 1, n:2 * n] = grid.D1[-1, :]
        M[:, :, 2 * n - 1, 3 * n - 1] = m2 * np.ones((N1, N2))
        # top normal stress row (pressure interpolated to the surface node)
        M[:, :, 3 * n - 1, qoff:qoff + m] = Tq[n - 1, :]
        M[:, :, 3 * n - 1, 2 * n:3 * n] = -2.0 * grid.D1[-1, :]
        if dt is not None:
            M[:, :, 3 * n - 1, 3 * n - 1] += -dt * (gamma + sigma * ksq)
        # continuity at the midpoints: averaged horizontal terms, compact
        # vertical difference
        half = 0.5 * np.ones((N1, N2, m))
        M[:, :, qoff + mid, mid] = m1[:, :, None] * half
        M[:, :, qoff + mid, mid + 1] = m1[:, :, None] * half
        M[:, :, qoff + mid, n + mid] = m2[:, :, None] * half
        M[:, :, qoff + mid, n + mid + 1] = m2[:, :, None] * half
        M[:, :, qoff + mid, 2 * n + mid] = -1.0 / grid.dz
        M[:, :, qoff + mid, 2 * n + mid + 1] = 1.0 / grid.dz
        return {"M": M, "M_inv": np.linalg.inv(M), "Tq": Tq}

    key = ("stokes", _grid_key(grid), dt, gamma, sigma)
    return _cached(key, build)


@dataclass
class FlatState:
    """Stokes unknowns at one time level."""

    v: VectorField
    q: ScalarField
    eta: SurfaceField
    index: int = 0

    @property
    def grid(self) -> SlabGrid:
        return self.v.grid


@dataclass
class StokesProblem:
    """Forcing bundle for the Stokes evolution over [0, Nt*dt]."""

    grid: SlabGrid
    v0: VectorField
    eta0: SurfaceField
    gamma: float = 1.0
    sigma: float = 1.0
    f: Optional[tuple] = None          # 3 volume trajectories
    g: Optional[tuple] = None          # 3 surface trajectories
    w: Optional[np.ndarray] = None     # volume trajectory
    phi: Optional[np.ndarray] = None   # volume trajectory

    def initial_state(self) -> FlatState:
        q0 = np.zeros(self.grid.shape)
        return FlatState(v=self.v0, q=ScalarField(self.grid, q0),
                         eta=self.eta0, index=0)

    def compatibility_residual(self) -> dict:
        g = self.grid
        v1, v2, v3 = self.v0.arrays()
        g1 = self.g[0][0] if self.g is not None else np.zeros((g.N1, g.N2))
        g2 = self.g[1][0] if self.g is not None else np.zeros((g.N1, g.N2))
        t1 = (dz_array(v1, g, 1) + dx_array(v3, g, 1))[:, :, -1] - g1
        t2 = (dz_array(v2, g, 1) + dx_array(v3, g, 2))[:, :, -1] - g2
        return {
            "div": float(np.max(np.abs(divergence(self.v0)))),
            "tangential_1": float(np.max(np.abs(t1))),
            "tangential_2": float(np.max(np.abs(t2))),
            "v_bottom": float(max(np.max(np.abs(a[:, :, 0]))
                                  for a in self.v0.arrays())),
        }


class StokesStepper:
    """One implicit step of the free-surface Stokes system."""

    def __init__(self, grid: SlabGrid, dt: float, gamma: float, sigma: float,
                 refine: bool = True):
        self.grid = grid
        self.dt = dt
        self.gamma = gamma
        self.sigma = sigma
        self.refine = refine
        self.ops = _stokes_operator(grid, dt, gamma, sigma)

    def step(self, v_prev, eta_prev, rhs, g_surf):
        """v_prev: 3 arrays; rhs: 3 arrays (f - w grad phi at the new level);
        g_surf: 3 surface arrays.  Returns (v_new, q_new, eta_new); q_new is
        interpolated back to the vertical nodes."""
        g = self.grid
        n = g.Nz
        nc = _nc(g)
        b = np.zeros((g.N1, nc, 4 * n - 1), dtype=complex)
        for c, (vp, f) in enumerate(zip(v_prev, rhs)):
            rr = _rfft2(vp / self.dt + f)
            b[:, :, c * n + 1:(c + 1) * n - 1] = rr[:, :, 1:-1]
        g1h, g2h, g3h = (_rfft2(gs) for gs in g_surf)
        etah = _rfft2(eta_prev)
        b[:, :, n - 1] = g1h
        b[:, :, 2 * n - 1] = g2h
        b[:, :, 3 * n - 1] = ((self.gamma + self.sigma * g.ksq[:, :nc]) * etah
                              - g3h)
        x = _solve(self.ops, "M", b, self.refine)
        v_new = tuple(_irfft2(x[:, :, c * n:(c + 1) * n], g)
                      for c in range(3))
        q_new = _irfft2(x[:, :, 3 * n:4 * n - 1] @ self.ops["Tq"].T, g)
        eta_new = eta_prev + self.dt * v_new[2][:, :, -1]
        return v_new, q_new, eta_new


def solve_stokes_step(prev: FlatState, p: StokesProblem,
                      t_index: int) -> FlatState:
    """Advance the Stokes state from level t_index-1 to t_index."""
    g = p.grid
    stepper = StokesStepper(g, g.dt, p.gamma, p.sigma)
    zeros3 = np.zeros(g.shape)
    rhs = [p.f[c][t_index] if p.f is not None else zeros3 for c in range(3)]
    if p.w is not None and p.phi is not None:
        wv = p.w[t_index]
        ph = p.phi[t_index]
        grad_phi = (dx_array(ph, g, 1), dx_array(ph, g, 2),
                    dz_array(ph, g, 1))
        rhs = [r - wv * gp for r, gp in zip(rhs, grad_phi)]
    zeros2 = np.zeros((g.N1, g.N2))
    g_surf = [p.g[c][t_index] if p.g is not None else zeros2
              for c in range(3)]
    v_new, q_new, eta_new = stepper.step(prev.v.arrays(), prev.eta.values,
                                         rhs, g_surf)
    return FlatState(v=VectorField.from_arrays(g, *v_new),
                     q=ScalarField(g, q_new),
                     eta=SurfaceField(g, eta_new), index=t_index)


def solve_stationary_stokes(F_tilde: VectorField, g_tilde, grid: SlabGrid):
    """-Lap omega + grad q = F, div omega = 0, with the evolution solver's
    boundary rows and normal stress q - 2 d3 omega3 = g3 on Gamma."""
    ops = _stokes_operator(grid, None, 0.0, 0.0)
    n = grid.Nz
    b = np.zeros((grid.N1, _nc(grid), 4 * n - 1), dtype=complex)
    for c, f in enumerate(F_tilde.arrays()):
        rr = _rfft2(f)
        b[:, :, c * n + 1:(c + 1) * n - 1] = rr[:, :, 1:-1]
    for c, gs in enumerate(g_tilde):
        vals = gs.values if isinstance(gs, SurfaceField) else gs
        b[:, :, (c + 1) * n - 1] = _rfft2(vals)
    x = _solve_refined(ops["M"], ops["M_inv"], b)
    omega = VectorField.from_arrays(
        grid, *(_irfft2(x[:, :, c * n:(c + 1) * n], grid) for c in range(3)))
    q = ScalarField(grid, _irfft2(x[:, :, 3 * n:4 * n - 1] @ ops["Tq"].T,
                                  grid))
    return omega, q


# ---------------------------------------------------------------------------
# Projection and quadratic form.
# ---------------------------------------------------------------------------

def divergence(v: VectorField) -> np.ndarray:
    """Native discrete divergence of the Stokes solver, at the Nz-1 vertical
    cell midpoints: spectral horizontal derivatives of the two-node vertical
    averages plus the compact vertical difference.  This is exactly the
    operator the continuity rows enforce, so solver output vanishes here to
    rounding."""
    g = v.grid
    v1, v2, v3 = v.arrays()
    a1 = 0.5 * (v1[:, :, 1:] + v1[:, :, :-1])
    a2 = 0.5 * (v2[:, :, 1:] + v2[:, :, :-1])
    return (dx_array(a1, g, 1) + dx_array(a2, g, 2)
            + (v3[:, :, 1:] - v3[:, :, :-1]) / g.dz)


def divergence_nodal(v: VectorField) -> np.ndarray:
    """Collocated divergence at the vertical nodes (diagnostic; second-order
    consistent with the midpoint operator)."""
    g = v.grid
    return (dx_array(v.v1.values, g, 1) + dx_array(v.v2.values, g, 2)
            + dz_array(v.v3.values, g, 1))


def _leray_operator(grid: SlabGrid):
    def build():
        n = grid.Nz
        # The discrete divergence of a gradient uses D1 twice, so the
        # projection must solve with the composed operator to cancel exactly.
        DD = grid.D1 @ grid.D1
        M = np.zeros((grid.N1, grid.N2, n, n))
        rows = np.arange(1, n - 1)
        M[:, :, rows, :] = DD[rows, :]
        M[:, :, rows, rows] += -grid.ksq[:, :, None]
        M[:, :, 0, :] = grid.D1[0, :]
        M[:, :, -1, :] = 0.0
        M[:, :, -1, -1] = 1.0
        return {"M": M, "Minv": np.linalg.inv(M)}

    return _cached(("leray", _grid_key(grid)), build)


def leray_projection(u: VectorField, grid: SlabGrid) -> VectorField:
    """u - grad rho with Lap rho = div u, rho = 0 on Gamma, d3 rho = u3 on S_B.

    The result is discretely divergence-free at interior rows and has zero
    vertical trace at the bottom wall.
    """
    ops = _leray_operator(grid)
    div = divergence_nodal(u)
    b = _fft2(div).astype(complex)
    b[:, :, 0] = _fft2(u.v3.values)[:, :, 0]
    b[:, :, -1] = 0.0
    rho = _ifft2(_solve_refined(ops["M"], ops["Minv"], b))
    return VectorField.from_arrays(
        grid,
        u.v1.values - dx_array(rho, grid, 1),
        u.v2.values - dx_array(rho, grid, 2),
        u.v3.values - dz_array(rho, grid, 1))


def korn_form(v: VectorField, u: VectorField) -> float:
    """[v, u] = 1/2 int sum_ij (d_j v_i + d_i v_j)(d_j u_i + d_i u_j)."""
    g = v.grid
    if not g.compatible(u.grid):
        raise ValueError("korn_form requires matching grids")

    def sym(field):
        a1, a2, a3 = field.arrays()
        comps = (a1, a2, a3)
        out = {}
        for i in range(3):
            for j in range(3):
                di = (lambda f, ax=j: dx_array(f, g, ax + 1)
                      if ax < 2 else dz_array(f, g, 1))
                dj_vi = di(comps[i])
                out[(i, j)] = dj_vi
        return out

    dv = sym(v)
    du = sym(u)
    total = np.zeros(g.shape)
    for i in range(3):
        for j in range(3):
            total += (dv[(i, j)] + dv[(j, i)]) * (du[(i, j)] + du[(j, i)])
    return 0.5 * integrate_volume(total, g)
