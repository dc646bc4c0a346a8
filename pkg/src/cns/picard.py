"""Successive-approximation driver for the coupled free-surface system.

Starting from compatible initial data, the driver builds a sequence of
approximate solutions on the flat slab.  The first two iterates coincide and
solve a decoupled linearization whose boundary data are the initial boundary
values damped exponentially in time (so the data remain compatible at t = 0
and decay away).  Every later iterate solves, per time level,

* the coupled parabolic pair for (w, h) with cross-diffusion coefficient
  taken from the previous iterate's w, volume forcing assembled from the
  previous two iterates (the chemotaxis blocks lag one extra iterate, which
  is what makes the fixed-point map contract), and the flux coupling G4 on
  the top boundary;
* the free-surface Stokes system for (v, q, eta) with the freshly computed
  w multiplying the potential gradient and all other corrections taken from
  the previous iterate.

Convergence is monitored through the composite solution norm of consecutive
differences; the weighted difference s_j = delta_{j+1} + delta_j / 2 is
expected to contract geometrically (ratio <= 3/4) once the scheme settles.
The Jacobian of the flattening map must stay inside the trusted window
(1/2, 3/2) for every iterate; leaving it aborts the run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from cns.energy import quintuple_norm
from cns.grid import SlabGrid, dx_array, dz_array
from cns.solvers import ParabolicStepper, StokesStepper, divergence
from cns.terms import TermsWorkspace, workspace_from_eta
from cns.transform import geometry_arrays

_log = logging.getLogger(__name__)

JACOBIAN_WINDOW = (0.5, 1.5)


class CompatibilityError(RuntimeError):
    """Initial data violate the boundary/divergence compatibility conditions."""


class JacobianWindowError(RuntimeError):
    """The flattening Jacobian left the trusted window (1/2, 3/2)."""


class PicardConvergenceError(RuntimeError):
    """The successive approximations failed to converge within the budget."""


@dataclass
class PicardConfig:
    """Inputs of a successive-approximation run.

    v0 is a tuple of three volume arrays, eta0 a surface array; potential is
    an optional callback Phi(x1, x2, Y, t) on the moving domain.
    """

    grid: SlabGrid
    w0: np.ndarray
    h0: np.ndarray
    v0: tuple
    eta0: np.ndarray
    c_hat: float = 1.0
    gamma: float = 1.0
    sigma: float = 1.0
    potential: Optional[Callable] = None
    max_sweeps: int = 30
    diff_tol: float = 1e-8
    smallness_threshold: float = 0.1
    compat_tol: float = 1e-6


@dataclass
class IterateQuintuple:
    """One full space-time iterate (trajectories with time level on axis 0)."""

    index: int
    w: np.ndarray
    h: np.ndarray
    v: tuple
    q: np.ndarray
    eta: np.ndarray
    eta_t: np.ndarray
    jmin: float = 1.0
    jmax: float = 1.0


@dataclass
class PicardResult:
    """Converged iterate plus the per-sweep convergence report."""

    iterate: IterateQuintuple
    deltas: list
    ratios: list
    sweeps: int
    compatibility: dict
    report_rows: list = field(default_factory=list)


def _data_scale(cfg: PicardConfig) -> float:
    return float(max(np.max(np.abs(cfg.w0)), np.max(np.abs(cfg.h0)),
                     max(np.max(np.abs(a)) for a in cfg.v0),
                     np.max(np.abs(cfg.eta0)), 1.0))


def check_compatibility(cfg: PicardConfig) -> dict:
    """Max-norm residuals of every compatibility condition at t = 0."""
    g = cfg.grid
    ws = workspace_from_eta(cfg.eta0, np.zeros_like(cfg.eta0), g)
    v1, v2, v3 = cfg.v0

    from cns.grid import VectorField
    div = divergence(VectorField.from_arrays(g, v1, v2, v3))
    flux = (dz_array(cfg.w0, g, 1)[:, :, -1]
            + cfg.w0[:, :, -1] * dz_array(cfg.h0, g, 1)[:, :, -1]
            - ws.G4(cfg.w0, cfg.h0))
    t1 = ((dz_array(v1, g, 1) + dx_array(v3, g, 1))[:, :, -1]
          - ws.G1(v1, v2, v3))
    t2 = ((dz_array(v2, g, 1) + dx_array(v3, g, 2))[:, :, -1]
          - ws.G2(v1, v2, v3))
    res = {
        "divergence": float(np.max(np.abs(div))),
        "flux_gamma": float(np.max(np.abs(flux))),
        "h_gamma": float(np.max(np.abs(cfg.h0[:, :, -1]))),
        "tangential_1": float(np.max(np.abs(t1))),
        "tangential_2": float(np.max(np.abs(t2))),
        "v_bottom": float(max(np.max(np.abs(a[:, :, 0])) for a in cfg.v0)),
        "w_bottom": float(np.max(np.abs(cfg.w0[:, :, 0]))),
        "h_bottom_neumann": float(
            np.max(np.abs(dz_array(cfg.h0, g, 1)[:, :, 0]))),
    }
    return res


def _check_window(J: np.ndarray):
    jmin = float(np.min(J))
    jmax = float(np.max(J))
    lo, hi = JACOBIAN_WINDOW
    if jmin <= lo or jmax >= hi:
        raise JacobianWindowError(
            f"flattening Jacobian left ({lo}, {hi}): "
            f"range [{jmin:.4f}, {jmax:.4f}]")
    return jmin, jmax


def iterate_jacobian_bounds(eta_traj: np.ndarray, grid: SlabGrid):
    """(min J, max J) of the flattening generated by a surface trajectory."""
    jmin, jmax = np.inf, -np.inf
    zero = np.zeros((grid.N1, grid.N2))
    for n in range(eta_traj.shape[0]):
        geo = geometry_arrays(eta_traj[n], zero, grid)
        jmin = min(jmin, float(np.min(geo["J"])))
        jmax = max(jmax, float(np.max(geo["J"])))
    return jmin, jmax


# Time levels are assembled in blocks of this many before the implicit march
# (bounds peak memory of the vectorized forcing evaluation).
_TIME_CHUNK = 64


def _time_major(stack: np.ndarray) -> np.ndarray:
    """(T, N1, N2[, Nz]) trajectory block -> assembly layout (N1, N2, T[, Nz])."""
    return np.ascontiguousarray(np.moveaxis(stack, 0, 2))


def _potential_stack(cfg: PicardConfig, etabar: np.ndarray,
                     ts: np.ndarray) -> np.ndarray:
    """Sample the moving-domain potential through the flattening map.

    etabar has the assembly layout (N1, N2, T, Nz) (T may be 1 for a static
    geometry); ts holds the T time values.  Returns phi in the same layout.
    """
    g = cfg.grid
    shape = (g.N1, g.N2, len(ts), g.Nz)
    if cfg.potential is None:
        return np.zeros(shape)
    th3 = etabar + g.y[None, None, None, :] * (1.0 + etabar / g.b)
    x1 = g.x1[:, None, None, None]
    x2 = g.x2[None, :, None, None]
    t = ts[None, None, :, None]
    return np.asarray(cfg.potential(x1, x2, th3, t), dtype=float) \
        + np.zeros(shape)


def bootstrap_iterates(cfg: PicardConfig) -> IterateQuintuple:
    """First two (identical) iterates from the decoupled linear system.

    Boundary corrections are frozen at their compatible t = 0 values and
    damped by exp(-t); the cross-diffusion, chemotaxis and metric volume
    corrections are switched off entirely.
    """
    g = cfg.grid
    nt = g.Nt
    dt = g.dt
    zeros2 = np.zeros((g.N1, g.N2))
    ws0 = workspace_from_eta(cfg.eta0, zeros2, g)
    jmin, jmax = _check_window(ws0.J)

    v10, v20, v30 = cfg.v0
    g1_0 = ws0.G1(v10, v20, v30)
    g2_0 = ws0.G2(v10, v20, v30)
    # flux datum for the pure Neumann condition d3 w = g4_tilde: the initial
    # coupled condition minus the cross term it absorbs.
    g4_0 = (ws0.G4(cfg.w0, cfg.h0)
            - cfg.w0[:, :, -1] * dz_array(cfg.h0, g, 1)[:, :, -1])

    etabar0 = ws0.geo["etabar"][:, :, None, :]   # static assembly layout
    zeros3 = np.zeros(g.shape)

    w = np.empty((nt + 1,) + g.shape)
    h = np.empty((nt + 1,) + g.shape)
    v = tuple(np.empty((nt + 1,) + g.shape) for _ in range(3))
    q = np.zeros((nt + 1,) + g.shape)
    eta = np.empty((nt + 1, g.N1, g.N2))
    eta_t = np.empty((nt + 1, g.N1, g.N2))

    w[0], h[0] = cfg.w0, cfg.h0
    for c in range(3):
        v[c][0] = cfg.v0[c]
    eta[0] = cfg.eta0
    eta_t[0] = v30[:, :, -1]

    parab = ParabolicStepper(g, dt)
    stokes = StokesStepper(g, dt, cfg.gamma, cfg.sigma)

    grad_phi = tuple(np.zeros((nt + 1,) + g.shape) for _ in range(3))
    if cfg.potential is not None:
        for s in range(1, nt + 1, _TIME_CHUNK):
            e = min(s + _TIME_CHUNK, nt + 1)
            phi = _potential_stack(cfg, etabar0, np.arange(s, e) * dt)
            for c, dp in enumerate((dx_array(phi, g, 1),
                                    dx_array(phi, g, 2),
                                    dz_array(phi, g, 1))):
                grad_phi[c][s:e] = np.moveaxis(dp, 2, 0)

    for n in range(1, nt + 1):
        t = n * dt
        decay = np.exp(-t)
        w[n], h[n] = parab.step(w[n - 1], h[n - 1], zeros3, zeros3, None,
                                g4_0 * decay)
        rhs = [-w[n] * grad_phi[c][n] for c in range(3)]
        vn, qn, eta[n] = stokes.step([v[c][n - 1] for c in range(3)],
                                     eta[n - 1], rhs,
                                     (g1_0 * decay, g2_0 * decay, zeros2))
        for c in range(3):
            v[c][n] = vn[c]
        q[n] = qn
        eta_t[n] = vn[2][:, :, -1]

    jmin2, jmax2 = iterate_jacobian_bounds(eta, g)
    return IterateQuintuple(index=2, w=w, h=h, v=v, q=q, eta=eta, eta_t=eta_t,
                            jmin=min(jmin, jmin2), jmax=max(jmax, jmax2))


def _assemble_sweep_terms(prev2_w: np.ndarray, prev1: IterateQuintuple,
                          cfg: PicardConfig):
    """Forcing and boundary stacks for one sweep, plus the Jacobian range.

    Everything here depends only on the previous two iterates, so it is
    evaluated vectorized over blocks of time levels; only the implicit
    linear marches remain sequential.  Returned trajectories are indexed by
    time level on axis 0 (level 0 is unused).
    """
    g = cfg.grid
    nt = g.Nt
    shape_v = (nt + 1,) + g.shape
    shape_s = (nt + 1, g.N1, g.N2)
    out = {
        "f4": np.zeros(shape_v), "f5": np.zeros(shape_v),
        "g4": np.zeros(shape_s),
        "f": tuple(np.zeros(shape_v) for _ in range(3)),
        "grad_phi": tuple(np.zeros(shape_v) for _ in range(3)),
        "g_surf": tuple(np.zeros(shape_s) for _ in range(3)),
    }
    # level 0 carries no forcing but its geometry still must stay in the
    # trusted window
    geo0 = geometry_arrays(prev1.eta[0], prev1.eta_t[0], g)
    jmin, jmax = _check_window(geo0["J"])
    for s in range(1, nt + 1, _TIME_CHUNK):
        e = min(s + _TIME_CHUNK, nt + 1)
        eta_c = _time_major(prev1.eta[s:e])
        eta_t_c = _time_major(prev1.eta_t[s:e])
        ws = TermsWorkspace(g, geometry_arrays(eta_c, eta_t_c, g))
        jn, jx = _check_window(ws.J)
        jmin, jmax = min(jmin, jn), max(jmax, jx)

        wp = _time_major(prev1.w[s:e])
        hp = _time_major(prev1.h[s:e])
        vp = [_time_major(prev1.v[c][s:e]) for c in range(3)]
        out["f4"][s:e] = np.moveaxis(
            ws.F4(wp, hp, *vp, w_lag=_time_major(prev2_w[s:e])), 2, 0)
        out["f5"][s:e] = np.moveaxis(ws.F5(hp, *vp), 2, 0)
        out["g4"][s:e] = np.moveaxis(ws.G4(wp, hp), 2, 0)

        qp = _time_major(prev1.q[s:e])
        dq = (dx_array(qp, g, 1), dx_array(qp, g, 2), dz_array(qp, g, 1))
        phi = _potential_stack(cfg, ws.geo["etabar"],
                               np.arange(s, e) * g.dt)
        f123 = (ws._F12(1, wp, *vp, *dq, phi),
                ws._F12(2, wp, *vp, *dq, phi),
                ws.F3(wp, *vp, *dq, phi))
        gphi = (dx_array(phi, g, 1), dx_array(phi, g, 2),
                dz_array(phi, g, 1))
        gs = (ws.G1(*vp), ws.G2(*vp), ws.G3(*vp, eta_c, cfg.sigma))
        for c in range(3):
            out["f"][c][s:e] = np.moveaxis(f123[c], 2, 0)
            out["grad_phi"][c][s:e] = np.moveaxis(gphi[c], 2, 0)
            out["g_surf"][c][s:e] = np.moveaxis(gs[c], 2, 0)
    return out, jmin, jmax


def picard_step(prev2_w: np.ndarray, prev1: IterateQuintuple,
                cfg: PicardConfig) -> IterateQuintuple:
    """Produce iterate prev1.index + 1 from the previous two iterates.

    prev2_w is the w trajectory of the iterate before prev1 (the chemotaxis
    forcing blocks use it lagged one extra step).
    """
    g = cfg.grid
    nt = g.Nt
    dt = g.dt

    w = np.empty((nt + 1,) + g.shape)
    h = np.empty((nt + 1,) + g.shape)
    v = tuple(np.empty((nt + 1,) + g.shape) for _ in range(3))
    q = np.zeros((nt + 1,) + g.shape)
    eta = np.empty((nt + 1, g.N1, g.N2))
    eta_t = np.empty((nt + 1, g.N1, g.N2))

    w[0], h[0] = cfg.w0, cfg.h0
    for c in range(3):
        v[c][0] = cfg.v0[c]
    eta[0] = cfg.eta0
    eta_t[0] = cfg.v0[2][:, :, -1]

    terms, jmin, jmax = _assemble_sweep_terms(prev2_w, prev1, cfg)
    # plain (unrefined) mode solves: the march is a fixed-point inner loop,
    # so per-solve rounding is dominated by the outer difference tolerance
    parab = ParabolicStepper(g, dt, refine=False)
    stokes = StokesStepper(g, dt, cfg.gamma, cfg.sigma, refine=False)

    for n in range(1, nt + 1):
        w[n], h[n] = parab.step(w[n - 1], h[n - 1], prev1.w[n],
                                terms["f4"][n], terms["f5"][n],
                                terms["g4"][n],
                                warm=(prev1.w[n], prev1.h[n]))
        rhs = [terms["f"][c][n] - w[n] * terms["grad_phi"][c][n]
               for c in range(3)]
        g_surf = tuple(terms["g_surf"][c][n] for c in range(3))
        vn, qn, eta[n] = stokes.step([v[c][n - 1] for c in range(3)],
                                     eta[n - 1], rhs, g_surf)
        for c in range(3):
            v[c][n] = vn[c]
        q[n] = qn
        eta_t[n] = vn[2][:, :, -1]

    return IterateQuintuple(index=prev1.index + 1, w=w, h=h, v=v, q=q,
                            eta=eta, eta_t=eta_t, jmin=jmin, jmax=jmax)


def _difference_norm(a: IterateQuintuple, b: IterateQuintuple,
                     grid: SlabGrid) -> float:
    rep = quintuple_norm(a.w - b.w, a.h - b.h,
                         tuple(a.v[c] - b.v[c] for c in range(3)),
                         a.q - b.q, a.eta - b.eta, grid)
    return rep.total


def run(cfg: PicardConfig) -> PicardResult:
    """Iterate to a fixed point; raises on incompatibility, a degenerate
    flattening, or failure to converge within cfg.max_sweeps."""
    g = cfg.grid
    scale = _data_scale(cfg)
    compat = check_compatibility(cfg)
    bad = {k: r for k, r in compat.items() if r > cfg.compat_tol * scale}
    if bad:
        raise CompatibilityError(
            f"incompatible initial data (tolerance {cfg.compat_tol:.1e} "
            f"x scale {scale:.3g}): {bad}")

    data_size = float(np.max(np.abs(cfg.w0)) + np.max(np.abs(cfg.h0))
                      + sum(np.max(np.abs(a)) for a in cfg.v0)
                      + np.max(np.abs(cfg.eta0)))
    if data_size > cfg.smallness_threshold:
        _log.warning("initial data size %.3g exceeds the smallness "
                     "threshold %.3g; contraction is not guaranteed",
                     data_size, cfg.smallness_threshold)

    prev1 = bootstrap_iterates(cfg)
    prev2_w = prev1.w          # the first two iterates coincide
    deltas: list = []
    s_vals: list = []
    ratios: list = []
    rows: list = []

    for sweep in range(1, cfg.max_sweeps + 1):
        new = picard_step(prev2_w, prev1, cfg)
        delta = _difference_norm(new, prev1, g)
        deltas.append(delta)
        if len(deltas) >= 2:
            s_vals.append(deltas[-1] + 0.5 * deltas[-2])
        ratio = (s_vals[-1] / s_vals[-2]
                 if len(s_vals) >= 2 and s_vals[-2] > 0 else np.nan)
        if len(s_vals) >= 2:
            ratios.append(ratio)
        rows.append({"sweep": sweep, "iterate": new.index,
                     "diff_norm": delta, "ratio": ratio,
                     "jacobian_min": new.jmin, "jacobian_max": new.jmax})
        _log.info("sweep %d (iterate %d): diff %.3e ratio %s J in "
                  "[%.4f, %.4f]", sweep, new.index, delta,
                  "-" if np.isnan(ratio) else f"{ratio:.3f}",
                  new.jmin, new.jmax)
        if delta <= cfg.diff_tol:
            return PicardResult(iterate=new, deltas=deltas, ratios=ratios,
                                sweeps=sweep, compatibility=compat,
                                report_rows=rows)
        prev2_w = prev1.w
        prev1 = new

    raise PicardConvergenceError(
        f"no fixed point within {cfg.max_sweeps} sweeps; differences "
        f"{['%.3e' % d for d in deltas]}, ratios "
        f"{['%.3f' % r for r in ratios]}")


@dataclass
class MovingDomainSolution:
    """Physical variables sampled on the slab grid through the flattening."""

    m: np.ndarray              # cell density trajectory
    c: np.ndarray              # oxygen trajectory (positive by construction)
    u: tuple                   # moving-domain velocity trajectories
    p: np.ndarray              # pressure trajectory
    eta: np.ndarray            # surface height trajectory
    m_min: float
    c_min: float


def invert_to_moving_domain(it: IterateQuintuple,
                            cfg: PicardConfig) -> MovingDomainSolution:
    """Undo the change of variables: density is w itself, oxygen is
    c_hat * exp(-h) (strictly positive), velocity is pushed through the
    inverse Jacobian, pressure is unchanged."""
    g = cfg.grid
    c = cfg.c_hat * np.exp(-it.h)
    u = tuple(np.empty_like(t) for t in it.v)
    zero = np.zeros((g.N1, g.N2))
    for n in range(it.w.shape[0]):
        geo = geometry_arrays(it.eta[n], zero, g)
        Ji, A, B = geo["Ji"], geo["alpha"], geo["beta"]
        u[0][n] = Ji * it.v[0][n]
        u[1][n] = Ji * it.v[1][n]
        u[2][n] = Ji * A * it.v[0][n] + Ji * B * it.v[1][n] + it.v[2][n]
    return MovingDomainSolution(
        m=it.w, c=c, u=u, p=it.q, eta=it.eta,
        m_min=float(np.min(it.w)), c_min=float(np.min(c)))
