"""Composite space-time norms and energy diagnostics.

Trajectories are ndarrays with the time level on axis 0 (volume fields
(Nt+1, N1, N2, Nz), surface fields (Nt+1, N1, N2)).  Time derivatives are
first-order backward differences, aligned with the backward-Euler steppers;
sup-in-time pieces take the max over levels, L^2-in-time pieces use the
trapezoid rule over levels 0..Nt (rectangle rule over 1..Nt for the
backward-difference pieces, which live on those levels).

Volume Sobolev norms are evaluated per horizontal mode via Parseval (exact
mean in x, trapezoid in y), which agrees with the pointwise route in
cns.grid.sobolev_norm_array to rounding but batches over time levels.

Two components are only surrogates for true dual norms and are flagged as
such in every breakdown: negative-order Sobolev norms are realized as
horizontal Fourier-multiplier norms (weight (1+|k|^2)^s with s = -1 in the
volume, s = -1/2 on the surface).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cns.grid import (SlabGrid, SurfaceField, VectorField, _mult, dx_array,
                      integrate_surface, integrate_volume)

SURROGATE_COMPONENTS = frozenset({"grad_v_t_trace_dual", "grad_q_t_dual"})

_LEVEL_CHUNK = 64


def _require_trajectory(traj):
    traj = np.asarray(traj, dtype=float)
    if traj.ndim < 1 or traj.shape[0] < 2:
        raise ValueError("trajectory needs at least two time levels")
    return traj


def _backward_differences(traj, dt):
    return (traj[1:] - traj[:-1]) / dt


def _time_sup(level_values):
    return float(np.max(level_values))


def _time_l2_trapezoid(level_values, dt):
    w = np.full(len(level_values), dt)
    w[0] = w[-1] = 0.5 * dt
    return float(np.sqrt(np.sum(w * np.square(level_values))))


def _time_l2_rectangle(level_values, dt):
    return float(np.sqrt(dt * np.sum(np.square(level_values))))


def _horizontal_weights(grid: SlabGrid, m: int):
    """W_c(k) = sum_{a+b<=m-c} |ik1|^{2a} |ik2|^{2b} for c = 0..m."""
    m1 = {a: np.abs(_mult(grid, 1, a)) ** 2 for a in range(m + 1)}
    m2 = {b: np.abs(_mult(grid, 2, b)) ** 2 for b in range(m + 1)}
    weights = []
    for c in range(m + 1):
        w = np.zeros((grid.N1, grid.N2))
        for a in range(m - c + 1):
            for b in range(m - c - a + 1):
                w += m1[a][:, None] * m2[b][None, :]
        weights.append(w)
    return weights


def sobolev_levels_multi(traj, grid: SlabGrid, orders) -> dict:
    """Per-time-level H^m(Omega) norms for several m in one spectral pass."""
    traj = np.asarray(traj, dtype=float)
    orders = tuple(orders)
    m_max = max(orders)
    weights = {m: [_half_weight(w, grid) for w in _horizontal_weights(grid, m)]
               for m in orders}
    Dc = {1: grid.D1, 2: grid.D2, 3: grid.D3, 4: grid.D4}
    L = traj.shape[0]
    out = {m: np.zeros(L) for m in orders}
    for start in range(0, L, _LEVEL_CHUNK):
        sl = slice(start, start + _LEVEL_CHUNK)
        fhat = np.fft.rfft2(traj[sl], axes=(1, 2))
        for c in range(m_max + 1):
            d = fhat if c == 0 else fhat @ Dc[c].T
            mode_energy = (d.real ** 2 + d.imag ** 2) @ grid.wz
            for m in orders:
                if c <= m:
                    out[m][sl] += np.tensordot(
                        mode_energy, weights[m][c], axes=([1, 2], [0, 1]))
    scale = grid.cell_area / (grid.N1 * grid.N2)
    return {m: np.sqrt(np.maximum(v * scale, 0.0)) for m, v in out.items()}


def sobolev_levels(traj, grid: SlabGrid, m: int) -> np.ndarray:
    """Per-time-level H^m(Omega) norms of a trajectory (batched, spectral)."""
    return sobolev_levels_multi(traj, grid, (m,))[m]


def _half_weight(w, grid: SlabGrid):
    """Restrict a full (N1, N2) mode weight to the rfft half-spectrum,
    doubling the columns whose conjugates were dropped."""
    nc = grid.N2 // 2 + 1
    dup = np.ones(nc)
    dup[1:-1] = 2.0
    return w[:, :nc] * dup[None, :]


def _mode_energies(fhat, grid: SlabGrid, c_max: int):
    """[(|D_y^c fhat|^2 integrated in y) for c = 0..c_max], per level/mode."""
    Dc = {1: grid.D1, 2: grid.D2, 3: grid.D3, 4: grid.D4}
    out = []
    for c in range(c_max + 1):
        d = fhat if c == 0 else fhat @ Dc[c].T
        out.append((d.real ** 2 + d.imag ** 2) @ grid.wz)
    return out


def _combine(energies, weights, grid: SlabGrid):
    """Per-level norms from half-spectrum energies and weight stacks."""
    total = 0.0
    for c, w in enumerate(weights):
        total = total + np.tensordot(energies[c], _half_weight(w, grid),
                                     axes=([1, 2], [0, 1]))
    scale = grid.cell_area / (grid.N1 * grid.N2)
    return np.sqrt(np.maximum(np.atleast_1d(total) * scale, 0.0))


def _triple_pieces(traj, grid: SlabGrid, dt: float):
    """(H2, H3, L2 of f_t, H1 of f_t) per-level arrays in one spectral pass."""
    fhat = np.fft.rfft2(np.asarray(traj, dtype=float), axes=(1, 2))
    ef = _mode_energies(fhat, grid, 3)
    et = _mode_energies((fhat[1:] - fhat[:-1]) / dt, grid, 1)
    w2 = _horizontal_weights(grid, 2)
    w3 = _horizontal_weights(grid, 3)
    w1 = _horizontal_weights(grid, 1)
    w0 = _horizontal_weights(grid, 0)
    return (_combine(ef, w2, grid), _combine(ef, w3, grid),
            _combine(et, w0, grid), _combine(et, w1, grid))


def _gradient_pieces(traj, grid: SlabGrid, dt: float):
    """Per-level (L2, H1) of grad f and the s=-1 surrogate of grad f_t.

    Horizontal derivative components are multipliers per mode, so everything
    comes from one FFT of f: |d1 f| and |d2 f| energies are |ik|^2 times the
    f energies, |d3 f| energies come from fhat @ D1.
    """
    fhat = np.fft.rfft2(np.asarray(traj, dtype=float), axes=(1, 2))
    ghat = fhat @ grid.D1.T
    hsq = (np.abs(_mult(grid, 1, 1)) ** 2)[:, None] \
        + (np.abs(_mult(grid, 2, 1)) ** 2)[None, :]
    ef = _mode_energies(fhat, grid, 1)
    eg = _mode_energies(ghat, grid, 1)
    w0 = _horizontal_weights(grid, 0)
    w1 = _horizontal_weights(grid, 1)
    scale = grid.cell_area / (grid.N1 * grid.N2)

    def norm(weights):
        total = 0.0
        for c, wgt in enumerate(weights):
            total = total + np.tensordot(ef[c], _half_weight(wgt * hsq, grid),
                                         axes=([1, 2], [0, 1]))
            total = total + np.tensordot(eg[c], _half_weight(wgt, grid),
                                         axes=([1, 2], [0, 1]))
        return np.sqrt(np.maximum(np.atleast_1d(total) * scale, 0.0))

    l2 = norm(w0)
    h1 = norm(w1)
    fhat_t = (fhat[1:] - fhat[:-1]) / dt
    ghat_t = (ghat[1:] - ghat[:-1]) / dt
    wneg = (1.0 + grid.ksq) ** (-1.0)
    et0 = (fhat_t.real ** 2 + fhat_t.imag ** 2) @ grid.wz
    eg0 = (ghat_t.real ** 2 + ghat_t.imag ** 2) @ grid.wz
    dual = np.sqrt(np.maximum(
        (np.tensordot(et0, _half_weight(wneg * hsq, grid),
                      axes=([1, 2], [0, 1]))
         + np.tensordot(eg0, _half_weight(wneg, grid),
                        axes=([1, 2], [0, 1]))) * scale, 0.0))
    return l2, h1, dual


def _rss_levels(level_arrays):
    return np.sqrt(sum(np.square(a) for a in level_arrays))


def _dx_traj(traj, grid: SlabGrid, axis: int):
    m = _mult(grid, axis, 1)
    shape = [1] * traj.ndim
    shape[axis] = len(m)
    fhat = np.fft.fft(traj, axis=axis)
    return np.fft.ifft(fhat * m.reshape(shape), axis=axis).real


def _grad_traj(traj, grid: SlabGrid):
    return (_dx_traj(traj, grid, 1), _dx_traj(traj, grid, 2),
            traj @ grid.D1.T)


def neg_sobolev_volume_array(vals, grid: SlabGrid, s: float = -1.0) -> float:
    """Horizontal Fourier-multiplier volume norm with weight (1+|k|^2)^s.

    For s = 0 this coincides with the L^2 norm; negative s is the dual-norm
    surrogate (smoothing acts horizontally only).
    """
    fhat = np.fft.fft2(vals, axes=(0, 1))
    per_mode = (fhat.real ** 2 + fhat.imag ** 2) @ grid.wz
    weight = (1.0 + grid.ksq) ** s
    total = np.sum(weight * per_mode) * grid.cell_area / (grid.N1 * grid.N2)
    return float(np.sqrt(max(total, 0.0)))


def surface_fractional_levels(traj, grid: SlabGrid, s: float) -> np.ndarray:
    """Per-level H^s(Gamma) multiplier norms of a surface trajectory."""
    traj = np.asarray(traj, dtype=float)
    fhat = np.fft.rfft2(traj, axes=(1, 2)) / (grid.N1 * grid.N2)
    weight = _half_weight((1.0 + grid.ksq) ** s, grid)
    per = np.sum(weight * (fhat.real ** 2 + fhat.imag ** 2), axis=(1, 2))
    return np.sqrt(per * grid.L1 * grid.L2)


_HESS_CACHE: dict = {}


def _hess_extension_multiplier(grid: SlabGrid) -> np.ndarray:
    """Psi(k) with sum_ij ||d_i d_j H(eta)||^2_{H^2} = sum_k |eta_k|^2 Psi(k).

    The extension is per-mode eta_k times an analytic vertical profile, so
    every second derivative is a horizontal multiplier times a profile
    (vertical derivatives of the profile use the same grid stencils as the
    pointwise route).
    """
    key = (grid.N1, grid.N2, grid.Nz, grid.L1, grid.L2, grid.b)
    if key in _HESS_CACHE:
        return _HESS_CACHE[key]
    from cns.harmonic import _profiles
    cosh_r, dcosh_r = _profiles(grid)
    a1 = np.abs(_mult(grid, 1, 1))[:, None, None]
    a2 = np.abs(_mult(grid, 2, 1))[None, :, None]
    cosh_d = cosh_r @ grid.D1.T
    dcosh_d = dcosh_r @ grid.D1.T
    components = (a1 * a1 * cosh_r, a1 * a2 * cosh_r, a1 * cosh_d,
                  a2 * a1 * cosh_r, a2 * a2 * cosh_r, a2 * cosh_d,
                  a1 * dcosh_r, a2 * dcosh_r, dcosh_d)
    weights = _horizontal_weights(grid, 2)
    Dc = {1: grid.D1, 2: grid.D2}
    psi = np.zeros((grid.N1, grid.N2))
    for p in components:
        for c in range(3):
            d = p if c == 0 else p @ Dc[c].T
            psi += weights[c] * ((d * d) @ grid.wz)
    _HESS_CACHE[key] = psi
    return psi


def _hess_extension_levels(eta_traj, grid: SlabGrid) -> np.ndarray:
    psi = _half_weight(_hess_extension_multiplier(grid), grid)
    fhat = np.fft.rfft2(np.asarray(eta_traj, dtype=float), axes=(1, 2))
    per = np.sum(psi * (fhat.real ** 2 + fhat.imag ** 2), axis=(1, 2))
    return np.sqrt(per * grid.cell_area / (grid.N1 * grid.N2))


def triple_norm(traj, grid: SlabGrid, dt: float | None = None) -> float:
    """sup_t H^2 + sup_t L^2 of f_t + L^2_t H^3 + L^2_t H^1 of f_t."""
    traj = _require_trajectory(traj)
    dt = grid.dt if dt is None else dt
    h2, h3, l2t, h1t = _triple_pieces(traj, grid, dt)
    return (_time_sup(h2) + _time_sup(l2t)
            + _time_l2_trapezoid(h3, dt) + _time_l2_rectangle(h1t, dt))


def triple_norm_vector(trajs, grid: SlabGrid, dt: float | None = None) -> float:
    """Triple norm of a vector trajectory (componentwise root-sum-square)."""
    trajs = [_require_trajectory(t) for t in trajs]
    dt = grid.dt if dt is None else dt
    pieces = [_triple_pieces(t, grid, dt) for t in trajs]
    h2 = _rss_levels([p[0] for p in pieces])
    h3 = _rss_levels([p[1] for p in pieces])
    l2t = _rss_levels([p[2] for p in pieces])
    h1t = _rss_levels([p[3] for p in pieces])
    return (_time_sup(h2) + _time_sup(l2t)
            + _time_l2_trapezoid(h3, dt) + _time_l2_rectangle(h1t, dt))


@dataclass
class EnergyReport:
    """Breakdown of the composite solution norm plus energy diagnostics."""

    breakdown: dict
    total: float
    surrogates: frozenset = SURROGATE_COMPONENTS
    stokes_energy_trace: list = field(default_factory=list)

    def rows(self):
        """(name, value, is_surrogate) rows for CSV emission."""
        return [(k, v, k in self.surrogates)
                for k, v in sorted(self.breakdown.items())]


def quintuple_norm(w, h, v, q, eta, grid: SlabGrid,
                   dt: float | None = None) -> EnergyReport:
    """Composite norm of the solution bundle {w, h, v, q, eta}.

    v is a tuple of three volume trajectories; eta a surface trajectory.
    The total is the sum of the breakdown entries; entries listed in
    SURROGATE_COMPONENTS use multiplier surrogates for dual norms.
    """
    w = _require_trajectory(w)
    h = _require_trajectory(h)
    v = [_require_trajectory(t) for t in v]
    q = _require_trajectory(q)
    eta = _require_trajectory(eta)
    dt = grid.dt if dt is None else dt
    bd = {}
    bd["triple_w"] = triple_norm(w, grid, dt)
    bd["triple_h"] = triple_norm(h, grid, dt)
    bd["triple_v"] = triple_norm_vector(v, grid, dt)

    # surface trace of grad(v_t) in the H^{-1/2}(Gamma) surrogate:
    # horizontal derivatives commute with the trace, the vertical one is the
    # top derivative row applied to the last stencil points.
    trace_sq = None
    for t in v:
        vt = _backward_differences(t, dt)
        comps = (_dx_traj(vt[:, :, :, -1], grid, 1),
                 _dx_traj(vt[:, :, :, -1], grid, 2),
                 vt @ grid.D1[-1, :])
        for c in comps:
            lv = surface_fractional_levels(c, grid, -0.5)
            trace_sq = lv ** 2 if trace_sq is None else trace_sq + lv ** 2
    bd["grad_v_t_trace_dual"] = _time_l2_rectangle(np.sqrt(trace_sq), dt)

    gq_l2, gq_h1, gqt_dual = _gradient_pieces(q, grid, dt)
    bd["grad_q_sup_L2"] = _time_sup(gq_l2)
    bd["grad_q_L2t_H1"] = _time_l2_trapezoid(gq_h1, dt)
    bd["grad_q_t_dual"] = _time_l2_rectangle(gqt_dual, dt)

    bd["eta_sup_H3"] = _time_sup(surface_fractional_levels(eta, grid, 3.0))
    bd["grad0_eta_L2t_H5half"] = _time_l2_trapezoid(
        _rss_levels([surface_fractional_levels(
            _dx_traj(eta, grid, 1), grid, 2.5),
            surface_fractional_levels(_dx_traj(eta, grid, 2), grid, 2.5)]),
        dt)

    bd["hess_extension_L2t_H2"] = _time_l2_trapezoid(
        _hess_extension_levels(eta, grid), dt)

    return EnergyReport(breakdown=bd, total=float(sum(bd.values())))


def stokes_energy(v: VectorField, eta: SurfaceField,
                  gamma: float, sigma: float) -> float:
    """||v||^2_{L2} + gamma ||eta||^2_{L2(Gamma)} + sigma ||grad0 eta||^2."""
    grid = v.grid
    vv = sum(integrate_volume(a * a, grid) for a in v.arrays())
    ee = integrate_surface(eta.values ** 2, grid)
    g1 = dx_array(eta.values, grid, 1)
    g2 = dx_array(eta.values, grid, 2)
    gg = integrate_surface(g1 * g1 + g2 * g2, grid)
    return float(vv + gamma * ee + sigma * gg)


DEFAULT_CALIBRATION = 50.0


def theorem_estimate_check(traj: dict, data_norm: float,
                           calibration: float = DEFAULT_CALIBRATION):
    """Discrete sup-plus-integral estimate shape against the data norm.

    traj: dict with keys "w", "h", "v" (3-tuple), "q", "eta", "grid" and
    optionally "dt".  Returns (lhs, rhs, passed) where
    lhs = sup_t (H2 sums + |grad q|_{L2} + |eta|_{H3})^2
        + int_t (H3 sums + |grad q|_{H1} + |grad0 eta|_{H5/2})^2 dt
    and rhs = calibration * data_norm^2.
    """
    grid: SlabGrid = traj["grid"]
    dt = traj.get("dt", grid.dt)
    w = _require_trajectory(traj["w"])
    h = _require_trajectory(traj["h"])
    v = [_require_trajectory(t) for t in traj["v"]]
    q = _require_trajectory(traj["q"])
    eta = _require_trajectory(traj["eta"])
    sw = sobolev_levels_multi(w, grid, (2, 3))
    sh = sobolev_levels_multi(h, grid, (2, 3))
    sv = [sobolev_levels_multi(t, grid, (2, 3)) for t in v]
    gq_l2, gq_h1, _ = _gradient_pieces(q, grid, dt)
    sup_levels = (sw[2] + sh[2] + _rss_levels([s[2] for s in sv]) + gq_l2
                  + surface_fractional_levels(eta, grid, 3.0))
    int_levels = (sw[3] + sh[3] + _rss_levels([s[3] for s in sv]) + gq_h1
                  + _rss_levels([surface_fractional_levels(
                      _dx_traj(eta, grid, 1), grid, 2.5),
                      surface_fractional_levels(
                          _dx_traj(eta, grid, 2), grid, 2.5)]))
    lhs = _time_sup(sup_levels) ** 2 + _time_l2_trapezoid(int_levels, dt) ** 2
    rhs = calibration * data_norm ** 2
    return float(lhs), float(rhs), bool(lhs <= rhs)
