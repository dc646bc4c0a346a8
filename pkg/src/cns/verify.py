"""Independent verification harness.

Two independent routes to the same quantities:

* chain-rule oracle — manufactured smooth fields are prescribed on the moving
  domain, composed symbolically with the flattening map (whose harmonic
  extension has a closed cosh form for band-limited surface heights), and the
  flattened right-hand sides / boundary corrections are derived by exact
  symbolic differentiation.  The grid evaluators in cns.terms must agree with
  these exact values to second order in the vertical spacing, and exactly (to
  rounding) when the surface is flat.

* method of manufactured solutions — forcings computed symbolically so that a
  chosen closed-form solution satisfies each discrete solver's equations;
  observed convergence orders are fitted from refinement studies.

* compatible-data generator — random band-limited fields projected onto the
  initial-data constraint set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from cns.grid import (ScalarField, SlabGrid, SurfaceField, VectorField,
                      dx_array, dz_array, integrate_surface, l2_volume)
from cns.solvers import (ParabolicStepper, SolverConvergenceError,
                         StokesStepper, solve_stationary_stokes)
from cns.terms import (eval_F123, eval_F4, eval_F5, eval_G1, eval_G2, eval_G3,
                       eval_G4, workspace_from_eta)
from cns.transform import geometry_coeffs

_X1, _X2, _Y, _T = sp.symbols("px1 px2 pY pt", real=True)   # moving domain
_x1, _x2, _y, _t = sp.symbols("x1 x2 y t", real=True)       # slab


@dataclass
class ManufacturedCase:
    """Analytic fields on the moving domain plus the surface height.

    eta_modes: list of (amp, n1, n2, use_sin) single-harmonic surface modes,
    each with time factor exp(-t); the harmonic extension of each mode has a
    closed cosh form, so the full flattening geometry is symbolically exact.
    Physical fields are sympy expressions in (px1, px2, pY, pt); the velocity
    is built from two stream potentials and is divergence-free by
    construction.
    """

    name: str
    b: float
    L1: float
    L2: float
    sigma: float
    eta_modes: list
    m_expr: sp.Expr
    c_expr: sp.Expr        # log-oxygen variable on the moving domain
    psi_expr: sp.Expr      # u = (dY psi, 0, -dX1 psi) + (0, dY chi, -dX2 chi)
    chi_expr: sp.Expr
    p_expr: sp.Expr
    phi_expr: sp.Expr
    _built: dict = field(default_factory=dict, repr=False)

    # -- symbolic assembly --------------------------------------------------

    def _eta(self):
        k1 = 2 * sp.pi / sp.nsimplify(self.L1)
        k2 = 2 * sp.pi / sp.nsimplify(self.L2)
        eta = sp.Integer(0)
        etabar = sp.Integer(0)
        for amp, n1, n2, use_sin in self.eta_modes:
            phase = n1 * k1 * _x1 + n2 * k2 * _x2
            osc = sp.sin(phase) if use_sin else sp.cos(phase)
            kmag = sp.sqrt((n1 * k1) ** 2 + (n2 * k2) ** 2)
            amp = sp.nsimplify(amp)
            eta += amp * osc * sp.exp(-_t)
            if kmag == 0:
                prof = sp.Integer(1)
            else:
                prof = sp.cosh(kmag * (_y + self.b)) / sp.cosh(kmag * self.b)
            etabar += amp * osc * prof * sp.exp(-_t)
        return eta, etabar

    def build(self):
        """Symbolic geometry, flattened fields, and exact oracle expressions."""
        if self._built:
            return self._built
        b = sp.nsimplify(self.b)
        eta, etabar = self._eta()
        lift = 1 + _y / b
        alpha = lift * sp.diff(etabar, _x1)
        beta = lift * sp.diff(etabar, _x2)
        J = 1 + etabar / b + sp.diff(etabar, _y) * lift
        theta3 = etabar + _y * (1 + etabar / b)

        u1 = sp.diff(self.psi_expr, _Y)
        u2 = sp.diff(self.chi_expr, _Y)
        u3 = -sp.diff(self.psi_expr, _X1) - sp.diff(self.chi_expr, _X2)
        phys = {"m": self.m_expr, "c": self.c_expr, "p": self.p_expr,
                "phi": self.phi_expr, "u1": u1, "u2": u2, "u3": u3}

        def comp(expr):
            return expr.subs({_X1: _x1, _X2: _x2, _Y: theta3, _T: _t},
                             simultaneous=True)

        w = comp(phys["m"])
        h = comp(phys["c"])
        q = comp(phys["p"])
        phi = comp(phys["phi"])
        U1, U2, U3 = comp(u1), comp(u2), comp(u3)
        v1 = J * U1
        v2 = J * U2
        v3 = U3 - alpha * U1 - beta * U2

        def lap_flat(f):
            return sp.diff(f, _x1, 2) + sp.diff(f, _x2, 2) + sp.diff(f, _y, 2)

        def grad_p(expr, i):
            return sp.diff(expr, (_X1, _X2, _Y)[i - 1])

        # Physical-equation residuals (nonzero for arbitrary fields).
        adv = lambda f: u1 * grad_p(f, 1) + u2 * grad_p(f, 2) + u3 * grad_p(f, 3)
        lap_p = lambda f: sum(sp.diff(f, s, 2) for s in (_X1, _X2, _Y))
        M, C, P, PHI = phys["m"], phys["c"], phys["p"], phys["phi"]
        R4 = (sp.diff(M, _T) + adv(M) - lap_p(M)
              - sum(sp.diff(M * grad_p(C, i), (_X1, _X2, _Y)[i - 1])
                    for i in (1, 2, 3)))
        R5 = (sp.diff(C, _T) + adv(C)
              + sum(grad_p(C, i) ** 2 for i in (1, 2, 3)) - M - lap_p(C))
        Rm = [sp.diff(ui, _T) + adv(ui) + grad_p(P, i) + M * grad_p(PHI, i)
              - lap_p(ui)
              for i, ui in ((1, u1), (2, u2), (3, u3))]

        div_flat = (sp.diff(w * sp.diff(h, _x1), _x1)
                    + sp.diff(w * sp.diff(h, _x2), _x2)
                    + sp.diff(w * sp.diff(h, _y), _y))
        F4_or = sp.diff(w, _t) - lap_flat(w) - div_flat - comp(R4)
        F5_or = sp.diff(h, _t) - lap_flat(h) - w - comp(R5)
        cRm = [comp(r) for r in Rm]
        JxiR = [J * cRm[0], J * cRm[1],
                -alpha * cRm[0] - beta * cRm[1] + cRm[2]]
        F_or = [sp.diff(v, _t) - lap_flat(v) + sp.diff(q, s)
                + w * sp.diff(phi, s) - jr
                for v, s, jr in ((v1, _x1, JxiR[0]), (v2, _x2, JxiR[1]),
                                 (v3, _y, JxiR[2]))]

        # Surface stress / flux balances, traced at y = 0.
        A = {}
        for i, ui in ((1, u1), (2, u2), (3, u3)):
            for j, uj in ((1, u1), (2, u2), (3, u3)):
                A[(i, j)] = comp(grad_p(uj, i) + grad_p(ui, j))
        e1, e2 = sp.diff(eta, _x1), sp.diff(eta, _x2)
        nvec = (-e1, -e2, 1)
        T1 = (1, 0, e1)
        T2 = (0, 1, e2)

        def contract(left, right):
            return sum(left[i] * A[(i + 1, j + 1)] * right[j]
                       for i in range(3) for j in range(3))

        trace = lambda f: f.subs(_y, 0)
        G1_or = trace(sp.diff(v1, _y) + sp.diff(v3, _x1) - contract(T1, nvec))
        G2_or = trace(sp.diff(v2, _y) + sp.diff(v3, _x2) - contract(T2, nvec))
        root = sp.sqrt(1 + e1**2 + e2**2)
        curv = (sp.diff(e1 / root, _x1) + sp.diff(e2 / root, _x2)
                - sp.diff(eta, _x1, 2) - sp.diff(eta, _x2, 2))
        G3_or = (trace(2 * sp.diff(v3, _y)
                       - contract(nvec, nvec) / (1 + e1**2 + e2**2))
                 + sp.nsimplify(self.sigma) * curv)
        flux = sum(comp(grad_p(M, i) + M * grad_p(C, i)) * nvec[i - 1]
                   for i in (1, 2, 3))
        G4_or = trace(sp.diff(w, _y) + w * sp.diff(h, _y)
                      - J / (1 + alpha**2 + beta**2) * flux)

        vol = (_x1, _x2, _y, _t)
        surf = (_x1, _x2, _t)
        lam = lambda expr, syms: sp.lambdify(syms, expr, modules="numpy",
                                             cse=True)
        self._built = {
            "eta": lam(eta, surf), "eta_t": lam(sp.diff(eta, _t), surf),
            "w": lam(w, vol), "h": lam(h, vol), "q": lam(q, vol),
            "phi": lam(phi, vol),
            "v1": lam(v1, vol), "v2": lam(v2, vol), "v3": lam(v3, vol),
            "F4": lam(F4_or, vol), "F5": lam(F5_or, vol),
            "F1": lam(F_or[0], vol), "F2": lam(F_or[1], vol),
            "F3": lam(F_or[2], vol),
            "G1": lam(G1_or, surf), "G2": lam(G2_or, surf),
            "G3": lam(G3_or, surf), "G4": lam(G4_or, surf),
        }
        return self._built

    # -- numeric sampling ---------------------------------------------------

    def sample(self, key: str, grid: SlabGrid, t: float) -> np.ndarray:
        fns = self.build()
        if key in ("eta", "eta_t", "G1", "G2", "G3", "G4"):
            out = fns[key](grid.x1[:, None], grid.x2[None, :], t)
            shape = (grid.N1, grid.N2)
        else:
            out = fns[key](grid.x1[:, None, None], grid.x2[None, :, None],
                           grid.y[None, None, :], t)
            shape = grid.shape
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()


def _poly(*coeffs):
    """Helper: c0 + c1*(Y+1) + c2*(Y+1)^2 ... in the moving vertical."""
    s = sp.Integer(0)
    for k, c in enumerate(coeffs):
        s += sp.nsimplify(c) * (_Y + 1) ** k
    return s


_CASES = {}


def manufactured_case(name: str) -> ManufacturedCase:
    """Predefined smooth cases: 'generic' (wavy surface), 'flat' (eta = 0),
    and 'generic-swapped' (axes 1 and 2 interchanged)."""
    if name in _CASES:
        return _CASES[name]
    decay = sp.exp(-_T)
    if name in ("generic", "generic-swapped"):
        swapped = name == "generic-swapped"
        # Mirror map (x1,x2) -> (x2,x1): scalars compose with the swap; the
        # horizontal velocity components exchange, i.e. the stream potentials
        # psi and chi trade places.
        X1, X2 = (_X2, _X1) if swapped else (_X1, _X2)
        modes = ([(0.05, 0, 1, False), (0.04, 1, 0, True)] if swapped
                 else [(0.05, 1, 0, False), (0.04, 0, 1, True)])
        psi = (sp.nsimplify(0.3) * decay * sp.sin(X1) * _poly(0, 0, 1)
               * (1 + sp.nsimplify(0.2) * sp.cos(X2)))
        chi = (sp.nsimplify(0.2) * decay * sp.cos(X2) * _poly(0, 0, 1)
               * (1 + sp.nsimplify(0.3) * sp.sin(X1)))
        case = ManufacturedCase(
            name=name, b=1.0, L1=2 * np.pi, L2=2 * np.pi, sigma=1.0,
            eta_modes=modes,
            m_expr=(sp.nsimplify(0.7) + sp.nsimplify(0.2) * sp.sin(X1) * _poly(0, 1)
                    + sp.nsimplify(0.15) * sp.cos(X2) * _poly(0, 0, 1) * decay
                    + sp.nsimplify(0.1) * sp.sin(X1 + X2) * _Y**2),
            c_expr=(sp.nsimplify(0.3) + sp.nsimplify(0.2) * sp.cos(X1) * _poly(0, 1) * decay
                    + sp.nsimplify(0.1) * sp.sin(X2) * _Y**2
                    + sp.nsimplify(0.05) * sp.cos(X1 - X2) * _poly(0, 0, 1)),
            psi_expr=chi if swapped else psi,
            chi_expr=psi if swapped else chi,
            p_expr=(sp.nsimplify(0.4) * decay * sp.cos(X1) * sp.sin(X2) * _poly(0, 1)
                    + sp.nsimplify(0.1) * _Y**2),
            phi_expr=(sp.nsimplify(0.5) * _Y
                      + sp.nsimplify(0.2) * sp.sin(X1) * sp.cos(X2) * _poly(0, 1)),
        )
    elif name == "flat":
        case = ManufacturedCase(
            name=name, b=1.0, L1=2 * np.pi, L2=2 * np.pi, sigma=1.0,
            eta_modes=[],
            m_expr=(sp.nsimplify(0.5) + sp.nsimplify(0.2) * sp.sin(_X1) * sp.cos(_X2) * _poly(0, 1)
                    + sp.nsimplify(0.1) * sp.cos(_X1) * _Y**2 * decay),
            c_expr=(sp.nsimplify(0.3) + sp.nsimplify(0.15) * sp.cos(_X2) * _poly(0, 0, 1)
                    + sp.nsimplify(0.1) * sp.sin(_X1) * _poly(0, 1) * decay),
            psi_expr=sp.nsimplify(0.25) * decay * sp.sin(_X1) * _poly(0, 0, 1),
            chi_expr=sp.nsimplify(0.2) * sp.cos(_X2) * _poly(0, 0, 1),
            p_expr=sp.nsimplify(0.3) * sp.cos(_X1) * _poly(0, 1) * decay,
            phi_expr=sp.nsimplify(0.4) * _Y + sp.nsimplify(0.2) * sp.sin(_X2) * _poly(0, 1),
        )
    else:
        raise ValueError(f"unknown manufactured case: {name}")
    _CASES[name] = case
    return case


@dataclass
class ResidualReport:
    """Per-term discrepancy between the grid evaluators and the exact oracle."""

    case: str
    grid: SlabGrid
    t: float
    residuals: dict      # term -> ndarray (evaluator - oracle)
    max_abs: dict        # term -> float
    l2: dict             # term -> float (discrete L2 of the residual)
    scales: dict         # term -> float (max |oracle| + 1)


TERM_NAMES = ("F4", "F5", "F1", "F2", "F3", "G1", "G2", "G3", "G4")


def chain_rule_oracle(case: ManufacturedCase, grid: SlabGrid,
                      t: float) -> ResidualReport:
    """Evaluate all nine flattened correction terms two independent ways."""
    eta = SurfaceField(grid, case.sample("eta", grid, t))
    eta_t = SurfaceField(grid, case.sample("eta_t", grid, t))
    g = geometry_coeffs(eta, eta_t, grid)
    w = ScalarField(grid, case.sample("w", grid, t))
    h = ScalarField(grid, case.sample("h", grid, t))
    v = VectorField.from_arrays(grid, case.sample("v1", grid, t),
                                case.sample("v2", grid, t),
                                case.sample("v3", grid, t))
    qv = case.sample("q", grid, t)
    grad_q = VectorField.from_arrays(grid, dx_array(qv, grid, 1),
                                     dx_array(qv, grid, 2),
                                     dz_array(qv, grid, 1))
    phi = ScalarField(grid, case.sample("phi", grid, t))

    evaluated = {
        "F4": eval_F4(w, w, h, v, g).values,
        "F5": eval_F5(h, v, g).values,
        "G1": eval_G1(v, eta, g).values,
        "G2": eval_G2(v, eta, g).values,
        "G3": eval_G3(v, eta, g, sigma=case.sigma).values,
        "G4": eval_G4(w, h, eta, g).values,
    }
    Fv = eval_F123(w, v, grad_q, phi, g)
    evaluated["F1"], evaluated["F2"], evaluated["F3"] = Fv.arrays()

    residuals, max_abs, l2, scales = {}, {}, {}, {}
    for term in TERM_NAMES:
        oracle = case.sample(term, grid, t)
        res = evaluated[term] - oracle
        residuals[term] = res
        max_abs[term] = float(np.max(np.abs(res)))
        if res.ndim == 3:
            l2[term] = l2_volume(res, grid)
        else:
            l2[term] = float(np.sqrt(max(integrate_surface(res * res, grid),
                                         0.0)))
        scales[term] = float(np.max(np.abs(oracle)) + 1.0)
    return ResidualReport(case=case.name, grid=grid, t=t, residuals=residuals,
                          max_abs=max_abs, l2=l2, scales=scales)


def oracle_convergence(case: ManufacturedCase, nz_list=(17, 33, 65),
                       n_horizontal: int = 16, t: float = 0.3) -> dict:
    """Observed order (least-squares log-log fit) of each term's discrepancy
    under vertical refinement.

    The fit uses the discrete L2 residual norm: in max norm the one-sided
    wall stencils contribute a 4x larger (still second-order) error constant
    on the top row, which drags the coarse-grid end of the fit.  Terms whose
    residual sits at the rounding floor on every grid (the two routes are
    algebraically identical, e.g. the scalar flux balance) are reported as
    converged with infinite order.
    """
    errs = {term: [] for term in TERM_NAMES}
    dzs = []
    for nz in nz_list:
        grid = SlabGrid(N1=n_horizontal, N2=n_horizontal, Nz=nz,
                        L1=case.L1, L2=case.L2, b=case.b)
        rep = chain_rule_oracle(case, grid, t)
        dzs.append(grid.dz)
        for term in TERM_NAMES:
            errs[term].append(rep.l2[term])
    logdz = np.log(np.asarray(dzs))
    orders = {}
    for term in TERM_NAMES:
        e = np.asarray(errs[term])
        if np.max(e) <= 1e-12:
            orders[term] = float("inf")
        else:
            orders[term] = float(np.polyfit(logdz, np.log(e), 1)[0])
    return {"orders": orders, "errors": errs, "dz": dzs}


# ---------------------------------------------------------------------------
# Method of manufactured solutions for the linear sub-solvers.
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceTable:
    """Refinement-study record with a least-squares fitted order."""

    solver_id: str
    kind: str                # "spatial" or "temporal"
    parameter: str           # "dz" or "dt"
    values: list             # refinement parameter per run
    errors: list             # discrete L2 solution error per run
    order: float

    def rows(self):
        return [{"solver": self.solver_id, "kind": self.kind,
                 self.parameter: p, "error": e, "order": self.order}
                for p, e in zip(self.values, self.errors)]


def _fit_order(params, errors):
    e = np.asarray(errors, dtype=float)
    if np.max(e) <= 1e-13:
        return float("inf")
    return float(np.polyfit(np.log(np.asarray(params, dtype=float)),
                            np.log(np.maximum(e, 1e-300)), 1)[0])


class _SlabMMS:
    """Manufactured slab-side solution for one linear sub-solver.

    Separable in time; the spatial studies use a linear-in-time factor so the
    backward-Euler derivative is exact and the fit isolates the spatial
    order, the temporal studies use exp(-t) spatial shapes reproduced exactly
    by the grid stencils so the fit isolates the temporal order.
    """

    def __init__(self, solver_id: str, kind: str, b: float = 1.0):
        if solver_id not in ("parabolic", "stokes", "stationary"):
            raise ValueError(f"unknown solver id: {solver_id}")
        if kind not in ("spatial", "temporal"):
            raise ValueError(f"unknown study kind: {kind}")
        if solver_id == "stationary" and kind == "temporal":
            raise ValueError("the stationary solver has no time "
                             "discretization; only kind='spatial' applies")
        self.solver_id = solver_id
        self.kind = kind
        self.b = b
        bs = sp.nsimplify(b)
        if kind == "temporal":
            tau = sp.exp(-_t)
        elif solver_id == "stationary":
            tau = sp.Integer(1)
        else:
            tau = 1 - _t / 2    # backward Euler is exact on linear-in-time
        if kind == "temporal":
            # grid-stencil-exact spatial shapes (low-degree vertical
            # polynomials, single horizontal harmonics)
            w = sp.nsimplify(0.5) * sp.sin(_x1) * (_y + bs) / bs * tau
            h = (sp.nsimplify(0.4) * sp.sin(_x1)
                 * ((_y + bs) ** 2 - bs**2) / bs**2 * tau)
            psi = sp.sin(_x1) * (_y + bs) ** 2 * tau
            chi = sp.Integer(0)
            q = sp.Integer(0)
        else:
            w = (sp.nsimplify(0.5) * sp.sin(_x1)
                 * sp.sin(sp.pi * (_y + bs) / (2 * bs)) * tau)
            h = (sp.nsimplify(0.4) * sp.cos(_x2)
                 * sp.cos(sp.pi * (_y + bs) / (2 * bs)) * tau)
            rho = (_y + bs) ** 2 * _y * sp.exp(_y) / bs**3
            psi = sp.nsimplify(0.3) * sp.sin(_x1) * rho * tau
            chi = sp.nsimplify(0.2) * sp.cos(_x2) * rho * tau
            q = (sp.nsimplify(0.3) * sp.cos(_x1)
                 * (_y + bs) ** 2 * sp.exp(_y) / bs**2 * tau)
        v1 = sp.diff(psi, _y)
        v2 = sp.diff(chi, _y)
        v3 = -sp.diff(psi, _x1) - sp.diff(chi, _x2)
        lap = lambda f: (sp.diff(f, _x1, 2) + sp.diff(f, _x2, 2)
                         + sp.diff(f, _y, 2))
        tr = lambda f: f.subs(_y, 0)
        self.gamma, self.sigma = 1.0, 1.0
        if kind == "temporal":
            eta = bs**2 * sp.cos(_x1) * tau       # eta_t = v3 on Gamma
        else:
            eta = sp.nsimplify(0.02) * sp.cos(_x1)
        exprs = {
            "w": w, "h": h, "v1": v1, "v2": v2, "v3": v3, "q": q, "eta": eta,
            "f4": (sp.diff(w, _t) - lap(w)
                   - sum(sp.diff(w * sp.diff(h, s), s)
                         for s in (_x1, _x2, _y))),
            "f5": sp.diff(h, _t) - lap(h) - w,
            "g4": tr(sp.diff(w, _y) + w * sp.diff(h, _y)),
            "f1": sp.diff(v1, _t) - lap(v1) + sp.diff(q, _x1),
            "f2": sp.diff(v2, _t) - lap(v2) + sp.diff(q, _x2),
            "f3": sp.diff(v3, _t) - lap(v3) + sp.diff(q, _y),
            "g1": tr(sp.diff(v1, _y) + sp.diff(v3, _x1)),
            "g2": tr(sp.diff(v2, _y) + sp.diff(v3, _x2)),
        }
        if solver_id == "stationary":
            exprs["g3"] = tr(q - 2 * sp.diff(v3, _y))
        else:
            exprs["g3"] = (sp.nsimplify(self.gamma) * eta
                           - sp.nsimplify(self.sigma)
                           * (sp.diff(eta, _x1, 2) + sp.diff(eta, _x2, 2))
                           - tr(q - 2 * sp.diff(v3, _y)))
        self.fn = {k: sp.lambdify((_x1, _x2, _y, _t), ex, modules="numpy",
                                  cse=True)
                   for k, ex in exprs.items()}

    def vol(self, key, grid, t):
        out = self.fn[key](grid.x1[:, None, None], grid.x2[None, :, None],
                           grid.y[None, None, :], t)
        return np.broadcast_to(np.asarray(out, dtype=float),
                               grid.shape).copy()

    def surf(self, key, grid, t):
        out = self.fn[key](grid.x1[:, None], grid.x2[None, :], 0.0, t)
        return np.broadcast_to(np.asarray(out, dtype=float),
                               (grid.N1, grid.N2)).copy()


def _mms_error(case: _SlabMMS, grid: SlabGrid, nt: int, dt: float) -> float:
    """March one manufactured run; discrete L2 error of the solution fields."""
    sid = case.solver_id
    if sid == "stationary":
        F = VectorField.from_arrays(grid, case.vol("f1", grid, 0.0),
                                    case.vol("f2", grid, 0.0),
                                    case.vol("f3", grid, 0.0))
        gt = tuple(case.surf(k, grid, 0.0) for k in ("g1", "g2", "g3"))
        omega, q = solve_stationary_stokes(F, gt, grid)
        err = 0.0
        for key, got in zip(("v1", "v2", "v3"), omega.arrays()):
            err += l2_volume(got - case.vol(key, grid, 0.0), grid) ** 2
        q_err = q.values - case.vol("q", grid, 0.0)
        q_err -= np.mean(q_err)          # pressure fixed up to a constant
        return float(np.sqrt(err + l2_volume(q_err, grid) ** 2))

    if sid == "parabolic":
        stepper = ParabolicStepper(grid, dt)
        w = case.vol("w", grid, 0.0)
        h = case.vol("h", grid, 0.0)
        for n in range(1, nt + 1):
            t = n * dt
            w, h = stepper.step(w, h, case.vol("w", grid, t),
                                case.vol("f4", grid, t),
                                case.vol("f5", grid, t),
                                case.surf("g4", grid, t))
        return float(np.sqrt(
            l2_volume(w - case.vol("w", grid, nt * dt), grid) ** 2
            + l2_volume(h - case.vol("h", grid, nt * dt), grid) ** 2))

    stepper = StokesStepper(grid, dt, case.gamma, case.sigma)
    v = [case.vol(k, grid, 0.0) for k in ("v1", "v2", "v3")]
    eta = case.surf("eta", grid, 0.0)
    for n in range(1, nt + 1):
        t = n * dt
        rhs = [case.vol(k, grid, t) for k in ("f1", "f2", "f3")]
        gs = tuple(case.surf(k, grid, t) for k in ("g1", "g2", "g3"))
        v, q, eta = stepper.step(v, eta, rhs, gs)
    t = nt * dt
    err = sum(l2_volume(v[c] - case.vol(k, grid, t), grid) ** 2
              for c, k in enumerate(("v1", "v2", "v3")))
    q_err = q - case.vol("q", grid, t)
    q_err -= np.mean(q_err)
    return float(np.sqrt(err + l2_volume(q_err, grid) ** 2))


def mms_study(solver_id: str, kind: str = "spatial",
              nz_list=(17, 33, 65), dt_list=(4e-3, 2e-3, 1e-3),
              n_horizontal: int = 8, T: float = 0.2) -> ConvergenceTable:
    """Refinement study of one linear sub-solver against a manufactured
    solution; spatial studies refine the vertical grid at a time-exact
    manufactured solution, temporal studies refine dt at a space-exact one."""
    case = _SlabMMS(solver_id, kind)
    params, errors = [], []
    if kind == "spatial":
        dt = 1e-3
        nt = 0 if solver_id == "stationary" else 25
        for nz in nz_list:
            grid = SlabGrid(N1=n_horizontal, N2=n_horizontal, Nz=nz,
                            b=case.b, Nt=nt, dt=dt)
            params.append(grid.dz)
            errors.append(_mms_error(case, grid, nt, dt))
    else:
        for dt in dt_list:
            nt = int(round(T / dt))
            grid = SlabGrid(N1=n_horizontal, N2=n_horizontal, Nz=9,
                            b=case.b, Nt=nt, dt=dt)
            params.append(dt)
            errors.append(_mms_error(case, grid, nt, dt))
    return ConvergenceTable(solver_id=solver_id, kind=kind,
                            parameter="dz" if kind == "spatial" else "dt",
                            values=params, errors=errors,
                            order=_fit_order(params, errors))


# ---------------------------------------------------------------------------
# Compatible initial data.
# ---------------------------------------------------------------------------

def _band_limited(rng, grid: SlabGrid, n_max: int = 2) -> np.ndarray:
    """Random real horizontal field from modes |n1|, |n2| <= n_max."""
    x1 = grid.x1[:, None]
    x2 = grid.x2[None, :]
    out = np.zeros((grid.N1, grid.N2))
    for n1 in range(-n_max, n_max + 1):
        for n2 in range(-n_max, n_max + 1):
            if n1 == 0 and n2 == 0:
                continue
            amp = rng.normal() / (1.0 + n1 * n1 + n2 * n2)
            phase = rng.uniform(0.0, 2 * np.pi)
            out += amp * np.cos(2 * np.pi * n1 * x1 / grid.L1
                                + 2 * np.pi * n2 * x2 / grid.L2 + phase)
    m = np.max(np.abs(out))
    return out / m if m > 0 else out


def make_compatible_data(seed: int, amplitude: float, grid: SlabGrid,
                         n_stationary: int = 40) -> dict:
    """Random band-limited initial data projected onto the compatibility set.

    Vertical profiles are chosen so every wall condition holds exactly in the
    grid stencils (quadratics); the nonlinear flux law on Gamma is enforced
    by a single exact correction with a profile whose trace vanishes but
    whose discrete vertical derivative on Gamma is one; the velocity solves
    a small stationary Stokes fixed point so that the divergence, bottom and
    tangential-stress conditions all hold at once.  Deterministic in seed.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    N1, N2 = grid.N1, grid.N2
    if amplitude == 0.0:
        z3 = np.zeros(grid.shape)
        return {"w0": z3, "h0": z3.copy(),
                "v0": (z3.copy(), z3.copy(), z3.copy()),
                "eta0": np.zeros((N1, N2))}
    rng = np.random.default_rng(seed)
    b = grid.b
    y = grid.y[None, None, :]

    eta0 = amplitude * _band_limited(rng, grid)
    # h: quadratic vertical profile with zero trace on Gamma and exactly zero
    # discrete wall derivative.
    h0 = amplitude * _band_limited(rng, grid)[:, :, None] \
        * ((y + b) ** 2 - b**2) / b**2
    # w: linear profile vanishing at the wall, then one exact flux correction.
    w_base = amplitude * _band_limited(rng, grid)[:, :, None] * (y + b) / b
    ws0 = workspace_from_eta(eta0, np.zeros((N1, N2)), grid)
    flux_res = (ws0.G4(w_base, h0)
                - w_base[:, :, -1] * dz_array(h0, grid, 1)[:, :, -1]
                - dz_array(w_base, grid, 1)[:, :, -1])
    w0 = w_base + flux_res[:, :, None] * y * (y + b) / b

    # v: stationary Stokes under a small smooth body force, iterating the
    # tangential boundary data to the self-consistent values.
    F = VectorField.from_arrays(
        grid, *(amplitude * _band_limited(rng, grid)[:, :, None]
                * (1.0 + (y + b) / b) for _ in range(3)))
    zeros2 = np.zeros((N1, N2))
    v = (np.zeros(grid.shape),) * 3
    for _ in range(n_stationary):
        g1 = ws0.G1(*v)
        g2 = ws0.G2(*v)
        omega, _q = solve_stationary_stokes(F, (g1, g2, zeros2), grid)
        v_new = omega.arrays()
        step = max(np.max(np.abs(a - c)) for a, c in zip(v_new, v))
        v = v_new
        if step <= 1e-10 * (1.0 + max(np.max(np.abs(a)) for a in v)):
            break
    else:
        raise SolverConvergenceError(
            f"compatible-data fixed point did not converge within "
            f"{n_stationary} iterations (last step {step:.3e}); the "
            f"amplitude {amplitude} is outside the contracting regime")
    return {"w0": w0, "h0": h0, "v0": tuple(v), "eta0": eta0}
