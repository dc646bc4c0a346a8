"""Right-hand-side and boundary corrections of the flattened system.

The flattening map turns the moving-domain equations into flat-slab equations
with correction terms that collect every metric contribution of the map:
volume terms F4 (cell density), F5 (log-oxygen), F = (F1,F2,F3) (momentum),
and surface terms G1..G4 on Gamma.  All formulas are polynomial expressions
in the fields, the geometry coefficients (alpha, beta, J, 1/J), the harmonic
lift rate etabar_t, and their grid derivatives.

Two transcription ambiguities in the source derivation are resolved here and
cross-checked by the independent chain-rule oracle in cns.verify:
  * the vertical advection factor uses (J^-1 alpha v1 + J^-1 beta v2 + v3),
    i.e. the third pulled-back velocity component;
  * the quadratic advection block of F3 pairs v2*v3 with the *vertical*
    derivative of beta (mirroring the v1*v3 term with d3 alpha).
Surface-height derivative factors appearing inside vertical derivatives in
G1..G3 are evaluated as the volume fields alpha, beta (which restrict to
d1 eta, d2 eta on Gamma), with traces taken after differentiation.
"""

from __future__ import annotations

import numpy as np

from cns.grid import ScalarField, SlabGrid, SurfaceField, VectorField, dx_array, dz_array
from cns.transform import GeometryCoeffs, geometry_arrays


def _geo_dict(g: GeometryCoeffs) -> dict:
    grid = g.grid
    lift = 1.0 + grid.y[None, None, :] / grid.b
    return {
        "alpha": g.alpha.values, "beta": g.beta.values,
        "J": g.J.values, "Ji": g.Jinv.values,
        "etabar": g.etabar.values.values,
        "detabar_dy": g.etabar.dvalues_dy.values,
        "etabar_t": g.etabar_t.values,
        "detabar_t_dy": g.detabar_t_dy.values,
        "lift": lift,
    }


class TermsWorkspace:
    """Shared derivative helpers for one (grid, geometry) snapshot."""

    def __init__(self, grid: SlabGrid, geo: dict):
        self.grid = grid
        self.geo = geo
        self.A = geo["alpha"]
        self.B = geo["beta"]
        self.J = geo["J"]
        self.Ji = geo["Ji"]
        self.lift = geo["lift"]
        self.etabar_t = geo["etabar_t"]
        self.detabar_t = geo["detabar_t_dy"]
        self.b = grid.b
        # Frequently used geometry derivatives (grid stencils).
        self.d1Ji = self.d1(self.Ji)
        self.d2Ji = self.d2(self.Ji)
        self.d3Ji = self.d3(self.Ji)
        self.JiA = self.Ji * self.A
        self.JiB = self.Ji * self.B
        self.d1JiA = self.d1(self.JiA)
        self.d2JiB = self.d2(self.JiB)
        self.d3JiA = self.d3(self.JiA)
        self.d3JiB = self.d3(self.JiB)
        self.d33Ji = self.d33(self.Ji)
        self.metric = self.Ji**2 * (self.A**2 + self.B**2 + 1.0) - 1.0

    def d1(self, f):
        return dx_array(f, self.grid, 1)

    def d2(self, f):
        return dx_array(f, self.grid, 2)

    def d3(self, f):
        return dz_array(f, self.grid, 1)

    def d33(self, f):
        return dz_array(f, self.grid, 2)

    # Pulled-back physical gradient and Laplacian (expanded so the vertical
    # second derivative uses the D2 stencil directly; composing D1 with
    # itself loses an order at the walls).
    def P1(self, f):
        return self.d1(f) - self.JiA * self.d3(f)

    def P2(self, f):
        return self.d2(f) - self.JiB * self.d3(f)

    def P3(self, f):
        return self.Ji * self.d3(f)

    def lap_pull(self, f):
        d3f = self.d3(f)
        return (dx_array(f, self.grid, 1, 2) + dx_array(f, self.grid, 2, 2)
                + (self.metric + 1.0) * self.d33(f)
                - 2 * self.JiA * self.d3(self.d1(f))
                - 2 * self.JiB * self.d3(self.d2(f))
                - self.d1JiA * d3f - self.d2JiB * d3f
                + self.JiA * self.d3JiA * d3f + self.JiB * self.d3JiB * d3f
                + self.Ji * self.d3Ji * d3f)

    # ---- volume terms -----------------------------------------------------

    def F4(self, w, h, v1, v2, v3, w_lag=None):
        if w_lag is None:
            w_lag = w
        d1, d2, d3, d33 = self.d1, self.d2, self.d3, self.d33
        A, B, Ji, JiA, JiB = self.A, self.B, self.Ji, self.JiA, self.JiB
        d1w, d2w, d3w = d1(w), d2(w), d3(w)
        d1h, d2h, d3h = d1(h), d2(h), d3(h)
        out = (self.metric * (d33(w) + d3(w_lag) * d3h + w_lag * d33(h))
               - 2 * JiA * (d3(d1w) + w_lag * d3(d1h))
               - 2 * JiB * (d3(d2w) + w_lag * d3(d2h)))
        out += (- Ji * v1 * (d1w - JiA * d3w)
                - Ji * v2 * (d2w - JiB * d3w)
                - Ji * (JiA * v1 + JiB * v2 + v3) * d3w)
        out += (- self.d1JiA * d3w - self.d2JiB * d3w
                + JiA * self.d3JiA * d3w + JiB * self.d3JiB * d3w)
        out += (- JiA * (d1w * d3h + d3w * d1h)
                - JiB * (d2w * d3h + d3w * d2h)
                - w * self.d1JiA * d3h)
        out += (- w * self.d2JiB * d3h
                + w * JiA * self.d3JiA * d3h
                + w * JiB * self.d3JiB * d3h
                + w * Ji * self.d3Ji * d3h
                + Ji * self.d3Ji * d3w)
        out += Ji * d3w * self.lift * self.etabar_t
        return out

    def F5(self, h, v1, v2, v3):
        d1, d2, d3, d33 = self.d1, self.d2, self.d3, self.d33
        A, B, Ji, JiA, JiB = self.A, self.B, self.Ji, self.JiA, self.JiB
        d1h, d2h, d3h = d1(h), d2(h), d3(h)
        out = (self.metric * d33(h)
               - 2 * JiA * d3(d1h) - 2 * JiB * d3(d2h))
        out += (- Ji * v1 * (d1h - JiA * d3h)
                - Ji * v2 * (d2h - JiB * d3h)
                - Ji * (JiA * v1 + JiB * v2 + v3) * d3h)
        out += (- self.d1JiA * d3h - self.d2JiB * d3h
                + JiA * self.d3JiA * d3h + JiB * self.d3JiB * d3h)
        out += (- (d1h - JiA * d3h) ** 2
                - (d2h - JiB * d3h) ** 2
                - Ji**2 * d3h**2
                + Ji * self.d3Ji * d3h)
        out += Ji * d3h * self.lift * self.etabar_t
        return out

    def _F12(self, idx, w, v1, v2, v3, d1q, d2q, d3q, phi):
        """Horizontal momentum corrections F1 (idx=1) / F2 (idx=2)."""
        d1, d2, d3, d33 = self.d1, self.d2, self.d3, self.d33
        A, B, J, Ji = self.A, self.B, self.J, self.Ji
        vi = v1 if idx == 1 else v2
        gam = A if idx == 1 else B
        dgq = d1q if idx == 1 else d2q
        dgphi = d1(phi) if idx == 1 else d2(phi)
        d1vi, d2vi, d3vi = d1(vi), d2(vi), d3(vi)
        out = (self.metric * d33(vi)
               - 2 * self.JiA * d3(d1vi) - 2 * self.JiB * d3(d2vi))
        out += (2 * J * self.d1Ji * d1vi + J * d1(self.d1Ji) * vi
                + 2 * J * self.d2Ji * d2vi + J * d2(self.d2Ji) * vi
                + self.d3Ji**2 * vi + Ji * self.d33Ji * vi
                + Ji * self.d3Ji * d3vi)
        out += (d3(Ji**2) * d3vi
                - J * d1(A * Ji * vi * self.d3Ji)
                - J * d1(A * Ji**2) * d3vi
                - J * d2(B * Ji * vi * self.d3Ji))
        out += (- J * d2(B * Ji**2) * d3vi
                - A * d3(vi * self.d1Ji) - A * self.d3Ji * d1vi
                - B * d3(vi * self.d2Ji) - B * self.d3Ji * d2vi)
        out += (A * (d3(Ji * A * vi) * self.d3Ji + Ji * A * vi * self.d33Ji)
                + A * d3(Ji**2 * A) * d3vi
                + B * (d3(Ji * B * vi) * self.d3Ji + Ji * B * vi * self.d33Ji)
                + B * d3(Ji**2 * B) * d3vi)
        out += (- v1 * d1(Ji * vi) - v2 * d2(Ji * vi) - v3 * d3(Ji * vi))
        out += (Ji * vi * (self.etabar_t / self.b + self.detabar_t * self.lift)
                + d3(Ji * vi) * self.lift * self.etabar_t)
        out += (w * gam * d3(phi) + w * (1.0 - J) * dgphi
                + gam * d3q + (1.0 - J) * dgq)
        return out

    def F3(self, w, v1, v2, v3, d1q, d2q, d3q, phi):
        d1, d2, d3, d33 = self.d1, self.d2, self.d3, self.d33
        A, B, J, Ji = self.A, self.B, self.J, self.Ji
        d1v3, d2v3, d3v3 = d1(v3), d2(v3), d3(v3)
        out = (self.metric * d33(v3)
               - 2 * self.JiA * d3(d1v3) - 2 * self.JiB * d3(d2v3))
        out += (Ji * self.d3Ji * d3v3
                - d1(A * Ji) * d3v3 - d2(B * Ji) * d3v3)
        out += (A * Ji * d3(A * Ji) * d3v3 + B * Ji * d3(B * Ji) * d3v3)
        # Commutator completion: the vertical pulled-back component mixes the
        # Cartesian components through alpha and beta, so the physical vector
        # Laplacian contributes 2*grad(gamma).grad(J^-1 v_i) + (J^-1 v_i)*
        # Lap(gamma) for gamma in {alpha, beta} (all in pulled-back metric).
        for gam, vi in ((A, v1), (B, v2)):
            Uif = Ji * vi
            out += (2 * (self.P1(gam) * self.P1(Uif)
                         + self.P2(gam) * self.P2(Uif)
                         + self.P3(gam) * self.P3(Uif))
                    + Uif * self.lap_pull(gam))
        out += (- v1 * Ji * d1v3 - v2 * Ji * d2v3 - v3 * Ji * d3v3
                - v1**2 * Ji**2 * d1(A)
                - v1 * v2 * Ji**2 * (d1(B) + d2(A)))
        out += (- v2**2 * Ji**2 * d2(B)
                - v1 * v3 * Ji**2 * d3(A)
                - v2 * v3 * Ji**2 * d3(B))
        out += (Ji * (v1 * Ji * d3(A) + v2 * Ji * d3(B) + d3v3)
                * self.lift * self.etabar_t
                - Ji * v1 * self.lift * d1(self.etabar_t)
                - Ji * v2 * self.lift * d2(self.etabar_t))
        out += (w * A * d1(phi) + w * B * d2(phi)
                + w * (1.0 - Ji * (A**2 + B**2 + 1.0)) * d3(phi))
        out += (A * d1q + B * d2q
                + (1.0 - Ji * (A**2 + B**2 + 1.0)) * d3q)
        return out

    # ---- surface terms (3D expressions, traced on Gamma at the end) -------

    def G1(self, v1, v2, v3):
        d1, d2, d3 = self.d1, self.d2, self.d3
        A, B, Ji = self.A, self.B, self.Ji
        U3 = self.JiA * v1 + self.JiB * v2 + v3
        expr = (2 * (d1(Ji * v1) - Ji * A * d3(Ji * v1)) * A
                + (d2(Ji * v1) - Ji * B * d3(Ji * v1)) * B
                + (d1(Ji * v2) - Ji * A * d3(Ji * v2)) * B
                + (1.0 - Ji**2) * d3(v1)
                - (Ji * v1 * self.d3Ji + d1(Ji * v1 * A + Ji * v2 * B))
                + Ji * A * d3(U3)
                + (Ji * d3(Ji * v1) + d1(U3) - Ji * A * d3(U3)) * A**2
                + (Ji * d3(Ji * v2) + d2(U3) - Ji * B * d3(U3)) * A * B
                - 2 * Ji * d3(U3) * A)
        return expr[..., -1]

    def G2(self, v1, v2, v3):
        d1, d2, d3 = self.d1, self.d2, self.d3
        A, B, Ji = self.A, self.B, self.Ji
        U3 = self.JiA * v1 + self.JiB * v2 + v3
        expr = (2 * (d2(Ji * v2) - Ji * B * d3(Ji * v2)) * B
                + (d1(Ji * v2) - Ji * A * d3(Ji * v2)) * A
                + (d2(Ji * v1) - Ji * B * d3(Ji * v1)) * A
                + (1.0 - Ji**2) * d3(v2)
                - (Ji * v2 * self.d3Ji + d2(Ji * v1 * A + Ji * v2 * B))
                + Ji * B * d3(U3)
                + (Ji * d3(Ji * v2) + d2(U3) - Ji * B * d3(U3)) * B**2
                + (Ji * d3(Ji * v1) + d1(U3) - Ji * A * d3(U3)) * A * B
                - 2 * Ji * d3(U3) * B)
        return expr[..., -1]

    def G3(self, v1, v2, v3, eta_vals, sigma):
        d1, d2, d3 = self.d1, self.d2, self.d3
        A, B, Ji = self.A, self.B, self.Ji
        U3 = self.JiA * v1 + self.JiB * v2 + v3
        U12 = self.JiA * v1 + self.JiB * v2
        num = (-2 * (d1(Ji * v1) - Ji * A * d3(Ji * v1)) * A**2
               - 2 * (d2(Ji * v2) - Ji * B * d3(Ji * v2)) * B**2
               - 2 * (d2(Ji * v1) - Ji * B * d3(Ji * v1)
                      + d1(Ji * v2) - Ji * A * d3(Ji * v2)) * A * B
               + (Ji * d3(Ji * v1) + d1(U3)) * A
               - Ji * A * d3(U3) * A
               + (Ji * d3(Ji * v2) + d2(U3)) * B
               - Ji * B * d3(U3) * B
               + (Ji * d3(Ji * v1) + d1(U3) - Ji * A * d3(U3)) * A
               + (Ji * d3(Ji * v2) + d2(U3) - Ji * B * d3(U3)) * B
               - 2 * Ji * d3(U12)
               + 2 * (1.0 + A**2 + B**2 - Ji) * d3(v3))
        grad_sq = (A**2 + B**2)[..., -1]
        g3_tilde = num[..., -1] / (1.0 + grad_sq)
        return sigma * curvature_defect(eta_vals, self.grid) + g3_tilde

    def G4(self, w, h):
        d1, d2, d3 = self.d1, self.d2, self.d3
        A, B, J = self.A, self.B, self.J
        expr = (J / (A**2 + B**2 + 1.0)
                * (A * (d1(w) + w * d1(h)) + B * (d2(w) + w * d2(h))))
        return expr[..., -1]


def curvature_defect(eta_vals: np.ndarray, grid: SlabGrid) -> np.ndarray:
    """div0( grad0 eta / sqrt(1+|grad0 eta|^2) ) - Laplace0 eta, spectral."""
    e1 = dx_array(eta_vals, grid, 1)
    e2 = dx_array(eta_vals, grid, 2)
    root = np.sqrt(1.0 + e1**2 + e2**2)
    cur = dx_array(e1 / root, grid, 1) + dx_array(e2 / root, grid, 2)
    lap = dx_array(eta_vals, grid, 1, 2) + dx_array(eta_vals, grid, 2, 2)
    return cur - lap


# ---------------------------------------------------------------------------
# Public field-typed wrappers.
# ---------------------------------------------------------------------------

def _ws(g: GeometryCoeffs) -> TermsWorkspace:
    return TermsWorkspace(g.grid, _geo_dict(g))


def eval_F4(w_lag: ScalarField, w: ScalarField, h: ScalarField,
            v: VectorField, g: GeometryCoeffs) -> ScalarField:
    ws = _ws(g)
    out = ws.F4(w.values, h.values, *v.arrays(), w_lag=w_lag.values)
    return ScalarField(g.grid, out)


def eval_F5(h: ScalarField, v: VectorField, g: GeometryCoeffs) -> ScalarField:
    ws = _ws(g)
    return ScalarField(g.grid, ws.F5(h.values, *v.arrays()))


def eval_F123(w: ScalarField, v: VectorField, grad_q: VectorField,
              phi: ScalarField, g: GeometryCoeffs) -> VectorField:
    ws = _ws(g)
    v1, v2, v3 = v.arrays()
    d1q, d2q, d3q = grad_q.arrays()
    f1 = ws._F12(1, w.values, v1, v2, v3, d1q, d2q, d3q, phi.values)
    f2 = ws._F12(2, w.values, v1, v2, v3, d1q, d2q, d3q, phi.values)
    f3 = ws.F3(w.values, v1, v2, v3, d1q, d2q, d3q, phi.values)
    return VectorField.from_arrays(g.grid, f1, f2, f3)


def eval_G1(v: VectorField, eta: SurfaceField, g: GeometryCoeffs) -> SurfaceField:
    return SurfaceField(g.grid, _ws(g).G1(*v.arrays()))


def eval_G2(v: VectorField, eta: SurfaceField, g: GeometryCoeffs) -> SurfaceField:
    return SurfaceField(g.grid, _ws(g).G2(*v.arrays()))


def eval_G3(v: VectorField, eta: SurfaceField, g: GeometryCoeffs,
            sigma: float = 1.0) -> SurfaceField:
    return SurfaceField(g.grid, _ws(g).G3(*v.arrays(), eta.values, sigma))


def eval_G4(w: ScalarField, h: ScalarField, eta: SurfaceField,
            g: GeometryCoeffs) -> SurfaceField:
    return SurfaceField(g.grid, _ws(g).G4(w.values, h.values))


def workspace_from_eta(eta_vals: np.ndarray, eta_t_vals: np.ndarray,
                       grid: SlabGrid) -> TermsWorkspace:
    """Raw-array fast path used by the Picard driver and the oracle."""
    return TermsWorkspace(grid, geometry_arrays(eta_vals, eta_t_vals, grid))
