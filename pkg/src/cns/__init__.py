"""Free-surface chemotaxis-Navier-Stokes slab solver.

Simulates the coupled cell-density / oxygen / incompressible-flow system on a
horizontally periodic slab with a moving top surface.  The moving domain is
flattened onto the equilibrium slab by a harmonic-extension map; the oxygen
field is handled through a logarithmic change of variables; the nonlinear
system is solved by Picard iteration over two linear sub-solvers (a coupled
parabolic pair and a free-surface Stokes evolution).
"""

from cns.grid import SlabGrid, ScalarField, VectorField, SurfaceField

__all__ = ["SlabGrid", "ScalarField", "VectorField", "SurfaceField"]
__version__ = "0.1.0"
