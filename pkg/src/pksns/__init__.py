"""2D chemotaxis-fluid lab: cell density + chemical + incompressible flow
on rectangles and disks with no-flux / free-slip walls, plus the numerical
machinery for steady concentration spots (Liouville profiles, Green-function
regular parts, radial mode solvers, half-space Lorentz-tensor evaluation,
and free-slip Stokes spectral checks)."""

from .grid import (
    RectGrid,
    RadialGrid,
    ScalarField,
    VectorField,
    constant_field,
    field_from_function,
    zero_velocity,
    laplacian_neumann,
    solve_helmholtz_neumann,
    solve_poisson_dirichlet,
    integrate,
    integrate_radial,
    gradient,
    divergence_flux,
    write_snapshot,
    read_snapshot,
)

__version__ = "0.1.0"
