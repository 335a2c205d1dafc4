"""Incompressible flow in vorticity-streamfunction form with free-slip walls,
coupled to the chemotactic force.

On a rectangle the zero-friction slip conditions u.nu = 0, (S(u) nu)_tau = 0
reduce to psi = 0 and omega = 0 on the boundary (the slip identity
2[S(u)nu]_tau = (curl u) tau on a flat wall), so the fluid step is a
Dirichlet heat solve for omega plus one Poisson solve for psi.  There is no
pressure anywhere in the dynamics; incompressibility is automatic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dstn, idstn

from .grid import (
    GridError,
    RectGrid,
    ScalarField,
    VectorField,
    constant_field,
    gradient,
    solve_poisson_dirichlet,
)
from .chemotaxis import (
    KSParams,
    KSState,
    StabilityError,
    stable_dt,
    step_c,
    step_n,
)


@dataclass
class FluidState:
    omega: ScalarField
    psi: ScalarField
    u: VectorField

    @property
    def grid(self) -> RectGrid:
        return self.omega.grid

    def is_rest(self) -> bool:
        return not (np.any(self.omega.values) or np.any(self.u.ux.values)
                    or np.any(self.u.uy.values))


def rest_fluid(grid: RectGrid) -> FluidState:
    return FluidState(constant_field(grid), constant_field(grid),
                      VectorField(constant_field(grid), constant_field(grid)))


@dataclass
class SimState:
    ks: KSState
    fluid: FluidState
    params: KSParams

    def __post_init__(self):
        if self.ks.grid != self.fluid.grid:
            raise GridError("chemotaxis and fluid grids differ")

    @property
    def grid(self) -> RectGrid:
        return self.ks.grid

    @property
    def t(self) -> float:
        return self.ks.t


def solve_helmholtz_dirichlet(rhs: ScalarField, alpha: float) -> ScalarField:
    """(alpha I - Lap) w = rhs with zero Dirichlet data (sine expansion)."""
    g = rhs.grid
    kx = np.arange(1, g.nx - 1)
    ky = np.arange(1, g.ny - 1)
    lamx = 4.0 * np.sin(np.pi * kx / (2.0 * (g.nx - 1))) ** 2 / g.hx ** 2
    lamy = 4.0 * np.sin(np.pi * ky / (2.0 * (g.ny - 1))) ** 2 / g.hy ** 2
    rhat = dstn(rhs.values[1:-1, 1:-1], type=1)
    rhat /= (alpha + lamx[:, None] + lamy[None, :])
    out = np.zeros(g.shape)
    out[1:-1, 1:-1] = idstn(rhat, type=1)
    return ScalarField(g, out)


def recover_velocity(omega: ScalarField) -> tuple[ScalarField, VectorField]:
    """Streamfunction and velocity from vorticity.

    psi solves Lap psi = -omega with psi = 0 on the walls; u = (psi_y,
    -psi_x) by central differences.  Wall rows of psi vanish identically, so
    u.nu = 0 exactly, and the interior discrete divergence cancels to
    rounding because the two central differences commute.
    """
    psi = solve_poisson_dirichlet(omega)
    g = psi.grid
    ux = np.gradient(psi.values, g.hy, axis=1, edge_order=2)
    uy = -np.gradient(psi.values, g.hx, axis=0, edge_order=2)
    # the wall-normal components vanish analytically; pin them exactly
    uy[:, 0] = 0.0
    uy[:, -1] = 0.0
    ux[0, :] = 0.0
    ux[-1, :] = 0.0
    u = VectorField(ScalarField(g, ux), ScalarField(g, uy))
    return psi, u


def curl_force(n: ScalarField, c: ScalarField, eps0: float) -> ScalarField:
    """eps0 * curl(n grad c) by central differences (one-sided at walls)."""
    g = n.grid
    if c.grid != g:
        raise GridError("fields live on different grids")
    gc = gradient(c)
    ax = n.values * gc.ux.values
    ay = n.values * gc.uy.values
    curl = np.gradient(ay, g.hx, axis=0, edge_order=2) \
        - np.gradient(ax, g.hy, axis=1, edge_order=2)
    return ScalarField(g, eps0 * curl)


def _upwind_advection(omega: np.ndarray, u: VectorField, g: RectGrid) -> np.ndarray:
    """Donor-cell u . grad(omega); wall rows are irrelevant (omega = 0)."""
    ux = u.ux.values
    uy = u.uy.values
    dx_m = np.zeros_like(omega)
    dx_p = np.zeros_like(omega)
    dx_m[1:, :] = (omega[1:, :] - omega[:-1, :]) / g.hx
    dx_p[:-1, :] = (omega[1:, :] - omega[:-1, :]) / g.hx
    dy_m = np.zeros_like(omega)
    dy_p = np.zeros_like(omega)
    dy_m[:, 1:] = (omega[:, 1:] - omega[:, :-1]) / g.hy
    dy_p[:, :-1] = (omega[:, 1:] - omega[:, :-1]) / g.hy
    return np.where(ux > 0, ux * dx_m, ux * dx_p) \
        + np.where(uy > 0, uy * dy_m, uy * dy_p)


def fluid_stable_dt(fluid: FluidState, params: KSParams) -> float:
    g = fluid.grid
    vmax = fluid.u.max_norm()
    h = min(g.hx, g.hy)
    if vmax <= 0.0:
        return params.dt_max
    return min(params.dt_max, params.cfl * h / vmax)


def step_vorticity(fluid: FluidState, force: ScalarField, dt: float,
                   params: KSParams) -> ScalarField:
    """Advance omega: explicit upwind advection and force, implicit diffusion
    with omega = 0 on the walls."""
    g = fluid.grid
    bound = fluid_stable_dt(fluid, params)
    if dt > bound * (1.0 + 1e-12):
        raise StabilityError(f"dt = {dt} exceeds advective bound {bound}")
    w = fluid.omega.values
    star = w + dt * (force.values - _upwind_advection(w, fluid.u, g))
    return solve_helmholtz_dirichlet(ScalarField(g, star / dt), alpha=1.0 / dt)


def coupled_step(state: SimState, dt: float) -> SimState:
    """One step of the full triple (n, c, u).

    Order: chemical solve from the current density, chemotactic force from
    the fresh chemical, vorticity update and velocity recovery, then the
    density drift with the new velocity.  A fluid at rest with eps0 = 0
    stays at rest bit-for-bit, so those runs reduce to the pure
    chemotaxis integration.
    """
    params = state.params
    ks = state.ks
    c_new = step_c(ks, params, dt)
    if params.eps0 == 0.0 and state.fluid.is_rest():
        fluid_new = state.fluid
        u_for_n = None
    else:
        force = curl_force(ks.n, c_new, params.eps0)
        omega_new = step_vorticity(state.fluid, force, dt, params)
        psi_new, u_new = recover_velocity(omega_new)
        fluid_new = FluidState(omega_new, psi_new, u_new)
        u_for_n = u_new
    staged = KSState(ks.n, c_new, ks.t)
    n_new = step_n(staged, u_for_n, dt, params)
    ks_new = KSState(n_new, c_new, ks.t + dt)
    return SimState(ks_new, fluid_new, params)


def sim_stable_dt(state: SimState) -> float:
    u = None if state.fluid.is_rest() else state.fluid.u
    return stable_dt(state.ks, u, state.params)
