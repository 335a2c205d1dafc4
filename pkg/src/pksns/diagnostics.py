"""Conserved and dissipated quantities as online monitors.

The free energy

    J = int n log n + 1/2 int |u|^2 - int n c + 1/2 int c^2 + 1/2 int |grad c|^2

is nonincreasing along solutions, with dissipation

    D = int n |grad(log n - c)|^2 + iota int (dc/dt)^2 + int |grad u|^2.

Both are evaluated with the package's trapezoidal quadrature and central
gradients.  Note the identity dJ/dt = -D holds for the fluid-coupled system
at unit force coupling (the kinetic term carries no coupling weight), so
the monitors are exact Lyapunov diagnostics for eps0 in {0, 1} and
reporting-only otherwise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .grid import ScalarField, gradient, integrate
from .fluid import SimState

ENERGY_COLUMNS = ("t", "mass", "entropy", "kinetic", "cross",
                  "chem_l2", "chem_h1", "J", "D")


@dataclass(frozen=True)
class EnergyReport:
    t: float
    mass: float
    entropy: float
    kinetic: float
    cross: float
    chem_l2: float
    chem_h1: float
    J: float
    D: float


@dataclass(frozen=True)
class RunVerdict:
    classification: str  # Bounded | Growing | BlownUp
    max_n_ratio: float
    dt_collapsed: bool


def total_mass(n: ScalarField) -> float:
    return integrate(n)


def entropy(n: ScalarField) -> float:
    """int n log n with the convention 0 log 0 = 0; never below -area/e."""
    v = n.values
    if np.min(v) < 0:
        raise ValueError("entropy needs a nonnegative density")
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(v > 0.0, v * np.log(np.maximum(v, 1e-300)), 0.0)
    val = integrate(ScalarField(n.grid, integrand))
    area = n.grid.lx * n.grid.ly
    assert val >= -area / np.e - 1e-12 * (1.0 + area)
    return val


def _face_weights(grid) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature areas of interior x-faces (nx-1, ny) and y-faces (nx, ny-1).

    A face between two nodes carries the full spacing along its axis and the
    trapezoidal width of its row/column transverse to it; the resulting
    face sums are the summation-by-parts duals of the node quadrature, so
    sum_faces A (Dc)^2 equals <c, -Lap_h c> identically.
    """
    wx = np.ones(grid.nx)
    wx[0] = wx[-1] = 0.5
    wy = np.ones(grid.ny)
    wy[0] = wy[-1] = 0.5
    ax = np.outer(np.ones(grid.nx - 1), wy) * (grid.hx * grid.hy)
    ay = np.outer(wx, np.ones(grid.ny - 1)) * (grid.hx * grid.hy)
    return ax, ay


def _face_grad_sq(f: np.ndarray, grid) -> float:
    ax, ay = _face_weights(grid)
    dx = (f[1:, :] - f[:-1, :]) / grid.hx
    dy = (f[:, 1:] - f[:, :-1]) / grid.hy
    return float(np.sum(ax * dx ** 2) + np.sum(ay * dy ** 2))


def free_energy(state: SimState, c_dot: ScalarField | None = None) -> EnergyReport:
    """All energy terms plus the dissipation of the current state.

    Gradient squares are accumulated over faces (the summation-by-parts
    quadrature matched to the discrete Laplacian); everything else is the
    node trapezoid rule.
    """
    n, c, u = state.ks.n, state.ks.c, state.fluid.u
    if np.min(n.values) < 0:
        raise ValueError("free energy needs a nonnegative density")
    g = state.grid
    ent = entropy(n)
    kin = 0.5 * integrate(ScalarField(g, u.ux.values ** 2 + u.uy.values ** 2))
    cross = integrate(ScalarField(g, n.values * c.values))
    l2 = 0.5 * integrate(ScalarField(g, c.values ** 2))
    h1 = 0.5 * _face_grad_sq(c.values, g)
    J = ent + kin - cross + l2 + h1
    D = dissipation(state, c_dot)
    return EnergyReport(state.t, total_mass(n), ent, kin, cross, l2, h1, J, D)


def dissipation(state: SimState, c_dot: ScalarField | None = None) -> float:
    """Nonnegative dissipation rate; dJ/dt ~ -D along the flow.

    The mobility term n |grad(log n - c)|^2 is evaluated face-by-face as
    |grad n - n grad c|^2 / n with the logarithmic-mean face density, the
    same mobility the drift fluxes use (for which the quotient is exactly
    mobility * |D(log n - c)|^2); vacuum faces contribute zero.
    """
    from .chemotaxis import _log_mean

    n, c, u = state.ks.n, state.ks.c, state.fluid.u
    g = state.grid
    ax, ay = _face_weights(g)
    nv, cv = n.values, c.values
    floor = 1e-14 * max(float(np.max(nv)), 1e-300)

    def mob(axis):
        if axis == 0:
            dn = (nv[1:, :] - nv[:-1, :]) / g.hx
            dc = (cv[1:, :] - cv[:-1, :]) / g.hx
            nf = _log_mean(nv[:-1, :], nv[1:, :])
            A = ax
        else:
            dn = (nv[:, 1:] - nv[:, :-1]) / g.hy
            dc = (cv[:, 1:] - cv[:, :-1]) / g.hy
            nf = _log_mean(nv[:, :-1], nv[:, 1:])
            A = ay
        flux = dn - nf * dc
        return float(np.sum(np.where(nf > floor,
                                     A * flux ** 2 / np.maximum(nf, floor),
                                     0.0)))

    D = mob(0) + mob(1)
    if state.params.iota > 0.0 and c_dot is not None:
        D += state.params.iota * integrate(ScalarField(g, c_dot.values ** 2))
    if not state.fluid.is_rest():
        D += _face_grad_sq(u.ux.values, g) + _face_grad_sq(u.uy.values, g)
    return float(D)


def check_energy_identity(history: list[EnergyReport], dt: float) -> float:
    """Max relative defect |(J_{k+1} - J_k)/dt + D_{k+1/2}| / max(D, floor)
    over a uniform-dt history; D_{k+1/2} is the midpoint average."""
    if len(history) < 3:
        raise ValueError("need at least 3 reports to check the identity")
    floor = 1e-12
    worst = 0.0
    for a, b in zip(history[:-1], history[1:]):
        d_mid = 0.5 * (a.D + b.D)
        defect = abs((b.J - a.J) / dt + d_mid) / max(d_mid, floor)
        worst = max(worst, defect)
    return worst


def blowup_indicator(max_n_trace: list[float], dt_collapsed: bool) -> RunVerdict:
    """Threshold classifier for the mass dichotomy.

    BlownUp iff the density peak grew tenfold or the step size collapsed;
    Growing for ratios in [3, 10); Bounded otherwise.  The thresholds are
    pragmatic proxies, far outside smooth-solution variability.
    """
    if not max_n_trace:
        raise ValueError("empty trace")
    base = max_n_trace[0]
    ratio = float(max(max_n_trace) / base) if base > 0 else float("inf")
    if ratio >= 10.0 or dt_collapsed:
        cls = "BlownUp"
    elif ratio >= 3.0:
        cls = "Growing"
    else:
        cls = "Bounded"
    return RunVerdict(cls, ratio, dt_collapsed)


def write_energy_csv(path, history: list[EnergyReport]) -> None:
    """CSV schema: t, mass, entropy, kinetic, cross, chem_l2, chem_h1, J, D."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ENERGY_COLUMNS)
        for r in history:
            w.writerow(["%.17g" % getattr(r, k) for k in ENERGY_COLUMNS])
