import numpy as np
import pytest

from pksns.chemotaxis import KSParams, KSState, gaussian_density
from pksns.diagnostics import (
    EnergyReport,
    blowup_indicator,
    check_energy_identity,
    dissipation,
    entropy,
    free_energy,
    total_mass,
    write_energy_csv,
    ENERGY_COLUMNS,
)
from pksns.fluid import FluidState, SimState, coupled_step, recover_velocity, rest_fluid
from pksns.grid import (
    RectGrid,
    ScalarField,
    constant_field,
    field_from_function,
    integrate,
    solve_helmholtz_neumann,
)


def constant_sim(grid, nbar, eps0=0.0, iota=0.0):
    n = constant_field(grid, nbar)
    c = solve_helmholtz_neumann(n, 1.0)
    return SimState(KSState(n, c), rest_fluid(grid), KSParams(iota=iota, eps0=eps0))


# ---------------------------------------------------------------------------
# total_mass / free_energy
# ---------------------------------------------------------------------------

def test_total_mass_unit():
    g = RectGrid(16, 16)
    assert total_mass(constant_field(g, 1.0)) == pytest.approx(1.0, rel=1e-14)


def test_generated_mass_matches_request():
    g = RectGrid(64, 64)
    M = 4.0 * np.pi
    n = gaussian_density(g, M, 0.15, (0.5, 0.5))
    assert abs(total_mass(n) - M) <= 1e-8 * M


def test_free_energy_constant_closed_form():
    g = RectGrid(32, 32, lx=1.5, ly=0.5)
    nbar = 2.0
    rep = free_energy(constant_sim(g, nbar))
    area = 1.5 * 0.5
    assert rep.J == pytest.approx(area * (nbar * np.log(nbar) - nbar ** 2 / 2),
                                  rel=1e-12)
    assert rep.mass == pytest.approx(area * nbar, rel=1e-13)
    assert rep.D == 0.0


def test_free_energy_zero_state():
    g = RectGrid(16, 16)
    rep = free_energy(constant_sim(g, 0.0))
    assert rep.J == 0.0
    assert rep.entropy == 0.0


def test_free_energy_terms_sum_exactly():
    g = RectGrid(32, 32)
    n = gaussian_density(g, 5.0, 0.2, (0.4, 0.6))
    c = solve_helmholtz_neumann(n, 1.0)
    state = SimState(KSState(n, c), rest_fluid(g), KSParams())
    r = free_energy(state)
    assert r.J == r.entropy + r.kinetic - r.cross + r.chem_l2 + r.chem_h1
    assert r.mass == total_mass(n)


def test_free_energy_refinement_agreement():
    # spot-like state on two grids: O(h^2) agreement of J
    vals = {}
    for m in (64, 256):
        g = RectGrid(m, m)
        n = gaussian_density(g, 4.0 * np.pi, 0.12, (0.5, 0.5))
        c = solve_helmholtz_neumann(n, 1.0)
        vals[m] = free_energy(SimState(KSState(n, c), rest_fluid(g), KSParams())).J
    # h^2 between 64^2 and 256^2 shrinks ~16x; demand small absolute gap
    assert abs(vals[64] - vals[256]) <= 0.02 * abs(vals[256])


def test_free_energy_rejects_negative_density():
    g = RectGrid(8, 8)
    n = constant_field(g, -0.5)
    with pytest.raises(ValueError):
        entropy(n)
    # a state with negative density cannot even be constructed
    with pytest.raises(ValueError):
        KSState(n, constant_field(g, 0.0))


# ---------------------------------------------------------------------------
# dissipation
# ---------------------------------------------------------------------------

def test_dissipation_constant_zero():
    g = RectGrid(32, 32)
    assert dissipation(constant_sim(g, 3.0)) == 0.0


def test_dissipation_pure_fluid_quadrature():
    # u from psi = sin(pi x) sin(pi y): int |grad u|^2 = pi^4 analytically
    g = RectGrid(257, 257)
    omega = field_from_function(
        g, lambda X, Y: 2.0 * np.pi ** 2 * np.sin(np.pi * X) * np.sin(np.pi * Y))
    psi, u = recover_velocity(omega)
    nbar = 1.0
    n = constant_field(g, nbar)
    c = solve_helmholtz_neumann(n, 1.0)
    state = SimState(KSState(n, c), FluidState(omega, psi, u), KSParams(eps0=1.0))
    D = dissipation(state)
    assert D == pytest.approx(np.pi ** 4, rel=3e-3)


def test_dissipation_quadratic_in_velocity():
    g = RectGrid(65, 65)
    omega = field_from_function(
        g, lambda X, Y: np.sin(np.pi * X) * np.sin(2 * np.pi * Y))
    psi, u = recover_velocity(omega)
    n = constant_field(g, 1.0)
    c = solve_helmholtz_neumann(n, 1.0)
    d1 = dissipation(SimState(KSState(n, c), FluidState(omega, psi, u),
                              KSParams(eps0=1.0)))
    omega2 = ScalarField(g, 2.0 * omega.values)
    psi2, u2 = recover_velocity(omega2)
    d2 = dissipation(SimState(KSState(n, c), FluidState(omega2, psi2, u2),
                              KSParams(eps0=1.0)))
    assert np.sqrt(d2) == pytest.approx(2.0 * np.sqrt(d1), rel=1e-12)


def test_dissipation_nonnegative_random():
    g = RectGrid(24, 24)
    rng = np.random.default_rng(2)
    for _ in range(10):
        n = ScalarField(g, rng.random(g.shape) + 1e-6)
        c = ScalarField(g, rng.standard_normal(g.shape))
        state = SimState(KSState(n, c), rest_fluid(g), KSParams())
        assert dissipation(state) >= 0.0


# ---------------------------------------------------------------------------
# energy identity along trajectories
# ---------------------------------------------------------------------------

def _run_history(m, dt, T, s=0.1, iota=0.0, eps0=0.0):
    g = RectGrid(m, m)
    params = KSParams(iota=iota, eps0=eps0, dt_max=dt)
    n0 = gaussian_density(g, 0.8 * 4.0 * np.pi, s, (0.5, 0.5))
    c0 = solve_helmholtz_neumann(n0, 1.0)
    state = SimState(KSState(n0, c0), rest_fluid(g), params)
    hist = [free_energy(state)]
    for _ in range(int(round(T / dt))):
        new = coupled_step(state, dt)
        c_dot = ScalarField(g, (new.ks.c.values - state.ks.c.values) / dt)
        hist.append(free_energy(new, c_dot))
        state = new
    return hist


def test_identity_constant_state_defect():
    g = RectGrid(64, 64)
    params = KSParams(dt_max=1e-3)
    state = constant_sim(g, 2.0)
    hist = [free_energy(state)]
    for _ in range(5):
        state = coupled_step(state, 1e-3)
        hist.append(free_energy(state))
    assert check_energy_identity(hist, 1e-3) <= 1e-8


def test_identity_first_order_in_dt():
    d1 = check_energy_identity(_run_history(64, 1e-4, 0.02), 1e-4)
    d2 = check_energy_identity(_run_history(64, 5e-5, 0.02), 5e-5)
    assert d1 <= 0.05
    assert 1.5 <= d1 / d2 <= 2.5


def test_identity_monotone_J():
    for iota in (0.0, 1.0):
        hist = _run_history(64, 1e-4, 0.01, iota=iota)
        J = np.array([r.J for r in hist])
        assert np.max(np.diff(J)) <= 1e-6 * abs(J[0])


def test_identity_needs_three_reports():
    g = RectGrid(16, 16)
    r = free_energy(constant_sim(g, 1.0))
    with pytest.raises(ValueError):
        check_energy_identity([r, r], 1e-3)


# ---------------------------------------------------------------------------
# blow-up classifier
# ---------------------------------------------------------------------------

def test_blowup_flat_trace_bounded():
    v = blowup_indicator([5.0, 5.1, 4.9, 5.0], dt_collapsed=False)
    assert v.classification == "Bounded"
    assert not v.dt_collapsed


def test_blowup_ratio_threshold():
    v = blowup_indicator([1.0, 4.0, 12.0], dt_collapsed=False)
    assert v.classification == "BlownUp"
    assert v.max_n_ratio == pytest.approx(12.0)


def test_blowup_growing_band():
    v = blowup_indicator([1.0, 2.0, 5.0], dt_collapsed=False)
    assert v.classification == "Growing"


def test_blowup_dt_collapse():
    v = blowup_indicator([1.0, 1.5], dt_collapsed=True)
    assert v.classification == "BlownUp"
    assert v.dt_collapsed


def test_blowup_invariant_consistency():
    # BlownUp <=> ratio >= 10 or dt_collapsed
    rng = np.random.default_rng(8)
    for _ in range(50):
        trace = list(1.0 + 15.0 * rng.random(6))
        collapsed = bool(rng.random() < 0.3)
        v = blowup_indicator(trace, collapsed)
        blown = v.max_n_ratio >= 10.0 or collapsed
        assert (v.classification == "BlownUp") == blown


# ---------------------------------------------------------------------------
# energy.csv
# ---------------------------------------------------------------------------

def test_energy_csv_schema(tmp_path):
    g = RectGrid(16, 16)
    hist = [free_energy(constant_sim(g, 1.0))]
    p = tmp_path / "energy.csv"
    write_energy_csv(p, hist)
    lines = p.read_text().strip().split("\n")
    assert lines[0] == ",".join(ENERGY_COLUMNS)
    assert len(lines) == 2
    vals = lines[1].split(",")
    assert float(vals[1]) == pytest.approx(1.0)
