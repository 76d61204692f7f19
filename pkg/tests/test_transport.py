import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lyapunov_lab.fields import (
    BoundaryCondition,
    Dirichlet,
    Grid,
    ScalarField,
    SigmaModel,
    ZeroFlux,
    integrate,
    sigma_identity,
    sigma_power,
    sigma_saturating,
)
from lyapunov_lab.functionals import IdealGasThermo, free_energy_canonical, ldf_zrp, s_local_equilibrium
from lyapunov_lab.transport import (
    EvolutionTrace,
    HeatProblem,
    StabilityError,
    ZrpPdeProblem,
    dissipation,
    entropy_balance,
    evolve_heat,
    evolve_zrp_pde,
    exact_ldf_rate,
    heat_audit,
    kappa_constant,
    kappa_linear,
    lyapunov_audit,
    lyapunov_report,
    stable_dt_heat,
    stable_dt_zrp,
    stationary_profile,
    stationary_residual,
    step_heat,
    step_zrp_pde,
)

SIGMAS = [sigma_identity(), sigma_power(2.0), sigma_saturating()]


def heat_problem(n, bc, kappa=None, c=1.0):
    return HeatProblem(Grid.uniform(n), IdealGasThermo(c), kappa or kappa_constant(1.0), bc)


def sin_profile(grid, base, amp, mode=1):
    return ScalarField(grid, base * (1 + amp * np.sin(mode * np.pi * grid.centers())))


# --- heat flow ------------------------------------------------------------------------


@pytest.mark.parametrize("bc", [BoundaryCondition.uniform_dirichlet(2.0), BoundaryCondition.zero_flux()])
def test_uniform_temperature_is_unchanged(bc):
    p = heat_problem(10, bc, c=1.0)
    e = ScalarField.constant(p.grid, 2.0)
    out = step_heat(p, e, stable_dt_heat(p, e))
    np.testing.assert_array_equal(out.values, e.values)


def test_heat_with_two_baths_converges_to_linear_temperature():
    p = heat_problem(16, BoundaryCondition.dirichlet(1.0, 3.0))
    tr = evolve_heat(p, ScalarField.constant(p.grid, 1.5), t_final=4.0, record_every=10**9)
    np.testing.assert_allclose(tr.states[-1], 1.0 + 2.0 * p.grid.centers(), atol=1e-10)


def test_heat_with_linear_conductivity_converges_to_linear_potential():
    # kappa = T: T^2 is harmonic
    p = heat_problem(16, BoundaryCondition.dirichlet(1.0, 2.0), kappa=kappa_linear(1.0))
    tr = evolve_heat(p, ScalarField.constant(p.grid, 1.5), t_final=4.0, record_every=10**9)
    np.testing.assert_allclose(tr.states[-1], np.sqrt(1.0 + 3.0 * p.grid.centers()), atol=1e-10)


def test_closed_two_blocks_equalise():
    p = heat_problem(20, BoundaryCondition.zero_flux(), c=1.5)
    e0 = ScalarField(p.grid, np.where(p.grid.centers() < 0.5, 3.0, 1.0))
    tr = evolve_heat(p, e0, t_final=3.0, record_every=10**9)
    half = p.grid.cell_volume * np.array([tr.states[-1][:10].sum(), tr.states[-1][10:].sum()])
    assert half[0] == pytest.approx(half[1], rel=1e-8)
    assert half.sum() == pytest.approx(integrate(e0), rel=1e-12)


@given(e=arrays(float, st.integers(3, 40), elements=st.floats(0.2, 5.0)), c=st.floats(0.5, 3.0))
def test_closed_step_conserves_energy(e, c):
    p = heat_problem(e.size, BoundaryCondition.zero_flux(), c=c)
    s = ScalarField(p.grid, e)
    out = step_heat(p, s, stable_dt_heat(p, s))
    assert integrate(out) == pytest.approx(integrate(s), rel=1e-12)


def test_step_heat_rejects_large_dt_and_bad_state():
    p = heat_problem(10, BoundaryCondition.zero_flux())
    e = sin_profile(p.grid, 1.0, 0.5)
    with pytest.raises(StabilityError):
        step_heat(p, e, 2 * stable_dt_heat(p, e))
    with pytest.raises(ValueError):
        step_heat(p, ScalarField(p.grid, np.full(10, -1.0)), 1e-4)


def test_entropy_balance_of_uniform_state_is_zero():
    p = heat_problem(12, BoundaryCondition.uniform_dirichlet(2.0), c=1.5)
    assert entropy_balance(p, ScalarField.constant(p.grid, 3.0)) == (0.0, 0.0, 0.0)


@given(e=arrays(float, st.integers(3, 40), elements=st.floats(0.2, 5.0)))
def test_closed_entropy_balance(e):
    p = heat_problem(e.size, BoundaryCondition.zero_flux(), kappa=kappa_linear(0.7), c=1.5)
    dS, bnd, bulk = entropy_balance(p, ScalarField(p.grid, e))
    assert bnd == 0.0
    assert bulk >= 0.0
    assert dS == pytest.approx(bulk, rel=1e-9, abs=1e-12)
    if np.ptp(e) > 1e-6:
        assert bulk > 0


@pytest.mark.parametrize("seed", range(5))
def test_bath_balance_is_exact_semi_discretely(seed):
    rng = np.random.default_rng(seed)
    T_bath = 1.5
    n = int(rng.integers(5, 60))
    p = heat_problem(n, BoundaryCondition.uniform_dirichlet(T_bath), kappa=kappa_linear(1.0), c=1.0)
    e = ScalarField(p.grid, rng.uniform(0.5, 3.0, n))
    dS, bnd, bulk = entropy_balance(p, e)
    assert bulk > 0
    assert dS == pytest.approx(bnd + bulk, rel=1e-10)
    # d/dt [S - E/T_bath] = bulk, with dE/dt from the energy update itself
    dt = 1e-3 * stable_dt_heat(p, e)
    dE_dt = (integrate(step_heat(p, e, dt)) - integrate(e)) / dt
    assert dS - dE_dt / T_bath == pytest.approx(bulk, rel=1e-8)


def test_bath_free_energy_rate_matches_finite_difference():
    T_bath = 1.5
    p = heat_problem(50, BoundaryCondition.uniform_dirichlet(T_bath), c=1.0)
    e = sin_profile(p.grid, T_bath, 0.3)
    _, _, bulk = entropy_balance(p, e)
    dt = 1e-4 * stable_dt_heat(p, e)
    th = p.thermo
    rate = -(free_energy_canonical(step_heat(p, e, dt), th, T_bath) - free_energy_canonical(e, th, T_bath)) / dt
    assert abs(rate - bulk) < 1e-6 * max(1.0, bulk)


def test_bath_free_energy_decreases_and_closed_entropy_increases():
    T_bath = 1.5
    p = heat_problem(40, BoundaryCondition.uniform_dirichlet(T_bath))
    tr = evolve_heat(p, sin_profile(p.grid, T_bath, 0.4, mode=2), t_final=0.05)
    rep = heat_audit(tr, T_bath)
    assert rep["verdict"] == "monotone" and rep["max_increment"] < 0
    q = heat_problem(40, BoundaryCondition.zero_flux())
    rep = heat_audit(evolve_heat(q, sin_profile(q.grid, 1.0, 0.4, mode=3), t_final=0.05))
    assert rep["verdict"] == "monotone" and rep["min_increment"] > 0
    assert rep["energy_drift"] < 1e-10
    assert rep["max_abs_boundary_term"] == 0.0


def test_bath_at_its_own_temperature_is_stationary():
    p = heat_problem(20, BoundaryCondition.uniform_dirichlet(2.0))
    tr = evolve_heat(p, ScalarField.constant(p.grid, 2.0), t_final=0.01)
    assert heat_audit(tr, 2.0)["verdict"] == "stationary"


def test_bath_rate_residual_shrinks_with_resolution():
    res = []
    for n in (25, 50, 100):
        p = heat_problem(n, BoundaryCondition.uniform_dirichlet(1.5))
        tr = evolve_heat(p, sin_profile(p.grid, 1.5, 0.3), t_final=0.01)
        res.append(heat_audit(tr, 1.5)["max_rate_residual"])
    assert res[0] / res[1] > 3.5 and res[1] / res[2] > 3.5


def test_evolve_heat_reports_failing_step():
    p = heat_problem(20, BoundaryCondition.zero_flux())
    e = sin_profile(p.grid, 1.0, 0.9, mode=20)
    with pytest.raises(StabilityError) as info:
        evolve_heat(p, e, t_final=1.0, dt=5 * stable_dt_heat(p, e))
    assert info.value.step == 1 and "step 1" in str(info.value)


# --- nonlinear diffusion --------------------------------------------------------------------


@pytest.mark.parametrize("sigma", SIGMAS, ids=lambda s: s.name)
def test_stationary_profile_is_a_fixed_point(sigma):
    p = ZrpPdeProblem(Grid.uniform(30), sigma, BoundaryCondition.dirichlet(1.0, 2.0))
    bar = stationary_profile(p)
    out = step_zrp_pde(p, bar, stable_dt_zrp(p, bar))
    np.testing.assert_allclose(out.values, bar.values, rtol=0, atol=1e-12)


def test_identity_sigma_reproduces_heat_step():
    g = Grid.uniform(40)
    bc = BoundaryCondition.dirichlet(1.0, 2.0)
    heat = HeatProblem(g, IdealGasThermo(1.0), kappa_constant(1.0), bc)
    zrp = ZrpPdeProblem(g, sigma_identity(), bc)
    state = ScalarField(g, 1.0 + g.centers() + 0.3 * np.sin(3 * np.pi * g.centers()))
    dt = stable_dt_zrp(zrp, state)
    a, b = state, state
    for _ in range(50):
        a, b = step_heat(heat, a, dt), step_zrp_pde(zrp, b, dt)
    np.testing.assert_allclose(a.values, b.values, rtol=0, atol=1e-12)


def test_linear_stationary_profile():
    p = ZrpPdeProblem(Grid.uniform(20), sigma_identity(), BoundaryCondition.dirichlet(1.0, 2.0))
    np.testing.assert_allclose(stationary_profile(p).values, 1.0 + p.grid.centers(), atol=1e-12)


@pytest.mark.parametrize("sigma", SIGMAS, ids=lambda s: s.name)
def test_matching_boundary_values_give_constant_profile(sigma):
    p = ZrpPdeProblem(Grid((6, 5), (0.2, 0.3)), sigma, BoundaryCondition.uniform_dirichlet(1.7, 2))
    np.testing.assert_allclose(stationary_profile(p).values, 1.7, rtol=1e-12)


def test_square_sigma_profile_is_root_of_linear():
    p = ZrpPdeProblem(Grid.uniform(25), sigma_power(2.0), BoundaryCondition.dirichlet(1.0, 2.0))
    expected = np.sqrt(1.0 + 3.0 * p.grid.centers())
    np.testing.assert_allclose(stationary_profile(p).values, expected, rtol=1e-12)
    tr = evolve_zrp_pde(p, ScalarField.constant(p.grid, 1.2), t_final=3.0, record_every=10**9, diagnostics=False)
    np.testing.assert_allclose(tr.states[-1], expected, atol=1e-10)


@pytest.mark.parametrize("E", [-2.0, 1.0, 3.0])
def test_drift_profile_matches_exponential_closed_form(E):
    a, b = 1.0, 2.0
    errs = []
    for n in (100, 200):
        p = ZrpPdeProblem(Grid.uniform(n), sigma_identity(), BoundaryCondition.dirichlet(a, b), drift=(E,))
        x = p.grid.centers()
        exact = a + (b - a) * np.expm1(E * x) / np.expm1(E)
        bar = stationary_profile(p)
        assert stationary_residual(p, bar) < 1e-10
        errs.append(np.max(np.abs(bar.values - exact)))
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_pure_zero_flux_stationary_problem_is_rejected():
    p = ZrpPdeProblem(Grid.uniform(10), sigma_identity(), BoundaryCondition.zero_flux())
    with pytest.raises(ValueError):
        stationary_profile(p)


def test_mixed_boundary_profile_is_constant_when_driven_from_one_side():
    bc = BoundaryCondition(((ZeroFlux(), Dirichlet(1.5)),))
    p = ZrpPdeProblem(Grid.uniform(12), sigma_power(2.0), bc)
    np.testing.assert_allclose(stationary_profile(p).values, 1.5, rtol=1e-12)


def test_drift_must_match_dimension():
    with pytest.raises(ValueError):
        ZrpPdeProblem(Grid.uniform(10), sigma_identity(), BoundaryCondition.dirichlet(1.0, 2.0), drift=(1.0, 0.0))


def test_step_zrp_errors():
    p = ZrpPdeProblem(Grid.uniform(20), sigma_power(2.0), BoundaryCondition.dirichlet(1.0, 2.0))
    rho = sin_profile(p.grid, 1.5, 0.5)
    with pytest.raises(StabilityError):
        step_zrp_pde(p, rho, 3 * stable_dt_zrp(p, rho))
    with pytest.raises(ValueError):
        step_zrp_pde(p, ScalarField(p.grid, np.linspace(-1.0, 1.0, 20)), 1e-6)
    with pytest.raises(StabilityError) as info:
        evolve_zrp_pde(p, sin_profile(p.grid, 1.5, 0.9, mode=15), 1.0, dt=10 * stable_dt_zrp(p, rho))
    assert info.value.step >= 1 and f"step {info.value.step}" in str(info.value)


def test_degenerate_sigma_is_rejected():
    flat = SigmaModel("flat", lambda z: z, lambda z: 0.0 * z, lambda s: s)
    p = ZrpPdeProblem(Grid.uniform(10), flat, BoundaryCondition.dirichlet(1.0, 2.0))
    with pytest.raises(StabilityError):
        stable_dt_zrp(p, ScalarField.constant(p.grid, 1.5))


def test_trace_times_must_increase():
    tr = EvolutionTrace(Grid.uniform(3))
    tr.record(0.0, np.ones(3))
    with pytest.raises(ValueError):
        tr.record(0.0, np.ones(3))


# --- Lyapunov audit --------------------------------------------------------------------


def test_audit_of_stationary_trace_is_trivial():
    p = ZrpPdeProblem(Grid.uniform(30), sigma_power(2.0), BoundaryCondition.dirichlet(1.0, 2.0))
    bar = stationary_profile(p)
    rep = lyapunov_audit(p, evolve_zrp_pde(p, bar, t_final=1e-3))
    assert np.all(rep["F"] == 0) and np.all(rep["dissipation"] == 0)
    assert rep["verdict"] == "stationary"


def test_audit_example_at_fine_resolution():
    p = ZrpPdeProblem(Grid.uniform(200), sigma_identity(), BoundaryCondition.uniform_dirichlet(1.0))
    tr = evolve_zrp_pde(p, sin_profile(p.grid, 1.0, 0.5), t_final=0.002)
    rep = lyapunov_audit(p, tr)
    assert rep["verdict"] == "monotone"
    assert np.all(np.diff(rep["F"]) < 0)
    assert rep["max_residual"] < 1e-4
    np.testing.assert_allclose(rep["F"], tr.column("F_zrp"), rtol=1e-14)


def _audit_residual(sigma, n, drift=None, t_final=0.002):
    p = ZrpPdeProblem(Grid.uniform(n), sigma, BoundaryCondition.dirichlet(1.0, 2.0), drift=drift)
    bar = stationary_profile(p)
    rho0 = bar.with_values(bar.values * (1 + 0.3 * np.sin(2 * np.pi * p.grid.centers())))
    return lyapunov_audit(p, evolve_zrp_pde(p, rho0, t_final, rho_bar=bar, diagnostics=False), bar)


@pytest.mark.parametrize("drift", [None, (1.0,), (-1.0,)])
@pytest.mark.parametrize("sigma", SIGMAS, ids=lambda s: s.name)
def test_functional_decreases_and_identity_converges(sigma, drift):
    coarse = _audit_residual(sigma, 50, drift)
    fine = _audit_residual(sigma, 100, drift)
    for rep in (coarse, fine):
        assert rep["verdict"] == "monotone"
        assert rep["max_increment"] < 0
        assert np.all(rep["dissipation"][1:] < 0)
    assert coarse["max_residual"] / fine["max_residual"] > 3.5


def _rate_gap(sigma, n, drift):
    p = ZrpPdeProblem(Grid.uniform(n), sigma, BoundaryCondition.dirichlet(1.0, 2.0), drift=drift)
    bar = stationary_profile(p)
    rho = bar.with_values(bar.values * (1 + 0.2 * np.sin(np.pi * p.grid.centers())))
    return dissipation(p, rho, bar), exact_ldf_rate(p, rho, bar)


@pytest.mark.parametrize("sigma", [sigma_identity(), sigma_power(2.0)], ids=lambda s: s.name)
def test_dissipation_is_the_exact_semi_discrete_rate_for_linear_sigma_bar(sigma):
    # sigma(rho_bar) is linear, so the link means of sigma_bar are exact
    D, rate = _rate_gap(sigma, 64, None)
    assert D == pytest.approx(rate, rel=1e-12)


@pytest.mark.parametrize("drift", [None, (1.0,), (-2.0,)])
def test_dissipation_matches_semi_discrete_rate_to_second_order(drift):
    gaps = [abs(np.subtract(*_rate_gap(sigma_saturating(), n, drift))) for n in (50, 100, 200)]
    assert gaps[0] / gaps[1] > 3.5 and gaps[1] / gaps[2] > 3.5


def test_audit_rejects_grid_mismatch():
    p = ZrpPdeProblem(Grid.uniform(20), sigma_identity(), BoundaryCondition.dirichlet(1.0, 2.0))
    q = ZrpPdeProblem(Grid.uniform(21), sigma_identity(), BoundaryCondition.dirichlet(1.0, 2.0))
    tr = evolve_zrp_pde(p, sin_profile(p.grid, 1.5, 0.2), 1e-3)
    with pytest.raises(ValueError):
        lyapunov_audit(q, tr)


def test_report_flags_increase():
    rep = lyapunov_report([0.0, 1.0, 2.0], [1.0, 0.5, 0.7], [-0.5, -0.5, -0.5])
    assert rep["verdict"] == "non-monotone"
    assert lyapunov_report([0.0, 1.0, 2.0], [1.0, 0.5, 0.5], [-0.5, 0.0, 0.0])["verdict"] == "non-strict"


@settings(max_examples=15)
@given(amp=st.floats(0.05, 0.8), mode=st.integers(1, 4), sigma=st.sampled_from(SIGMAS),
       drift=st.sampled_from([None, (1.0,), (-1.0,)]))
def test_functional_is_monotone_for_random_perturbations(amp, mode, sigma, drift):
    p = ZrpPdeProblem(Grid.uniform(40), sigma, BoundaryCondition.dirichlet(1.0, 2.0), drift=drift)
    bar = stationary_profile(p)
    rho0 = bar.with_values(bar.values * (1 + amp * np.sin(mode * np.pi * p.grid.centers())))
    tr = evolve_zrp_pde(p, rho0, 0.01, rho_bar=bar)
    assert np.all(np.diff(tr.column("F_zrp")) <= 0)
    assert ldf_zrp(rho0, bar, sigma) > 0


def test_local_equilibrium_entropy_uses_thermo():
    g = Grid.uniform(4)
    assert s_local_equilibrium(ScalarField.constant(g, np.e), IdealGasThermo(2.0)) == pytest.approx(2.0)
