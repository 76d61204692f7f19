import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lyapunov_lab.functionals import DistributionField, VelocityGrid, maxwellian, s_gas
from lyapunov_lab.kinetic import (
    KineticState,
    MomentMatchingError,
    discrete_maxwellian,
    evolve_bgk,
    h_theorem_audit,
    moments,
    step_bgk,
)

V1 = VelocityGrid.uniform(64, 8.0, 1)
V3 = VelocityGrid.uniform(16, 6.0, 3)


def random_state(vgrid, rng):
    f = rng.uniform(0.05, 1.0, vgrid.size) * np.exp(-0.5 * vgrid.speed_sq / rng.uniform(0.5, 2.0))
    return KineticState(vgrid, f)


def bimodal(vgrid, u=2.0, width=0.6):
    v = vgrid.nodes[:, 0]
    return KineticState(vgrid, np.exp(-0.5 * ((v - u) / width) ** 2) + np.exp(-0.5 * ((v + u) / width) ** 2))


def max_entropy_at(s):
    N, P, E = moments(s)
    f_eq, _ = discrete_maxwellian(s.vgrid, N, np.zeros_like(P), E)
    return s_gas(DistributionField(s.vgrid, f_eq))


# --- moments ------------------------------------------------------------------------


@pytest.mark.parametrize("vgrid", [V1, V3], ids=["1d", "3d"])
def test_moments_of_matched_maxwellian(vgrid):
    f, _ = discrete_maxwellian(vgrid, 1.0, np.zeros(vgrid.dimension), 1.5)
    N, P, E = moments(KineticState(vgrid, f))
    assert N == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(P, 0.0, atol=1e-8)
    assert E == pytest.approx(1.5, abs=1e-8)


def test_moments_of_single_node():
    f = np.zeros(V1.size)
    f[40] = 2.0
    N, P, E = moments(KineticState(V1, f))
    w, v0 = V1.weights[40], V1.nodes[40, 0]
    assert N == pytest.approx(w * 2.0)
    assert P[0] == pytest.approx(w * 2.0 * v0)
    assert E == pytest.approx(w * 2.0 * v0**2 / 2)


def test_moments_are_linear():
    s = random_state(V3, np.random.default_rng(0))
    N, P, E = moments(s)
    N2, P2, E2 = moments(KineticState(V3, 2 * s.f))
    assert (N2, E2) == (pytest.approx(2 * N), pytest.approx(2 * E))
    np.testing.assert_allclose(P2, 2 * P)


def test_state_validation():
    with pytest.raises(ValueError):
        KineticState(V1, -np.ones(V1.size))
    with pytest.raises(ValueError):
        KineticState(V1, np.ones(V1.size + 1))
    with pytest.raises(ValueError):
        KineticState(V1, np.zeros(V1.size))


def test_continuum_maxwellian_is_close_to_matched_one():
    cont = maxwellian(1.0, 1.0, 0.5, 1.0, V1)
    disc, _ = discrete_maxwellian(V1, 1.0, [0.0], 0.5)
    np.testing.assert_allclose(disc, cont.values, atol=1e-8)


# --- BGK step -----------------------------------------------------------------------


def test_maxwellian_is_a_fixed_point():
    f, _ = discrete_maxwellian(V1, 1.3, [0.4], 1.1)
    out = step_bgk(KineticState(V1, f), tau=1.0, dt=0.5)
    np.testing.assert_allclose(out.f, f, rtol=1e-10, atol=1e-14)


def test_full_relaxation_gives_the_equilibrium():
    s = random_state(V1, np.random.default_rng(1))
    N, P, E = moments(s)
    f_eq, _ = discrete_maxwellian(V1, N, P, E)
    np.testing.assert_allclose(step_bgk(s, tau=0.7, dt=0.7).f, f_eq, rtol=1e-10)


def test_step_rejects_dt_above_tau():
    s = random_state(V1, np.random.default_rng(2))
    with pytest.raises(ValueError):
        step_bgk(s, tau=1.0, dt=1.5)
    with pytest.raises(ValueError):
        step_bgk(s, tau=1.0, dt=0.0)


def test_narrow_grid_fails_to_match():
    narrow = VelocityGrid.uniform(8, 1.0, 1)
    with pytest.raises(MomentMatchingError):
        discrete_maxwellian(narrow, 1.0, [0.0], 5.0)


def test_bimodal_relaxes_to_maximum_entropy():
    s0 = bimodal(V1)
    assert abs(moments(s0)[1][0]) < 1e-12
    trace = evolve_bgk(s0, tau=1.0, dt=0.5, n_steps=60)
    rep = h_theorem_audit(trace)
    assert rep["verdict"] == "monotone"
    S_eq = max_entropy_at(s0)
    gap = S_eq - rep["S_gas"]
    # strictly increasing until within 1e-8 of the maximum
    converged = np.argmax(gap < 1e-8)
    assert gap[-1] < 1e-8 and converged > 0
    assert np.all(rep["dS"][:converged] > 0)


@pytest.mark.parametrize("vgrid", [V1, V3], ids=["1d", "3d"])
def test_conservation_over_many_steps(vgrid):
    trace = evolve_bgk(random_state(vgrid, np.random.default_rng(3)), tau=1.0, dt=0.25, n_steps=200)
    rep = h_theorem_audit(trace)
    assert max(rep["drift"].values()) < 1e-10


def test_non_conserved_moment_decays_exponentially():
    s = bimodal(V1)
    tau, dt = 1.0, 1e-3
    v4 = V1.weights * V1.nodes[:, 0] ** 4
    N, P, E = moments(s)
    f_eq, _ = discrete_maxwellian(V1, N, P, E)
    m_eq = v4 @ f_eq
    dev0 = v4 @ s.f - m_eq
    for k in range(1, 2001):
        s = step_bgk(s, tau, dt)
        if k % 500 == 0:
            ratio = (v4 @ s.f - m_eq) / dev0
            assert ratio == pytest.approx(np.exp(-k * dt / tau), rel=0.01)


def test_maxwellian_trace_is_stationary():
    f, _ = discrete_maxwellian(V3, 1.0, np.zeros(3), 1.5)
    rep = h_theorem_audit(evolve_bgk(KineticState(V3, f), 1.0, 0.5, 10))
    assert rep["verdict"] == "stationary"


@settings(max_examples=25)
@given(seed=st.integers(0, 2**32 - 1), ratio=st.floats(0.05, 1.0), dim=st.sampled_from([1, 3]))
def test_entropy_never_decreases(seed, ratio, dim):
    vgrid = V1 if dim == 1 else V3
    s0 = random_state(vgrid, np.random.default_rng(seed))
    trace = evolve_bgk(s0, tau=1.0, dt=ratio, n_steps=20)
    rep = h_theorem_audit(trace)
    assert rep["min_dS"] >= -1e-12
    assert rep["S_gas"][-1] <= max_entropy_at(s0) + 1e-12


@settings(max_examples=25)
@given(seed=st.integers(0, 2**32 - 1))
def test_nonequilibrium_start_strictly_gains_entropy(seed):
    s0 = random_state(V1, np.random.default_rng(seed))
    rep = h_theorem_audit(evolve_bgk(s0, tau=1.0, dt=0.5, n_steps=5))
    assert np.all(rep["dS"] > 0)
