"""
Unit tests for open-system dynamics.
Tests Lindblad integration, the open decoherence functional, QSD
unravelling, the hybrid classical-quantum model and the lattice position
master equation.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from conftest import random_family, random_hermitian, random_state
from histories_sim.hilbert.lattice import LatticeModel, gaussian_wavepacket, position_bins
from histories_sim.hilbert.operators import ProjectorFamily, StateVector
from histories_sim.histories import HistorySchedule, decoherence_functional, is_decoherent
from histories_sim.open_systems import (
    HybridState,
    LindbladModel,
    QbmLatticeModel,
    hybrid_ensemble,
    hybrid_simulate,
    lindblad_evolve,
    open_decoherence_functional,
    qbm_position_master_evolve,
    qsd_ensemble,
    qsd_step,
    qsd_trajectory,
    screen_decoherence_functional,
    trace_distance,
)
from histories_sim.utils.errors import DimensionMismatchError, NumericalGuardError, ValidationError


@pytest.fixture
def damped_qubit(lowering):
    """Two-level atom, unit splitting, unit decay rate."""
    return LindbladModel(np.diag([0.0, 1.0]).astype(complex), (lowering,))


# ==================== LINDBLAD TESTS ====================

def test_amplitude_damping_closed_form(damped_qubit):
    """Excited population decays as exp(-t), coherence as exp(-t/2)."""
    psi = StateVector(np.array([0.6, 0.8]))
    out = lindblad_evolve(damped_qubit, psi, dt=1e-3, steps=2000, record_every=100)
    assert out.times[-1] == pytest.approx(2.0)
    assert out.final[1, 1].real == pytest.approx(0.64 * np.exp(-2.0), abs=1e-8)
    assert abs(out.final[0, 1]) == pytest.approx(0.48 * np.exp(-1.0), abs=1e-8)
    assert out.max_trace_drift < 1e-10
    assert out.min_eigenvalue > -1e-12
    assert len(out) == 21


def test_closed_evolution_keeps_purity(rng):
    h = random_hermitian(rng, 3)
    psi = StateVector(random_state(rng, 3))
    out = lindblad_evolve(LindbladModel(h), psi, dt=1e-3, steps=500)
    purity = np.real(np.trace(out.final @ out.final))
    assert purity == pytest.approx(1.0, abs=1e-9)


def test_expectation_series(damped_qubit, sigma):
    out = lindblad_evolve(damped_qubit, np.diag([0.0, 1.0]), dt=1e-3, steps=1000, record_every=500)
    z = out.expectation(sigma["z"])
    np.testing.assert_allclose(z, 1.0 - 2.0 * np.exp(-out.times), atol=1e-8)


def test_positivity_guard_on_oversized_step(lowering):
    """An unstable step drives the ground population negative."""
    model = LindbladModel(np.zeros((2, 2)), (np.sqrt(10.0) * lowering,))
    with pytest.raises(NumericalGuardError) as exc:
        lindblad_evolve(model, np.diag([0.0, 1.0]), dt=1.0, steps=1)
    assert exc.value.invariant == "positivity"


def test_lindblad_input_validation(damped_qubit):
    with pytest.raises(ValidationError):
        lindblad_evolve(damped_qubit, np.diag([1.0, 0.0]), dt=0.0, steps=10)
    with pytest.raises(DimensionMismatchError):
        lindblad_evolve(damped_qubit, np.eye(3) / 3, dt=1e-3, steps=10)
    with pytest.raises(DimensionMismatchError):
        LindbladModel(np.zeros((2, 2)), (np.zeros((3, 3)),))


def test_transfer_maps_are_shared_across_threads(damped_qubit):
    """Concurrent propagations agree and leave one read-only map per duration."""
    rho = np.array([[0.36, 0.48], [0.48, 0.64]], dtype=complex)
    durations = [0.1, 0.25, 0.5] * 16
    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(lambda t: damped_qubit.propagate_two_sided(rho, t), durations))
    for duration, out in zip(durations, results):
        np.testing.assert_allclose(out, results[durations.index(duration)], atol=0.0)
    assert sorted(damped_qubit._transfers) == [0.1, 0.25, 0.5]
    cached = damped_qubit._transfers[0.5]
    assert not cached.flags.writeable
    damped_qubit.propagate_two_sided(rho, 0.5)
    assert damped_qubit._transfers[0.5] is cached


# ==================== OPEN FUNCTIONAL TESTS ====================

def test_open_functional_reduces_to_closed(rng):
    """Without Lindblad operators the open functional is the unitary one."""
    h = random_hermitian(rng, 3)
    families = (random_family(rng, 3, 2), random_family(rng, 3, 3))
    rho = StateVector(random_state(rng, 3)).density()
    times = (0.5, 1.2)
    open_matrix = open_decoherence_functional(LindbladModel(h), times, families, rho, t0=0.0)
    closed = decoherence_functional(HistorySchedule(times, families, h), rho)
    np.testing.assert_allclose(open_matrix.entries, closed.entries, atol=1e-10)


def test_dephasing_suppresses_interference(sigma):
    """A sigma_z environment decoheres z-basis histories of a precessing spin."""
    family = ProjectorFamily.computational(2)
    psi = StateVector.basis(2, 0)

    def worst(rate):
        lindblads = (np.sqrt(rate) * sigma["z"],) if rate else ()
        model = LindbladModel(sigma["x"], lindblads)
        return is_decoherent(open_decoherence_functional(model, (0.5, 1.0, 1.5), (family,) * 3, psi, t0=0.0)).worst

    assert worst(20.0) < 0.1 * worst(0.0)


def test_open_functional_rejects_late_origin(damped_qubit):
    family = ProjectorFamily.computational(2)
    with pytest.raises(ValidationError):
        open_decoherence_functional(damped_qubit, (0.5, 1.0), (family, family), np.eye(2) / 2, t0=0.7)


# ==================== QSD TESTS ====================

def test_qsd_step_drift_without_noise(damped_qubit):
    """Zero noise leaves the deterministic drift (<L^dag> L - L^dag L/2 - |<L>|^2/2) psi - i H psi."""
    a = 1.0 / np.sqrt(2.0)
    step = qsd_step(damped_qubit, [a, a], 0.01, [0.0])
    expected = np.array([a, a]) + 0.01 * a * np.array([3.0 / 8.0, -5.0 / 8.0 - 1j])
    np.testing.assert_allclose(step.amplitudes, expected / np.linalg.norm(expected), atol=1e-14)
    ground = qsd_step(damped_qubit, [1.0, 0.0], 0.01, [0.3 - 0.1j])
    np.testing.assert_allclose(ground.amplitudes, [1.0, 0.0], atol=1e-14)


def test_qsd_step_checks_shapes(damped_qubit):
    with pytest.raises(ValidationError):
        qsd_step(damped_qubit, [1.0, 0.0], 0.01, [0.0, 0.0])
    with pytest.raises(DimensionMismatchError):
        qsd_step(damped_qubit, [1.0, 0.0, 0.0], 0.01, [0.0])


def test_qsd_is_thread_count_independent(damped_qubit, sigma):
    """Fixed chunks reduced in order give bitwise-identical ensembles."""
    args = (damped_qubit, [0.0, 1.0], 1e-2, 50, 24, 1234)
    serial = qsd_ensemble(*args, observables={"z": sigma["z"]}, threads=1, chunk=8)
    parallel = qsd_ensemble(*args, observables={"z": sigma["z"]}, threads=3, chunk=8)
    assert np.array_equal(serial.mean_rho, parallel.mean_rho)
    assert np.array_equal(serial.observables["z"], parallel.observables["z"])


def test_single_trajectory_matches_ensemble_member(damped_qubit, sigma):
    ensemble = qsd_ensemble(damped_qubit, [0.0, 1.0], 1e-2, 40, 6, 99, observables={"z": sigma["z"]}, chunk=4)
    single = qsd_trajectory(damped_qubit, [0.0, 1.0], 1e-2, 40, seed=99, index=5)
    np.testing.assert_allclose(single.expectation(sigma["z"]), ensemble.observables["z"][5], atol=1e-12)


def test_qsd_trajectories_stay_normalized(damped_qubit):
    single = qsd_trajectory(damped_qubit, [0.6, 0.8], 1e-2, 100, seed=5, record_every=10)
    np.testing.assert_allclose(np.linalg.norm(single.states, axis=1), 1.0, atol=1e-12)


def test_qsd_validation(damped_qubit):
    with pytest.raises(ValidationError):
        qsd_ensemble(damped_qubit, [0.0, 1.0], 1e-2, 10, 0, 1)
    with pytest.raises(DimensionMismatchError):
        qsd_ensemble(damped_qubit, [1.0, 0.0, 0.0], 1e-2, 10, 4, 1)


@pytest.mark.slow
def test_qsd_mean_reproduces_lindblad(damped_qubit):
    """The ensemble mean tracks the master equation within sampling error."""
    dt, steps = 1e-3, 1000
    reference = lindblad_evolve(damped_qubit, StateVector(np.array([0.6, 0.8])), dt, steps, record_every=100)
    ensemble = qsd_ensemble(damped_qubit, [0.6, 0.8], dt, steps, 2000, master_seed=20240605, record_every=100)
    np.testing.assert_allclose(ensemble.times, reference.times)
    distances = [trace_distance(a, b) for a, b in zip(ensemble.mean_rho, reference.states)]
    assert max(distances) < 0.05


@pytest.mark.slow
def test_qsd_sampling_error_scales_as_inverse_root_n(damped_qubit):
    """
    Two independent N-trajectory means share the Euler-Maruyama bias, so
    their trace distance is pure sampling error: RMS over record times and
    repeats falls as N^(-1/2) within 20% across N = 500, 2000, 8000.
    """
    dt, steps, repeats = 1e-3, 500, 8
    sizes = (500, 2000, 8000)
    rms = []
    for n in sizes:
        squares = []
        for r in range(repeats):
            first, second = (
                qsd_ensemble(damped_qubit, [0.6, 0.8], dt, steps, n, master_seed=seed, record_every=50, chunk=500)
                for seed in (10 * n + 2 * r, 10 * n + 2 * r + 1)
            )
            squares.extend(trace_distance(a, b) ** 2 for a, b in zip(first.mean_rho[1:], second.mean_rho[1:]))
        rms.append(np.sqrt(np.mean(squares)))
    slope = np.polyfit(np.log(sizes), np.log(rms), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)
    assert rms[0] / rms[-1] == pytest.approx(4.0, rel=0.3)


def test_trace_distance_of_orthogonal_states():
    assert trace_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(1.0)
    assert trace_distance(np.eye(2) / 2, np.eye(2) / 2) == 0.0


# ==================== HYBRID TESTS ====================

@pytest.fixture
def which_path():
    """Light two-level particle at x = +-1 in an equal superposition."""
    position = np.diag([1.0, -1.0]).astype(complex)
    model = LindbladModel(np.zeros((2, 2)), (np.sqrt(5.0) * position,))
    hybrid = HybridState(0.0, 0.0, StateVector.normalized([1.0, 1.0]), coupling=1.0)
    return hybrid, model, position


def test_uncoupled_classical_oscillator(which_path):
    """With no coupling X follows the free harmonic solution."""
    _, model, position = which_path
    hybrid = HybridState(1.0, 0.0, StateVector.normalized([1.0, 1.0]), coupling=0.0, spring=1.0)
    run = hybrid_simulate(hybrid, model, position, dt=0.01, steps=300, seed=3, mode="mean-field")
    assert run.X[0, -1] == pytest.approx(np.cos(3.0), abs=1e-8)


def test_mean_field_stays_centred(which_path):
    """Zero mean position exerts no force; every mean-field run is identical."""
    hybrid, model, position = which_path
    ensemble = hybrid_ensemble(hybrid, model, position, 0.01, 200, 5, master_seed=1, mode="mean-field")
    assert ensemble.n_runs == 5
    np.testing.assert_allclose(ensemble.final_positions(), 0.0, atol=1e-12)


def test_hybrid_rejects_unknown_mode(which_path):
    hybrid, model, position = which_path
    with pytest.raises(ValidationError):
        hybrid_ensemble(hybrid, model, position, 0.01, 10, 2, master_seed=1, mode="bohmian")


@pytest.mark.slow
def test_stochastic_runs_split_into_two_branches(which_path):
    """Localization picks one position; the classical particle follows it."""
    hybrid, model, position = which_path
    ensemble = hybrid_ensemble(hybrid, model, position, 0.01, 500, 200, master_seed=20240602, mode="stochastic")
    final = ensemble.final_positions()
    assert np.mean(np.abs(final) > 5.0) > 0.9
    assert 0.3 < np.mean(final > 0) < 0.7


# ==================== POSITION MASTER EQUATION TESTS ====================

def test_default_decoherence_coefficient():
    lattice = LatticeModel.symmetric(32, 0.25)
    model = QbmLatticeModel(lattice, gamma=0.05, temperature=10.0)
    assert model.D_loc == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        QbmLatticeModel(lattice, D_loc=-1.0)


def test_kinetic_free_decay_is_exact(small_lattice):
    """Without the kinetic term rho_ij decays as exp(-D (x_i - x_j)^2 t)."""
    model = QbmLatticeModel(small_lattice, D_loc=0.7, kinetic=False)
    rho0 = gaussian_wavepacket(small_lattice, 0.0, 1.0, 1.0).density().matrix
    out = qbm_position_master_evolve(model, rho0, dt=0.05, steps=20)
    expected = rho0 * np.exp(-0.7 * model.separation_squared * 1.0)
    np.testing.assert_allclose(out.final, expected, atol=1e-12)


def test_position_master_matches_lindblad_form():
    """Strang splitting agrees with RK4 on the equivalent Lindblad model."""
    lattice = LatticeModel.symmetric(16, 0.5)
    model = QbmLatticeModel(lattice, D_loc=0.5)
    rho0 = gaussian_wavepacket(lattice, 0.0, 0.5, 0.8).density()
    split = qbm_position_master_evolve(model, rho0, dt=1e-3, steps=200, check_boundary_mass=False)
    rk4 = lindblad_evolve(model.to_lindblad_model(), rho0, dt=1e-3, steps=200)
    assert trace_distance(split.final, rk4.final) < 1e-3


def test_friction_has_no_lindblad_form(small_lattice):
    with pytest.raises(ValidationError):
        QbmLatticeModel(small_lattice, D_loc=1.0, gamma=0.1).to_lindblad_model()


def test_screen_functional_matches_generic_functional(small_lattice):
    """The diagonal-family shortcut agrees with the pairwise propagation."""
    model = QbmLatticeModel(small_lattice, D_loc=1.0)
    rho0 = gaussian_wavepacket(small_lattice, 0.5, 1.0, 0.5).density()
    screen = screen_decoherence_functional(model, rho0, [0.0], [-1.0, 1.0], duration=0.5, dt=0.01)
    families = (position_bins(small_lattice, [0.0]), position_bins(small_lattice, [-1.0, 1.0]))
    generic = open_decoherence_functional(model, (0.0, 0.5), families, rho0, dt=0.01)
    assert [str(s) for s in screen.strings] == [str(s) for s in generic.strings]
    np.testing.assert_allclose(screen.entries, generic.entries, atol=1e-10)


def test_screen_functional_needs_room(small_lattice):
    """Probability on the outer sites aborts the run."""
    model = QbmLatticeModel(small_lattice, D_loc=1.0)
    edge = gaussian_wavepacket(small_lattice, small_lattice.x[1], 0.0, 0.5).density()
    with pytest.raises(NumericalGuardError):
        screen_decoherence_functional(model, edge, [0.0], [0.0], duration=0.5, dt=0.01)
