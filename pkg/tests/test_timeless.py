"""
Unit tests for region-entry probabilities.
Tests dwell times of classical orbits, stationary ensembles, the thermal
oracle and the Wigner-weighted semiclassical estimate.
"""
import math

import numpy as np
import pytest

from histories_sim.hilbert.lattice import LatticeModel, lattice_eigenstate
from histories_sim.hilbert.operators import as_density
from histories_sim.timeless import (
    HarmonicPotential,
    QuarticPotential,
    Region,
    TrajectorySolver,
    check_stationarity,
    energy_density,
    from_arrays,
    integrate_trajectory,
    make_potential,
    microcanonical_shell,
    region_entry_probability,
    reparam_invariant_check,
    semiclassical_probability,
    thermal_harmonic,
    time_in_region,
)
from histories_sim.timeless.dynamics import segment_fraction_inside
from histories_sim.utils.errors import DimensionMismatchError, UndersamplingError, ValidationError


@pytest.fixture
def oscillator():
    """Unit harmonic oscillator integrated over two periods."""
    return TrajectorySolver(1.0, HarmonicPotential(1.0), step=0.01, horizon=15.0)


# ==================== POTENTIAL AND REGION TESTS ====================

def test_make_potential():
    assert make_potential({"kind": "harmonic", "omega": 2.0}, mass=3.0) == HarmonicPotential(2.0, 3.0)
    assert make_potential({}).name == "free"
    assert isinstance(make_potential({"kind": "quartic", "quartic": 0.5}), QuarticPotential)
    with pytest.raises(ValidationError):
        make_potential({"kind": "morse"})
    with pytest.raises(ValidationError):
        QuarticPotential(-1.0)


def test_region_validation():
    with pytest.raises(ValidationError):
        Region.interval(1.0, 1.0)
    with pytest.raises(ValidationError):
        Region.boxes([([0.0], [2.0]), ([1.0], [3.0])])
    with pytest.raises(ValidationError):
        Region.interval(0.0, math.inf)
    region = Region.boxes([([0.0], [1.0]), ([2.0], [3.0])])
    assert region.n_boxes == 2
    np.testing.assert_array_equal(region.contains(np.array([[0.5], [1.5], [2.5]])), [True, False, True])
    assert Region.interval(0.2, 0.8).subset_of(region)


def test_segment_fraction_inside():
    start, end = np.array([[0.0]]), np.array([[2.0]])
    assert segment_fraction_inside(start, end, Region.interval(0.5, 1.0))[0] == pytest.approx(0.25)
    assert segment_fraction_inside(end, start, Region.interval(0.5, 1.0))[0] == pytest.approx(0.25)


# ==================== DWELL TESTS ====================

def test_harmonic_dwell_fraction(oscillator):
    """An orbit of amplitude A spends a third of its period beyond A/2."""
    orbit = integrate_trajectory(oscillator, [1.0], [0.0])
    assert orbit.period == pytest.approx(2.0 * math.pi, rel=1e-4)
    assert orbit.energy_drift < 1e-4
    dwell = time_in_region(orbit, Region.interval(0.5, 10.0))
    assert dwell / orbit.period == pytest.approx(1.0 / 3.0, rel=1e-3)


def test_dwell_is_reparametrization_invariant(oscillator):
    """Halving the step or starting half a period later leaves the dwell unchanged."""
    orbit = integrate_trajectory(oscillator, [1.0], [0.3])
    report = reparam_invariant_check(orbit, Region.interval(0.2, 5.0), tolerance=1e-3)
    assert report.passed, report
    assert report.dwell_shifted is not None


def test_narrow_region_is_undersampled(oscillator):
    orbit = integrate_trajectory(oscillator, [1.0], [0.0])
    with pytest.raises(UndersamplingError):
        time_in_region(orbit, Region.interval(0.5, 0.51))


# ==================== ENSEMBLE TESTS ====================

def test_ensemble_weights_are_checked():
    ensemble = from_arrays([[0.0], [1.0]], [[0.0], [0.0]], weights=[1.0, 3.0])
    np.testing.assert_allclose(ensemble.weights, [0.25, 0.75])
    with pytest.raises(ValidationError):
        from_arrays([[0.0]], [[0.0]], weights=[0.0])
    with pytest.raises(ValidationError):
        thermal_harmonic(1.0, 1.0, 1.0, n_samples=0, seed=1)


def test_energy_profiles_are_stationary(oscillator):
    starts = thermal_harmonic(1.0, 1.0, 1.0, n_samples=200, seed=4)
    boltzmann = energy_density(oscillator, lambda e: np.exp(-e))
    assert check_stationarity(boltzmann, oscillator, [1.0, 2.5], starts, tolerance=1e-4).stationary
    shifted = lambda x, p: np.exp(-((x[:, 0] - 1.0) ** 2))  # noqa: E731
    lopsided = check_stationarity(shifted, oscillator, [1.0], starts, tolerance=1e-4)
    assert not lopsided.stationary


def test_shell_entry_is_all_or_nothing(oscillator):
    shell = microcanonical_shell(1.0, 1.0, 1.0, 200, seed=1)
    assert region_entry_probability(shell, oscillator, Region.interval(2.0, 3.0)).probability == 0.0
    inside = region_entry_probability(shell, oscillator, Region.interval(0.5, 10.0))
    assert inside.probability == 1.0
    assert inside.periodic_fraction == 1.0


def test_thermal_entry_matches_closed_form(oscillator):
    """P(amplitude > d) = exp(-M omega^2 d^2 / 2kT) for the canonical ensemble."""
    ensemble = thermal_harmonic(1.0, 1.0, 1.0, n_samples=4000, seed=20240601)
    for lower in (0.5, 1.0, 2.0):
        result = region_entry_probability(ensemble, oscillator, Region.interval(lower, lower + 20.0))
        assert result.probability == pytest.approx(math.exp(-0.5 * lower ** 2), abs=4.0 * result.stderr + 0.01)
    summary = result.to_dict()
    assert summary["n_samples"] == 4000
    assert summary["epsilon"] == pytest.approx(oscillator.default_epsilon)


def test_entry_probability_is_thread_independent(oscillator):
    ensemble = thermal_harmonic(1.0, 1.0, 1.0, n_samples=300, seed=8)
    region = Region.interval(1.0, 21.0)
    serial = region_entry_probability(ensemble, oscillator, region, threads=1, chunk=64)
    parallel = region_entry_probability(ensemble, oscillator, region, threads=4, chunk=64)
    assert serial.probability == parallel.probability
    assert np.array_equal(serial.dwell, parallel.dwell)


def test_entry_probability_checks_dimensions(oscillator):
    ensemble = thermal_harmonic(1.0, 1.0, 1.0, n_samples=10, seed=2)
    plane = Region.boxes([([0.0, 0.0], [1.0, 1.0])])
    with pytest.raises(DimensionMismatchError):
        region_entry_probability(ensemble, oscillator, plane)
    with pytest.raises(ValidationError):
        region_entry_probability(ensemble, oscillator, Region.interval(0.0, 1.0), epsilon=-1.0)


# ==================== SEMICLASSICAL TESTS ====================

@pytest.fixture
def harmonic_lattice():
    return LatticeModel.harmonic(128, 0.1, omega=1.0)


@pytest.mark.slow
def test_ground_state_wigner_entry(harmonic_lattice, oscillator):
    """The ground-state Wigner function is thermal with kT = hbar omega / 2."""
    rho = as_density(lattice_eigenstate(harmonic_lattice, 0))
    result = semiclassical_probability(
        rho, harmonic_lattice, oscillator, Region.interval(1.0, 20.0), n_samples=4000, seed=20240609
    )
    assert result.reliable
    assert result.probability == pytest.approx(math.exp(-1.0), abs=4.0 * result.stderr + 0.02)
    assert result.to_dict()["seed"] == 20240609


def test_excited_state_carries_negative_weight(harmonic_lattice, oscillator):
    rho = as_density(lattice_eigenstate(harmonic_lattice, 1))
    result = semiclassical_probability(
        rho, harmonic_lattice, oscillator, Region.interval(-0.5, 0.5), n_samples=1000, seed=5
    )
    assert result.negative_fraction > 0.1
    assert result.sample_negative_fraction > 0.0


def test_semiclassical_needs_matching_mass(harmonic_lattice):
    heavy = TrajectorySolver(2.0, HarmonicPotential(1.0, 2.0), step=0.01, horizon=15.0)
    rho = as_density(lattice_eigenstate(harmonic_lattice, 0))
    with pytest.raises(ValidationError):
        semiclassical_probability(rho, harmonic_lattice, heavy, Region.interval(1.0, 20.0), n_samples=100)
