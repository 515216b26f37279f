"""
Unit tests for region-entry histories on a lattice.
Tests the restricted propagators, exhaustiveness, the antisymmetric zero,
parity, environment-induced decoherence and the Langevin oracle.
"""
import math

import numpy as np
import pytest
from scipy.stats import norm

from histories_sim.arrival import (
    CrossingSchedule,
    LatticeRegion,
    crossing_class_operators,
    crossing_decoherence,
    environment_sweep,
    langevin_crossing_probability,
    restricted_propagator,
)
from histories_sim.hilbert.lattice import LatticeModel, build_lattice_hamiltonian, gaussian_wavepacket, reflect, superpose
from histories_sim.hilbert.operators import unitary_propagator
from histories_sim.open_systems import QbmLatticeModel
from histories_sim.utils.errors import DimensionMismatchError, ValidationError


@pytest.fixture
def short_schedule(small_lattice):
    """Half-line x >= 0 on the 64-site lattice, ten slices of 0.1."""
    return CrossingSchedule(small_lattice, LatticeRegion(lower=0.0), tau=1.0, n_steps=10)


@pytest.fixture
def incoming(small_lattice):
    return gaussian_wavepacket(small_lattice, -2.0, 1.5, 0.7)


# ==================== REGION AND SCHEDULE TESTS ====================

def test_lattice_region_validation(small_lattice):
    with pytest.raises(ValidationError):
        LatticeRegion()
    with pytest.raises(ValidationError) as exc:
        LatticeRegion(lower=1.0, upper=0.0)
    assert exc.value.issues[0][0] == "region.upper"
    region = LatticeRegion(lower=small_lattice.x[40])
    mask = region.mask(small_lattice)
    assert mask[40] and not mask[39]
    assert region.mirrored() == LatticeRegion(upper=-small_lattice.x[40])


def test_schedule_collects_every_issue(small_lattice):
    with pytest.raises(ValidationError) as exc:
        CrossingSchedule(small_lattice, LatticeRegion(lower=0.0), tau=-1.0, n_steps=1, method="zeno")
    assert {path for path, _ in exc.value.issues} == {"tau", "n_steps", "method"}
    with pytest.raises(ValidationError):
        CrossingSchedule(small_lattice, LatticeRegion(lower=-100.0), tau=1.0, n_steps=4)


def test_schedule_labels(small_lattice, short_schedule):
    assert short_schedule.labels == ("not-enter", "enter")
    crossing = CrossingSchedule(small_lattice, LatticeRegion(upper=0.0), 1.0, 4, "wall", "cross")
    assert crossing.labels == ("stay", "cross")
    assert len(crossing.sides()) == 2
    assert short_schedule.refined(40).slice_time == pytest.approx(0.025)


# ==================== CLASS OPERATOR TESTS ====================

@pytest.mark.parametrize("method", ["trotter", "wall"])
def test_class_operators_are_exhaustive(small_lattice, method):
    schedule = CrossingSchedule(small_lattice, LatticeRegion(lower=0.0), 1.0, 10, method)
    operators = crossing_class_operators(schedule)
    assert operators.exhaustiveness_defect() <= 1e-12
    assert np.linalg.norm(operators.stay, 2) <= 1.0 + 1e-10
    assert set(operators.as_dict()) == {"not-enter", "enter"}


def test_empty_region_gives_free_propagator(small_lattice):
    """A region beyond the lattice leaves every path allowed."""
    schedule = CrossingSchedule(small_lattice, LatticeRegion(lower=100.0), 1.0, 8)
    free = unitary_propagator(build_lattice_hamiltonian(small_lattice).matrix, 1.0)
    assert restricted_propagator(schedule).close_to(free, tol=1e-10)


# ==================== CLOSED SYSTEM TESTS ====================

def test_antisymmetric_state_never_crosses():
    """An odd state evolves as if a wall stood at the origin."""
    lattice = LatticeModel.symmetric(200, 0.25)
    packet = gaussian_wavepacket(lattice, 4.0, -2.0, 0.7)
    odd = superpose(packet, reflect(lattice, packet), coefficients=(1.0, -1.0))
    schedule = CrossingSchedule(lattice, LatticeRegion(upper=0.0), 2.0, 20, "wall", "cross")
    result = crossing_decoherence(schedule, odd)
    assert result.p_enter <= 1e-8
    assert result.p_not_enter == pytest.approx(1.0, abs=1e-8)
    assert result.epsilon == 0.0


def test_crossing_respects_parity(short_schedule, small_lattice, incoming):
    """Mirroring both the region and the state leaves the probabilities alone."""
    direct = crossing_decoherence(short_schedule, incoming)
    mirrored = crossing_decoherence(short_schedule.mirrored(), reflect(small_lattice, incoming))
    assert direct.p_enter == pytest.approx(mirrored.p_enter, abs=1e-10)
    assert direct.epsilon == pytest.approx(mirrored.epsilon, abs=1e-8)


def test_incoming_packet_interferes(short_schedule, incoming):
    result = crossing_decoherence(short_schedule, incoming)
    summary = result.to_dict()
    assert 0.0 < result.p_enter < 1.0
    assert summary["normalization_error"] < 1e-8
    assert summary["labels"] == ["not-enter", "enter"]
    assert result.epsilon > 0.0


def test_rejects_wrong_state_size(short_schedule):
    with pytest.raises(DimensionMismatchError):
        crossing_decoherence(short_schedule, np.eye(8) / 8)


# ==================== ENVIRONMENT TESTS ====================

def test_silent_environment_reproduces_closed_result(short_schedule, small_lattice, incoming):
    closed = crossing_decoherence(short_schedule, incoming)
    silent = crossing_decoherence(short_schedule, incoming, QbmLatticeModel(small_lattice, D_loc=0.0))
    np.testing.assert_allclose(silent.matrix.entries, closed.matrix.entries, atol=1e-10)
    assert silent.environment == {"D_loc": 0.0, "gamma": 0.0}


def test_environment_reduces_interference(short_schedule, small_lattice, incoming):
    closed = crossing_decoherence(short_schedule, incoming)
    noisy = crossing_decoherence(short_schedule, incoming, QbmLatticeModel(small_lattice, D_loc=2.0), dt=0.01)
    assert noisy.epsilon < closed.epsilon
    assert noisy.to_dict()["environment_D_loc"] == 2.0


def test_environment_needs_sliced_construction(small_lattice, incoming):
    schedule = CrossingSchedule(small_lattice, LatticeRegion(lower=0.0), 1.0, 10, "wall")
    with pytest.raises(ValidationError):
        crossing_decoherence(schedule, incoming, QbmLatticeModel(small_lattice, D_loc=1.0), dt=0.01)


@pytest.mark.slow
def test_stronger_environment_decoheres_more():
    """The bundled arrival setting: epsilon falls as D_loc grows."""
    lattice = LatticeModel.symmetric(160, 0.25)
    schedule = CrossingSchedule(lattice, LatticeRegion(lower=0.0), 3.0, 30)
    packet = gaussian_wavepacket(lattice, -4.0, 2.0, 1.0)
    closed = crossing_decoherence(schedule, packet)
    assert closed.epsilon > 0.1
    results = environment_sweep(schedule, packet, [QbmLatticeModel(lattice, D_loc=d) for d in (0.5, 2.0)], dt=0.01)
    epsilons = [closed.epsilon] + [r.epsilon for r in results]
    assert epsilons == sorted(epsilons, reverse=True)


# ==================== LANGEVIN TESTS ====================

def test_free_langevin_matches_ballistic_estimate(small_lattice):
    """Without noise, entering by tau means x0 + p0 tau / M >= 0."""
    lattice = LatticeModel.symmetric(160, 0.25)
    schedule = CrossingSchedule(lattice, LatticeRegion(lower=0.0), 3.0, 30)
    result = langevin_crossing_probability(schedule, -4.0, 2.0, 1.0, D_loc=0.0, n_samples=4000, seed=20240611)
    expected = norm.cdf(2.0 / math.sqrt(1.0 + 9.0 * 0.25))
    assert result.probability == pytest.approx(expected, abs=4.0 * result.stderr + 0.02)
    assert result.to_dict()["n_samples"] == 4000


def test_langevin_is_thread_independent(short_schedule):
    kwargs = dict(D_loc=1.0, n_samples=600, seed=3, chunk=128)
    serial = langevin_crossing_probability(short_schedule, -2.0, 1.5, 0.7, threads=1, **kwargs)
    parallel = langevin_crossing_probability(short_schedule, -2.0, 1.5, 0.7, threads=4, **kwargs)
    assert serial.probability == parallel.probability


def test_langevin_validation(short_schedule):
    with pytest.raises(ValidationError):
        langevin_crossing_probability(short_schedule, 0.0, 0.0, 1.0, D_loc=1.0, n_samples=0)
    with pytest.raises(ValidationError):
        langevin_crossing_probability(short_schedule, 0.0, 0.0, -1.0, D_loc=1.0)
