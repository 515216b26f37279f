"""
Unit tests for history schedules and the decoherence functional.
Tests the functional's algebra on random instances, the consistency and
decoherence conditions, coarse graining, sum rules and retrodiction.
"""
import numpy as np
import pytest

from conftest import random_family, random_hermitian, random_state
from histories_sim.hilbert.operators import ProjectorFamily, StateVector
from histories_sim.histories import (
    DecoherenceMatrix,
    HistorySchedule,
    HistoryString,
    approx_decoherence_epsilon,
    class_operator_sum,
    coarse_grain,
    coarse_grain_matrix,
    decoherence_functional,
    is_consistent,
    is_decoherent,
    linear_positivity,
    probability,
    retrodict,
    shannon_information,
    sum_rule_violation,
)
from histories_sim.utils.errors import (
    DimensionMismatchError,
    EnumerationLimitError,
    InconsistentSetError,
    NumericalGuardError,
    ValidationError,
    ZeroProbabilityError,
)


def random_schedule(rng, dim, n_slots):
    times = tuple(np.sort(rng.uniform(0.1, 3.0, n_slots)) + 0.01 * np.arange(n_slots))
    families = tuple(random_family(rng, dim, int(rng.integers(2, dim + 1))) for _ in range(n_slots))
    return HistorySchedule(times, families, random_hermitian(rng, dim))


@pytest.fixture
def precessing_qubit(sigma):
    """sigma_x precession sampled twice in the z basis; not consistent."""
    family = ProjectorFamily.computational(2)
    return HistorySchedule((0.5, 1.0), (family, family), sigma["x"])


# ==================== SCHEDULE TESTS ====================

def test_history_string_formatting():
    assert str(HistoryString((0, "b"))) == "(0,b)"
    assert HistoryString((1, 2, 3)).without(1) == (1, 3)
    assert HistoryString((1, 2)).replace(0, "m") == HistoryString(("m", 2))


def test_schedule_validation(sigma):
    family = ProjectorFamily.computational(2)
    with pytest.raises(ValidationError):
        HistorySchedule((1.0, 1.0), (family, family), sigma["x"])
    with pytest.raises(ValidationError):
        HistorySchedule((1.0,), (family, family), sigma["x"])
    with pytest.raises(DimensionMismatchError):
        HistorySchedule((1.0,), (ProjectorFamily.computational(3),), sigma["x"])


def test_strings_enumeration_guard(precessing_qubit):
    """Strings come in lexicographic slot order and honour the limit."""
    assert [str(s) for s in precessing_qubit.strings()] == ["(0,0)", "(0,1)", "(1,0)", "(1,1)"]
    with pytest.raises(EnumerationLimitError):
        precessing_qubit.strings(limit=3)


def test_class_operators_sum_to_identity(rng):
    """Summing the chain operators over every string telescopes to 1."""
    schedule = random_schedule(rng, 4, 3)
    total = class_operator_sum(schedule, schedule.strings())
    assert total.close_to(np.eye(4), tol=1e-10)


# ==================== FUNCTIONAL ALGEBRA TESTS ====================

@pytest.mark.slow
def test_functional_algebra_on_random_instances(rng):
    """Hermiticity, normalization and the Cauchy-Schwarz bound on 1000 random sets."""
    for _ in range(1000):
        dim = int(rng.integers(2, 7))
        schedule = random_schedule(rng, dim, int(rng.integers(1, 4)))
        rho = StateVector(random_state(rng, dim)).density()
        matrix = decoherence_functional(schedule, rho)
        d = matrix.entries
        np.testing.assert_allclose(d, d.conj().T, atol=1e-12)
        assert abs(matrix.total() - 1.0) < 1e-9
        p = matrix.probabilities
        assert np.all(p > -1e-12)
        assert np.all(np.abs(d) ** 2 <= np.outer(p, p) + 1e-12)


def test_single_time_sets_are_decoherent(rng):
    """With one slot D(a, b) = Tr(P_b P_a rho) vanishes off the diagonal."""
    family = random_family(rng, 5, 3)
    schedule = HistorySchedule((1.3,), (family,), random_hermitian(rng, 5))
    matrix = decoherence_functional(schedule, StateVector(random_state(rng, 5)))
    assert is_decoherent(matrix, tol=1e-12)


def test_conserved_quantity_histories_decohere_exactly(rng):
    """Eigenprojectors of H at every time only admit constant histories."""
    h = random_hermitian(rng, 4)
    family = ProjectorFamily.from_hermitian(h)
    schedule = HistorySchedule((0.4, 1.1, 2.9), (family,) * 3, h)
    matrix = decoherence_functional(schedule, StateVector(random_state(rng, 4)))
    check = is_decoherent(matrix, tol=1e-10)
    assert check.holds, str(check)
    for string, p in matrix.probability_map().items():
        if len(set(string.alternatives)) > 1:
            assert p == pytest.approx(0.0, abs=1e-12)


def test_probability_matches_diagonal(precessing_qubit):
    psi = StateVector.basis(2, 0)
    matrix = decoherence_functional(precessing_qubit, psi)
    for string in precessing_qubit.strings():
        assert probability(precessing_qubit, psi, string) == pytest.approx(matrix.entry(string, string).real, abs=1e-14)


def test_dimension_mismatch_rejected(precessing_qubit):
    with pytest.raises(DimensionMismatchError):
        decoherence_functional(precessing_qubit, StateVector.basis(3, 0))


def test_validate_flags_non_hermitian_entries():
    entries = np.array([[0.5, 0.1 + 0.2j], [0.1 + 0.2j, 0.5]])
    with pytest.raises(NumericalGuardError) as exc:
        DecoherenceMatrix(((0,), (1,)), entries).validate()
    assert exc.value.invariant == "decoherence functional hermiticity"


def test_non_hermitian_contraction_is_reported(precessing_qubit, mocker):
    """A defect in the raw contraction reaches validate() instead of being averaged away."""
    matrix = decoherence_functional(precessing_qubit, StateVector.basis(2, 0))
    assert np.max(np.abs(matrix.entries - matrix.entries.conj().T)) <= 1e-12
    skewed = np.array([[0.5, 0.5], [0.0, 0.5]], dtype=complex)
    mocker.patch("histories_sim.histories.functional.as_density", return_value=mocker.Mock(matrix=skewed))
    with pytest.raises(NumericalGuardError) as exc:
        decoherence_functional(precessing_qubit, skewed)
    assert exc.value.invariant == "decoherence functional hermiticity"


def test_validate_flags_broken_normalization():
    matrix = DecoherenceMatrix(((0,), (1,)), np.diag([0.5, 0.4]))
    with pytest.raises(NumericalGuardError) as exc:
        matrix.validate()
    assert exc.value.invariant == "normalization"
    assert DecoherenceMatrix(((0,), (1,)), np.diag([0.5, 0.4]), exhaustive=False).validate()


# ==================== CONDITION TESTS ====================

def test_precessing_qubit_is_not_consistent(precessing_qubit):
    """Branches (0,0) and (1,0) end on the same ray with real overlap."""
    matrix = decoherence_functional(precessing_qubit, StateVector.basis(2, 0))
    c2, s2 = np.cos(0.5) ** 2, np.sin(0.5) ** 2
    assert matrix.entry((0, 0), (1, 0)).real == pytest.approx(-c2 * s2, abs=1e-12)
    consistency = is_consistent(matrix, tol=1e-8)
    assert not consistency
    assert consistency.pair is not None


def test_consistency_is_weaker_than_decoherence(rng):
    for _ in range(20):
        schedule = random_schedule(rng, 3, 2)
        matrix = decoherence_functional(schedule, StateVector(random_state(rng, 3)))
        assert is_consistent(matrix).worst <= is_decoherent(matrix).worst + 1e-15


def test_sum_rule_violation_equals_interference(precessing_qubit):
    """p(coarse) - p(a) - p(b) is twice the real interference term."""
    psi = StateVector.basis(2, 0)
    fine = decoherence_functional(precessing_qubit, psi)
    coarse = decoherence_functional(coarse_grain(precessing_qubit, 0, [0, 1], "m"), psi)
    gap = coarse.entry(("m", 0), ("m", 0)).real - fine.entry((0, 0), (0, 0)).real - fine.entry((1, 0), (1, 0)).real
    assert gap == pytest.approx(2.0 * fine.entry((0, 0), (1, 0)).real, abs=1e-12)
    assert sum_rule_violation(fine) >= abs(gap) - 1e-12


def test_coarse_grain_matrix_matches_coarse_schedule(rng):
    """Summing D blocks equals recomputing on the merged family."""
    schedule = random_schedule(rng, 4, 2)
    family = schedule.families[1]
    merged = list(family.labels[:2])
    psi = StateVector(random_state(rng, 4))
    summed = coarse_grain_matrix(decoherence_functional(schedule, psi), 1, merged, "m")
    direct = decoherence_functional(coarse_grain(schedule, 1, merged, "m"), psi)
    assert len(summed) == len(direct)
    for a in direct.strings:
        for b in direct.strings:
            assert summed.entry(a, b) == pytest.approx(direct.entry(a, b), abs=1e-12)


def test_linear_positivity_equals_probability_when_consistent(rng):
    h = random_hermitian(rng, 3)
    family = ProjectorFamily.from_hermitian(h)
    schedule = HistorySchedule((0.5, 1.5), (family, family), h)
    psi = StateVector(random_state(rng, 3))
    for string in schedule.strings():
        assert linear_positivity(schedule, psi, string) == pytest.approx(probability(schedule, psi, string), abs=1e-12)


# ==================== EPSILON TESTS ====================

def test_epsilon_is_bounded(precessing_qubit):
    epsilon = approx_decoherence_epsilon(decoherence_functional(precessing_qubit, StateVector.basis(2, 0)))
    assert 0.0 < float(epsilon) <= 1.0
    assert epsilon.pair is not None


@pytest.mark.slow
def test_epsilon_is_bounded_on_random_qutrit_pairs(rng):
    """1000 random three-level systems sampled at two times: 0 <= epsilon <= 1."""
    for _ in range(1000):
        schedule = random_schedule(rng, 3, 2)
        matrix = decoherence_functional(schedule, StateVector(random_state(rng, 3)))
        if np.count_nonzero(matrix.probabilities > 1e-12) < 2:
            continue
        epsilon = float(approx_decoherence_epsilon(matrix))
        assert 0.0 <= epsilon <= 1.0 + 1e-12


def test_epsilon_needs_two_populated_histories():
    """A deterministic set leaves no admissible pair."""
    schedule = HistorySchedule((1.0,), (ProjectorFamily.computational(2),), np.zeros((2, 2)))
    matrix = decoherence_functional(schedule, StateVector.basis(2, 0))
    with pytest.raises(ValidationError):
        approx_decoherence_epsilon(matrix)


# ==================== INFERENCE TESTS ====================

def test_retrodiction_on_conserved_histories(rng):
    h = random_hermitian(rng, 3)
    family = ProjectorFamily.from_hermitian(h)
    schedule = HistorySchedule((0.5, 1.0, 2.0), (family,) * 3, h)
    matrix = decoherence_functional(schedule, StateVector(random_state(rng, 3)))
    result = retrodict(matrix, condition=1, tol=1e-10)
    past, p = result.most_likely()
    assert past == (1, 1)
    assert p == pytest.approx(1.0, abs=1e-9)
    assert result.condition_probability == pytest.approx(matrix.entry((1, 1, 1), (1, 1, 1)).real, abs=1e-12)


def test_retrodiction_refuses_inconsistent_sets(precessing_qubit):
    matrix = decoherence_functional(precessing_qubit, StateVector.basis(2, 0))
    with pytest.raises(InconsistentSetError):
        retrodict(matrix, condition=0)


def test_retrodiction_on_vanishing_condition():
    probabilities = {(0, 0): 1.0, (0, 1): 0.0}
    with pytest.raises(ZeroProbabilityError):
        retrodict(probabilities, condition=1)
    with pytest.raises(ValidationError):
        retrodict(probabilities, condition="missing")


def test_shannon_information():
    assert shannon_information([1.0, 0.0]) == pytest.approx(0.0)
    assert shannon_information({"a": 0.5, "b": 0.5}) == pytest.approx(-np.log(2.0))
    with pytest.raises(ValidationError):
        shannon_information([1.2, -0.2])
