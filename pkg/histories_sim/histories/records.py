"""
Record projectors for decoherent sets with a pure initial state.

A record R_b is a final-time projector perfectly correlated with the
history b: R_b C_a |psi> = delta_ab C_a |psi>. For a decoherent set the
branch vectors C_a |psi> are mutually orthogonal, and the records used
here are the ray projectors onto them (orthonormalized by modified
Gram-Schmidt with one re-orthogonalization pass). Branches of norm below
TOL_BRANCH carry no record and fall into the residual projector. Records
are stored in the Heisenberg picture at the final time t_n, the picture
the class operators live in.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from histories_sim.config import config
from histories_sim.hilbert.constants import TOL_BRANCH
from histories_sim.hilbert.operators import (
    ProjectorFamily,
    StateVector,
    as_density,
    as_matrix,
    unitary_propagator,
)
from histories_sim.histories.functional import decoherence_functional, is_decoherent
from histories_sim.histories.schedule import HistorySchedule, HistoryString, as_history, class_operators
from histories_sim.utils.errors import NotDecoherentError, NumericalGuardError, ValidationError

logger = logging.getLogger(__name__)

RESIDUAL = "residual"
CORRELATION_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class RecordSet:
    """
    Record projectors plus the residual projector for the unspanned subspace.

    Attributes:
        strings: History strings of the schedule, in order
        assignment: Record label for each string (the string itself, or RESIDUAL)
        projectors: Record label -> projector, RESIDUAL included
        time: Final sampling time t_n
    """

    strings: Tuple[HistoryString, ...]
    assignment: Tuple[Hashable, ...]
    projectors: Dict[Hashable, np.ndarray]
    time: float
    t0: float = 0.0

    @property
    def labels(self) -> Tuple[Hashable, ...]:
        return tuple(self.projectors)

    def record_of(self, string) -> Hashable:
        return self.assignment[self.strings.index(as_history(string))]

    def projector(self, label: Hashable) -> np.ndarray:
        key = label if label == RESIDUAL else as_history(label)
        try:
            return self.projectors[key]
        except KeyError:
            raise ValidationError(f"no record labelled {label}") from None

    def family(self) -> ProjectorFamily:
        """The records as a validated projector family."""
        return ProjectorFamily(tuple(self.projectors.values()), tuple(str(k) for k in self.projectors))

    def swapped(self, first, second) -> "RecordSet":
        """Copy with the projectors of two records exchanged (a deliberately wrong record set)."""
        a, b = as_history(first), as_history(second)
        projectors = dict(self.projectors)
        projectors[a], projectors[b] = self.projectors[b], self.projectors[a]
        return RecordSet(self.strings, self.assignment, projectors, self.time, self.t0)

    @classmethod
    def from_projectors(
        cls,
        schedule: HistorySchedule,
        records: Mapping,
        strings: Optional[Sequence] = None,
    ) -> "RecordSet":
        """
        Records supplied explicitly as history string -> projector.

        Strings without a record map to the residual projector 1 - sum R.
        """
        strings = tuple(schedule.strings() if strings is None else [schedule.validate_string(s) for s in strings])
        projectors: Dict[Hashable, np.ndarray] = {as_history(k): as_matrix(v) for k, v in records.items()}
        total = sum(projectors.values()) if projectors else np.zeros((schedule.dim, schedule.dim))
        projectors[RESIDUAL] = np.eye(schedule.dim) - total
        assignment = tuple(s if s in projectors else RESIDUAL for s in strings)
        return cls(strings, assignment, projectors, schedule.final_time, schedule.t0)


def _pure_vector(state) -> np.ndarray:
    if isinstance(state, StateVector):
        return state.amplitudes
    density = as_density(state)
    if not density.is_pure():
        raise ValidationError(f"records need a pure initial state; purity is {density.purity:.6f}")
    eigenvalues, eigenvectors = np.linalg.eigh(density.matrix)
    return eigenvectors[:, -1]


def _orthonormalize(vectors: List[np.ndarray]) -> List[np.ndarray]:
    """Modified Gram-Schmidt with a second pass against earlier vectors."""
    basis: List[np.ndarray] = []
    for vector in vectors:
        v = vector / np.linalg.norm(vector)
        for _ in range(2):
            for q in basis:
                v = v - np.vdot(q, v) * q
        norm = np.linalg.norm(v)
        if norm < 0.5:
            raise NumericalGuardError("records", "branch orthogonality", f"branch lost {1 - norm:.3e} of its norm")
        basis.append(v / norm)
    return basis


def construct_records(schedule: HistorySchedule, psi, tol: Optional[float] = None) -> RecordSet:
    """
    Record projectors onto the rays of C_a |psi>.

    Raises:
        ValidationError: If the initial state is mixed
        NotDecoherentError: If the set is not decoherent at ``tol``
    """
    tol = config.DEFAULT_TOLERANCE if tol is None else tol
    vector = _pure_vector(psi)
    density = np.outer(vector, vector.conj())
    check = is_decoherent(decoherence_functional(schedule, density), tol)
    if not check.holds:
        raise NotDecoherentError("records exist only for decoherent sets", check.worst, check.pair)

    strings, stacked = class_operators(schedule)
    branches = stacked @ vector
    norms = np.linalg.norm(branches, axis=1)
    carried = [i for i in range(len(strings)) if norms[i] >= TOL_BRANCH]
    basis = _orthonormalize([branches[i] for i in carried])

    projectors: Dict[Hashable, np.ndarray] = {}
    for index, q in zip(carried, basis):
        projectors[strings[index]] = np.outer(q, q.conj())
    spanned = sum(projectors.values()) if projectors else np.zeros((schedule.dim, schedule.dim))
    projectors[RESIDUAL] = np.eye(schedule.dim) - spanned
    assignment = tuple(s if s in projectors else RESIDUAL for s in strings)
    records = RecordSet(tuple(strings), assignment, projectors, schedule.final_time, schedule.t0)

    # overlaps up to tol between branches leave residuals of order tol / ||branch||
    guard = max(CORRELATION_TOL, 10.0 * tol / float(np.min(norms[carried]))) if carried else CORRELATION_TOL
    failures = correlation_failures(schedule, density, records, guard)
    if failures:
        worst = max(f.residual for f in failures)
        raise NumericalGuardError("records", "R_b C_a psi = delta_ab C_a psi", f"residual {worst:.3e}")
    logger.debug(f"Constructed {len(carried)} records ({len(strings) - len(carried)} empty branches)")
    return records


def joint_probability(schedule: HistorySchedule, psi, records: RecordSet, string, record_label) -> float:
    """Tr(R_b C_a |psi><psi| C_a^dagger) = ||R_b C_a psi||^2."""
    vector = _pure_vector(psi)
    _, stacked = class_operators(schedule, [string])
    branch = records.projector(record_label) @ (stacked[0] @ vector)
    return float(np.real(np.vdot(branch, branch)))


@dataclass(frozen=True)
class CorrelationFailure:
    record: Hashable
    string: HistoryString
    residual: float


@dataclass(frozen=True)
class RecordReport:
    """Outcome of checking that records imply decoherence."""

    passed: bool
    correlation_failures: Tuple[CorrelationFailure, ...]
    max_offdiagonal: float
    final_time_mismatch: float
    reconstructed: np.ndarray = field(repr=False)
    tol: float = CORRELATION_TOL

    def summary(self) -> str:
        if self.passed:
            return f"records imply decoherence (offdiag {self.max_offdiagonal:.2e}, final-time {self.final_time_mismatch:.2e})"
        failures = ", ".join(f"R[{f.record}] x C[{f.string}] = {f.residual:.2e}" for f in self.correlation_failures[:5])
        return f"record correlation fails at {len(self.correlation_failures)} pairs: {failures}"


def correlation_failures(
    schedule: HistorySchedule, rho, records: RecordSet, tol: float = CORRELATION_TOL
) -> List[CorrelationFailure]:
    """All (record, string) pairs where ||R_b C_a rho - delta C_a rho|| exceeds ``tol``."""
    density = as_density(rho).matrix if not isinstance(rho, np.ndarray) else rho
    strings, stacked = class_operators(schedule, records.strings)
    weighted = stacked @ density
    failures = []
    for label, projector in records.projectors.items():
        for string, c_rho, owner in zip(strings, weighted, records.assignment):
            target = c_rho if owner == label else 0.0
            residual = float(np.linalg.norm(projector @ c_rho - target))
            if residual > tol:
                failures.append(CorrelationFailure(label, string, residual))
    return failures


def records_imply_decoherence(
    schedule: HistorySchedule, rho, records: RecordSet, tol: float = CORRELATION_TOL
) -> RecordReport:
    """
    Verify the record relations for a candidate record set.

    Reconstructs D(a, a') = sum_b Tr(R_b C_a rho C_a'^dagger R_b) from the
    record-resolved pieces, checks that its off-diagonal entries vanish,
    and checks Tr(R_a rho(t_n)) = Tr(C_a rho C_a^dagger) in the
    Schrodinger picture.
    """
    density = as_density(rho).matrix
    failures = correlation_failures(schedule, density, records, tol)

    strings, stacked = class_operators(schedule, records.strings)
    n = len(strings)
    reconstructed = np.zeros((n, n), dtype=complex)
    for projector in records.projectors.values():
        left = (projector @ stacked @ density).reshape(n, -1)
        right = (projector @ stacked).reshape(n, -1).conj()
        reconstructed += left @ right.T
    offdiag = reconstructed.copy()
    np.fill_diagonal(offdiag, 0.0)
    max_offdiagonal = float(np.max(np.abs(offdiag))) if n > 1 else 0.0

    unitary = unitary_propagator(schedule.hamiltonian, records.time - records.t0, schedule.hbar)
    evolved = unitary @ density @ unitary.conj().T
    mismatch = 0.0
    for string, owner, c in zip(strings, records.assignment, stacked):
        if owner == RESIDUAL:
            continue
        record_schrodinger = unitary @ records.projectors[owner] @ unitary.conj().T
        left = float(np.real(np.trace(record_schrodinger @ evolved)))
        right = float(np.real(np.trace(c @ density @ c.conj().T)))
        mismatch = max(mismatch, abs(left - right))

    passed = not failures and max_offdiagonal <= tol and mismatch <= tol
    report = RecordReport(passed, tuple(failures), max_offdiagonal, mismatch, reconstructed, tol)
    log = logger.debug if passed else logger.warning
    log(report.summary())
    return report
