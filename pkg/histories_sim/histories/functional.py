"""
Decoherence functional D(a, a') = Tr(C_a rho C_a'^dagger) and the
diagnostics built on it: probabilities, consistency, decoherence,
approximate decoherence, sum rules, linear positivity, retrodiction and
Shannon information.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import xlogy

from histories_sim.config import config
from histories_sim.hilbert.constants import TOL_NORMALIZATION, TOL_STRUCTURE
from histories_sim.hilbert.operators import as_density
from histories_sim.histories.schedule import HistorySchedule, HistoryString, as_history, class_operators
from histories_sim.utils.errors import (
    DimensionMismatchError,
    InconsistentSetError,
    NumericalGuardError,
    ValidationError,
    ZeroProbabilityError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DecoherenceMatrix:
    """
    D(a, a') over an ordered list of history strings.

    ``exhaustive`` marks a matrix built over every string of its schedule;
    only then must the entries sum to one.
    """

    strings: Tuple[HistoryString, ...]
    entries: np.ndarray
    exhaustive: bool = True

    def __post_init__(self):
        strings = tuple(as_history(s) for s in self.strings)
        entries = np.array(self.entries, dtype=complex, copy=True)
        if entries.shape != (len(strings), len(strings)):
            raise DimensionMismatchError(f"entries shape {entries.shape} for {len(strings)} strings")
        entries.setflags(write=False)
        object.__setattr__(self, "strings", strings)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(strings)})

    def __len__(self) -> int:
        return len(self.strings)

    def index(self, string) -> int:
        try:
            return self._index[as_history(string)]
        except KeyError:
            raise ValidationError(f"history {string} not in decoherence matrix") from None

    def entry(self, a, b) -> complex:
        return complex(self.entries[self.index(a), self.index(b)])

    @property
    def probabilities(self) -> np.ndarray:
        return np.real(np.diag(self.entries)).copy()

    def probability_map(self) -> Dict[HistoryString, float]:
        return dict(zip(self.strings, self.probabilities.tolist()))

    def total(self) -> complex:
        return complex(np.sum(self.entries))

    def validate(self, tol: float = TOL_STRUCTURE, norm_tol: float = TOL_NORMALIZATION) -> "DecoherenceMatrix":
        """
        Check Hermiticity, diagonal positivity and (for exhaustive sets)
        normalization.

        Raises:
            NumericalGuardError: naming the invariant that failed
        """
        hermiticity = float(np.max(np.abs(self.entries - self.entries.conj().T))) if len(self) else 0.0
        if hermiticity > tol:
            raise NumericalGuardError("histories", "decoherence functional hermiticity", f"{hermiticity:.3e}")
        floor = float(np.min(self.probabilities)) if len(self) else 0.0
        if floor < -tol:
            raise NumericalGuardError("histories", "diagonal positivity", f"min diagonal {floor:.3e}")
        if self.exhaustive:
            drift = abs(self.total() - 1.0)
            if drift > norm_tol:
                raise NumericalGuardError("histories", "normalization", f"|sum D - 1| = {drift:.3e}")
        return self

    def offdiagonal(self) -> np.ndarray:
        masked = np.array(self.entries, copy=True)
        np.fill_diagonal(masked, 0.0)
        return masked

    def to_dict(self) -> Dict:
        return {
            "strings": [str(s) for s in self.strings],
            "real": np.real(self.entries).tolist(),
            "imag": np.imag(self.entries).tolist(),
            "exhaustive": self.exhaustive,
        }


@dataclass(frozen=True)
class ConsistencyCheck:
    """Outcome of a consistency or decoherence test."""

    holds: bool
    worst: float
    pair: Optional[Tuple[HistoryString, HistoryString]]
    tol: float
    condition: str

    def __bool__(self) -> bool:
        return self.holds

    def __str__(self) -> str:
        pair = "none" if self.pair is None else f"{self.pair[0]} vs {self.pair[1]}"
        verdict = "holds" if self.holds else "fails"
        return f"{self.condition} {verdict}: worst {self.worst:.3e} ({pair}) at tol {self.tol:.1e}"


@dataclass(frozen=True)
class EpsilonResult:
    """Approximate-decoherence parameter with the pairs left out of the maximum."""

    epsilon: float
    pair: Optional[Tuple[HistoryString, HistoryString]]
    excluded: Tuple[Tuple[HistoryString, HistoryString], ...] = field(default=())

    def __float__(self) -> float:
        return self.epsilon


# ==================== CONSTRUCTION ====================

def decoherence_functional(
    schedule: HistorySchedule,
    rho,
    strings: Optional[Sequence] = None,
) -> DecoherenceMatrix:
    """
    D(a, a') = Tr(C_a rho C_a'^dagger) over ``strings`` (default: all).

    Entries are evaluated as independent contractions and validated as
    computed; a Hermiticity defect above 1e-10 raises.
    """
    density = as_density(rho).matrix
    if density.shape[0] != schedule.dim:
        raise DimensionMismatchError(f"rho dim {density.shape[0]} vs schedule dim {schedule.dim}")
    exhaustive = strings is None
    strings, stacked = class_operators(schedule, strings)
    n = len(strings)
    left = (stacked @ density).reshape(n, -1)
    right = stacked.reshape(n, -1).conj()
    entries = left @ right.T
    matrix = DecoherenceMatrix(tuple(strings), entries, exhaustive)
    logger.debug(f"Decoherence functional over {n} strings, total {matrix.total():.12f}")
    return matrix.validate()


def probability(schedule: HistorySchedule, rho, string) -> float:
    """p(a) = Tr(C_a rho C_a^dagger)."""
    density = as_density(rho).matrix
    _, stacked = class_operators(schedule, [string])
    c = stacked[0]
    value = float(np.real(np.trace(c @ density @ c.conj().T)))
    if value < -TOL_STRUCTURE or value > 1.0 + TOL_STRUCTURE:
        raise NumericalGuardError("histories", "probability range", f"p = {value:.3e}")
    return value


def linear_positivity(schedule: HistorySchedule, rho, string) -> float:
    """Re Tr(C_a rho); equals probability(a) on decoherent sets."""
    density = as_density(rho).matrix
    _, stacked = class_operators(schedule, [string])
    return float(np.real(np.trace(stacked[0] @ density)))


# ==================== CONDITIONS ====================

def _worst_offdiagonal(matrix: DecoherenceMatrix, values: np.ndarray) -> Tuple[float, Optional[Tuple]]:
    if len(matrix) < 2:
        return 0.0, None
    masked = np.array(values, copy=True)
    np.fill_diagonal(masked, -np.inf)
    i, j = np.unravel_index(int(np.argmax(masked)), masked.shape)
    return float(masked[i, j]), (matrix.strings[i], matrix.strings[j])


def is_consistent(matrix: DecoherenceMatrix, tol: Optional[float] = None) -> ConsistencyCheck:
    """True iff max over a != a' of |Re D(a, a')| <= tol."""
    tol = config.DEFAULT_TOLERANCE if tol is None else tol
    worst, pair = _worst_offdiagonal(matrix, np.abs(np.real(matrix.entries)))
    return ConsistencyCheck(worst <= tol, worst, pair, tol, "consistency")


def is_decoherent(matrix: DecoherenceMatrix, tol: Optional[float] = None) -> ConsistencyCheck:
    """True iff max over a != a' of |D(a, a')| <= tol."""
    tol = config.DEFAULT_TOLERANCE if tol is None else tol
    worst, pair = _worst_offdiagonal(matrix, np.abs(matrix.entries))
    return ConsistencyCheck(worst <= tol, worst, pair, tol, "decoherence")


def approx_decoherence_epsilon(matrix: DecoherenceMatrix, min_diagonal: float = 1e-12) -> EpsilonResult:
    """
    epsilon = max over a != a' of |D(a,a')|^2 / (D(a,a) D(a',a')).

    Pairs with a diagonal at or below ``min_diagonal`` are excluded and
    reported. Bounded by 1 through the Cauchy-Schwarz inequality.

    Raises:
        ValidationError: If every pair is excluded
    """
    p = matrix.probabilities
    n = len(matrix)
    included = p > min_diagonal
    excluded = tuple(
        (matrix.strings[i], matrix.strings[j])
        for i in range(n)
        for j in range(i + 1, n)
        if not (included[i] and included[j])
    )
    if n < 2:
        return EpsilonResult(0.0, None, excluded)
    idx = np.flatnonzero(included)
    if len(idx) < 2:
        raise ValidationError(f"no history pair with both diagonals above {min_diagonal:.0e}")
    sub = matrix.entries[np.ix_(idx, idx)]
    denominator = np.outer(p[idx], p[idx])
    ratio = np.abs(sub) ** 2 / denominator
    np.fill_diagonal(ratio, -np.inf)
    i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    epsilon = float(ratio[i, j])
    if epsilon > 1.0 + 1e-9:
        raise NumericalGuardError("histories", "|D(a,b)|^2 <= D(a,a) D(b,b)", f"epsilon = {epsilon:.6f}")
    if excluded:
        logger.debug(f"approx_decoherence_epsilon excluded {len(excluded)} pairs with vanishing diagonal")
    return EpsilonResult(epsilon, (matrix.strings[idx[i]], matrix.strings[idx[j]]), excluded)


def _single_slot_pairs(strings: Sequence[HistoryString]) -> List[Tuple[int, int]]:
    """Index pairs of strings that differ at exactly one slot."""
    pairs: List[Tuple[int, int]] = []
    if not strings:
        return pairs
    for slot in range(len(strings[0])):
        groups: Dict[Tuple, List[int]] = defaultdict(list)
        for index, string in enumerate(strings):
            groups[string.without(slot)].append(index)
        for members in groups.values():
            for a in range(len(members)):
                for b in range(a + 1, len(members)):
                    pairs.append((members[a], members[b]))
    return pairs


def sum_rule_violation(matrix: DecoherenceMatrix) -> float:
    """
    Largest |p(a or b) - p(a) - p(b)| over merges of two alternatives at
    one slot; each equals 2|Re D(a, b)|.
    """
    worst = 0.0
    for i, j in _single_slot_pairs(matrix.strings):
        worst = max(worst, 2.0 * abs(float(np.real(matrix.entries[i, j]))))
    return worst


def coarse_grain_matrix(
    matrix: DecoherenceMatrix, slot: int, labels: Sequence[Hashable], new_label: Hashable
) -> DecoherenceMatrix:
    """Sum the D blocks of strings whose ``slot`` label is merged."""
    merged = set(labels)
    targets: List[HistoryString] = []
    positions: Dict[HistoryString, int] = {}
    assignment = []
    for string in matrix.strings:
        target = string.replace(slot, new_label) if string[slot] in merged else string
        if target not in positions:
            positions[target] = len(targets)
            targets.append(target)
        assignment.append(positions[target])
    aggregation = np.zeros((len(targets), len(matrix)))
    aggregation[assignment, np.arange(len(matrix))] = 1.0
    entries = aggregation @ matrix.entries @ aggregation.T
    return DecoherenceMatrix(tuple(targets), entries, matrix.exhaustive)


# ==================== INFERENCE ====================

@dataclass(frozen=True)
class Retrodiction:
    """Conditional distribution over past strings given the final alternative."""

    condition: Hashable
    condition_probability: float
    conditional: Dict[Tuple[Hashable, ...], float]

    def most_likely(self) -> Tuple[Tuple[Hashable, ...], float]:
        past = max(self.conditional, key=self.conditional.get)
        return past, self.conditional[past]


def retrodict(
    source: Union[DecoherenceMatrix, Mapping],
    condition: Hashable,
    tol: Optional[float] = None,
) -> Retrodiction:
    """
    p(a_1 ... a_{n-1} | a_n) = p(a_1 ... a_n) / p(a_n).

    Args:
        source: DecoherenceMatrix (checked for consistency) or a mapping
            history string -> probability taken from a consistent set
        condition: Present (final-slot) alternative
        tol: Consistency tolerance

    Raises:
        InconsistentSetError: If the set fails consistency at ``tol``
        ZeroProbabilityError: If p(a_n) vanishes
    """
    if isinstance(source, DecoherenceMatrix):
        check = is_consistent(source, tol)
        if not check.holds:
            raise InconsistentSetError("retrodiction needs a consistent set", check.worst, check.pair)
        probabilities = source.probability_map()
    else:
        probabilities = {as_history(k): float(v) for k, v in source.items()}

    joint = {s.alternatives[:-1]: p for s, p in probabilities.items() if s.alternatives[-1] == condition}
    if not joint:
        raise ValidationError(f"no history ends in alternative {condition!r}")
    total = float(np.sum(list(joint.values())))
    if total <= 1e-15:
        raise ZeroProbabilityError(f"p({condition!r}) = {total:.3e}; cannot condition on it")
    conditional = {past: max(p, 0.0) / total for past, p in joint.items()}
    return Retrodiction(condition, total, conditional)


def shannon_information(probabilities) -> float:
    """
    I = sum p ln p (I <= 0, zero for a deterministic set).

    Raises:
        ValidationError: On negative probabilities or a total above one
    """
    p = np.asarray(list(probabilities.values()) if isinstance(probabilities, Mapping) else probabilities, dtype=float)
    if np.any(p < -TOL_STRUCTURE):
        raise ValidationError(f"negative probability {float(np.min(p)):.3e}")
    if float(np.sum(p)) > 1.0 + TOL_NORMALIZATION:
        raise ValidationError(f"probabilities sum to {float(np.sum(p)):.12f} > 1")
    p = np.clip(p, 0.0, None)
    return float(np.sum(xlogy(p, p)))
