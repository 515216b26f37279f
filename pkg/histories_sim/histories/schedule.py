"""
History schedules, history strings and class operators.

A schedule fixes n sampling times, an exhaustive projector family at each
time and the Hamiltonian that carries Schrodinger-picture projectors to
the Heisenberg picture. Class operators are time-ordered products
C = P_{a_n}(t_n) ... P_{a_1}(t_1).
"""
import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from histories_sim.config import config
from histories_sim.hilbert.constants import HBAR
from histories_sim.hilbert.operators import Operator, ProjectorFamily, as_matrix, require_hermitian, unitary_propagator
from histories_sim.utils.errors import DimensionMismatchError, EnumerationLimitError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HistoryString:
    """One alternative label per time slot, earliest first."""

    alternatives: Tuple[Hashable, ...]

    def __post_init__(self):
        object.__setattr__(self, "alternatives", tuple(self.alternatives))

    def __len__(self) -> int:
        return len(self.alternatives)

    def __getitem__(self, slot: int) -> Hashable:
        return self.alternatives[slot]

    def replace(self, slot: int, label: Hashable) -> "HistoryString":
        values = list(self.alternatives)
        values[slot] = label
        return HistoryString(tuple(values))

    def without(self, slot: int) -> Tuple[Hashable, ...]:
        return self.alternatives[:slot] + self.alternatives[slot + 1:]

    def __str__(self) -> str:
        return "(" + ",".join(str(a) for a in self.alternatives) + ")"


def as_history(value) -> HistoryString:
    return value if isinstance(value, HistoryString) else HistoryString(tuple(value))


@dataclass(frozen=True, eq=False)
class HistorySchedule:
    """
    Sampling times t_1 < ... < t_n with a projector family at each.

    Example:
        >>> schedule = HistorySchedule((1.0,), (ProjectorFamily.computational(2),), np.zeros((2, 2)))
        >>> [str(s) for s in schedule.strings()]
        ['(0)', '(1)']
    """

    times: Tuple[float, ...]
    families: Tuple[ProjectorFamily, ...]
    hamiltonian: np.ndarray
    t0: float = 0.0
    hbar: float = HBAR

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        families = tuple(self.families)
        if not times:
            raise ValidationError("schedule needs at least one time")
        if len(times) != len(families):
            raise ValidationError(f"{len(times)} times but {len(families)} families")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError(f"times must be strictly increasing, got {times}")
        hamiltonian = as_matrix(self.hamiltonian).copy()
        require_hermitian(hamiltonian, "Hamiltonian")
        dims = {f.dim for f in families} | {hamiltonian.shape[0]}
        if len(dims) != 1:
            raise DimensionMismatchError(f"families and Hamiltonian disagree on dimension: {sorted(dims)}")
        hamiltonian.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "families", families)
        object.__setattr__(self, "hamiltonian", hamiltonian)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def n_slots(self) -> int:
        return len(self.times)

    @property
    def final_time(self) -> float:
        return self.times[-1]

    @cached_property
    def heisenberg_families(self) -> Tuple[Dict[Hashable, np.ndarray], ...]:
        """Per slot, label -> P_a(t_k) in the Heisenberg picture."""
        rotated = []
        for t, family in zip(self.times, self.families):
            unitary = unitary_propagator(self.hamiltonian, t - self.t0, self.hbar)
            rotated.append({label: unitary.conj().T @ p @ unitary for label, p in family.as_dict().items()})
        return tuple(rotated)

    def n_strings(self) -> int:
        return int(np.prod([len(f) for f in self.families], dtype=object))

    def strings(self, limit: Optional[int] = None) -> List[HistoryString]:
        """
        Full Cartesian product of alternatives in lexicographic slot order.

        Raises:
            EnumerationLimitError: If the product exceeds ``limit``
                (default config.MAX_HISTORY_STRINGS)
        """
        limit = config.MAX_HISTORY_STRINGS if limit is None else limit
        count = self.n_strings()
        if count > limit:
            raise EnumerationLimitError(
                f"{count} history strings exceed the enumeration guard {limit}; pass an explicit subset"
            )
        return [HistoryString(combo) for combo in itertools.product(*(f.labels for f in self.families))]

    def validate_string(self, string) -> HistoryString:
        string = as_history(string)
        if len(string) != self.n_slots:
            raise ValidationError(f"history {string} has {len(string)} slots, schedule has {self.n_slots}")
        for slot, (label, family) in enumerate(zip(string.alternatives, self.families)):
            if label not in family.labels:
                raise ValidationError(f"label {label!r} at slot {slot} not in {family.labels}")
        return string

    def with_family(self, slot: int, family: ProjectorFamily) -> "HistorySchedule":
        families = list(self.families)
        families[slot] = family
        return HistorySchedule(self.times, tuple(families), self.hamiltonian, self.t0, self.hbar)


def _class_matrix(schedule: HistorySchedule, string: HistoryString) -> np.ndarray:
    heisenberg = schedule.heisenberg_families
    result = np.array(heisenberg[0][string[0]], copy=True)
    for slot in range(1, schedule.n_slots):
        result = heisenberg[slot][string[slot]] @ result
    return result


def class_operator(schedule: HistorySchedule, string) -> Operator:
    """C = P_{a_n}(t_n) ... P_{a_1}(t_1)."""
    return Operator(_class_matrix(schedule, schedule.validate_string(string)))


def class_operators(schedule: HistorySchedule, strings: Optional[Sequence] = None) -> Tuple[List[HistoryString], np.ndarray]:
    """
    Class operators for ``strings`` (default: every string) stacked into
    an array of shape (n_strings, dim, dim).

    Prefix products are shared: C_{a_1..a_k} = P_{a_k}(t_k) C_{a_1..a_{k-1}}.
    """
    if strings is None:
        strings = schedule.strings()
    strings = [schedule.validate_string(s) for s in strings]
    heisenberg = schedule.heisenberg_families
    prefixes: Dict[Tuple[Hashable, ...], np.ndarray] = {(): np.eye(schedule.dim, dtype=complex)}

    def prefix(labels: Tuple[Hashable, ...]) -> np.ndarray:
        if labels not in prefixes:
            slot = len(labels) - 1
            prefixes[labels] = heisenberg[slot][labels[-1]] @ prefix(labels[:-1])
        return prefixes[labels]

    stacked = np.empty((len(strings), schedule.dim, schedule.dim), dtype=complex)
    for index, string in enumerate(strings):
        stacked[index] = prefix(string.alternatives)
    return strings, stacked


def class_operator_sum(schedule: HistorySchedule, strings: Iterable) -> Operator:
    """Non-chain class operator: the sum of the chain class operators of ``strings``."""
    _, stacked = class_operators(schedule, list(strings))
    return Operator(stacked.sum(axis=0))


def coarse_grain(schedule: HistorySchedule, slot: int, labels: Sequence[Hashable], new_label: Hashable) -> HistorySchedule:
    """Schedule whose family at ``slot`` merges ``labels`` into ``new_label``."""
    return schedule.with_family(slot, schedule.families[slot].merge(labels, new_label))
