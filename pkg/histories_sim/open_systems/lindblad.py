"""
Lindblad master equation: generator, fixed-step RK4 integration and
two-sided propagation of P rho P' objects for open-system decoherence
functionals.
"""
import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from threading import Lock
from typing import Dict, Hashable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import scipy.linalg
from cachetools import LRUCache

from histories_sim.hilbert.constants import HBAR, TOL_STRUCTURE
from histories_sim.hilbert.operators import (
    ProjectorFamily,
    as_density,
    as_matrix,
    require_hermitian,
    unitary_propagator,
)
from histories_sim.histories.functional import DecoherenceMatrix
from histories_sim.histories.schedule import HistoryString
from histories_sim.utils.errors import DimensionMismatchError, NumericalGuardError, TraceDriftError, ValidationError

logger = logging.getLogger(__name__)

STEP_WARNING = 0.1
TRACE_DRIFT_LIMIT = 1e-5
POSITIVITY_FLOOR = -1e-7
# Above this dimension the superoperator exponential is replaced by RK4 stepping
EXACT_SUPEROPERATOR_DIM = 16
TRANSFER_CACHE_SIZE = 32


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """
    d rho/dt = -(i/hbar)[H, rho] + sum_j (L_j rho L_j^dagger - 1/2 {L_j^dagger L_j, rho}).

    Any modification of H by terms built from the L_j is the caller's
    responsibility; H is used as given.
    """

    hamiltonian: np.ndarray
    lindblads: Tuple[np.ndarray, ...] = ()
    hbar: float = HBAR

    def __post_init__(self):
        hamiltonian = as_matrix(self.hamiltonian).copy()
        require_hermitian(hamiltonian, "Hamiltonian")
        lindblads = tuple(as_matrix(op).copy() for op in self.lindblads)
        for op in lindblads:
            if op.shape != hamiltonian.shape:
                raise DimensionMismatchError(f"Lindblad operator shape {op.shape} vs H {hamiltonian.shape}")
        for array in (hamiltonian, *lindblads):
            array.setflags(write=False)
        object.__setattr__(self, "hamiltonian", hamiltonian)
        object.__setattr__(self, "lindblads", lindblads)
        # exact transfer maps keyed by duration, shared by worker threads
        object.__setattr__(self, "_transfers", LRUCache(maxsize=TRANSFER_CACHE_SIZE))
        object.__setattr__(self, "_transfer_lock", Lock())

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def is_closed(self) -> bool:
        return not self.lindblads

    @cached_property
    def _damping(self) -> np.ndarray:
        """Effective non-Hermitian part -i H/hbar - 1/2 sum L^dagger L."""
        total = -1j * self.hamiltonian / self.hbar
        for op in self.lindblads:
            total = total - 0.5 * op.conj().T @ op
        return total

    def generator(self, rho: np.ndarray) -> np.ndarray:
        """Apply the Lindblad generator to any (not necessarily Hermitian) matrix."""
        k = self._damping
        out = k @ rho + rho @ k.conj().T
        for op in self.lindblads:
            out = out + op @ rho @ op.conj().T
        return out

    def generator_norm_bound(self) -> float:
        """Upper bound on the generator's operator norm: 2||H||/hbar + 2 sum ||L||^2."""
        bound = 2.0 * np.linalg.norm(self.hamiltonian, 2) / self.hbar
        for op in self.lindblads:
            bound += 2.0 * np.linalg.norm(op, 2) ** 2
        return float(bound)

    @cached_property
    def superoperator(self) -> np.ndarray:
        """Generator as a d^2 x d^2 matrix acting on row-major vec(rho)."""
        d = self.dim
        identity = np.eye(d)
        k = self._damping
        matrix = np.kron(k, identity) + np.kron(identity, k.conj())
        for op in self.lindblads:
            matrix = matrix + np.kron(op, op.conj())
        return matrix

    def _transfer(self, duration: float) -> np.ndarray:
        with self._transfer_lock:
            cached = self._transfers.get(duration)
        if cached is not None:
            return cached
        transfer = scipy.linalg.expm(self.superoperator * duration)
        transfer.setflags(write=False)
        with self._transfer_lock:
            return self._transfers.setdefault(duration, transfer)

    def propagate_two_sided(self, operator: np.ndarray, duration: float, dt: Optional[float] = None) -> np.ndarray:
        """
        Evolve a two-sided object X by the dynamical map for ``duration``.

        Closed models use U X U^dagger; small open models use the exact
        superoperator exponential; larger ones use RK4 with step ``dt``.
        """
        if duration == 0:
            return np.array(operator, dtype=complex, copy=True)
        if self.is_closed:
            unitary = unitary_propagator(self.hamiltonian, duration, self.hbar)
            return unitary @ operator @ unitary.conj().T
        if self.dim <= EXACT_SUPEROPERATOR_DIM:
            d = self.dim
            return (self._transfer(float(duration)) @ np.asarray(operator, dtype=complex).reshape(d * d)).reshape(d, d)
        if dt is None:
            dt = STEP_WARNING / self.generator_norm_bound()
        steps = max(1, int(np.ceil(duration / dt - 1e-12)))
        h = duration / steps
        x = np.array(operator, dtype=complex, copy=True)
        for _ in range(steps):
            x = rk4_step(self.generator, x, h)
        return x


def rk4_step(generator, rho: np.ndarray, dt: float) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step for a linear generator."""
    k1 = generator(rho)
    k2 = generator(rho + 0.5 * dt * k1)
    k3 = generator(rho + 0.5 * dt * k2)
    k4 = generator(rho + dt * k3)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True, eq=False)
class DensityTrajectory:
    """Recorded density operators rho(t_k) with integration diagnostics."""

    times: np.ndarray
    states: np.ndarray
    max_trace_drift: float
    min_eigenvalue: float

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def expectation(self, operator) -> np.ndarray:
        op = as_matrix(operator)
        return np.real(np.einsum("tij,ji->t", self.states, op))


def lindblad_evolve(
    model: LindbladModel,
    rho0,
    dt: float,
    steps: int,
    record_every: int = 1,
    check_positivity: bool = True,
) -> DensityTrajectory:
    """
    Integrate the Lindblad equation with fixed RK4 steps.

    Args:
        model: Lindblad model
        rho0: Initial density operator (or state vector)
        dt: Time step
        steps: Number of steps
        record_every: Keep every n-th state (first and last always kept)
        check_positivity: Track the smallest eigenvalue of recorded states

    Raises:
        TraceDriftError: If |Tr rho - 1| exceeds 1e-5
        NumericalGuardError: If a recorded state has an eigenvalue below -1e-7

    Example:
        >>> sm = np.array([[0, 0], [1, 0]])
        >>> model = LindbladModel(np.zeros((2, 2)), (np.sqrt(0.5) * sm,))
        >>> out = lindblad_evolve(model, np.diag([0.0, 1.0]), 1e-3, 10)
    """
    if steps < 0 or dt <= 0:
        raise ValidationError(f"need dt > 0 and steps >= 0, got dt={dt}, steps={steps}")
    rho = as_density(rho0).matrix.copy()
    if rho.shape[0] != model.dim:
        raise DimensionMismatchError(f"rho dim {rho.shape[0]} vs model dim {model.dim}")

    stiffness = dt * model.generator_norm_bound()
    if stiffness > STEP_WARNING:
        logger.warning(f"dt * ||generator|| = {stiffness:.3f} exceeds {STEP_WARNING}; results may drift")

    times = [0.0]
    states = [rho.copy()]
    max_drift = 0.0
    floor = float(np.min(np.linalg.eigvalsh(rho))) if check_positivity else 0.0
    for step in range(1, steps + 1):
        rho = rk4_step(model.generator, rho, dt)
        rho = 0.5 * (rho + rho.conj().T)
        drift = abs(float(np.real(np.trace(rho))) - 1.0)
        max_drift = max(max_drift, drift)
        if drift > TRACE_DRIFT_LIMIT:
            raise TraceDriftError("open_systems.lindblad", drift, TRACE_DRIFT_LIMIT)
        if step % record_every == 0 or step == steps:
            times.append(step * dt)
            states.append(rho.copy())
            if check_positivity:
                floor = min(floor, float(np.min(np.linalg.eigvalsh(rho))))
                if floor < POSITIVITY_FLOOR:
                    raise NumericalGuardError(
                        "open_systems.lindblad", "positivity", f"eigenvalue {floor:.3e} at t={step * dt:.4g}"
                    )
    logger.debug(f"Lindblad evolution: {steps} steps, max trace drift {max_drift:.2e}")
    return DensityTrajectory(np.array(times), np.array(states), max_drift, floor)


# ==================== OPEN DECOHERENCE FUNCTIONAL ====================

class TwoSidedPropagator(Protocol):
    """Anything that can carry X = P rho P' forward in time."""

    def propagate_two_sided(self, operator: np.ndarray, duration: float, dt: Optional[float] = None) -> np.ndarray:
        ...


def open_decoherence_functional(
    model: TwoSidedPropagator,
    times: Sequence[float],
    families: Sequence[ProjectorFamily],
    rho0,
    t0: Optional[float] = None,
    dt: Optional[float] = None,
) -> DecoherenceMatrix:
    """
    D(a, a') for a Markovian open system.

    Starting from rho0 at ``t0`` (default: the first time), the two-sided
    object is propagated by the dynamical map between sampling times and
    sandwiched as P_{a_k} X P_{a'_k}^dagger at each; D is the final trace.
    Pair prefixes are shared, and the last slot needs no propagation.
    """
    times = [float(t) for t in times]
    families = list(families)
    if len(times) != len(families) or not times:
        raise ValidationError(f"{len(times)} times for {len(families)} families")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError(f"times must be strictly increasing, got {times}")
    t0 = times[0] if t0 is None else float(t0)
    if t0 > times[0]:
        raise ValidationError(f"t0 = {t0} lies after the first sampling time {times[0]}")
    rho = as_density(rho0).matrix if not isinstance(rho0, np.ndarray) else np.asarray(rho0, dtype=complex)
    for family in families:
        if family.dim != rho.shape[0]:
            raise DimensionMismatchError(f"family dim {family.dim} vs state dim {rho.shape[0]}")

    current: Dict[Tuple[Tuple[Hashable, ...], Tuple[Hashable, ...]], np.ndarray] = {
        ((), ()): model.propagate_two_sided(rho, times[0] - t0, dt)
    }
    last = len(times) - 1
    for slot, family in enumerate(families):
        members = family.as_dict()
        upcoming = {}
        for (left, right), x in current.items():
            for (a, pa), (b, pb) in itertools.product(members.items(), repeat=2):
                sandwiched = pa @ x @ pb.conj().T
                if slot < last:
                    sandwiched = model.propagate_two_sided(sandwiched, times[slot + 1] - times[slot], dt)
                upcoming[(left + (a,), right + (b,))] = sandwiched
        current = upcoming
        logger.debug(f"Open functional slot {slot}: {len(current)} pair objects")

    labels = [tuple(c) for c in itertools.product(*(f.labels for f in families))]
    index = {s: i for i, s in enumerate(labels)}
    entries = np.zeros((len(labels), len(labels)), dtype=complex)
    for (left, right), x in current.items():
        entries[index[left], index[right]] = np.trace(x)
    matrix = DecoherenceMatrix(tuple(HistoryString(s) for s in labels), entries, True)
    return matrix.validate(tol=TOL_STRUCTURE, norm_tol=1e-8)
