"""
Position-space master equation of quantum Brownian motion on a lattice:

    d rho/dt = -(i/hbar)[H, rho] - D (x - y)^2 rho - gamma (x - y)(d_x - d_y) rho

integrated by Strang splitting: exact unitary half steps around an exact
elementwise decoherence factor exp(-D (x_i - x_j)^2 dt) and, when
gamma > 0, an RK4 substep of the friction term.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from histories_sim.hilbert.constants import K_BOLTZMANN
from histories_sim.hilbert.lattice import (
    LatticeModel,
    build_lattice_hamiltonian,
    check_boundary,
    derivative_matrix,
    position_operator,
)
from histories_sim.hilbert.operators import as_density, unitary_propagator
from histories_sim.histories.functional import DecoherenceMatrix
from histories_sim.histories.schedule import HistoryString
from histories_sim.open_systems.lindblad import TRACE_DRIFT_LIMIT, DensityTrajectory, LindbladModel, rk4_step
from histories_sim.utils.errors import DimensionMismatchError, TraceDriftError, ValidationError

logger = logging.getLogger(__name__)

MODULE = "open_systems.position_master"


@dataclass(frozen=True, eq=False)
class QbmLatticeModel:
    """
    Lattice model with position decoherence and optional friction.

    Attributes:
        lattice: Position lattice carrying mass and potential
        D_loc: Decoherence coefficient (1 / (length^2 time)); defaults to
            2 M gamma k T / hbar^2 when omitted
        gamma: Dissipation rate
        temperature: Bath temperature
        kinetic: False drops the kinetic term (the infinite-mass limit)

    Example:
        >>> lattice = LatticeModel.symmetric(128, 0.25)
        >>> model = QbmLatticeModel(lattice, gamma=0.05, temperature=10.0)
        >>> model.D_loc
        1.0
    """

    lattice: LatticeModel
    D_loc: Optional[float] = None
    gamma: float = 0.0
    temperature: float = 0.0
    k_boltzmann: float = K_BOLTZMANN
    kinetic: bool = True

    def __post_init__(self):
        if self.gamma < 0:
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}")
        if self.temperature < 0:
            raise ValidationError(f"temperature must be >= 0, got {self.temperature}")
        d_loc = self.D_loc
        if d_loc is None:
            lattice = self.lattice
            d_loc = 2.0 * lattice.mass * self.gamma * self.k_boltzmann * self.temperature / lattice.hbar ** 2
        if d_loc < 0:
            raise ValidationError(f"D_loc must be >= 0, got {d_loc}")
        object.__setattr__(self, "D_loc", float(d_loc))

    @property
    def dim(self) -> int:
        return self.lattice.n_sites

    @cached_property
    def hamiltonian(self) -> np.ndarray:
        if self.kinetic:
            return build_lattice_hamiltonian(self.lattice).matrix
        return np.diag(self.lattice.potential).astype(complex)

    @cached_property
    def separation_squared(self) -> np.ndarray:
        x = self.lattice.x
        return (x[:, None] - x[None, :]) ** 2

    @cached_property
    def _derivative(self) -> np.ndarray:
        return derivative_matrix(self.lattice)

    def _friction(self, rho: np.ndarray) -> np.ndarray:
        x = self.lattice.x
        d = self._derivative
        return -self.gamma * (x[:, None] - x[None, :]) * (d @ rho + rho @ d)

    def split_step(self, rho: np.ndarray, dt: float, half: np.ndarray) -> np.ndarray:
        """One Strang step given the half-step propagator exp(-iH dt/2hbar)."""
        rho = half @ rho @ half.conj().T
        if self.D_loc > 0:
            rho = rho * np.exp(-self.D_loc * self.separation_squared * dt)
        if self.gamma > 0:
            rho = rk4_step(self._friction, rho, dt)
        return half @ rho @ half.conj().T

    def propagate_two_sided(self, operator: np.ndarray, duration: float, dt: Optional[float] = None) -> np.ndarray:
        """Carry any X (not necessarily Hermitian) forward by ``duration``."""
        x = np.array(operator, dtype=complex, copy=True)
        if duration == 0:
            return x
        if self.D_loc == 0 and self.gamma == 0:
            unitary = unitary_propagator(self.hamiltonian, duration, self.lattice.hbar)
            return unitary @ x @ unitary.conj().T
        if dt is None:
            raise ValidationError("lattice master-equation propagation needs a time step dt")
        steps = max(1, int(np.ceil(duration / dt - 1e-12)))
        h = duration / steps
        half = unitary_propagator(self.hamiltonian, 0.5 * h, self.lattice.hbar)
        for _ in range(steps):
            x = self.split_step(x, h, half)
        return x

    def to_lindblad_model(self) -> LindbladModel:
        """
        H and L = sqrt(2 D_loc) x, whose Lindblad equation is the
        decoherence-only master equation. Friction has no Lindblad form
        here and is rejected.
        """
        if self.gamma > 0:
            raise ValidationError("the friction term has no Lindblad form; use gamma=0 with an explicit D_loc")
        lindblads = (np.sqrt(2.0 * self.D_loc) * position_operator(self.lattice).matrix,) if self.D_loc > 0 else ()
        return LindbladModel(self.hamiltonian, lindblads, self.lattice.hbar)


def qbm_position_master_evolve(
    model: QbmLatticeModel,
    rho0,
    dt: float,
    steps: int,
    record_every: int = 1,
    check_boundary_mass: bool = True,
) -> DensityTrajectory:
    """
    Evolve a lattice density matrix under the position master equation.

    Raises:
        BoundaryLeakError: If probability reaches the outermost sites
        TraceDriftError: If |Tr rho - 1| exceeds 1e-5
    """
    if steps < 0 or dt <= 0 or record_every < 1:
        raise ValidationError(f"need dt > 0, steps >= 0, record_every >= 1 (got {dt}, {steps}, {record_every})")
    rho = as_density(rho0).matrix.copy()
    if rho.shape[0] != model.dim:
        raise DimensionMismatchError(f"rho dim {rho.shape[0]} vs lattice {model.dim} sites")
    if check_boundary_mass:
        check_boundary(model.lattice, np.diag(rho), MODULE)

    half = unitary_propagator(model.hamiltonian, 0.5 * dt, model.lattice.hbar)
    times, states = [0.0], [rho.copy()]
    max_drift = 0.0
    for step in range(1, steps + 1):
        rho = model.split_step(rho, dt, half)
        drift = abs(float(np.real(np.trace(rho))) - 1.0)
        max_drift = max(max_drift, drift)
        if drift > TRACE_DRIFT_LIMIT:
            raise TraceDriftError(MODULE, drift, TRACE_DRIFT_LIMIT)
        if step % record_every == 0 or step == steps:
            if check_boundary_mass:
                check_boundary(model.lattice, np.diag(rho), MODULE)
            times.append(step * dt)
            states.append(rho.copy())
    logger.debug(f"Position master equation: {steps} steps, D={model.D_loc:g}, gamma={model.gamma:g}")
    return DensityTrajectory(np.array(times), np.array(states), max_drift, float("nan"))


def _bin_index(lattice: LatticeModel, edges: Sequence[float]) -> np.ndarray:
    return np.searchsorted(np.asarray(sorted(edges), dtype=float), lattice.x, side="right")


def screen_decoherence_functional(
    model: QbmLatticeModel,
    rho0,
    initial_edges: Sequence[float],
    screen_edges: Sequence[float],
    duration: float,
    dt: Optional[float] = None,
) -> DecoherenceMatrix:
    """
    Two-time position histories: which bin at t = 0, which bin at t = duration.

    Bins follow position_bins: (-inf, e_0), [e_0, e_1), ..., [e_last, inf).
    Both families are diagonal in the site basis, so
    D((a, s), (b, s')) = delta_{s s'} sum_{i in s} E(P_a rho P_b)_ii and only
    one two-sided object per initial pair is propagated. Equal to
    open_decoherence_functional over the matching position_bins families.

    Example:
        >>> lattice = LatticeModel.symmetric(256, 0.25)
        >>> D = screen_decoherence_functional(QbmLatticeModel(lattice, D_loc=1.0), rho, [0.0], [-1.0, 1.0], 2.0, 0.02)
    """
    rho = as_density(rho0).matrix.copy()
    lattice = model.lattice
    if rho.shape[0] != model.dim:
        raise DimensionMismatchError(f"rho dim {rho.shape[0]} vs lattice {model.dim} sites")
    if duration <= 0:
        raise ValidationError(f"duration must be positive, got {duration}")
    check_boundary(lattice, np.real(np.diag(rho)), MODULE)
    initial = _bin_index(lattice, initial_edges)
    screen = _bin_index(lattice, screen_edges)
    n_initial, n_screen = len(initial_edges) + 1, len(screen_edges) + 1

    diagonals = {}
    for a in range(n_initial):
        for b in range(a, n_initial):
            x = rho * (initial == a)[:, None] * (initial == b)[None, :]
            diagonals[a, b] = np.diag(model.propagate_two_sided(x, duration, dt)).copy()
            diagonals[b, a] = diagonals[a, b].conj()
    final = sum(diagonals[a, a] for a in range(n_initial))
    check_boundary(lattice, np.real(final), MODULE)

    labels = [(a, s) for a in range(n_initial) for s in range(n_screen)]
    entries = np.zeros((len(labels), len(labels)), dtype=complex)
    for i, (a, s) in enumerate(labels):
        for j, (b, t) in enumerate(labels):
            if s == t:
                entries[i, j] = np.sum(diagonals[a, b][screen == s])
    matrix = DecoherenceMatrix(tuple(HistoryString(label) for label in labels), entries, True)
    logger.debug(f"Screen functional: {n_initial} initial x {n_screen} screen bins, D={model.D_loc:g}")
    return matrix.validate(norm_tol=1e-8)
