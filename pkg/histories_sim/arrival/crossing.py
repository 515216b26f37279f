"""
Spacetime coarse grainings on a 1D lattice: histories that do or do not
enter a region of space at any time during [0, tau].

The "never enters" class operator is a restricted propagator. Two
realizations are offered:

    trotter: [P_out exp(-iH dt/hbar) P_out]^n with dt = tau / n
    wall:    exp(-i H_out tau / hbar) P_out, H_out = P_out H P_out with a
             Dirichlet wall halfway between the last outside site and the
             first region site

The Trotter product converges, as n grows, to the Zeno limit with the wall
on the first region site. "Enters" is the complement U(tau) - C_not_enter,
so the pair is exhaustive by construction.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from histories_sim.config import config
from histories_sim.hilbert.lattice import LatticeModel, build_lattice_hamiltonian, check_boundary
from histories_sim.hilbert.operators import Operator, as_density, unitary_propagator
from histories_sim.histories.functional import DecoherenceMatrix, approx_decoherence_epsilon
from histories_sim.histories.schedule import HistoryString
from histories_sim.open_systems.lindblad import TwoSidedPropagator
from histories_sim.utils.errors import DimensionMismatchError, NumericalGuardError, ValidationError
from histories_sim.utils.rng import chunked_map, trajectory_generator

logger = logging.getLogger(__name__)

MODULE = "arrival"
METHODS = ("trotter", "wall")
ALTERNATIVES = ("enter", "cross")
NORM_SLACK = 1e-10
EXHAUSTIVE_TOL = 1e-12
# Diagonals at or below this make the pair trivially decoherent
VANISHING_PROBABILITY = 1e-12


@dataclass(frozen=True)
class LatticeRegion:
    """
    Closed interval [lower, upper] of the lattice; None leaves that side
    unbounded. Sites exactly on an edge belong to the region.

    Example:
        >>> LatticeRegion(upper=0.0)   # the half-line x <= 0
        LatticeRegion(lower=None, upper=0.0)
    """

    lower: Optional[float] = None
    upper: Optional[float] = None

    def __post_init__(self):
        if self.lower is None and self.upper is None:
            raise ValidationError("a region needs at least one edge", [("region", "both edges missing")])
        if self.lower is not None and self.upper is not None and self.upper < self.lower:
            raise ValidationError(
                f"region upper {self.upper} below lower {self.lower}", [("region.upper", "must be >= region.lower")]
            )

    def mask(self, lattice: LatticeModel) -> np.ndarray:
        x = lattice.x
        # an edge placed on a site keeps that site inside the region
        slack = 1e-9 * lattice.dx
        inside = np.ones(lattice.n_sites, dtype=bool)
        if self.lower is not None:
            inside &= x >= self.lower - slack
        if self.upper is not None:
            inside &= x <= self.upper + slack
        return inside

    def mirrored(self) -> "LatticeRegion":
        return LatticeRegion(
            None if self.upper is None else -self.upper,
            None if self.lower is None else -self.lower,
        )

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper}


@dataclass(frozen=True, eq=False)
class CrossingSchedule:
    """
    Region, horizon and slicing for the enter / not-enter coarse graining.

    Attributes:
        lattice: Position lattice with its Hamiltonian data
        region: Closed lattice interval
        tau: Horizon
        n_steps: Trotter slices (also the slice times of the environment chains)
        method: "trotter" or "wall"
        alternatives: "enter" (never enters vs enters) or "cross" (stays on
            its starting side vs crosses the region boundary)
    """

    lattice: LatticeModel
    region: LatticeRegion
    tau: float
    n_steps: int
    method: str = "trotter"
    alternatives: str = "enter"

    def __post_init__(self):
        issues = []
        if not self.tau > 0:
            issues.append(("tau", f"must be positive, got {self.tau}"))
        if self.n_steps < 2:
            issues.append(("n_steps", f"must be >= 2, got {self.n_steps}"))
        if self.method not in METHODS:
            issues.append(("method", f"expected one of {METHODS}, got {self.method!r}"))
        if self.alternatives not in ALTERNATIVES:
            issues.append(("alternatives", f"expected one of {ALTERNATIVES}, got {self.alternatives!r}"))
        if issues:
            raise ValidationError("invalid crossing schedule", issues)
        if np.all(self.region_mask):
            raise ValidationError("region covers the whole lattice; P_out vanishes", [("region", "covers every site")])

    @property
    def region_mask(self) -> np.ndarray:
        return self.region.mask(self.lattice)

    @property
    def outside_mask(self) -> np.ndarray:
        return ~self.region_mask

    @property
    def slice_time(self) -> float:
        return self.tau / self.n_steps

    @property
    def labels(self) -> Tuple[str, str]:
        return ("not-enter", "enter") if self.alternatives == "enter" else ("stay", "cross")

    def refined(self, n_steps: int) -> "CrossingSchedule":
        return CrossingSchedule(self.lattice, self.region, self.tau, n_steps, self.method, self.alternatives)

    def mirrored(self) -> "CrossingSchedule":
        return CrossingSchedule(
            self.lattice, self.region.mirrored(), self.tau, self.n_steps, self.method, self.alternatives
        )

    def sides(self) -> List[np.ndarray]:
        """Site masks a "stay" history may never leave."""
        if self.alternatives == "enter":
            return [self.outside_mask]
        return [self.outside_mask, self.region_mask]


# ==================== CLASS OPERATORS ====================

def _side_propagator(schedule: CrossingSchedule, mask: np.ndarray) -> np.ndarray:
    lattice = schedule.lattice
    n = lattice.n_sites
    if not np.any(mask):
        return np.zeros((n, n), dtype=complex)
    hamiltonian = build_lattice_hamiltonian(lattice).matrix
    projector = np.diag(mask.astype(complex))
    if schedule.method == "trotter":
        step = unitary_propagator(hamiltonian, schedule.slice_time, lattice.hbar)
        return np.linalg.matrix_power(projector @ step @ projector, schedule.n_steps)

    # wall: an antisymmetric image across every bond that leaves the side
    severed = np.zeros(n)
    severed[:-1] += mask[:-1] & ~mask[1:]
    severed[1:] += mask[1:] & ~mask[:-1]
    walled = projector @ hamiltonian @ projector + np.diag(lattice.hopping * severed * mask)
    return unitary_propagator(walled, schedule.tau, lattice.hbar) @ projector


def _check_contraction(matrix: np.ndarray, what: str) -> None:
    norm = float(np.linalg.norm(matrix, 2))
    if norm > 1.0 + NORM_SLACK:
        raise NumericalGuardError(MODULE, "restricted propagator contraction", f"||{what}|| = {norm:.12f}")


def restricted_propagator(schedule: CrossingSchedule) -> Operator:
    """
    Propagator over paths that never enter the region.

    An empty region gives the plain propagator exp(-iH tau/hbar).

    Raises:
        NumericalGuardError: If the operator norm exceeds 1 + 1e-10
    """
    matrix = _side_propagator(schedule, schedule.outside_mask)
    _check_contraction(matrix, "C_not_enter")
    return Operator(matrix)


@dataclass(frozen=True, eq=False)
class CrossingOperators:
    """C_stay (not-enter) and C_cross (enter) with their labels."""

    labels: Tuple[str, str]
    stay: np.ndarray
    crossed: np.ndarray
    full: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return dict(zip(self.labels, (self.stay, self.crossed)))

    def exhaustiveness_defect(self) -> float:
        return float(np.max(np.abs(self.stay + self.crossed - self.full)))


def crossing_class_operators(schedule: CrossingSchedule) -> CrossingOperators:
    """
    (C_not_enter, C_enter) with C_enter = U(tau) - C_not_enter; for
    alternatives="cross" the first is the sum of the stay-outside and
    stay-inside propagators.
    """
    lattice = schedule.lattice
    full = unitary_propagator(build_lattice_hamiltonian(lattice).matrix, schedule.tau, lattice.hbar)
    stay = sum(_side_propagator(schedule, mask) for mask in schedule.sides())
    _check_contraction(stay, "C_stay")
    operators = CrossingOperators(schedule.labels, stay, full - stay, full)
    defect = operators.exhaustiveness_defect()
    if defect > EXHAUSTIVE_TOL:
        raise NumericalGuardError(MODULE, "exhaustiveness", f"|C_stay + C_cross - U| = {defect:.3e}")
    return operators


# ==================== DECOHERENCE ====================

@dataclass(frozen=True, eq=False)
class CrossingResult:
    """
    2x2 decoherence matrix of the crossing alternatives and its summary.

    Attributes:
        matrix: Validated DecoherenceMatrix over (stay, cross)
        epsilon: Approximate-decoherence parameter (0 when a diagonal vanishes)
        p_enter: Probability of the second alternative
        environment: D_loc and gamma of the environment, empty when closed
    """

    schedule: CrossingSchedule
    matrix: DecoherenceMatrix
    epsilon: float
    p_enter: float
    p_not_enter: float
    environment: Dict[str, float] = field(default_factory=dict)

    @property
    def interference(self) -> complex:
        return complex(self.matrix.entries[1, 0])

    def to_dict(self) -> dict:
        return {
            "labels": list(self.schedule.labels),
            "method": self.schedule.method,
            "alternatives": self.schedule.alternatives,
            "tau": self.schedule.tau,
            "n_steps": self.schedule.n_steps,
            "p_enter": self.p_enter,
            "p_not_enter": self.p_not_enter,
            "epsilon": self.epsilon,
            "re_interference": self.interference.real,
            "im_interference": self.interference.imag,
            "normalization_error": abs(self.matrix.total() - 1.0),
            **{f"environment_{k}": v for k, v in self.environment.items()},
        }

    def __str__(self) -> str:
        return (
            f"CrossingResult(p_{self.schedule.labels[1]}={self.p_enter:.6e}, epsilon={self.epsilon:.3e}, "
            f"method={self.schedule.method})"
        )


def _epsilon(matrix: DecoherenceMatrix) -> float:
    if float(np.min(matrix.probabilities)) <= VANISHING_PROBABILITY:
        return 0.0
    return approx_decoherence_epsilon(matrix).epsilon


def _closed_entries(schedule: CrossingSchedule, rho: np.ndarray) -> np.ndarray:
    operators = crossing_class_operators(schedule)
    branches = (operators.stay, operators.crossed)
    final = operators.full @ rho @ operators.full.conj().T
    check_boundary(schedule.lattice, np.real(np.diag(final)), MODULE)
    return np.array([[np.trace(a @ rho @ b.conj().T) for b in branches] for a in branches])


def _sandwich(x: np.ndarray, left: Optional[np.ndarray], right: Optional[np.ndarray]) -> np.ndarray:
    if left is not None:
        x = x * left[:, None]
    if right is not None:
        x = x * right[None, :]
    return x


def _environment_chain(
    schedule: CrossingSchedule,
    environment: TwoSidedPropagator,
    rho: np.ndarray,
    left: Optional[np.ndarray],
    right: Optional[np.ndarray],
    dt: Optional[float],
) -> np.ndarray:
    """P_l ... E(P_l rho P_r) ... P_r with the map E applied between slices."""
    x = _sandwich(rho, left, right)
    for _ in range(schedule.n_steps):
        x = environment.propagate_two_sided(x, schedule.slice_time, dt)
        x = _sandwich(x, left, right)
    return x


def _open_entries(
    schedule: CrossingSchedule, environment: TwoSidedPropagator, rho: np.ndarray, dt: Optional[float]
) -> np.ndarray:
    if schedule.method != "trotter":
        raise ValidationError(
            "an environment needs the sliced construction", [("method", "must be 'trotter' with an environment")]
        )
    sides = [mask.astype(float) for mask in schedule.sides()]
    full = _environment_chain(schedule, environment, rho, None, None, dt)
    check_boundary(schedule.lattice, np.real(np.diag(full)), MODULE)
    d_all = np.trace(full)
    d_all_stay = sum(np.trace(_environment_chain(schedule, environment, rho, None, b, dt)) for b in sides)
    d_stay = sum(
        np.trace(_environment_chain(schedule, environment, rho, a, b, dt)) for a in sides for b in sides
    )
    d_stay_cross = np.conj(d_all_stay) - d_stay
    d_cross = d_all - d_all_stay - np.conj(d_all_stay) + d_stay
    return np.array([[d_stay, d_stay_cross], [np.conj(d_stay_cross), d_cross]])


def crossing_decoherence(
    schedule: CrossingSchedule,
    rho0,
    environment: Optional[TwoSidedPropagator] = None,
    dt: Optional[float] = None,
) -> CrossingResult:
    """
    Decoherence matrix of the two crossing alternatives.

    Without an environment D(a, b) = Tr(C_a rho0 C_b^dagger). With one,
    the two-sided object is carried between slice times by the
    environment's dynamical map and sandwiched by the side projectors.

    Args:
        environment: Any two-sided propagator, typically a QbmLatticeModel
        dt: Integration step handed to the environment propagation

    Raises:
        BoundaryLeakError: If the evolved state reaches the lattice ends
    """
    lattice = schedule.lattice
    rho = as_density(rho0).matrix if not isinstance(rho0, np.ndarray) else np.asarray(rho0, dtype=complex)
    if rho.shape != (lattice.n_sites, lattice.n_sites):
        raise DimensionMismatchError(f"rho shape {rho.shape} vs lattice {lattice.n_sites} sites")
    check_boundary(lattice, np.real(np.diag(rho)), MODULE)

    if environment is None:
        entries = _closed_entries(schedule, rho)
        details: Dict[str, float] = {}
    else:
        entries = _open_entries(schedule, environment, rho, dt)
        details = {
            name: float(getattr(environment, name)) for name in ("D_loc", "gamma") if hasattr(environment, name)
        }
    strings = tuple(HistoryString((label,)) for label in schedule.labels)
    matrix = DecoherenceMatrix(strings, entries, True).validate(norm_tol=1e-8)
    p_stay, p_cross = (float(v) for v in matrix.probabilities)
    result = CrossingResult(schedule, matrix, _epsilon(matrix), p_cross, p_stay, details)
    logger.info(str(result))
    return result


# ==================== CLASSICAL ORACLE ====================

@dataclass(frozen=True)
class LangevinCrossing:
    probability: float
    stderr: float
    n_samples: int
    seed: int

    def to_dict(self) -> dict:
        return {"probability": self.probability, "stderr": self.stderr, "n_samples": self.n_samples, "seed": self.seed}


def langevin_crossing_probability(
    schedule: CrossingSchedule,
    x0: float,
    p0: float,
    width: float,
    D_loc: float,
    gamma: float = 0.0,
    n_samples: int = 10000,
    seed: int = 0,
    substeps: int = 10,
    threads: Optional[int] = None,
    chunk: Optional[int] = None,
) -> LangevinCrossing:
    """
    Classical Fokker-Planck crossing probability for a Gaussian packet.

    Initial (x, p) follow the packet's Wigner function (spreads width and
    hbar / (2 width)); then dp = -V'(x) dt - 2 gamma p dt + sqrt(2 D hbar^2 dt) xi,
    dx = p dt / M. A sample has entered when its nearest lattice site lies
    in the region at any slice time.
    """
    if n_samples < 1 or substeps < 1:
        raise ValidationError(f"need n_samples >= 1 and substeps >= 1 (got {n_samples}, {substeps})")
    if width <= 0 or D_loc < 0 or gamma < 0:
        raise ValidationError(f"need width > 0, D_loc >= 0, gamma >= 0 (got {width}, {D_loc}, {gamma})")
    lattice = schedule.lattice
    hbar, mass = lattice.hbar, lattice.mass
    mask = schedule.region_mask
    force = -np.gradient(lattice.potential, lattice.dx)
    h = schedule.slice_time / substeps
    kick = math.sqrt(2.0 * D_loc * hbar ** 2 * h)
    threads = config.THREADS if threads is None else threads
    chunk = config.TRAJECTORY_CHUNK if chunk is None else chunk

    def in_region(x: np.ndarray) -> np.ndarray:
        sites = np.clip(np.rint((x - lattice.x_min) / lattice.dx).astype(int), 0, lattice.n_sites - 1)
        return mask[sites]

    def run(start: int, stop: int) -> np.ndarray:
        rng = trajectory_generator(seed, start // chunk)
        size = stop - start
        x = x0 + width * rng.standard_normal(size)
        p = p0 + hbar / (2.0 * width) * rng.standard_normal(size)
        entered = in_region(x)
        for _ in range(schedule.n_steps):
            for _ in range(substeps):
                p = p + (np.interp(x, lattice.x, force) - 2.0 * gamma * p) * h + kick * rng.standard_normal(size)
                x = x + p * h / mass
            entered |= in_region(x)
        return entered

    entered = np.concatenate(chunked_map(run, n_samples, chunk, threads))
    p = float(np.mean(entered))
    stderr = math.sqrt(p * (1.0 - p) / n_samples)
    logger.info(f"Langevin crossing probability {p:.4f} +/- {stderr:.4f} ({n_samples} samples)")
    return LangevinCrossing(p, stderr, n_samples, seed)


def environment_sweep(
    schedule: CrossingSchedule,
    rho0,
    environments: Sequence[TwoSidedPropagator],
    dt: Optional[float] = None,
) -> List[CrossingResult]:
    """crossing_decoherence over a sequence of environments, in order."""
    return [crossing_decoherence(schedule, rho0, environment, dt) for environment in environments]
