"""
Classical phase-space dynamics for reparametrization-invariant
probabilities: separable potentials, batched velocity-Verlet orbits,
box regions and the time an orbit spends inside them.

Dwell time is accumulated segment by segment: each leapfrog step is
treated as a straight segment and clipped against the region's boxes
(Liang-Barsky), so a uniform crossing is measured exactly. For periodic
orbits the parameter-time range is one period, located by the first two
downward zero crossings of p along the first coordinate.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from histories_sim.utils.errors import NumericalGuardError, UndersamplingError, ValidationError
from histories_sim.utils.logger import LoggerMixin

logger = logging.getLogger(__name__)

ENERGY_DRIFT_LIMIT = 1e-6
MIN_STEPS_ACROSS_REGION = 5


# ==================== POTENTIALS ====================

@dataclass(frozen=True)
class FreePotential:
    name = "free"

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(x)[:-1])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(x)


@dataclass(frozen=True)
class HarmonicPotential:
    """V = sum_d M omega^2 x_d^2 / 2."""

    omega: float
    mass: float = 1.0
    name = "harmonic"

    def value(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * self.mass * self.omega ** 2 * np.sum(x ** 2, axis=-1)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.mass * self.omega ** 2 * x


@dataclass(frozen=True)
class QuarticPotential:
    """V = sum_d (quartic x_d^4 + quadratic x_d^2)."""

    quartic: float
    quadratic: float = 0.0
    name = "quartic"

    def __post_init__(self):
        if self.quartic <= 0:
            raise ValidationError(f"quartic coefficient must be positive, got {self.quartic}")

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.sum(self.quartic * x ** 4 + self.quadratic * x ** 2, axis=-1)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 4.0 * self.quartic * x ** 3 + 2.0 * self.quadratic * x


def make_potential(spec: dict, mass: float = 1.0):
    """Potential from a scenario mapping such as {"kind": "harmonic", "omega": 1.0}."""
    kind = spec.get("kind", "free")
    if kind == "free":
        return FreePotential()
    if kind == "harmonic":
        return HarmonicPotential(float(spec["omega"]), mass)
    if kind == "quartic":
        return QuarticPotential(float(spec["quartic"]), float(spec.get("quadratic", 0.0)))
    raise ValidationError(f"unknown potential kind {kind!r}", [("potential.kind", "expected free, harmonic or quartic")])


# ==================== REGIONS ====================

@dataclass(frozen=True, eq=False)
class Region:
    """
    Union of disjoint, finite axis-aligned boxes in configuration space.

    Example:
        >>> region = Region.interval(0.5, 10.0)
        >>> region.contains(np.array([[1.0], [0.0]]))
        array([ True, False])
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_2d(np.asarray(self.lower, dtype=float)).copy()
        upper = np.atleast_2d(np.asarray(self.upper, dtype=float)).copy()
        if lower.shape != upper.shape or lower.size == 0:
            raise ValidationError(f"box bounds need matching nonempty shapes, got {lower.shape} and {upper.shape}")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValidationError("region boxes must have finite bounds")
        if np.any(upper <= lower):
            raise ValidationError("every box needs upper > lower in each dimension")
        for i in range(len(lower)):
            for j in range(i + 1, len(lower)):
                if np.all(np.minimum(upper[i], upper[j]) > np.maximum(lower[i], lower[j])):
                    raise ValidationError(f"boxes {i} and {j} overlap")
        for array in (lower, upper):
            array.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[1]

    @property
    def n_boxes(self) -> int:
        return self.lower.shape[0]

    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x[..., None, :] >= self.lower) & (x[..., None, :] <= self.upper)
        return np.any(np.all(inside, axis=-1), axis=-1)

    def subset_of(self, other: "Region") -> bool:
        """True when every box lies inside some box of ``other``."""
        return all(
            any(np.all(lo >= olo) and np.all(hi <= ohi) for olo, ohi in zip(other.lower, other.upper))
            for lo, hi in zip(self.lower, self.upper)
        )

    @classmethod
    def interval(cls, low: float, high: float) -> "Region":
        return cls([[low]], [[high]])

    @classmethod
    def boxes(cls, boxes: Sequence[Tuple[Sequence[float], Sequence[float]]]) -> "Region":
        return cls([b[0] for b in boxes], [b[1] for b in boxes])

    def to_dict(self) -> dict:
        return {"boxes": [[lo.tolist(), hi.tolist()] for lo, hi in zip(self.lower, self.upper)]}


def segment_fraction_inside(start: np.ndarray, end: np.ndarray, region: Region) -> np.ndarray:
    """
    Fraction of each straight segment start -> end lying inside the region.

    start, end: shape (B, n). Boxes are disjoint, so per-box fractions add.
    """
    delta = end - start
    total = np.zeros(start.shape[0])
    moving = np.abs(delta) > 0
    safe = np.where(moving, delta, 1.0)
    for lo, hi in zip(region.lower, region.upper):
        t1 = (lo - start) / safe
        t2 = (hi - start) / safe
        t_in = np.where(moving, np.minimum(t1, t2), -np.inf)
        t_out = np.where(moving, np.maximum(t1, t2), np.inf)
        # a coordinate that does not move must already sit inside the slab
        parked_ok = np.all(moving | ((start >= lo) & (start <= hi)), axis=1)
        enter = np.clip(np.max(t_in, axis=1), 0.0, 1.0)
        leave = np.clip(np.min(t_out, axis=1), 0.0, 1.0)
        total += np.where(parked_ok, np.maximum(leave - enter, 0.0), 0.0)
    return total


# ==================== INTEGRATION ====================

@dataclass(frozen=True)
class TrajectorySolver:
    """
    H = p^2/2M + V(x) integrated by velocity Verlet.

    Attributes:
        mass: Particle mass
        potential: Free, harmonic or quartic potential
        step: Leapfrog step h
        horizon: Integration horizon T_max
        detect_period: Measure dwell over one period when the orbit closes
        domain_guard: |x| beyond which an orbit counts as blown up
    """

    mass: float
    potential: object
    step: float
    horizon: float
    detect_period: bool = True
    domain_guard: float = 1e6

    def __post_init__(self):
        if not self.step > 0:
            raise ValidationError(f"step must be positive, got {self.step}")
        if not self.horizon > 0:
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if not self.mass > 0:
            raise ValidationError(f"mass must be positive, got {self.mass}")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon / self.step - 1e-9))

    @property
    def default_epsilon(self) -> float:
        """Ten integrator steps of dwell."""
        return 10.0 * self.step

    def energy(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        return np.sum(p ** 2, axis=-1) / (2.0 * self.mass) + self.potential.value(x)

    def leapfrog(self, x: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """One kick-drift-kick step for a batch (B, n)."""
        h = self.step
        p_half = p - 0.5 * h * self.potential.gradient(x)
        x_new = x + h * p_half / self.mass
        p_new = p_half - 0.5 * h * self.potential.gradient(x_new)
        return x_new, p_new

    def with_step(self, step: float) -> "TrajectorySolver":
        return TrajectorySolver(self.mass, self.potential, step, self.horizon, self.detect_period, self.domain_guard)

    def _guard(self, x: np.ndarray, t: float) -> None:
        worst = float(np.max(np.abs(x))) if x.size else 0.0
        if not math.isfinite(worst) or worst > self.domain_guard:
            raise NumericalGuardError("timeless", "domain guard", f"|x| = {worst:.3e} at t = {t:.4g}")


def _as_batch(values, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    elif array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2:
        raise ValidationError(f"{name} must be a point or a batch of points, got shape {array.shape}")
    return array


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A single sampled orbit plus the data needed to re-integrate it."""

    solver: TrajectorySolver
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    energy_drift: float
    period: Optional[float] = None

    @property
    def x0(self) -> np.ndarray:
        return self.x[0]

    @property
    def p0(self) -> np.ndarray:
        return self.p[0]

    def state_at(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Recorded phase point nearest to parameter time t."""
        index = int(np.argmin(np.abs(self.times - t)))
        return self.x[index].copy(), self.p[index].copy()


def integrate_trajectory(solver: TrajectorySolver, x0, p0) -> Trajectory:
    """
    Integrate one orbit over the solver horizon.

    Raises:
        NumericalGuardError: If the orbit leaves the domain guard

    Example:
        >>> solver = TrajectorySolver(1.0, HarmonicPotential(1.0), 1e-3, 2 * np.pi)
        >>> orbit = integrate_trajectory(solver, [1.0], [0.0])
    """
    x = _as_batch(x0, "x0")
    p = _as_batch(p0, "p0")
    xs, ps = [x[0].copy()], [p[0].copy()]
    for step in range(1, solver.n_steps + 1):
        x, p = solver.leapfrog(x, p)
        solver._guard(x, step * solver.step)
        xs.append(x[0].copy())
        ps.append(p[0].copy())
    xs, ps = np.array(xs), np.array(ps)
    energies = solver.energy(xs, ps)
    drift = _relative_drift(energies[None, :])[0]
    if drift > ENERGY_DRIFT_LIMIT:
        logger.warning(f"Relative energy drift {drift:.2e} exceeds {ENERGY_DRIFT_LIMIT:.0e}; reduce the step")
    times = solver.step * np.arange(len(xs))
    period = _period_from_momenta(times, ps[:, 0]) if solver.detect_period else None
    return Trajectory(solver, times, xs, ps, drift, period)


def _relative_drift(energies: np.ndarray) -> np.ndarray:
    """Max |E(t) - E(0)| / max(|E(0)|, tiny) per row."""
    reference = energies[:, :1]
    scale = np.maximum(np.abs(reference), 1e-300)
    return np.max(np.abs(energies - reference) / scale, axis=1)


def _period_from_momenta(times: np.ndarray, p: np.ndarray) -> Optional[float]:
    crossings = np.nonzero((p[:-1] > 0) & (p[1:] <= 0))[0]
    if len(crossings) < 2:
        return None
    stamps = [times[i] + (times[i + 1] - times[i]) * p[i] / (p[i] - p[i + 1]) for i in crossings[:2]]
    return float(stamps[1] - stamps[0])


@dataclass(frozen=True, eq=False)
class DwellSweep:
    """
    Per-orbit dwell times from one batched integration.

    Attributes:
        dwell: Time in region per orbit (one period when periodic, else the horizon)
        periods: Detected period per orbit (nan when the orbit did not close)
        energy_drift: Max relative energy drift per orbit
        max_step_length: Largest single-step displacement per coordinate
    """

    dwell: np.ndarray
    periods: np.ndarray
    energy_drift: np.ndarray
    horizon: float
    max_step_length: np.ndarray = field(repr=False)

    @property
    def periodic(self) -> np.ndarray:
        return np.isfinite(self.periods)


class DwellIntegrator(LoggerMixin):
    """Batched leapfrog that accumulates dwell time and per-period dwell on the fly."""

    def __init__(self, solver: TrajectorySolver, region: Region):
        self.solver = solver
        self.region = region

    def sweep(self, x0, p0) -> DwellSweep:
        solver, region = self.solver, self.region
        x = _as_batch(x0, "x0").copy()
        p = _as_batch(p0, "p0").copy()
        if x.shape != p.shape or x.shape[1] != region.dim:
            raise ValidationError(f"x0 {x.shape}, p0 {p.shape} and region dim {region.dim} disagree")
        batch = x.shape[0]
        h = solver.step
        cumulative = np.zeros(batch)
        marks = np.full((batch, 2), np.nan)
        dwell_marks = np.full((batch, 2), np.nan)
        found = np.zeros(batch, dtype=int)
        e0 = solver.energy(x, p)
        scale = np.maximum(np.abs(e0), 1e-300)
        drift = np.zeros(batch)
        max_move = np.zeros(x.shape[1])

        for step in range(1, solver.n_steps + 1):
            x_new, p_new = solver.leapfrog(x, p)
            solver._guard(x_new, step * h)
            increment = h * segment_fraction_inside(x, x_new, region)
            max_move = np.maximum(max_move, np.max(np.abs(x_new - x), axis=0))
            if solver.detect_period:
                down = (p[:, 0] > 0) & (p_new[:, 0] <= 0) & (found < 2)
                if np.any(down):
                    idx = np.nonzero(down)[0]
                    frac = p[idx, 0] / (p[idx, 0] - p_new[idx, 0])
                    slot = found[idx]
                    marks[idx, slot] = (step - 1 + frac) * h
                    dwell_marks[idx, slot] = cumulative[idx] + frac * increment[idx]
                    found[idx] += 1
            cumulative = cumulative + increment
            drift = np.maximum(drift, np.abs(solver.energy(x_new, p_new) - e0) / scale)
            x, p = x_new, p_new

        closed = found >= 2
        periods = np.where(closed, marks[:, 1] - marks[:, 0], np.nan)
        dwell = np.where(closed, dwell_marks[:, 1] - dwell_marks[:, 0], cumulative)
        self._check_resolution(max_move)
        worst = float(np.max(drift)) if batch else 0.0
        if worst > ENERGY_DRIFT_LIMIT:
            self.logger.warning(f"Relative energy drift {worst:.2e} exceeds {ENERGY_DRIFT_LIMIT:.0e}")
        self.logger.debug(f"Dwell sweep: {batch} orbits, {int(np.sum(closed))} periodic")
        return DwellSweep(dwell, periods, drift, solver.n_steps * h, max_move)

    def _check_resolution(self, max_move: np.ndarray) -> None:
        needed = MIN_STEPS_ACROSS_REGION * max_move
        narrow = np.any(self.region.widths() < needed[None, :])
        if narrow:
            raise UndersamplingError(
                "timeless",
                f"region width {float(np.min(self.region.widths())):.4g} spans fewer than "
                f"{MIN_STEPS_ACROSS_REGION} steps of length {float(np.max(max_move)):.4g}",
            )


def time_in_region(trajectory: Trajectory, region: Region) -> float:
    """
    Parameter time the orbit spends in the region: over one period when
    the orbit closes, otherwise over the whole horizon.

    Raises:
        UndersamplingError: If the region is narrower than five steps
    """
    sweep = DwellIntegrator(trajectory.solver, region).sweep(trajectory.x0, trajectory.p0)
    return float(sweep.dwell[0])


def evolve_points(solver: TrajectorySolver, x0, p0, duration: float) -> Tuple[np.ndarray, np.ndarray]:
    """Carry a batch of phase points forward by ``duration`` with the solver's step."""
    x = _as_batch(x0, "x0").copy()
    p = _as_batch(p0, "p0").copy()
    steps = int(round(duration / solver.step))
    for step in range(steps):
        x, p = solver.leapfrog(x, p)
        solver._guard(x, (step + 1) * solver.step)
    return x, p
