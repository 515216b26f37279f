"""
Probabilities for reparametrization-invariant questions: the weight of
phase-space points whose classical orbit spends more than epsilon of
parameter time in a configuration-space region.

    p = sum_i w_i theta(T_region(orbit_i) - epsilon)

Weights come from a stationary classical ensemble or, semiclassically,
from the Wigner function of a lattice state sampled by |W| and signed.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from histories_sim.config import config
from histories_sim.hilbert.lattice import LatticeModel, wigner_transform
from histories_sim.timeless.dynamics import (
    DwellIntegrator,
    DwellSweep,
    Region,
    Trajectory,
    TrajectorySolver,
    _as_batch,
    evolve_points,
    time_in_region,
)
from histories_sim.utils.errors import DimensionMismatchError, ValidationError
from histories_sim.utils.rng import chunked_map, trajectory_generator

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-9
STATIONARITY_TOL = 1e-6
REPARAM_TOL = 1e-4
UNRELIABLE_NEGATIVE_FRACTION = 0.2


# ==================== ENSEMBLES ====================

@dataclass(frozen=True, eq=False)
class PhaseSpaceEnsemble:
    """
    Weighted phase-space samples (x_i, p_i, w_i) with sum w = 1.

    Example:
        >>> ensemble = thermal_harmonic(omega=1.0, mass=1.0, temperature=0.5, n_samples=1000, seed=3)
        >>> ensemble.dim, len(ensemble)
        (1, 1000)
    """

    x: np.ndarray
    p: np.ndarray
    weights: np.ndarray
    description: str = ""

    def __post_init__(self):
        x = _as_batch(self.x, "x")
        p = _as_batch(self.p, "p")
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if x.shape != p.shape:
            raise DimensionMismatchError(f"x {x.shape} and p {p.shape} differ")
        if weights.shape != (x.shape[0],):
            raise DimensionMismatchError(f"{weights.shape[0]} weights for {x.shape[0]} samples")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValidationError("ensemble weights must be finite and nonnegative")
        total = math.fsum(weights)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"ensemble weights sum to {total!r}, expected 1 within {WEIGHT_TOL:.0e}")
        for name, value in (("x", x), ("p", p), ("weights", weights)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __str__(self) -> str:
        return f"PhaseSpaceEnsemble({len(self)} samples, n={self.dim}, {self.description or 'custom'})"


def _uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _require_samples(n_samples: int) -> None:
    if n_samples < 1:
        raise ValidationError(f"n_samples must be >= 1, got {n_samples}")


def from_arrays(x, p, weights=None, description: str = "") -> PhaseSpaceEnsemble:
    """Ensemble from explicit samples; weights are normalized when given unnormalized."""
    x = _as_batch(x, "x")
    if weights is None:
        weights = _uniform_weights(x.shape[0])
    else:
        weights = np.asarray(weights, dtype=float)
        total = math.fsum(weights)
        if not total > 0:
            raise ValidationError(f"weights must have positive total, got {total}")
        weights = weights / total
    return PhaseSpaceEnsemble(x, p, weights, description or "from arrays")


def thermal_harmonic(
    omega: float, mass: float, temperature: float, n_samples: int, seed: int, dim: int = 1, k_boltzmann: float = 1.0
) -> PhaseSpaceEnsemble:
    """Canonical ensemble exp(-H/kT) of the harmonic oscillator, equal weights."""
    _require_samples(n_samples)
    if omega <= 0 or mass <= 0 or temperature <= 0:
        raise ValidationError(f"need omega, mass, temperature > 0 (got {omega}, {mass}, {temperature})")
    rng = trajectory_generator(seed, 0)
    kT = k_boltzmann * temperature
    x = rng.normal(0.0, math.sqrt(kT / (mass * omega ** 2)), (n_samples, dim))
    p = rng.normal(0.0, math.sqrt(mass * kT), (n_samples, dim))
    return PhaseSpaceEnsemble(x, p, _uniform_weights(n_samples), f"thermal harmonic kT={kT:g}")


def microcanonical_shell(omega: float, mass: float, amplitude: float, n_samples: int, seed: int) -> PhaseSpaceEnsemble:
    """Uniform phase on the 1D harmonic energy shell of amplitude A."""
    _require_samples(n_samples)
    if amplitude <= 0:
        raise ValidationError(f"amplitude must be positive, got {amplitude}")
    phase = trajectory_generator(seed, 0).uniform(0.0, 2.0 * math.pi, n_samples)
    x = amplitude * np.cos(phase)[:, None]
    p = -mass * omega * amplitude * np.sin(phase)[:, None]
    return PhaseSpaceEnsemble(x, p, _uniform_weights(n_samples), f"microcanonical shell A={amplitude:g}")


def gaussian(mean_x, mean_p, sigma_x, sigma_p, n_samples: int, seed: int) -> PhaseSpaceEnsemble:
    """Independent Gaussian spreads in x and p around (mean_x, mean_p)."""
    _require_samples(n_samples)
    mean_x, mean_p = np.atleast_1d(mean_x).astype(float), np.atleast_1d(mean_p).astype(float)
    rng = trajectory_generator(seed, 0)
    x = mean_x + np.atleast_1d(sigma_x) * rng.standard_normal((n_samples, mean_x.size))
    p = mean_p + np.atleast_1d(sigma_p) * rng.standard_normal((n_samples, mean_p.size))
    return PhaseSpaceEnsemble(x, p, _uniform_weights(n_samples), "gaussian")


def evolve_ensemble(ensemble: PhaseSpaceEnsemble, solver: TrajectorySolver, duration: float) -> PhaseSpaceEnsemble:
    """Transport every sample along its orbit for ``duration``; weights unchanged."""
    x, p = evolve_points(solver, ensemble.x, ensemble.p, duration)
    return PhaseSpaceEnsemble(x, p, ensemble.weights, f"{ensemble.description} evolved by {duration:g}")


def energy_density(solver: TrajectorySolver, profile: Callable[[np.ndarray], np.ndarray]) -> Callable:
    """w(x, p) = profile(H(x, p)); stationary for any profile."""

    def density(x, p):
        return profile(solver.energy(np.asarray(x), np.asarray(p)))

    return density


# ==================== STATIONARITY ====================

@dataclass(frozen=True)
class StationarityReport:
    residual: float
    tolerance: float
    n_orbits: int

    @property
    def stationary(self) -> bool:
        return self.residual <= self.tolerance

    def __str__(self) -> str:
        verdict = "stationary" if self.stationary else "NOT stationary"
        return f"{verdict}: residual {self.residual:.3e} over {self.n_orbits} orbits (tol {self.tolerance:.0e})"


def check_stationarity(
    density: Callable,
    solver: TrajectorySolver,
    check_times,
    starts: PhaseSpaceEnsemble,
    tolerance: float = STATIONARITY_TOL,
) -> StationarityReport:
    """
    max over orbits and check times of |w(x(t), p(t)) - w(x0, p0)|.

    A density that depends on phase space only through H passes up to
    the integrator's energy error.
    """
    times = np.sort(np.atleast_1d(np.asarray(check_times, dtype=float)))
    if np.any(times < 0):
        raise ValidationError("check times must be nonnegative")
    initial = np.asarray(density(starts.x, starts.p), dtype=float)
    x, p = starts.x, starts.p
    elapsed, residual = 0.0, 0.0
    for t in times:
        x, p = evolve_points(solver, x, p, t - elapsed)
        elapsed = t
        residual = max(residual, float(np.max(np.abs(np.asarray(density(x, p)) - initial))))
    report = StationarityReport(residual, tolerance, len(starts))
    logger.debug(str(report))
    return report


# ==================== ENTRY PROBABILITY ====================

@dataclass(frozen=True, eq=False)
class EntryProbability:
    """
    Region-entry probability with its statistical error and its
    sensitivity to the dwell threshold.

    Attributes:
        probability: p at the nominal epsilon
        stderr: Weighted standard error sqrt(sum w^2 (theta - p)^2)
        epsilon: Nominal dwell threshold
        sensitivity: p at epsilon/2 and 2 epsilon keyed by threshold
        dwell: Per-sample time in region
        weights: Per-sample weights (signed for Wigner sampling)
    """

    probability: float
    stderr: float
    epsilon: float
    sensitivity: Dict[float, float]
    dwell: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    periodic_fraction: float = 1.0

    @property
    def epsilon_shift(self) -> float:
        return max(abs(value - self.probability) for value in self.sensitivity.values())

    def to_dict(self) -> dict:
        return {
            "probability": self.probability,
            "stderr": self.stderr,
            "epsilon": self.epsilon,
            "p_half_epsilon": self.sensitivity[0.5 * self.epsilon],
            "p_double_epsilon": self.sensitivity[2.0 * self.epsilon],
            "periodic_fraction": self.periodic_fraction,
            "n_samples": int(self.dwell.size),
        }

    def rows(self):
        """(sample, dwell, weight, entered) rows for histogramming."""
        for index, (dwell, weight) in enumerate(zip(self.dwell, self.weights)):
            yield index, float(dwell), float(weight), int(dwell > self.epsilon)


def dwell_times(
    x0,
    p0,
    solver: TrajectorySolver,
    region: Region,
    threads: Optional[int] = None,
    chunk: Optional[int] = None,
) -> DwellSweep:
    """Dwell time of every orbit, integrated in fixed chunks and concatenated in order."""
    x0, p0 = _as_batch(x0, "x0"), _as_batch(p0, "p0")
    threads = config.THREADS if threads is None else threads
    chunk = config.TRAJECTORY_CHUNK if chunk is None else chunk
    integrator = DwellIntegrator(solver, region)
    parts = chunked_map(lambda start, stop: integrator.sweep(x0[start:stop], p0[start:stop]), len(x0), chunk, threads)
    return DwellSweep(
        np.concatenate([part.dwell for part in parts]),
        np.concatenate([part.periods for part in parts]),
        np.concatenate([part.energy_drift for part in parts]),
        parts[0].horizon,
        np.max(np.stack([part.max_step_length for part in parts]), axis=0),
    )


def _weighted_fraction(weights: np.ndarray, entered: np.ndarray):
    """Self-normalized sum w theta / sum w with a delta-method standard error."""
    total = math.fsum(weights)
    if total == 0:
        raise ValidationError("weights sum to zero; the probability is undefined")
    p = math.fsum(weights * entered) / total
    stderr = math.sqrt(math.fsum((weights / total) ** 2 * (entered - p) ** 2))
    return p, stderr


def _entry_from_dwell(sweep: DwellSweep, weights: np.ndarray, epsilon: float) -> EntryProbability:
    sensitivity = {}
    for threshold in (0.5 * epsilon, 2.0 * epsilon):
        sensitivity[threshold], _ = _weighted_fraction(weights, (sweep.dwell > threshold).astype(float))
    p, stderr = _weighted_fraction(weights, (sweep.dwell > epsilon).astype(float))
    result = EntryProbability(p, stderr, epsilon, sensitivity, sweep.dwell, weights, float(np.mean(sweep.periodic)))
    if abs(sensitivity[2.0 * epsilon] - p) > 3.0 * max(stderr, 1e-15):
        logger.warning(
            f"Entry probability sensitive to epsilon: p({epsilon:.3g}) = {p:.4f}, "
            f"p({2 * epsilon:.3g}) = {sensitivity[2 * epsilon]:.4f}, stderr {stderr:.2e}"
        )
    return result


def _resolve_epsilon(solver: TrajectorySolver, epsilon: Optional[float]) -> float:
    epsilon = solver.default_epsilon if epsilon is None else float(epsilon)
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    return epsilon


def region_entry_probability(
    ensemble: PhaseSpaceEnsemble,
    solver: TrajectorySolver,
    region: Region,
    epsilon: Optional[float] = None,
    threads: Optional[int] = None,
    chunk: Optional[int] = None,
) -> EntryProbability:
    """
    Weight of orbits spending more than epsilon in the region.

    Randomness lives in the ensemble builders; this reduction is
    deterministic given the samples.

    Args:
        epsilon: Dwell threshold; defaults to ten integrator steps

    Raises:
        UndersamplingError: If the region is narrower than five steps

    Example:
        >>> solver = TrajectorySolver(1.0, HarmonicPotential(1.0), 1e-3, 13.0)
        >>> shell = microcanonical_shell(1.0, 1.0, 1.0, 200, seed=1)
        >>> region_entry_probability(shell, solver, Region.interval(2.0, 3.0)).probability
        0.0
    """
    epsilon = _resolve_epsilon(solver, epsilon)
    if ensemble.dim != region.dim:
        raise DimensionMismatchError(f"ensemble dim {ensemble.dim} vs region dim {region.dim}")
    sweep = dwell_times(ensemble.x, ensemble.p, solver, region, threads, chunk)
    result = _entry_from_dwell(sweep, ensemble.weights, epsilon)
    logger.info(f"Region entry probability {result.probability:.6f} +/- {result.stderr:.2e} (epsilon={epsilon:.3g})")
    return result


# ==================== REPARAMETRIZATION ====================

@dataclass(frozen=True)
class ReparamReport:
    """Per-period dwell under a halved step and a shifted starting point."""

    dwell: float
    dwell_half_step: float
    dwell_shifted: Optional[float]
    step_error: float
    shift_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.step_error <= self.tolerance and self.shift_error <= self.tolerance


def _relative(a: float, b: float, floor: float) -> float:
    return abs(a - b) / max(abs(a), floor)


def reparam_invariant_check(trajectory: Trajectory, region: Region, tolerance: float = REPARAM_TOL) -> ReparamReport:
    """
    Re-measure the dwell time of the same orbit with step h/2 and from a
    starting point half a period further along it.

    Orbits without a detected period skip the shifted comparison.
    """
    solver = trajectory.solver
    base = time_in_region(trajectory, region)
    halved = float(DwellIntegrator(solver.with_step(0.5 * solver.step), region).sweep(trajectory.x0, trajectory.p0).dwell[0])
    floor = solver.step
    shifted, shift_error = None, 0.0
    if trajectory.period is not None:
        x_mid, p_mid = trajectory.state_at(trajectory.times[0] + 0.5 * trajectory.period)
        shifted = float(DwellIntegrator(solver, region).sweep(x_mid, p_mid).dwell[0])
        shift_error = _relative(base, shifted, floor)
    else:
        logger.debug("Orbit did not close within the horizon; shifted-start check skipped")
    return ReparamReport(base, halved, shifted, _relative(base, halved, floor), shift_error, tolerance)


# ==================== SEMICLASSICAL ====================

@dataclass(frozen=True, eq=False)
class SemiclassicalProbability:
    """
    Entry probability with Wigner-function weights.

    ``negative_fraction`` is the share of |W| mass in negative cells; above
    0.2 the result is flagged unreliable.
    """

    entry: EntryProbability
    negative_fraction: float
    sample_negative_fraction: float
    n_samples: int
    seed: int

    @property
    def probability(self) -> float:
        return self.entry.probability

    @property
    def stderr(self) -> float:
        return self.entry.stderr

    @property
    def reliable(self) -> bool:
        return self.negative_fraction <= UNRELIABLE_NEGATIVE_FRACTION

    def to_dict(self) -> dict:
        data = self.entry.to_dict()
        data.update(
            {
                "negative_fraction": self.negative_fraction,
                "sample_negative_fraction": self.sample_negative_fraction,
                "reliable": self.reliable,
                "seed": self.seed,
            }
        )
        return data


def sample_wigner(rho, lattice: LatticeModel, n_samples: int, seed: int, p_grid: Optional[np.ndarray] = None):
    """
    Phase-space points drawn with probability proportional to |W| per
    cell, jittered uniformly inside the cell, plus the sign of W there.

    Returns:
        (x, p, signs, grid)
    """
    _require_samples(n_samples)
    grid = wigner_transform(rho, lattice, p_grid)
    if len(grid.p) < 2:
        raise ValidationError("Wigner sampling needs at least two momentum points")
    magnitude = np.abs(grid.values).ravel()
    total = math.fsum(magnitude)
    if not total > 0:
        raise ValidationError("Wigner function vanishes on the grid")
    rng = trajectory_generator(seed, 0)
    cells = rng.choice(magnitude.size, size=n_samples, p=magnitude / total)
    ix, ip = np.unravel_index(cells, grid.values.shape)
    x = grid.x[ix] + grid.dx * (rng.random(n_samples) - 0.5)
    p = grid.p[ip] + grid.dp * (rng.random(n_samples) - 0.5)
    signs = np.sign(grid.values[ix, ip])
    return x[:, None], p[:, None], signs, grid


def semiclassical_probability(
    rho,
    lattice: LatticeModel,
    solver: TrajectorySolver,
    region: Region,
    epsilon: Optional[float] = None,
    n_samples: int = 20000,
    seed: int = 0,
    p_grid: Optional[Sequence[float]] = None,
    threads: Optional[int] = None,
    chunk: Optional[int] = None,
) -> SemiclassicalProbability:
    """
    Entry probability with the Wigner function of rho as the weight.

    Samples follow |W| and carry sign(W); the estimate is the
    self-normalized signed average of theta(dwell - epsilon). Negative
    cells are kept rather than clipped.
    """
    epsilon = _resolve_epsilon(solver, epsilon)
    if region.dim != 1:
        raise DimensionMismatchError(f"lattice states are one dimensional, region has dim {region.dim}")
    if not math.isclose(solver.mass, lattice.mass, rel_tol=1e-12):
        raise ValidationError(f"solver mass {solver.mass} differs from lattice mass {lattice.mass}")
    x, p, signs, grid = sample_wigner(rho, lattice, n_samples, seed, None if p_grid is None else np.asarray(p_grid))
    sweep = dwell_times(x, p, solver, region, threads, chunk)
    entry = _entry_from_dwell(sweep, signs.astype(float), epsilon)
    negative = grid.negative_fraction()
    result = SemiclassicalProbability(entry, negative, float(np.mean(signs < 0)), n_samples, seed)
    if not result.reliable:
        logger.warning(
            f"Wigner function carries {negative:.1%} negative weight (> {UNRELIABLE_NEGATIVE_FRACTION:.0%}); "
            "semiclassical probability flagged unreliable"
        )
    return result
