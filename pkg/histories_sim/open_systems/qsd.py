"""
Quantum state diffusion: the diffusive unraveling of a Lindblad model.

    |dpsi> = -(i/hbar) H |psi> dt
             + sum_j (<L_j^dagger> L_j - 1/2 L_j^dagger L_j - 1/2 <L_j^dagger><L_j>) |psi> dt
             + sum_j (L_j - <L_j>) |psi> dxi_j

integrated by Euler-Maruyama with explicit renormalization after every
step. The complex increments satisfy M[dxi dxi*] = dt, M[dxi dxi] = 0.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from histories_sim.config import config
from histories_sim.hilbert.operators import StateVector, as_matrix, as_vector
from histories_sim.open_systems.lindblad import LindbladModel
from histories_sim.utils.errors import DimensionMismatchError, NormCollapseError, ValidationError
from histories_sim.utils.rng import chunked_map, complex_increments, ordered_sum, trajectory_generator

logger = logging.getLogger(__name__)

NORM_FLOOR = 1e-12
# Steps of noise drawn per generator call; fixed so draws never depend on batching
NOISE_BLOCK = 256


def qsd_increment(model: LindbladModel, psi: np.ndarray, dt: float, noise: np.ndarray) -> np.ndarray:
    """
    Unnormalized Euler-Maruyama update for a batch of states.

    Args:
        psi: States, shape (B, d)
        noise: Complex increments, shape (B, J) with J = number of Lindblad operators
    """
    drift = -1j / model.hbar * psi @ model.hamiltonian.T
    if not model.lindblads:
        return psi + drift * dt
    ops = np.stack(model.lindblads)
    l_psi = np.einsum("jkl,bl->bjk", ops, psi)
    means = np.einsum("bk,bjk->bj", psi.conj(), l_psi)
    ldag_l_psi = np.einsum("jlk,bjl->bk", ops.conj(), l_psi)
    drift = (
        drift
        + np.einsum("bj,bjk->bk", means.conj(), l_psi)
        - 0.5 * ldag_l_psi
        - 0.5 * (np.sum(np.abs(means) ** 2, axis=1))[:, None] * psi
    )
    centred = l_psi - means[:, :, None] * psi[:, None, :]
    diffusion = np.einsum("bj,bjk->bk", noise, centred)
    return psi + drift * dt + diffusion


def _renormalize(psi: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(psi, axis=1)
    smallest = float(np.min(norms))
    if smallest < NORM_FLOOR:
        raise NormCollapseError("open_systems.qsd", smallest)
    return psi / norms[:, None]


def qsd_step(model: LindbladModel, psi, dt: float, noise) -> StateVector:
    """
    One renormalized QSD step; deterministic given (psi, dt, noise).

    Raises:
        NormCollapseError: If the pre-normalization norm falls below 1e-12
    """
    vector = as_vector(psi)
    if vector.shape[0] != model.dim:
        raise DimensionMismatchError(f"state dim {vector.shape[0]} vs model dim {model.dim}")
    increments = np.atleast_1d(np.asarray(noise, dtype=complex))
    if increments.shape != (len(model.lindblads),):
        raise ValidationError(f"need {len(model.lindblads)} noise increments, got shape {increments.shape}")
    updated = qsd_increment(model, vector[None, :], dt, increments[None, :])
    return StateVector(_renormalize(updated)[0])


@dataclass(frozen=True, eq=False)
class QsdTrajectory:
    """
    One QSD trajectory; noise is reproducible from (seed, index).

    Attributes:
        seed: Master seed
        index: Trajectory index under the master seed
        times: Recorded times
        states: Recorded normalized states, shape (n_times, d)
    """

    seed: int
    index: int
    dt: float
    times: np.ndarray
    states: np.ndarray
    observables: Dict[str, np.ndarray] = field(default_factory=dict)

    def expectation(self, operator) -> np.ndarray:
        op = as_matrix(operator)
        return np.real(np.einsum("tk,kl,tl->t", self.states.conj(), op, self.states))


@dataclass(frozen=True, eq=False)
class QsdEnsemble:
    """
    Ensemble mean density rho_bar(t) plus per-trajectory observable records.

    ``observables[name]`` has shape (n_traj, n_times); ``variances[name]``
    holds <O^2> - <O>^2 along each trajectory.
    """

    master_seed: int
    n_traj: int
    times: np.ndarray
    mean_rho: np.ndarray
    observables: Dict[str, np.ndarray] = field(default_factory=dict)
    variances: Dict[str, np.ndarray] = field(default_factory=dict)

    def ensemble_variance(self, operator) -> np.ndarray:
        """Tr(rho_bar O^2) - Tr(rho_bar O)^2 at every recorded time."""
        op = as_matrix(operator)
        first = np.real(np.einsum("tij,ji->t", self.mean_rho, op))
        second = np.real(np.einsum("tij,ji->t", self.mean_rho, op @ op))
        return second - first ** 2

    def rows(self):
        """(t, observable, value, trajectory) rows for CSV export."""
        for name, values in self.observables.items():
            for trajectory, series in enumerate(values):
                for t, value in zip(self.times, series):
                    yield float(t), name, float(value), trajectory


def _integrate_batch(
    model: LindbladModel,
    psi0: np.ndarray,
    dt: float,
    steps: int,
    master_seed: int,
    indices: range,
    record_every: int,
    operators: Mapping[str, np.ndarray],
):
    """Integrate trajectories ``indices`` side by side; each draws from its own stream."""
    batch = len(indices)
    noise_source = NoiseBlocks(master_seed, indices, len(model.lindblads), dt)
    psi = np.repeat(psi0[None, :], batch, axis=0)
    recorded = [psi.copy()]
    for step in range(steps):
        psi = _renormalize(qsd_increment(model, psi, dt, noise_source.next()))
        if (step + 1) % record_every == 0 or step + 1 == steps:
            recorded.append(psi.copy())
    states = np.stack(recorded, axis=1)
    mean_part = np.einsum("btk,btl->tkl", states, states.conj())
    observed = {}
    for name, op in operators.items():
        first = np.real(np.einsum("btk,kl,btl->bt", states.conj(), op, states))
        second = np.real(np.einsum("btk,kl,btl->bt", states.conj(), op @ op, states))
        observed[name] = (first, second - first ** 2)
    return states, mean_part, observed


class NoiseBlocks:
    """
    Per-trajectory complex increments drawn NOISE_BLOCK steps at a time.

    Row b of every draw comes from its own generator, so a trajectory sees
    the same noise whatever batch it runs in.
    """

    def __init__(self, master_seed: int, indices: range, n_ops: int, dt: float):
        self.generators = [trajectory_generator(master_seed, i) for i in indices]
        self.n_ops = n_ops
        self.dt = dt
        self.step = 0
        self.block: Optional[np.ndarray] = None

    def next(self) -> np.ndarray:
        offset = self.step % NOISE_BLOCK
        self.step += 1
        if not self.n_ops:
            return np.zeros((len(self.generators), 0), dtype=complex)
        if offset == 0:
            self.block = np.stack(
                [complex_increments(g, (NOISE_BLOCK, self.n_ops), self.dt) for g in self.generators]
            )
        return self.block[:, offset, :]


def _record_times(dt: float, steps: int, record_every: int) -> np.ndarray:
    marks = [0] + [s for s in range(1, steps + 1) if s % record_every == 0 or s == steps]
    return dt * np.array(marks, dtype=float)


def qsd_trajectory(
    model: LindbladModel,
    psi0,
    dt: float,
    steps: int,
    seed: int,
    index: int = 0,
    record_every: int = 1,
) -> QsdTrajectory:
    """Single trajectory ``index`` under ``seed``; identical to that member of an ensemble."""
    vector = StateVector(as_vector(psi0)).amplitudes
    states, _, _ = _integrate_batch(model, vector, dt, steps, seed, range(index, index + 1), record_every, {})
    return QsdTrajectory(seed, index, dt, _record_times(dt, steps, record_every), states[0])


def qsd_ensemble(
    model: LindbladModel,
    psi0,
    dt: float,
    steps: int,
    n_traj: int,
    master_seed: int,
    observables: Optional[Mapping[str, object]] = None,
    record_every: int = 1,
    threads: Optional[int] = None,
    chunk: Optional[int] = None,
) -> QsdEnsemble:
    """
    Average n_traj QSD trajectories.

    Trajectory i draws from trajectory_generator(master_seed, i). Chunks
    of ``chunk`` trajectories run on ``threads`` workers and are reduced
    in chunk order, so the result is bitwise identical for any thread
    count.

    Example:
        >>> sm = np.array([[0, 0], [1, 0]])
        >>> model = LindbladModel(np.zeros((2, 2)), (sm,))
        >>> out = qsd_ensemble(model, [0, 1], 1e-3, 100, 16, master_seed=7)
    """
    if n_traj < 1:
        raise ValidationError(f"n_traj must be >= 1, got {n_traj}")
    if steps < 0 or dt <= 0 or record_every < 1:
        raise ValidationError(f"need dt > 0, steps >= 0, record_every >= 1 (got {dt}, {steps}, {record_every})")
    vector = StateVector(as_vector(psi0)).amplitudes
    if vector.shape[0] != model.dim:
        raise DimensionMismatchError(f"state dim {vector.shape[0]} vs model dim {model.dim}")
    operators = {name: as_matrix(op) for name, op in (observables or {}).items()}
    threads = config.THREADS if threads is None else threads
    chunk = config.TRAJECTORY_CHUNK if chunk is None else chunk

    def run_chunk(start: int, stop: int):
        _, mean_part, observed = _integrate_batch(
            model, vector, dt, steps, master_seed, range(start, stop), record_every, operators
        )
        return mean_part, observed

    logger.info(f"QSD ensemble: {n_traj} trajectories x {steps} steps (seed={master_seed}, threads={threads})")
    parts = chunked_map(run_chunk, n_traj, chunk, threads)
    mean_rho = ordered_sum([part[0] for part in parts]) / n_traj
    values = {name: np.concatenate([part[1][name][0] for part in parts]) for name in operators}
    variances = {name: np.concatenate([part[1][name][1] for part in parts]) for name in operators}
    return QsdEnsemble(master_seed, n_traj, _record_times(dt, steps, record_every), mean_rho, values, variances)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1/2 ||a - b||_1 for Hermitian a, b."""
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))
