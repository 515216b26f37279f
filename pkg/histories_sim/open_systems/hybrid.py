"""
A classical particle X coupled linearly (lambda X x) to a light quantum
particle.

mean-field:  M X'' + V'(X) + lambda <psi|x|psi> = 0, psi evolving unitarily
             under H + lambda X x.
stochastic:  M X'' + M gamma X' + V'(X) + lambda xbar(t) = 0 with xbar read
             off one QSD trajectory of the light particle, whose Hamiltonian
             carries the same lambda X x back-action.

Each step freezes the quantum expectation value, advances (X, X') by one
RK4 step, then advances psi with the coupling evaluated at the step's
starting X.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from histories_sim.config import config
from histories_sim.hilbert.operators import StateVector, as_matrix, as_vector, require_hermitian
from histories_sim.open_systems.lindblad import LindbladModel
from histories_sim.open_systems.qsd import NoiseBlocks, _renormalize, qsd_increment
from histories_sim.utils.errors import DimensionMismatchError, NumericalGuardError, ValidationError
from histories_sim.utils.rng import chunked_map

logger = logging.getLogger(__name__)

MODES = ("mean-field", "stochastic")
LEAK_LIMIT = 1e-6


@dataclass(frozen=True, eq=False)
class HybridState:
    """
    Initial classical coordinates and light-particle state.

    The classical potential is V(X) = spring X^2 / 2.
    """

    X: float
    Xdot: float
    psi: StateVector
    coupling: float
    mass: float = 1.0
    gamma: float = 0.0
    spring: float = 0.0

    def __post_init__(self):
        if not isinstance(self.psi, StateVector):
            object.__setattr__(self, "psi", StateVector(as_vector(self.psi)))
        if self.mass <= 0:
            raise ValidationError(f"mass must be positive, got {self.mass}")
        if self.gamma < 0:
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True, eq=False)
class HybridEnsemble:
    """Classical trajectories X(t), X'(t) and the driving xbar(t), one row per run."""

    mode: str
    master_seed: int
    times: np.ndarray
    X: np.ndarray
    Xdot: np.ndarray
    xbar: np.ndarray

    @property
    def n_runs(self) -> int:
        return self.X.shape[0]

    def final_positions(self) -> np.ndarray:
        return self.X[:, -1].copy()

    def rows(self):
        """(t, observable, value, run) rows for CSV export."""
        for name, values in (("X", self.X), ("Xdot", self.Xdot), ("xbar", self.xbar)):
            for run, series in enumerate(values):
                for t, value in zip(self.times, series):
                    yield float(t), name, float(value), run


def _classical_rk4(X, V, dt, force):
    """One RK4 step of X' = V, M V' = force(X, V) with the quantum drive frozen."""
    k1x, k1v = V, force(X, V)
    k2x, k2v = V + 0.5 * dt * k1v, force(X + 0.5 * dt * k1x, V + 0.5 * dt * k1v)
    k3x, k3v = V + 0.5 * dt * k2v, force(X + 0.5 * dt * k2x, V + 0.5 * dt * k2v)
    k4x, k4v = V + dt * k3v, force(X + dt * k3x, V + dt * k3v)
    X_new = X + (dt / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
    V_new = V + (dt / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
    return X_new, V_new


def _run_batch(
    hybrid: HybridState,
    model: LindbladModel,
    position: np.ndarray,
    dt: float,
    steps: int,
    master_seed: int,
    indices: range,
    mode: str,
    leak_projector: Optional[np.ndarray],
):
    batch = len(indices)
    psi = np.repeat(hybrid.psi.amplitudes[None, :], batch, axis=0)
    X = np.full(batch, float(hybrid.X))
    V = np.full(batch, float(hybrid.Xdot))
    stochastic = mode == "stochastic"
    friction = hybrid.gamma if stochastic else 0.0
    noise = NoiseBlocks(master_seed, indices, len(model.lindblads), dt) if stochastic else None

    def mean_position(states):
        return np.real(np.einsum("bk,kl,bl->b", states.conj(), position, states))

    xbar = mean_position(psi)
    history = [(X.copy(), V.copy(), xbar.copy())]
    for step in range(steps):
        drive = hybrid.coupling * xbar

        def force(x, v):
            return (-hybrid.spring * x - drive) / hybrid.mass - friction * v

        X_start = X
        X, V = _classical_rk4(X, V, dt, force)
        if stochastic:
            psi = _stochastic_step(model, position, hybrid.coupling, X_start, psi, dt, noise.next())
        else:
            psi = _unitary_step(model, position, hybrid.coupling, X_start, psi, dt)
        if leak_projector is not None:
            leak = float(np.max(np.real(np.einsum("bk,kl,bl->b", psi.conj(), leak_projector, psi))))
            if leak > LEAK_LIMIT:
                raise NumericalGuardError(
                    "open_systems.hybrid", "truncation leak", f"population {leak:.3e} at t={(step + 1) * dt:.4g}"
                )
        xbar = mean_position(psi)
        history.append((X.copy(), V.copy(), xbar.copy()))
    return tuple(np.stack([h[i] for h in history], axis=1) for i in range(3))


def _unitary_step(model, position, coupling, X, psi, dt):
    out = np.empty_like(psi)
    for b in range(psi.shape[0]):
        hamiltonian = model.hamiltonian + coupling * X[b] * position
        out[b] = scipy.linalg.expm(-1j * hamiltonian * dt / model.hbar) @ psi[b]
    return out


def _stochastic_step(model, position, coupling, X, psi, dt, increments):
    # H + lambda X x differs per run; the back-action enters as an extra drift term
    base = qsd_increment(model, psi, dt, increments)
    back_action = -1j / model.hbar * coupling * X[:, None] * (psi @ position.T) * dt
    return _renormalize(base + back_action)


def _prepare(hybrid: HybridState, model: LindbladModel, position, mode: str, leak_projector):
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    position = as_matrix(position)
    require_hermitian(position, "coupling operator")
    if position.shape[0] != model.dim or hybrid.psi.dim != model.dim:
        raise DimensionMismatchError(
            f"light particle dims: model {model.dim}, coupling {position.shape[0]}, state {hybrid.psi.dim}"
        )
    leak = None if leak_projector is None else as_matrix(leak_projector)
    return position, leak


def hybrid_simulate(
    hybrid: HybridState,
    model: LindbladModel,
    position,
    dt: float,
    steps: int,
    seed: int,
    mode: str = "stochastic",
    index: int = 0,
    leak_projector=None,
) -> HybridEnsemble:
    """
    One hybrid run; stochastic runs draw from trajectory stream ``index``.

    Args:
        hybrid: Initial classical and quantum state
        model: Light-particle Lindblad model (H and localizing L_j)
        position: Light-particle operator x entering lambda X x
        leak_projector: Projector onto the top of a truncated basis; when
            given, a population above 1e-6 there aborts the run

    Raises:
        NumericalGuardError: On truncation leak
    """
    position, leak = _prepare(hybrid, model, position, mode, leak_projector)
    X, V, xbar = _run_batch(hybrid, model, position, dt, steps, seed, range(index, index + 1), mode, leak)
    return HybridEnsemble(mode, seed, dt * np.arange(steps + 1), X, V, xbar)


def hybrid_ensemble(
    hybrid: HybridState,
    model: LindbladModel,
    position,
    dt: float,
    steps: int,
    n_runs: int,
    master_seed: int,
    mode: str = "stochastic",
    leak_projector=None,
    threads: Optional[int] = None,
    chunk: Optional[int] = None,
) -> HybridEnsemble:
    """
    Many hybrid runs. Mean-field runs are deterministic, so one run is
    integrated and repeated.
    """
    if n_runs < 1:
        raise ValidationError(f"n_runs must be >= 1, got {n_runs}")
    position, leak = _prepare(hybrid, model, position, mode, leak_projector)
    times = dt * np.arange(steps + 1)
    if mode == "mean-field":
        X, V, xbar = _run_batch(hybrid, model, position, dt, steps, master_seed, range(1), mode, leak)
        repeat = lambda a: np.repeat(a, n_runs, axis=0)  # noqa: E731
        return HybridEnsemble(mode, master_seed, times, repeat(X), repeat(V), repeat(xbar))

    threads = config.THREADS if threads is None else threads
    chunk = config.TRAJECTORY_CHUNK if chunk is None else chunk
    logger.info(f"Hybrid ensemble: {n_runs} stochastic runs x {steps} steps (seed={master_seed})")
    parts = chunked_map(
        lambda start, stop: _run_batch(
            hybrid, model, position, dt, steps, master_seed, range(start, stop), mode, leak
        ),
        n_runs,
        chunk,
        threads,
    )
    X, V, xbar = (np.concatenate([part[i] for part in parts]) for i in range(3))
    return HybridEnsemble(mode, master_seed, times, X, V, xbar)
