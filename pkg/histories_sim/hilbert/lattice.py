"""
One-dimensional position lattice: Hamiltonian, position/momentum
operators, wavepacket builders, position-bin projector families and the
discrete Wigner transform.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Hashable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from histories_sim.hilbert.constants import HBAR
from histories_sim.hilbert.operators import (
    Operator,
    ProjectorFamily,
    StateVector,
    as_density,
)
from histories_sim.utils.errors import BoundaryLeakError, DimensionMismatchError, ValidationError

logger = logging.getLogger(__name__)

# Sites at each end whose probability counts as boundary mass
BOUNDARY_SITES = 4
BOUNDARY_MASS_LIMIT = 1e-8


@dataclass(frozen=True, eq=False)
class LatticeModel:
    """
    Uniform 1D lattice x_i = x_min + i*dx with Dirichlet ends.

    Example:
        >>> lattice = LatticeModel.symmetric(256, 0.25)
        >>> lattice.x[0], lattice.x[-1]
        (-31.875, 31.875)
    """

    n_sites: int
    x_min: float
    dx: float
    mass: float = 1.0
    potential: np.ndarray = field(default=None)
    hbar: float = HBAR

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValidationError(f"n_sites must be >= 2, got {self.n_sites}")
        if not self.dx > 0:
            raise ValidationError(f"dx must be positive, got {self.dx}")
        if not self.mass > 0:
            raise ValidationError(f"mass must be positive, got {self.mass}")
        if not self.hbar > 0:
            raise ValidationError(f"hbar must be positive, got {self.hbar}")
        potential = np.zeros(self.n_sites) if self.potential is None else np.asarray(self.potential, dtype=float)
        if potential.shape != (self.n_sites,):
            raise ValidationError(f"potential has shape {potential.shape}, expected ({self.n_sites},)")
        if not np.all(np.isfinite(potential)):
            raise ValidationError("potential has non-finite entries")
        potential = potential.copy()
        potential.setflags(write=False)
        object.__setattr__(self, "potential", potential)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_sites)

    @property
    def hopping(self) -> float:
        """Kinetic coupling hbar^2 / (2 M dx^2)."""
        return self.hbar ** 2 / (2.0 * self.mass * self.dx ** 2)

    def with_potential(self, potential) -> "LatticeModel":
        values = potential(self.x) if callable(potential) else potential
        return LatticeModel(self.n_sites, self.x_min, self.dx, self.mass, values, self.hbar)

    @classmethod
    def symmetric(
        cls,
        n_sites: int,
        dx: float,
        mass: float = 1.0,
        potential: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        hbar: float = HBAR,
    ) -> "LatticeModel":
        """Lattice centred on x = 0; for even n_sites no site sits at the origin."""
        x_min = -0.5 * (n_sites - 1) * dx
        lattice = cls(n_sites, x_min, dx, mass, None, hbar)
        return lattice.with_potential(potential) if potential is not None else lattice

    @classmethod
    def harmonic(cls, n_sites: int, dx: float, omega: float, mass: float = 1.0, hbar: float = HBAR) -> "LatticeModel":
        return cls.symmetric(n_sites, dx, mass, lambda x: 0.5 * mass * omega ** 2 * x ** 2, hbar)


def build_lattice_hamiltonian(model: LatticeModel) -> Operator:
    """
    H = -hbar^2/(2M) d^2/dx^2 + V with second-order central differences.

    Dirichlet ends: amplitude outside the lattice is zero.
    """
    c = model.hopping
    n = model.n_sites
    matrix = np.diag(2.0 * c + model.potential).astype(complex)
    off = -c * np.ones(n - 1)
    matrix += np.diag(off, 1) + np.diag(off, -1)
    return Operator(matrix)


def lattice_eigenvalues_free(model: LatticeModel) -> np.ndarray:
    """Exact spectrum of the free Dirichlet lattice: 2c(1 - cos(k_n dx)), k_n = n*pi/((N+1)dx)."""
    n = np.arange(1, model.n_sites + 1)
    k = n * np.pi / ((model.n_sites + 1) * model.dx)
    return 2.0 * model.hopping * (1.0 - np.cos(k * model.dx))


def position_operator(model: LatticeModel) -> Operator:
    return Operator(np.diag(model.x).astype(complex))


def derivative_matrix(model: LatticeModel) -> np.ndarray:
    """Central first difference (f_{i+1} - f_{i-1}) / (2 dx); real antisymmetric."""
    n = model.n_sites
    return (np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / (2.0 * model.dx)


def momentum_operator(model: LatticeModel) -> Operator:
    return Operator(-1j * model.hbar * derivative_matrix(model))


def gaussian_wavepacket(model: LatticeModel, x0: float, p0: float, width: float) -> StateVector:
    """
    Lattice Gaussian with position spread ``width`` centred at (x0, p0).

    psi_i ~ exp(-(x_i - x0)^2 / (4 width^2) + i p0 x_i / hbar)
    """
    if width <= 0:
        raise ValidationError(f"width must be positive, got {width}")
    x = model.x
    amplitudes = np.exp(-((x - x0) ** 2) / (4.0 * width ** 2) + 1j * p0 * x / model.hbar)
    return StateVector.normalized(amplitudes)


def superpose(*states: StateVector, coefficients: Optional[Sequence[complex]] = None) -> StateVector:
    """Normalized linear combination of states."""
    if coefficients is None:
        coefficients = [1.0] * len(states)
    total = sum(c * s.amplitudes for c, s in zip(coefficients, states))
    return StateVector.normalized(total)


def reflect(model: LatticeModel, state: StateVector) -> StateVector:
    """Parity image psi(x) -> psi(-x); requires a lattice symmetric about 0."""
    if not np.allclose(model.x, -model.x[::-1], atol=1e-12 * model.dx):
        raise ValidationError("parity needs a lattice symmetric about x = 0")
    return StateVector(state.amplitudes[::-1])


def lattice_eigenstate(model: LatticeModel, n: int = 0) -> StateVector:
    """n-th eigenvector of the lattice Hamiltonian, phase fixed so its largest entry is real positive."""
    eigenvalues, eigenvectors = np.linalg.eigh(build_lattice_hamiltonian(model).matrix)
    vector = eigenvectors[:, n]
    pivot = vector[np.argmax(np.abs(vector))]
    return StateVector.normalized(vector * abs(pivot) / pivot)


def position_bins(
    model: LatticeModel,
    boundaries: Sequence[float],
    labels: Sequence[Hashable] = (),
) -> ProjectorFamily:
    """
    Family of site-indicator projectors for the bins
    (-inf, b_0), [b_0, b_1), ..., [b_last, +inf).
    """
    edges = np.asarray(sorted(boundaries), dtype=float)
    bin_index = np.searchsorted(edges, model.x, side="right")
    members = []
    for k in range(len(edges) + 1):
        members.append(np.diag((bin_index == k).astype(complex)))
    return ProjectorFamily(tuple(members), tuple(labels))


def site_projector(model: LatticeModel, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (model.n_sites,):
        raise DimensionMismatchError(f"mask shape {mask.shape} vs {model.n_sites} sites")
    return np.diag(mask.astype(complex))


def boundary_mass(model: LatticeModel, populations: np.ndarray, sites: int = BOUNDARY_SITES) -> float:
    """Probability carried by the outermost ``sites`` sites at each end."""
    populations = np.real(np.asarray(populations))
    return float(np.sum(populations[:sites]) + np.sum(populations[-sites:]))


def check_boundary(model: LatticeModel, populations: np.ndarray, module: str, limit: float = BOUNDARY_MASS_LIMIT) -> float:
    mass = boundary_mass(model, populations)
    if mass > limit:
        raise BoundaryLeakError(module, mass, limit)
    return mass


# ==================== WIGNER TRANSFORM ====================

@dataclass(frozen=True, eq=False)
class WignerGrid:
    """Wigner function sampled on (x_i, p_j) with its quadrature diagnostics."""

    x: np.ndarray
    p: np.ndarray
    values: np.ndarray
    normalization: float
    marginal_error: float
    marginal_ok: bool

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0]) if len(self.p) > 1 else 0.0

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def negative_fraction(self) -> float:
        """Share of |W| mass carried by negative cells."""
        total = np.sum(np.abs(self.values))
        return float(np.sum(np.abs(np.minimum(self.values, 0.0))) / total) if total > 0 else 0.0


def default_p_grid(model: LatticeModel, n_p: Optional[int] = None) -> np.ndarray:
    """
    One period [-pi hbar/(2dx), pi hbar/(2dx)) of the discrete transform.

    With n_p >= n_sites the p-marginal reproduces rho_ii / dx exactly.
    """
    n_p = model.n_sites if n_p is None else int(n_p)
    half = np.pi * model.hbar / (2.0 * model.dx)
    return -half + (2.0 * half / n_p) * np.arange(n_p)


def wigner_transform(
    rho,
    model: LatticeModel,
    p_grid: Optional[np.ndarray] = None,
    marginal_tol: float = 1e-6,
) -> WignerGrid:
    """
    W(x_i, p) = (1/(pi hbar)) sum_m rho[i+m, i-m] exp(-2i p m dx / hbar).

    The grid is flagged (``marginal_ok=False``) when the p-marginal misses
    rho_ii/dx by more than ``marginal_tol``.
    """
    matrix = as_density(rho).matrix if not isinstance(rho, np.ndarray) else np.asarray(rho, dtype=complex)
    n = model.n_sites
    if matrix.shape != (n, n):
        raise DimensionMismatchError(f"density matrix shape {matrix.shape} vs lattice {n} sites")
    p = default_p_grid(model) if p_grid is None else np.asarray(p_grid, dtype=float)

    offsets = np.arange(-(n - 1), n)
    sites = np.arange(n)
    plus = sites[:, None] + offsets[None, :]
    minus = sites[:, None] - offsets[None, :]
    valid = (plus >= 0) & (plus < n) & (minus >= 0) & (minus < n)
    samples = np.where(valid, matrix[np.clip(plus, 0, n - 1), np.clip(minus, 0, n - 1)], 0.0)

    phases = np.exp(-2j * np.outer(offsets, p) * model.dx / model.hbar)
    values = samples @ phases / (np.pi * model.hbar)
    imaginary = float(np.max(np.abs(values.imag))) if values.size else 0.0
    if imaginary > 1e-8 * max(1.0, float(np.max(np.abs(values.real)))):
        logger.warning(f"Wigner transform imaginary residue {imaginary:.3e}; input not Hermitian?")
    values = values.real

    if len(p) > 1:
        marginal = trapezoid(values, p, axis=1) if not _uniform(p) else values.sum(axis=1) * (p[1] - p[0])
    else:
        marginal = np.zeros(n)
    target = np.real(np.diag(matrix)) / model.dx
    marginal_error = float(np.max(np.abs(marginal - target)))
    normalization = float(np.sum(marginal) * model.dx)
    marginal_ok = marginal_error <= marginal_tol
    if not marginal_ok:
        logger.warning(
            f"Wigner p-grid too coarse: marginal error {marginal_error:.3e} > {marginal_tol:.0e}"
        )
    return WignerGrid(model.x.copy(), p, values, normalization, marginal_error, marginal_ok)


def _uniform(grid: np.ndarray) -> bool:
    steps = np.diff(grid)
    return bool(np.allclose(steps, steps[0], rtol=1e-10, atol=0.0))
