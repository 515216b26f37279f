"""
Dense operators, states and projector families on a finite Hilbert space,
plus unitary and Heisenberg-picture evolution and the partial trace.

All types are immutable after construction: the wrapped arrays are copied
and marked read-only.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from histories_sim.hilbert.constants import HBAR, TOL_EVOLUTION, TOL_STRUCTURE
from histories_sim.utils.cache import default_cache
from histories_sim.utils.errors import DimensionMismatchError, NotHermitianError, ValidationError

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray, dtype=complex) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def as_matrix(value: Union["Operator", "DensityOperator", np.ndarray, Sequence]) -> np.ndarray:
    """Underlying complex matrix of an operator-like value."""
    if isinstance(value, (Operator, DensityOperator)):
        return value.matrix
    matrix = np.asarray(value, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {matrix.shape}")
    return matrix


def as_vector(value: Union["StateVector", np.ndarray, Sequence]) -> np.ndarray:
    """Underlying complex amplitudes of a state-like value."""
    if isinstance(value, StateVector):
        return value.amplitudes
    vector = np.asarray(value, dtype=complex)
    if vector.ndim != 1:
        raise ValidationError(f"expected a vector, got shape {vector.shape}")
    return vector


def hermitian_defect(matrix: np.ndarray) -> float:
    """Spectral norm of A - A^dagger."""
    return float(np.linalg.norm(matrix - matrix.conj().T, ord=2))


def require_hermitian(matrix: np.ndarray, name: str = "operator", tol: float = TOL_STRUCTURE) -> None:
    """Raise NotHermitianError carrying ||A - A^dagger|| when it exceeds ``tol``."""
    defect = hermitian_defect(matrix)
    if defect > tol:
        raise NotHermitianError(f"{name} is not Hermitian: ||A - A^dagger|| = {defect:.3e} > {tol:.1e}")


def require_same_dim(*matrices: np.ndarray) -> int:
    dims = {m.shape[0] for m in matrices}
    if len(dims) != 1:
        raise DimensionMismatchError(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense complex operator. Comparisons go through :meth:`close_to`."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = as_matrix(self.matrix)
        if not np.all(np.isfinite(matrix)):
            raise ValidationError("operator has non-finite entries")
        object.__setattr__(self, "matrix", _frozen(matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dagger(self) -> "Operator":
        return Operator(self.matrix.conj().T)

    def is_hermitian(self, tol: float = TOL_STRUCTURE) -> bool:
        return hermitian_defect(self.matrix) <= tol

    def close_to(self, other, tol: float = TOL_STRUCTURE) -> bool:
        other_matrix = as_matrix(other)
        return other_matrix.shape == self.matrix.shape and float(np.max(np.abs(self.matrix - other_matrix))) <= tol

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            return StateVector(self.matrix @ other.amplitudes)
        return Operator(self.matrix @ as_matrix(other))

    def __add__(self, other) -> "Operator":
        return Operator(self.matrix + as_matrix(other))

    def __sub__(self, other) -> "Operator":
        return Operator(self.matrix - as_matrix(other))

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.matrix * scalar)

    __rmul__ = __mul__

    @classmethod
    def identity(cls, dim: int) -> "Operator":
        return cls(np.eye(dim))

    @classmethod
    def zeros(cls, dim: int) -> "Operator":
        return cls(np.zeros((dim, dim)))


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state. Use :meth:`normalized` to build from raw amplitudes."""

    amplitudes: np.ndarray
    tol: float = TOL_STRUCTURE

    def __post_init__(self):
        vector = as_vector(self.amplitudes)
        norm = float(np.linalg.norm(vector))
        if abs(norm - 1.0) > self.tol:
            raise ValidationError(f"state norm {norm:.12f} differs from 1 by more than {self.tol:.1e}")
        object.__setattr__(self, "amplitudes", _frozen(vector))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        vector = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise ValidationError("cannot normalize the zero vector")
        return cls(vector / norm)

    @classmethod
    def basis(cls, dim: int, index: int) -> "StateVector":
        vector = np.zeros(dim, dtype=complex)
        vector[index] = 1.0
        return cls(vector)

    def density(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, as_vector(other)))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """
    Density operator: Hermitian, unit trace and positive within tolerance.

    ``validate=False`` skips the eigenvalue check for trusted internal
    construction on large lattices.
    """

    matrix: np.ndarray
    tol: float = TOL_STRUCTURE
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        matrix = as_matrix(self.matrix)
        object.__setattr__(self, "matrix", _frozen(matrix))
        if self.validate:
            self.check()

    def check(self) -> None:
        require_hermitian(self.matrix, "density operator", self.tol)
        trace = np.trace(self.matrix)
        if abs(trace - 1.0) > self.tol:
            raise ValidationError(f"density operator trace {trace.real:.12f} differs from 1")
        floor = float(np.min(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))))
        if floor < -self.tol:
            raise ValidationError(f"density operator has negative eigenvalue {floor:.3e}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def is_pure(self, tol: float = 1e-10) -> bool:
        return abs(self.purity - 1.0) <= tol

    def expectation(self, operator) -> complex:
        return complex(np.trace(self.matrix @ as_matrix(operator)))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim) / dim)


def as_density(value) -> DensityOperator:
    """Accept a DensityOperator, a StateVector or a raw matrix."""
    if isinstance(value, DensityOperator):
        return value
    if isinstance(value, StateVector):
        return value.density()
    return DensityOperator(as_matrix(value))


@dataclass(frozen=True, eq=False)
class ProjectorFamily:
    """
    Exhaustive set of mutually exclusive alternatives at one time.

    Example:
        >>> family = ProjectorFamily.computational(2)
        >>> family.labels
        (0, 1)
    """

    members: Tuple[np.ndarray, ...]
    labels: Tuple[Hashable, ...] = ()
    tol: float = TOL_STRUCTURE

    def __post_init__(self):
        members = tuple(_frozen(as_matrix(m)) for m in self.members)
        if not members:
            raise ValidationError("projector family needs at least one member")
        labels = tuple(self.labels) if self.labels else tuple(range(len(members)))
        if len(labels) != len(members):
            raise ValidationError(f"{len(labels)} labels for {len(members)} projectors")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate projector labels: {labels}")
        require_same_dim(*members)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "labels", labels)
        self._check_structure()

    def _check_structure(self) -> None:
        dim = self.dim
        total = np.zeros((dim, dim), dtype=complex)
        for label, projector in zip(self.labels, self.members):
            require_hermitian(projector, f"projector {label!r}", self.tol)
            idempotency = float(np.max(np.abs(projector @ projector - projector)))
            if idempotency > self.tol:
                raise ValidationError(f"projector {label!r} not idempotent: ||P^2 - P|| = {idempotency:.3e}")
            total += projector
        for i in range(len(self.members)):
            for j in range(i + 1, len(self.members)):
                overlap = float(np.max(np.abs(self.members[i] @ self.members[j])))
                if overlap > self.tol:
                    raise ValidationError(
                        f"projectors {self.labels[i]!r} and {self.labels[j]!r} overlap: {overlap:.3e}"
                    )
        completeness = float(np.max(np.abs(total - np.eye(dim))))
        if completeness > self.tol:
            raise ValidationError(f"projectors do not sum to identity: defect {completeness:.3e}")

    @property
    def dim(self) -> int:
        return self.members[0].shape[0]

    def __len__(self) -> int:
        return len(self.members)

    def index(self, label: Hashable) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"label {label!r} not in family {self.labels}") from None

    def projector(self, label: Hashable) -> np.ndarray:
        return self.members[self.index(label)]

    def as_dict(self) -> Dict[Hashable, np.ndarray]:
        return dict(zip(self.labels, self.members))

    def merge(self, labels: Sequence[Hashable], new_label: Hashable) -> "ProjectorFamily":
        """Coarse-grain: replace ``labels`` by the single projector onto their union."""
        if len(labels) < 2:
            raise ValidationError("merge needs at least two labels")
        merged = sum(self.projector(label) for label in labels)
        kept = [(lab, p) for lab, p in zip(self.labels, self.members) if lab not in labels]
        position = min(self.index(label) for label in labels)
        kept.insert(position, (new_label, merged))
        return ProjectorFamily(tuple(p for _, p in kept), tuple(lab for lab, _ in kept), self.tol)

    def conjugated(self, unitary: np.ndarray) -> "ProjectorFamily":
        """Family U^dagger P U (Heisenberg rotation by U)."""
        return ProjectorFamily(tuple(unitary.conj().T @ p @ unitary for p in self.members), self.labels, self.tol)

    @classmethod
    def computational(cls, dim: int) -> "ProjectorFamily":
        members = []
        for i in range(dim):
            projector = np.zeros((dim, dim), dtype=complex)
            projector[i, i] = 1.0
            members.append(projector)
        return cls(tuple(members), tuple(range(dim)))

    @classmethod
    def trivial(cls, dim: int, label: Hashable = "1") -> "ProjectorFamily":
        return cls((np.eye(dim),), (label,))

    @classmethod
    def from_vectors(cls, vectors: Iterable, labels: Sequence[Hashable] = ()) -> "ProjectorFamily":
        """Rank-one projectors onto orthonormal ``vectors``."""
        members = []
        for vector in vectors:
            v = as_vector(vector)
            members.append(np.outer(v, v.conj()))
        return cls(tuple(members), tuple(labels))

    @classmethod
    def from_hermitian(cls, operator, labels: Sequence[Hashable] = (), degeneracy_tol: float = 1e-9) -> "ProjectorFamily":
        """Eigenprojectors of a Hermitian operator, degenerate eigenvalues grouped."""
        matrix = as_matrix(operator)
        require_hermitian(matrix, "operator")
        eigenvalues, eigenvectors = np.linalg.eigh(matrix)
        groups: List[List[int]] = []
        for index, value in enumerate(eigenvalues):
            if groups and abs(value - eigenvalues[groups[-1][0]]) <= degeneracy_tol:
                groups[-1].append(index)
            else:
                groups.append([index])
        members = tuple(eigenvectors[:, g] @ eigenvectors[:, g].conj().T for g in groups)
        return cls(members, tuple(labels))


# ==================== EVOLUTION ====================

def matrix_exponential(matrix) -> np.ndarray:
    """General matrix exponential (scaling and squaring with Pade approximant)."""
    return scipy.linalg.expm(as_matrix(matrix))


def unitary_propagator(hamiltonian, t: float, hbar: float = HBAR) -> np.ndarray:
    """
    exp(-iHt/hbar) via the cached Hermitian eigendecomposition of H.

    Raises:
        NotHermitianError: If H is not Hermitian within tolerance
    """
    matrix = as_matrix(hamiltonian)
    require_hermitian(matrix, "Hamiltonian")
    if t == 0:
        return np.eye(matrix.shape[0], dtype=complex)
    eigenvalues, eigenvectors = default_cache().eigh(matrix)
    phases = np.exp(-1j * eigenvalues * t / hbar)
    return (eigenvectors * phases) @ eigenvectors.conj().T


def unitarity_defect(unitary: np.ndarray) -> float:
    return float(np.max(np.abs(unitary.conj().T @ unitary - np.eye(unitary.shape[0]))))


def evolve_unitary(hamiltonian, t: float, state, hbar: float = HBAR) -> StateVector:
    """
    Schrodinger evolution exp(-iHt/hbar)|psi>.

    Example:
        >>> sz = np.diag([1.0, -1.0])
        >>> out = evolve_unitary(sz, np.pi, StateVector.basis(2, 0))
        >>> np.allclose(out.amplitudes, [-1, 0])
        True
    """
    vector = as_vector(state)
    matrix = as_matrix(hamiltonian)
    if matrix.shape[0] != vector.shape[0]:
        raise DimensionMismatchError(f"Hamiltonian dim {matrix.shape[0]} vs state dim {vector.shape[0]}")
    unitary = unitary_propagator(matrix, t, hbar)
    defect = unitarity_defect(unitary)
    if defect > TOL_EVOLUTION:
        logger.warning(f"Propagator unitarity defect {defect:.3e} above {TOL_EVOLUTION:.0e}")
    return StateVector(unitary @ vector)


def heisenberg_projector(projector, hamiltonian, t: float, t0: float = 0.0, hbar: float = HBAR) -> Operator:
    """
    P(t) = exp(iH(t-t0)/hbar) P exp(-iH(t-t0)/hbar).

    The result is checked to remain a projector within tolerance.
    """
    p = as_matrix(projector)
    h = as_matrix(hamiltonian)
    require_same_dim(p, h)
    require_hermitian(p, "projector")
    unitary = unitary_propagator(h, t - t0, hbar)
    rotated = unitary.conj().T @ p @ unitary
    idempotency = float(np.max(np.abs(rotated @ rotated - rotated)))
    if idempotency > TOL_STRUCTURE:
        raise ValidationError(f"Heisenberg projector lost idempotency: {idempotency:.3e}")
    return Operator(rotated)


def partial_trace(rho, dims: Tuple[int, int], keep: str = "system") -> DensityOperator:
    """
    Trace out one factor of a bipartite density operator.

    Args:
        rho: Joint density operator of dimension d_sys * d_env
        dims: (d_sys, d_env)
        keep: "system" traces the environment, "environment" the system

    Raises:
        DimensionMismatchError: If d_sys * d_env differs from the joint dimension
    """
    matrix = as_density(rho).matrix
    d_sys, d_env = (int(d) for d in dims)
    if d_sys * d_env != matrix.shape[0]:
        raise DimensionMismatchError(f"dims {dims} do not factor joint dimension {matrix.shape[0]}")
    tensor = matrix.reshape(d_sys, d_env, d_sys, d_env)
    if keep == "system":
        reduced = np.einsum("ijkj->ik", tensor)
    elif keep == "environment":
        reduced = np.einsum("ijil->jl", tensor)
    else:
        raise ValidationError(f"keep must be 'system' or 'environment', got {keep!r}")
    return DensityOperator(reduced)
