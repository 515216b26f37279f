"""Finite-dimensional Hilbert-space substrate and the 1D position lattice."""
from histories_sim.hilbert.constants import HBAR, HBAR_CGS, K_B_CGS, K_BOLTZMANN
from histories_sim.hilbert.lattice import (
    LatticeModel,
    WignerGrid,
    build_lattice_hamiltonian,
    default_p_grid,
    gaussian_wavepacket,
    lattice_eigenstate,
    momentum_operator,
    position_bins,
    position_operator,
    superpose,
    wigner_transform,
)
from histories_sim.hilbert.operators import (
    DensityOperator,
    Operator,
    ProjectorFamily,
    StateVector,
    as_density,
    evolve_unitary,
    heisenberg_projector,
    matrix_exponential,
    partial_trace,
    unitary_propagator,
)

__all__ = [
    "HBAR",
    "HBAR_CGS",
    "K_BOLTZMANN",
    "K_B_CGS",
    "DensityOperator",
    "LatticeModel",
    "Operator",
    "ProjectorFamily",
    "StateVector",
    "WignerGrid",
    "as_density",
    "build_lattice_hamiltonian",
    "default_p_grid",
    "evolve_unitary",
    "gaussian_wavepacket",
    "heisenberg_projector",
    "lattice_eigenstate",
    "matrix_exponential",
    "momentum_operator",
    "partial_trace",
    "position_bins",
    "position_operator",
    "superpose",
    "unitary_propagator",
    "wigner_transform",
]
