"""Markovian open-system dynamics: Lindblad, QSD, lattice QBM and hybrid coupling."""
from histories_sim.open_systems.hybrid import HybridEnsemble, HybridState, hybrid_ensemble, hybrid_simulate
from histories_sim.open_systems.lindblad import (
    DensityTrajectory,
    LindbladModel,
    lindblad_evolve,
    open_decoherence_functional,
)
from histories_sim.open_systems.position_master import (
    QbmLatticeModel,
    qbm_position_master_evolve,
    screen_decoherence_functional,
)
from histories_sim.open_systems.qsd import (
    QsdEnsemble,
    QsdTrajectory,
    qsd_ensemble,
    qsd_step,
    qsd_trajectory,
    trace_distance,
)

__all__ = [
    "DensityTrajectory",
    "HybridEnsemble",
    "HybridState",
    "LindbladModel",
    "QbmLatticeModel",
    "QsdEnsemble",
    "QsdTrajectory",
    "hybrid_ensemble",
    "hybrid_simulate",
    "lindblad_evolve",
    "open_decoherence_functional",
    "qbm_position_master_evolve",
    "qsd_ensemble",
    "qsd_step",
    "qsd_trajectory",
    "screen_decoherence_functional",
    "trace_distance",
]
