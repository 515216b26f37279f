"""Region-entry histories on a lattice, with and without an environment."""
from histories_sim.arrival.crossing import (
    CrossingOperators,
    CrossingResult,
    CrossingSchedule,
    LangevinCrossing,
    LatticeRegion,
    crossing_class_operators,
    crossing_decoherence,
    environment_sweep,
    langevin_crossing_probability,
    restricted_propagator,
)

__all__ = [
    "CrossingOperators",
    "CrossingResult",
    "CrossingSchedule",
    "LangevinCrossing",
    "LatticeRegion",
    "crossing_class_operators",
    "crossing_decoherence",
    "environment_sweep",
    "langevin_crossing_probability",
    "restricted_propagator",
]
