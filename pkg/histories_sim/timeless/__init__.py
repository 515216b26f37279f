"""Classical and semiclassical probabilities for reparametrization-invariant questions."""
from histories_sim.timeless.dynamics import (
    FreePotential,
    HarmonicPotential,
    QuarticPotential,
    Region,
    Trajectory,
    TrajectorySolver,
    integrate_trajectory,
    make_potential,
    time_in_region,
)
from histories_sim.timeless.probability import (
    EntryProbability,
    PhaseSpaceEnsemble,
    SemiclassicalProbability,
    check_stationarity,
    dwell_times,
    energy_density,
    evolve_ensemble,
    from_arrays,
    gaussian,
    microcanonical_shell,
    region_entry_probability,
    reparam_invariant_check,
    semiclassical_probability,
    thermal_harmonic,
)

__all__ = [
    "EntryProbability",
    "FreePotential",
    "HarmonicPotential",
    "PhaseSpaceEnsemble",
    "QuarticPotential",
    "Region",
    "SemiclassicalProbability",
    "Trajectory",
    "TrajectorySolver",
    "check_stationarity",
    "dwell_times",
    "energy_density",
    "evolve_ensemble",
    "from_arrays",
    "gaussian",
    "integrate_trajectory",
    "make_potential",
    "microcanonical_shell",
    "region_entry_probability",
    "reparam_invariant_check",
    "semiclassical_probability",
    "thermal_harmonic",
    "time_in_region",
]
