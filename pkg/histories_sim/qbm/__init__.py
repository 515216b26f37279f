"""Quantum Brownian motion in the Fokker-Planck limit."""
from histories_sim.qbm.gaussian import (
    DecoherenceEstimate,
    GaussianWigner,
    PathWeight,
    QbmParams,
    SampledPath,
    classical_path,
    classical_residual,
    decoherence_functional_estimate,
    decoherence_length,
    decoherence_offdiagonal_estimate,
    fluctuation_width,
    fp_kernels,
    path_log_weight_exact,
    path_probability,
    suppression_exponent,
    thermal_dominates,
)

__all__ = [
    "DecoherenceEstimate",
    "GaussianWigner",
    "PathWeight",
    "QbmParams",
    "SampledPath",
    "classical_path",
    "classical_residual",
    "decoherence_functional_estimate",
    "decoherence_length",
    "decoherence_offdiagonal_estimate",
    "fluctuation_width",
    "fp_kernels",
    "path_log_weight_exact",
    "path_probability",
    "suppression_exponent",
    "thermal_dominates",
]
