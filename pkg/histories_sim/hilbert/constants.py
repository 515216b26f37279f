"""
Physical constants and numerical tolerances.

Models default to natural units (hbar = k = 1). The cgs values reproduce
the room-temperature suppression estimate.
"""

HBAR = 1.0
K_BOLTZMANN = 1.0

HBAR_CGS = 1.0546e-27  # erg s
K_B_CGS = 1.381e-16  # erg / K

# Structural checks (hermiticity, idempotency, completeness, normalization)
TOL_STRUCTURE = 1e-10
# Accumulated drift of unitary evolutions
TOL_EVOLUTION = 1e-9
# Decoherence functional normalization
TOL_NORMALIZATION = 1e-9
# Branch vectors below this norm carry no record
TOL_BRANCH = 1e-12
