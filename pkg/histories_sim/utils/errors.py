"""
Exception hierarchy for the histories simulation toolkit.

Input problems derive from ValidationError (a ValueError, CLI exit code 2);
numerical guard trips derive from NumericalGuardError (CLI exit code 3) and
name the module and the invariant that failed.
"""
from typing import List, Optional, Sequence, Tuple


class HistoriesError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(HistoriesError, ValueError):
    """
    Input rejected before any computation.

    Args:
        message: Human readable summary
        issues: Optional list of (field_path, problem) pairs
    """

    def __init__(self, message: str, issues: Optional[Sequence[Tuple[str, str]]] = None):
        self.issues: List[Tuple[str, str]] = list(issues or [])
        if self.issues:
            details = "; ".join(f"{path}: {problem}" for path, problem in self.issues)
            message = f"{message} ({details})"
        super().__init__(message)


class DimensionMismatchError(ValidationError):
    """Operands live on Hilbert spaces of different dimension."""


class NotHermitianError(ValidationError):
    """An operator required to be Hermitian is not."""


class EnumerationLimitError(ValidationError):
    """The Cartesian product of alternatives exceeds the enumeration guard."""


class ZeroProbabilityError(ValidationError):
    """Conditioning on an alternative of zero probability."""


class NotDecoherentError(ValidationError):
    """A decoherent (or consistent) set was required but not supplied."""

    def __init__(self, message: str, worst: float, pair: Optional[tuple] = None):
        self.worst = worst
        self.pair = pair
        super().__init__(f"{message}: worst off-diagonal {worst:.3e} at {pair}")


class InconsistentSetError(NotDecoherentError):
    """The set violates the consistency condition at the requested tolerance."""


class NumericalGuardError(HistoriesError, RuntimeError):
    """
    A numerical invariant was violated during computation.

    Args:
        module: Name of the toolkit module that tripped the guard
        invariant: Short name of the invariant
        detail: Measured diagnostic
    """

    def __init__(self, module: str, invariant: str, detail: str):
        self.module = module
        self.invariant = invariant
        self.detail = detail
        super().__init__(f"[{module}] {invariant} violated: {detail}")


class TraceDriftError(NumericalGuardError):
    def __init__(self, module: str, drift: float, limit: float):
        super().__init__(module, "trace preservation", f"drift {drift:.3e} exceeds {limit:.1e}")


class NormCollapseError(NumericalGuardError):
    def __init__(self, module: str, norm: float):
        super().__init__(module, "state norm", f"norm {norm:.3e} collapsed before renormalization")


class BoundaryLeakError(NumericalGuardError):
    def __init__(self, module: str, mass: float, limit: float):
        super().__init__(module, "lattice boundary mass", f"{mass:.3e} exceeds {limit:.1e}")


class UndersamplingError(NumericalGuardError):
    def __init__(self, module: str, detail: str):
        super().__init__(module, "trajectory sampling density", detail)
