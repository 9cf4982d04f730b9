"""Exception hierarchy shared by all qvortex modules."""

from __future__ import annotations


class QVortexError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(QVortexError, ValueError):
    """Invalid user configuration or parameter."""


class DataError(QVortexError):
    """Input data unusable for the requested operation."""


class NumericalError(QVortexError, ArithmeticError):
    """A numerical guard tripped during computation."""


class SingularityError(NumericalError):
    """Two vortices (or a probe point and a vortex) are closer than the guard."""

    def __init__(self, message: str, step: int | None = None) -> None:
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class DenominatorError(NumericalError):
    """|sum(conj(psi))| fell below the guard in the drift functional."""


class NormDriftError(NumericalError):
    """Integrated wave state left the unit sphere."""


class DegenerateEncodingError(DataError):
    """Every vortex coincides with the reference point; no scale exists."""


class EmptySampleError(DataError):
    """Random sampling selected no frames."""


class InsufficientDataError(DataError):
    """Fewer training pairs than the N_p**2 identifiability bound."""


class NonConvergenceError(NumericalError):
    """Optimizer stopped without meeting tolerance; carries the best result."""

    def __init__(self, message: str, best=None, loss: float | None = None) -> None:
        super().__init__(message)
        self.best = best
        self.loss = loss


class NonUnitaryError(NumericalError):
    """Matrix handed to the circuit layer is not unitary."""


class DimensionError(QVortexError, ValueError):
    """Operand shapes do not match."""


class BlockWeightError(NumericalError):
    """A temporal block does not carry weight 1/N_t."""


class DegenerateSpectrumError(NumericalError):
    """Top two eigenvalues coincide so the dominant eigenvector is ill-defined."""


class ZeroProbabilityError(NumericalError):
    """Post-selection branch has vanishing probability."""


class NoTwirlableGateError(DataError):
    """Circuit has no CZ gate to twirl."""
