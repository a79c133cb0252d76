"""Exception hierarchy shared across the package.

Every error raised on purpose derives from :class:`PovdynError` so callers
(and the CLI exit-code mapping) can tell modelling failures from bugs.
"""


class PovdynError(Exception):
    """Base class for all package errors."""


class DomainError(PovdynError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class QuadratureDivergenceError(PovdynError, ArithmeticError):
    """Adaptive quadrature exhausted its subdivision budget."""

    def __init__(self, message, estimate, error):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


class IllConditionedFitError(PovdynError, ArithmeticError):
    """Least squares could not make progress on a singular Jacobian."""


class FitFailureError(PovdynError):
    """Data is degenerate for the requested model."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class PoleError(DomainError):
    """The confluent hypergeometric function has a pole at the given ``b``."""


class HypergeometricOverflowError(PovdynError, OverflowError):
    """The Kummer transformation factor ``exp(z)`` overflows."""


class NumericalBlowupError(PovdynError, ArithmeticError):
    """An integrator produced a non-finite value."""


class StepSizeError(PovdynError, ValueError):
    """A time step violates a stability or accuracy bound."""


class SchemeError(PovdynError, ArithmeticError):
    """A discretisation produced an inadmissible state (e.g. negative density)."""


class IllPosedRegimeError(PovdynError, ValueError):
    """A solver was asked to run with a negative viscosity."""


class RangeError(PovdynError, ValueError):
    """A trend was evaluated outside its validity range without permission."""


class NormalizationError(PovdynError, ValueError):
    """A density does not integrate to one."""

    def __init__(self, message, mass):
        super().__init__(f"{message} (mass={mass!r})")
        self.mass = mass


class SimulationError(PovdynError, ArithmeticError):
    """An agent update became non-finite."""


class DataError(PovdynError, ValueError):
    """Input tables violate their schema or invariants."""


class ConfigError(PovdynError, ValueError):
    """A pipeline configuration is invalid."""
