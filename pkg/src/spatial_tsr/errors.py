"""Exception hierarchy shared across the package."""


class TSRError(Exception):
    """Base class for all package errors."""


class DomainError(TSRError, ValueError):
    """Argument outside the mathematical domain of a function."""


class SupportError(TSRError, ValueError):
    """Parameter outside the support of a prior or model."""


class ConfigurationError(TSRError, ValueError):
    """Invalid or inconsistent configuration."""


class DesignError(TSRError, ValueError):
    """Design matrix is rank deficient or malformed."""


class DataError(TSRError, ValueError):
    """Dataset cannot be used for inference (e.g. zero residual scale)."""


class IllConditionedCorrelationError(TSRError, ArithmeticError):
    """Cholesky factorization of a correlation matrix failed."""

    def __init__(self, phi, message=None):
        self.phi = phi
        super().__init__(message or f"correlation matrix not positive definite at phi={phi!r}")


class IntegrationError(TSRError, ArithmeticError):
    """Numerical quadrature did not reach the requested accuracy."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class NumericalError(TSRError, ArithmeticError):
    """Internal numerical inconsistency (should not happen for valid input)."""


class StudyAbortedError(TSRError, RuntimeError):
    """Too many replicate-level failures in a Monte Carlo study."""
