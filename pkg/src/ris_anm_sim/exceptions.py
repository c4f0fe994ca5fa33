"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class StructureError(ValueError):
    """A matrix violates a required structural property (Hermitian, Toeplitz, ...)."""


class ConfigurationError(ValueError):
    """A configuration value is out of range or internally inconsistent."""


class ConvergenceError(RuntimeError):
    """Iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, primal_residual=None, dual_residual=None, iterations=None):
        super().__init__(message)
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        self.iterations = iterations


class CertificateError(RuntimeError):
    """A recovered Toeplitz certificate is not positive semidefinite to tolerance."""


class ModelOrderError(ValueError):
    """Requested model order leaves no noise subspace."""


class IllConditionedError(RuntimeError):
    """A least-squares regressor is numerically rank deficient."""


class DegenerateInputError(ValueError):
    """Input carries no usable signal (all-zero gains, zero matrix, ...)."""
