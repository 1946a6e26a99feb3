"""Exception hierarchy shared across the package."""


class KernelMixError(Exception):
    """Base class for all package errors."""


class ParameterError(KernelMixError, ValueError):
    """An argument is outside its valid range."""


class ShapeError(KernelMixError, ValueError):
    """Array dimensions do not match what an operation expects."""


class DegenerateDensityError(KernelMixError, ArithmeticError):
    """A mixture has no positive weight, so its density is undefined."""


class TrainingDivergedError(KernelMixError, ArithmeticError):
    """A gradient or loss became non-finite during optimization."""


class SimulationDivergedError(KernelMixError, ArithmeticError):
    """A simulated trajectory left the admissible state region."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NumericalError(KernelMixError, ArithmeticError):
    """A filter or integrator lost a required numerical property."""


class ConfigError(KernelMixError, ValueError):
    """A run configuration is inconsistent with its inputs."""
