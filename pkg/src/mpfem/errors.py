class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class ConfigError(ValueError):
    """Invalid configuration value."""


class OptimizerError(RuntimeError):
    """Every start of a maximization failed."""


class AssemblyError(RuntimeError):
    """An entry of an assembled matrix could not be computed."""

    def __init__(self, message, entry=None):
        super().__init__(message)
        self.entry = entry
