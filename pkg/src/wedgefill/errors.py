"""Exception types shared across the package."""


class WedgefillError(Exception):
    """Base class for package errors."""


class ConfigurationError(WedgefillError, ValueError):
    """Invalid geometry, parameter or configuration value."""


class SolverError(WedgefillError, RuntimeError):
    """An iterative solver diverged or could not honour its contract.

    ``diagnostics`` carries whatever the solver knew at failure time.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
