"""Exception types shared across the package."""


class NearSingularError(ArithmeticError):
    """Requested resolvent at an energy too close to the spectrum."""


class WindowMismatchError(ValueError):
    """Region's spatial projection is not covered by the disorder window."""


class DenseCapError(ValueError):
    """Matrix too large for a dense full decomposition."""


class BoundaryLeakError(RuntimeError):
    """Wave packet reached the edge of the truncation window."""


class StepTooLargeError(RuntimeError):
    """Splitting-error estimate for the chosen time step exceeds budget."""


class ConfigError(ValueError):
    """Experiment configuration failed validation; message names the field."""
