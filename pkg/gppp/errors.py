"""Exception hierarchy shared by the library and the CLI."""


class GpppError(Exception):
    """Base class for all library errors"""


class ConfigError(GpppError):
    """Invalid or incomplete run configuration"""


class ValidationError(GpppError):
    """Input data violates a record invariant"""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DimensionError(GpppError, ValueError):
    """Array shapes do not conform"""


class SingularDesignError(GpppError):
    """Design matrix is rank deficient and no ridge penalty was given"""


class DegenerateInputError(GpppError):
    """Input has no spread where spread is required"""


class DegeneratePropensityError(GpppError):
    """Every pseudo-inclusion probability fell outside (eps, 1]"""


class DrawMismatchError(GpppError):
    """Posterior draw counts of two components disagree"""


class SamplerError(GpppError):
    """HMC could not produce usable draws"""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BootstrapFailureError(GpppError):
    """Too many bootstrap replicates failed to fit"""

    def __init__(self, message, failures=0, replicates=0):
        super().__init__(message)
        self.failures = failures
        self.replicates = replicates


class ReplicationError(GpppError):
    """Too many simulation replications failed"""

    def __init__(self, message, failures=0, replications=0):
        super().__init__(message)
        self.failures = failures
        self.replications = replications
