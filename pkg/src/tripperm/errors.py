"""Exception types shared across the workbench."""


class ReidError(Exception):
    """Base class for data, protocol and numerical errors raised by tripperm."""


class ManifestError(ReidError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(ReidError, ValueError):
    pass


class UniquenessError(ReidError, ValueError):
    pass


class ProtocolError(ReidError):
    pass


class IncompleteIdentityError(ReidError, ValueError):
    pass


class ConfigError(ReidError, ValueError):
    pass


class DivergenceError(ReidError, ArithmeticError):
    def __init__(self, epoch, batch, what="loss"):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite {what} at epoch {epoch}, batch {batch}")


class KinkError(ReidError, ValueError):
    """Finite differences requested too close to a non-differentiable point."""


class AuditDegenerateError(ReidError, ValueError):
    pass


class EvaluationError(ReidError, ValueError):
    pass


class ComparisonError(ReidError, ValueError):
    pass


class DependencyError(ReidError, FileNotFoundError):
    """An upstream artifact (manifest, model file) is missing."""
