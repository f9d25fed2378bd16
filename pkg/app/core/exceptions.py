"""
Error types raised by the workbench services.

Everything derives from ValueError so callers that only know about bad
input keep working; the CLI maps these to exit status 1.
"""


class WorkbenchError(ValueError):
    """Base class for all domain errors."""


class DataError(WorkbenchError):
    """Non-finite or malformed field data."""


class ConfigError(WorkbenchError):
    """Experiment configuration that passed the schema but cannot be run."""


class DomainCoverageError(WorkbenchError):
    """A quadrature point of the extension operator left the chart samples."""


class FlatteningError(WorkbenchError):
    """The flattening map is not admissible for the requested scaling."""

    def __init__(self, message: str, node=None, required_scaling=None):
        super().__init__(message)
        self.node = node
        self.required_scaling = required_scaling


class OutOfRangeError(WorkbenchError):
    """A point handed to the inverse map is not in the image of the map."""

    def __init__(self, message: str, column=None):
        super().__init__(message)
        self.column = column


class CoverageError(WorkbenchError):
    """A domain point is covered by no chart, or by too many."""

    def __init__(self, message: str, coordinates=None):
        super().__init__(message)
        self.coordinates = coordinates


class CompatibilityError(WorkbenchError):
    """Volume and boundary data violate the compatibility condition."""

    def __init__(self, message: str, defect: float = 0.0):
        super().__init__(message)
        self.defect = defect


class PaddingError(WorkbenchError):
    """Data do not vanish in the truncation pad."""


class UnsupportedIndexError(WorkbenchError):
    """The requested (s, p) is outside the range of the estimator."""


class ChartRejectedError(WorkbenchError):
    """Transformed coefficients of a chart violate their eigenvalue bounds."""


class ResidualError(WorkbenchError):
    """A solver stage finished with residuals above tolerance."""

    def __init__(self, message: str, stage: str = ""):
        super().__init__(message)
        self.stage = stage


class DivergenceError(WorkbenchError):
    """The sweep iteration stopped contracting."""

    def __init__(self, message: str, factor: float = float("nan"), delta=None):
        super().__init__(message)
        self.factor = factor
        self.delta = delta


class SharpnessError(WorkbenchError):
    """A sharpness measurement could not be carried out."""
