"""Exception hierarchy shared across the package."""


class HlwlabError(Exception):
    """Base class for all errors raised by hlwlab."""


class ConfigError(HlwlabError, ValueError):
    """A configuration value is out of range or internally inconsistent."""


class GeometryError(HlwlabError, ValueError):
    """Degenerate link geometry (e.g. zero AP-UE distance)."""


class ShapeError(HlwlabError, ValueError):
    """Array shapes are incompatible with the requested operation."""

class FeasibilityError(HlwlabError, ValueError):
    """An allocation violates the resource constraints it must satisfy."""


class ConvergenceError(HlwlabError, RuntimeError):
    """The solver did not converge; ``best`` carries the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class PredictionError(HlwlabError, ValueError):
    """Model predictions are unusable (NaN/Inf)."""


class ModelMismatchError(HlwlabError, ValueError):
    """Checkpoint and data disagree on dimensions (n_f, n_u, ...)."""


class SchemaError(HlwlabError, ValueError):
    """A file does not conform to its declared schema/version."""


class IntegrityError(HlwlabError, ValueError):
    """Internal cross-check failed (feature/label alignment and the like)."""
