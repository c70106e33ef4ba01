"""Exception taxonomy shared across the package."""


class SitealignError(Exception):
    """Base class for all package-specific failures."""


class EmptyMeshError(SitealignError):
    """A mesh with no usable triangles was passed where surface area is required."""


class InsufficientSceneError(SitealignError):
    """The scene cloud has too few points to attempt registration."""


class InfeasibleRegistrationError(SitealignError):
    """Registration cannot proceed (too few correspondences, or every restart failed)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class DegenerateGeometryError(SitealignError):
    """The rigid solve ran on rank-deficient geometry (coincident or collinear points)."""


class PriorServiceError(SitealignError):
    """The prior service returned something unusable (bad schema, missing labels)."""


class StreamOrderError(SitealignError):
    """A vibration stream violated per-worker time ordering."""
