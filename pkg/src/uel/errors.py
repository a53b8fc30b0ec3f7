"""Exception hierarchy shared by all uel modules."""


class UelError(Exception):
    """Base class for all errors raised by uel."""


class ConfigurationError(UelError):
    """Invalid user-facing configuration (unknown domain, bad flag combination, ...)."""


class GeometryError(UelError):
    """Degenerate or unresolvable geometry (vanishing gradient, failed projection,
    stencil leaving the grid, ...)."""


class AssemblyError(UelError):
    """Internal invariant violated during system assembly."""


class SolverError(UelError):
    """Linear solver failure (singular pivot, breakdown without fallback, ...)."""


class AnalysisError(UelError):
    """Ill-posed error measurement (zero reference norm, non-positive order input)."""
