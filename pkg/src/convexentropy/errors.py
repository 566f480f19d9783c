"""Exception types shared across the package."""


class ConvexEntropyError(Exception):
    """Base class for all package errors."""


class DegenerateBody(ConvexEntropyError):
    """Body has (numerically) empty interior."""


class NumericFailure(ConvexEntropyError):
    """An iterative geometric construction failed to converge."""


class EmptyErosion(ConvexEntropyError):
    """Erosion margin is at least the inradius; the eroded set is empty."""


class DegenerateFacet(ConvexEntropyError):
    """A facet's vertex set is affinely dependent beyond tolerance."""


class InradiusTooSmall(ConvexEntropyError):
    """No interior point has the clearance required by a decomposition."""


class LevelTooCoarse(ConvexEntropyError):
    """Subdivision level too small for the dimension."""


class IncrementError(ConvexEntropyError):
    """Shell-increment triangulation failed its volume bookkeeping check."""


class InvalidExponents(ConvexEntropyError):
    """Norm exponents outside the supported range (need 1 <= p < r)."""


class ScaleTooCoarse(ConvexEntropyError):
    """Cell scale too large for the guaranteed cell-count bound."""


class ConstructionInvalid(ConvexEntropyError):
    """A witness-family member failed a construction invariant."""


class BudgetExceeded(ConvexEntropyError):
    """A computation would exceed its configured state/sample budget."""


class AllocationError(ConvexEntropyError):
    """Scale allocation for a union bound violates its constraint."""


class InsufficientData(ConvexEntropyError):
    """Not enough points for a rate fit."""


class NotInClass(ConvexEntropyError):
    """Function does not satisfy the norm bound of the declared class."""


class ConfigError(ConvexEntropyError):
    """Invalid experiment configuration."""
